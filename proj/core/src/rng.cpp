#include "maelab/rng.hpp"

#include <cmath>
#include <numbers>

namespace maelab {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), key_(mix64(seed + kGolden)) {}

Rng Rng::substream(std::string_view label) const {
  return Rng(seed_, mix64(key_ ^ mix64(fnv1a(label) + kGolden)));
}

Rng Rng::substream(std::uint64_t label) const {
  return Rng(seed_, mix64(key_ ^ mix64(label + kGolden)));
}

std::uint64_t Rng::next_u64() {
  counter_ += 1;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::next_double() {
  // 53 random bits into [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw ContractViolation("Rng::next_below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
  std::uint64_t x = next_u64();
  while (x > limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller; u1 shifted into (0, 1] so log stays finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

DenseVector sample_gaussian(Rng& rng, const DenseVector& mean, const DenseMatrix& cov_chol) {
  const std::size_t n = mean.len;
  if (cov_chol.rows != n || cov_chol.cols != n)
    throw ContractViolation("sample_gaussian: factor shape must match mean length");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (cov_chol(i, j) != 0.0)
        throw ContractViolation("sample_gaussian: factor must be lower-triangular");

  DenseVector z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();

  DenseVector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = mean[i];
    for (std::size_t j = 0; j <= i; ++j) acc += cov_chol(i, j) * z[j];
    out[i] = acc;
  }
  return out;
}

DenseMatrix sample_wishart(Rng& rng, const DenseVector& scale_diag, std::size_t dof) {
  const std::size_t n = scale_diag.len;
  if (dof < n) throw ContractViolation("sample_wishart: dof must be >= dimension");
  for (double s : scale_diag.data)
    if (s <= 0.0) throw ContractViolation("sample_wishart: scale entries must be positive");

  // Bartlett factor: lower-triangular A with chi(dof-i) diagonal and standard
  // normal strict lower part. With diagonal scale V = LL^T, L = diag(sqrt(v)),
  // the draw is (L A)(L A)^T.
  DenseMatrix a(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double chi2 = 0.0;
    for (std::size_t k = 0; k < dof - i; ++k) {
      const double z = rng.normal();
      chi2 += z * z;
    }
    a(i, i) = std::sqrt(chi2);
    for (std::size_t j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double li = std::sqrt(scale_diag[i]);
    for (std::size_t j = 0; j <= i; ++j) a(i, j) *= li;
  }

  DenseMatrix w(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= j; ++k) acc += a(i, k) * a(j, k);
      w(i, j) = acc;
      w(j, i) = acc;
    }
  }
  return w;
}

}  // namespace maelab
