#pragma once

#include <cstdint>
#include <string_view>

#include "maelab/matrix.hpp"

namespace maelab {

/// Deterministic counter-based PRNG. A stream is (key, counter); identical
/// seeds give identical sample streams, and substream() derives independent
/// streams by label so one experiment stage cannot perturb another's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream, keyed off this stream's key and the label.
  Rng substream(std::string_view label) const;
  Rng substream(std::uint64_t label) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_double();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::uint64_t next_below(std::uint64_t n);
  /// Standard normal via Box-Muller; the pair's second value is cached.
  double normal();

  std::uint64_t seed() const { return seed_; }

 private:
  Rng(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint64_t seed_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// mean + chol * z with z standard normal. chol must be lower-triangular
/// (entries above the diagonal zero) with nonnegative diagonal.
DenseVector sample_gaussian(Rng& rng, const DenseVector& mean, const DenseMatrix& cov_chol);

/// Symmetric PSD draw from Wishart(diag(scale_diag), dof) via the Bartlett
/// decomposition. dof must be at least the dimension.
DenseMatrix sample_wishart(Rng& rng, const DenseVector& scale_diag, std::size_t dof);

}  // namespace maelab
