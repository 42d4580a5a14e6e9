#include "maelab/matrix.hpp"

#include <cmath>
#include <limits>

namespace maelab {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ContractViolation(msg);
}

}  // namespace

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rws) {
  rows = rws.size();
  cols = rows == 0 ? 0 : rws.begin()->size();
  data.reserve(rows * cols);
  for (const auto& r : rws) {
    if (r.size() != cols) throw ContractViolation("DenseMatrix: ragged initializer");
    data.insert(data.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "add: shape mismatch");
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "sub: shape mismatch");
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

DenseMatrix scale(const DenseMatrix& a, double c) {
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * c;
  return out;
}

void add_scaled_in_place(DenseMatrix& y, const DenseMatrix& x, double c) {
  require(y.same_shape(x), "add_scaled_in_place: shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += c * x.data[i];
}

void scale_in_place(DenseMatrix& m, double c) {
  for (double& v : m.data) v *= c;
}

DenseVector add(const DenseVector& a, const DenseVector& b) {
  require(a.len == b.len, "add: length mismatch");
  DenseVector out(a.len);
  for (std::size_t i = 0; i < a.len; ++i) out[i] = a[i] + b[i];
  return out;
}

DenseVector sub(const DenseVector& a, const DenseVector& b) {
  require(a.len == b.len, "sub: length mismatch");
  DenseVector out(a.len);
  for (std::size_t i = 0; i < a.len; ++i) out[i] = a[i] - b[i];
  return out;
}

DenseVector scale(const DenseVector& a, double c) {
  DenseVector out(a.len);
  for (std::size_t i = 0; i < a.len; ++i) out[i] = a[i] * c;
  return out;
}

void add_scaled_in_place(DenseVector& y, const DenseVector& x, double c) {
  require(y.len == x.len, "add_scaled_in_place: length mismatch");
  for (std::size_t i = 0; i < y.len; ++i) y[i] += c * x[i];
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols == b.rows, "matmul: inner dimension mismatch");
  DenseMatrix out(a.rows, b.cols, 0.0);
  // i-k-j order: row-major friendly, fixed accumulation order.
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    double* orow = &out.data[i * b.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

DenseVector matvec(const DenseMatrix& a, const DenseVector& x) {
  require(a.cols == x.len, "matvec: dimension mismatch");
  DenseVector out(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    const double* arow = &a.data[i * a.cols];
    for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
    out[i] = acc;
  }
  return out;
}

DenseMatrix outer(const DenseVector& u, const DenseVector& v) {
  DenseMatrix out(u.len, v.len);
  for (std::size_t i = 0; i < u.len; ++i)
    for (std::size_t j = 0; j < v.len; ++j) out(i, j) = u[i] * v[j];
  return out;
}

double dot(const DenseVector& a, const DenseVector& b) {
  require(a.len == b.len, "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.len; ++i) acc += a[i] * b[i];
  return acc;
}

double frobenius_norm(const DenseMatrix& m) {
  double acc = 0.0;
  for (double v : m.data) acc += v * v;
  return std::sqrt(acc);
}

double l2_norm(const DenseVector& v) {
  double acc = 0.0;
  for (double x : v.data) acc += x * x;
  return std::sqrt(acc);
}

double max_abs(const DenseMatrix& m) {
  double best = 0.0;
  for (double v : m.data) best = std::max(best, std::fabs(v));
  return best;
}

double max_abs(const DenseVector& v) {
  double best = 0.0;
  for (double x : v.data) best = std::max(best, std::fabs(x));
  return best;
}

double dot_flat(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "dot_flat: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double cosine_flat(const DenseMatrix& a, const DenseMatrix& b) {
  const double na = frobenius_norm(a);
  const double nb = frobenius_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot_flat(a, b) / (na * nb);
}

double cosine(const DenseVector& a, const DenseVector& b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

bool all_finite(const DenseMatrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

bool all_finite(const DenseVector& v) {
  for (double x : v.data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::optional<DenseMatrix> cholesky_lower(const DenseMatrix& a) {
  require(a.rows == a.cols, "cholesky_lower: matrix must be square");
  const std::size_t n = a.rows;
  DenseMatrix l(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (diag <= 0.0 || !std::isfinite(diag)) return std::nullopt;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

EighResult jacobi_eigh(const DenseMatrix& a, double tol, int max_sweeps) {
  require(a.rows == a.cols, "jacobi_eigh: matrix must be square");
  const std::size_t n = a.rows;
  DenseMatrix m = a;
  DenseMatrix v = DenseMatrix::identity(n);

  auto off_diag = [&]() {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) acc += m(i, j) * m(i, j);
    return std::sqrt(2.0 * acc);
  };

  const double scale0 = std::max(frobenius_norm(m), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diag() <= tol * scale0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double app = m(p, p);
        const double aqq = m(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sort ascending by eigenvalue, permuting vector columns to match.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < n; ++j)
      if (m(order[j], order[j]) < m(order[best], order[best])) best = j;
    std::swap(order[i], order[best]);
  }

  EighResult out;
  out.values = DenseVector(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = m(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

PinvResult pinv_psd(const DenseMatrix& a, double rel_cutoff) {
  EighResult eig = jacobi_eigh(a);
  const std::size_t n = a.rows;
  double lmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) lmax = std::max(lmax, eig.values[i]);
  const double cutoff = rel_cutoff * std::max(lmax, 0.0);

  PinvResult out;
  out.matrix = DenseMatrix(n, n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = eig.values[k];
    if (lambda <= cutoff) {
      out.truncated = true;
      continue;
    }
    const double inv = 1.0 / lambda;
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = eig.vectors(i, k);
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j)
        out.matrix(i, j) += inv * vik * eig.vectors(j, k);
    }
  }
  return out;
}

}  // namespace maelab
