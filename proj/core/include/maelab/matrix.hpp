#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace maelab {

/// Thrown when an operation's preconditions are violated (shape mismatch,
/// out-of-range argument, malformed input).
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& what) : std::runtime_error(what) {}
};

/// Dense double-precision vector.
struct DenseVector {
  std::size_t len = 0;
  std::vector<double> data;

  DenseVector() = default;
  explicit DenseVector(std::size_t n, double fill = 0.0) : len(n), data(n, fill) {}
  DenseVector(std::initializer_list<double> values)
      : len(values.size()), data(values) {}

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::size_t size() const { return len; }
};

/// Dense double-precision matrix, row-major. The single canonical layout for
/// every model in the lab; no transposed views.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rws);

  static DenseMatrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const DenseMatrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

// ---- elementwise / BLAS-1 style -------------------------------------------

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double c);
/// y += c * x (shapes must match).
void add_scaled_in_place(DenseMatrix& y, const DenseMatrix& x, double c);
void scale_in_place(DenseMatrix& m, double c);

DenseVector add(const DenseVector& a, const DenseVector& b);
DenseVector sub(const DenseVector& a, const DenseVector& b);
DenseVector scale(const DenseVector& a, double c);
void add_scaled_in_place(DenseVector& y, const DenseVector& x, double c);

// ---- products --------------------------------------------------------------

/// Standard matrix product with a fixed accumulation order.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseVector matvec(const DenseMatrix& a, const DenseVector& x);
/// u v^T.
DenseMatrix outer(const DenseVector& u, const DenseVector& v);

double dot(const DenseVector& a, const DenseVector& b);

// ---- norms and reductions ---------------------------------------------------

double frobenius_norm(const DenseMatrix& m);
double l2_norm(const DenseVector& v);
double max_abs(const DenseMatrix& m);
double max_abs(const DenseVector& v);
/// Frobenius inner product of flattened matrices (shapes must match).
double dot_flat(const DenseMatrix& a, const DenseMatrix& b);
/// Cosine between flattened matrices; 0 when either norm is zero.
double cosine_flat(const DenseMatrix& a, const DenseMatrix& b);
double cosine(const DenseVector& a, const DenseVector& b);

bool all_finite(const DenseMatrix& m);
bool all_finite(const DenseVector& v);

// ---- factorizations ---------------------------------------------------------

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix;
/// nullopt when a nonpositive pivot is met.
std::optional<DenseMatrix> cholesky_lower(const DenseMatrix& a);

struct EighResult {
  DenseVector values;   // ascending
  DenseMatrix vectors;  // columns are eigenvectors, matching values order
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
EighResult jacobi_eigh(const DenseMatrix& a, double tol = 1e-14, int max_sweeps = 64);

struct PinvResult {
  DenseMatrix matrix;
  bool truncated = false;  // true when eigenvalues below the cutoff were dropped
};

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues below
/// rel_cutoff * lambda_max are treated as zero and flagged.
PinvResult pinv_psd(const DenseMatrix& a, double rel_cutoff = 1e-10);

}  // namespace maelab
