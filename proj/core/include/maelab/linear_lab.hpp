#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string>

#include "maelab/datasets.hpp"
#include "maelab/masking.hpp"
#include "maelab/matrix.hpp"
#include "maelab/rng.hpp"

namespace maelab {

/// Linear student/teacher pair. The student maps a masked input to a
/// reconstruction of the full input; the teacher is an exponential moving
/// average of past students and supplies a consistency target under
/// stop-gradient.
///
/// With bias enabled the weight is out_dim x (out_dim + 1): inputs carry a
/// trailing constant-1 component that is never masked, so every derivation
/// stays in pure matrix form.
struct LinearPair {
  DenseMatrix student;
  DenseMatrix teacher;
  double alpha = 0.9;     // teacher EMA coefficient, in (0,1)
  double lr = 0.001;      // learning rate
  double momentum = 0.97; // optimizer momentum coefficient
  DenseMatrix velocity;
  long step = 0;
  bool with_bias = true;
  bool momentum_used = false;  // set once any momentum step has been taken

  /// Teacher starts as an exact copy of the student.
  static LinearPair init(std::size_t dim, bool with_bias, double alpha, double lr,
                         double momentum, Rng& rng, double init_scale = 0.01);

  std::size_t out_dim() const { return student.rows; }
  std::size_t in_dim() const { return student.cols; }

  /// Masked input lifted into model input space (appends the constant-1 bias
  /// component when enabled).
  DenseVector lift(const DenseVector& masked) const;
};

/// Per-step record of a training run: the full gradient that was applied to
/// the student, kept for identity and bound checks.
struct GradientStep {
  long step = 0;
  DenseMatrix grad;  // d(L_r + L_c)/dS actually applied (batch mean)
};

/// Ring buffer of applied gradients, ordered by step.
class GradientHistory {
 public:
  explicit GradientHistory(std::size_t capacity) : capacity_(capacity) {}

  void record(long step, DenseMatrix grad);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i-th oldest retained entry.
  const GradientStep& entry(std::size_t i) const { return entries_[i]; }
  /// True when every step since 0 is retained.
  bool complete_for(long steps) const {
    return entries_.size() == static_cast<std::size_t>(steps);
  }

 private:
  std::size_t capacity_;
  std::deque<GradientStep> entries_;
};

enum class ProbeCase { kSame, kSimilar, kDifferent };

const char* probe_case_name(ProbeCase c);
std::optional<ProbeCase> probe_case_from_name(const std::string& name);

/// One two-input probe measurement: a gradient step plus teacher update on
/// input 1, then reconstruction/consistency gradients on input 2.
struct ProbeRecord {
  ProbeCase probe_case = ProbeCase::kSame;
  double norm_recon = 0.0;              // ||dL_r/dS|| at input 2 (Frobenius)
  double norm_cons = 0.0;               // ||dL_c/dS|| at input 2
  double cos_prev_full_vs_cons = 0.0;   // cos(full grad at input 1, dL_c at input 2)
  double cos_recon_vs_cons = 0.0;       // cos(dL_r, dL_c) both at input 2
  double input_similarity = 0.0;        // cos of the two masked inputs
};

// ---- exact gradients --------------------------------------------------------

/// d/dS of 0.5 ||S x_tilde - x||^2 = (S x_tilde - x) x_tilde^T.
DenseMatrix recon_grad(const DenseMatrix& s, const DenseVector& x_tilde,
                       const DenseVector& x);

/// d/dS of 0.5 ||S x_tilde - StopGrad(T x_tilde)||^2 = (S - T) x_tilde x_tilde^T.
DenseMatrix cons_grad(const DenseMatrix& s, const DenseMatrix& t,
                      const DenseVector& x_tilde);

// ---- optimizer and teacher updates -----------------------------------------

/// Plain mode: S -= lr * grad. Momentum mode: v = mu v + grad, S -= lr * v.
void sgd_step(LinearPair& pair, const DenseMatrix& grad, bool use_momentum);

/// T = alpha T + (1 - alpha) S.
void ema_update(LinearPair& pair);

// ---- identity and bound checks ----------------------------------------------

/// Max-abs deviation between cons_grad(S, T, x_tilde) and the gradient-history
/// expansion -lr * [sum_i alpha^i grad^(t-i)] x_tilde x_tilde^T. Exact (zero)
/// in exact arithmetic when the pair was trained with plain SGD from T = S.
/// Momentum-trained pairs are refused: the expansion does not hold for them.
double verify_history_identity(const LinearPair& pair, const GradientHistory& history,
                               const DenseVector& x_tilde);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds(double slack = 1e-9) const { return lhs <= rhs + slack; }
};

/// Consistency-gradient norm against its alpha-weighted history bound:
/// lhs = ||dL_c||, rhs = sum_i alpha^i lr ||grad^(t-i) x_tilde x_tilde^T||.
BoundCheck check_cons_bound(const LinearPair& pair, const GradientHistory& history,
                            const DenseVector& x_tilde);

/// History part of the reconstruction gradient against its unweighted bound:
/// lhs = ||sum_i lr grad^(t-i) x_tilde x_tilde^T||, rhs = sum of the norms.
/// No decaying coefficients, so rhs dominates the consistency bound's rhs.
BoundCheck check_recon_bound(const LinearPair& pair, const GradientHistory& history,
                             const DenseVector& x_tilde);

// ---- covariance fixed point --------------------------------------------------

struct CovarianceFixedPoint {
  DenseMatrix s_star;      // Sigma_{x,xt} pinv(Sigma_{xt,xt})
  double residual = 0.0;   // || E[recon_grad(S*, ., .)] || on a fresh batch
  bool pinv_truncated = false;
};

/// Monte-Carlo estimate of the optimal linear reconstruction map and its
/// residual expected gradient. with_bias controls whether inputs are lifted.
CovarianceFixedPoint covariance_fixed_point(const VectorDataset& dataset,
                                            double mask_ratio, Rng& rng,
                                            bool with_bias = false,
                                            std::size_t n_estimate = 100000,
                                            std::size_t n_residual = 100000,
                                            double pinv_cutoff = 1e-10);

// ---- the two-input probe ------------------------------------------------------

/// Runs the two-input probe protocol on a deep copy of the pair: one gradient
/// step plus teacher update on input 1, then gradient measurements on input 2.
/// x is the probe point; x_other supplies the independent point for the
/// kDifferent case (ignored otherwise). Training state is never mutated.
ProbeRecord run_probe(const LinearPair& pair, const DenseVector& x,
                      const DenseVector& x_other, ProbeCase probe_case,
                      double mask_ratio, bool use_momentum, Rng& rng);

}  // namespace maelab
