#include "maelab/linear_lab.hpp"

#include <cmath>

namespace maelab {

LinearPair LinearPair::init(std::size_t dim, bool with_bias, double alpha, double lr,
                            double momentum, Rng& rng, double init_scale) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw ContractViolation("LinearPair: alpha must lie in (0, 1)");
  if (lr <= 0.0) throw ContractViolation("LinearPair: lr must be positive");

  LinearPair pair;
  const std::size_t in_dim = with_bias ? dim + 1 : dim;
  pair.student = DenseMatrix(dim, in_dim);
  for (double& v : pair.student.data) v = init_scale * rng.normal();
  pair.teacher = pair.student;
  pair.velocity = DenseMatrix(dim, in_dim, 0.0);
  pair.alpha = alpha;
  pair.lr = lr;
  pair.momentum = momentum;
  pair.with_bias = with_bias;
  return pair;
}

DenseVector LinearPair::lift(const DenseVector& masked) const {
  if (!with_bias) {
    if (masked.len != in_dim())
      throw ContractViolation("LinearPair::lift: input length mismatch");
    return masked;
  }
  if (masked.len + 1 != in_dim())
    throw ContractViolation("LinearPair::lift: input length mismatch");
  DenseVector lifted(masked.len + 1);
  for (std::size_t i = 0; i < masked.len; ++i) lifted[i] = masked[i];
  lifted[masked.len] = 1.0;
  return lifted;
}

void GradientHistory::record(long step, DenseMatrix grad) {
  if (!entries_.empty() && entries_.back().step + 1 != step)
    throw ContractViolation("GradientHistory: steps must be recorded in order");
  entries_.push_back(GradientStep{step, std::move(grad)});
  if (entries_.size() > capacity_) entries_.pop_front();
}

const char* probe_case_name(ProbeCase c) {
  switch (c) {
    case ProbeCase::kSame: return "same";
    case ProbeCase::kSimilar: return "similar";
    case ProbeCase::kDifferent: return "different";
  }
  return "?";
}

std::optional<ProbeCase> probe_case_from_name(const std::string& name) {
  if (name == "same") return ProbeCase::kSame;
  if (name == "similar") return ProbeCase::kSimilar;
  if (name == "different") return ProbeCase::kDifferent;
  return std::nullopt;
}

DenseMatrix recon_grad(const DenseMatrix& s, const DenseVector& x_tilde,
                       const DenseVector& x) {
  if (s.cols != x_tilde.len || s.rows != x.len)
    throw ContractViolation("recon_grad: shape mismatch");
  DenseVector residual = matvec(s, x_tilde);
  for (std::size_t i = 0; i < residual.len; ++i) residual[i] -= x[i];
  return outer(residual, x_tilde);
}

DenseMatrix cons_grad(const DenseMatrix& s, const DenseMatrix& t,
                      const DenseVector& x_tilde) {
  if (!s.same_shape(t)) throw ContractViolation("cons_grad: student/teacher shape mismatch");
  if (s.cols != x_tilde.len) throw ContractViolation("cons_grad: input length mismatch");
  const DenseMatrix gap = sub(s, t);
  return outer(matvec(gap, x_tilde), x_tilde);
}

void sgd_step(LinearPair& pair, const DenseMatrix& grad, bool use_momentum) {
  if (!grad.same_shape(pair.student))
    throw ContractViolation("sgd_step: gradient shape mismatch");
  if (use_momentum) {
    scale_in_place(pair.velocity, pair.momentum);
    add_scaled_in_place(pair.velocity, grad, 1.0);
    add_scaled_in_place(pair.student, pair.velocity, -pair.lr);
    pair.momentum_used = true;
  } else {
    add_scaled_in_place(pair.student, grad, -pair.lr);
  }
  pair.step += 1;
}

void ema_update(LinearPair& pair) {
  scale_in_place(pair.teacher, pair.alpha);
  add_scaled_in_place(pair.teacher, pair.student, 1.0 - pair.alpha);
}

namespace {

// sum_{i=1}^{t} alpha^i grad^{(t-i)} from the retained history; requires the
// history to contain exactly the pair's `step` gradients.
DenseMatrix weighted_history_sum(const LinearPair& pair, const GradientHistory& history) {
  if (pair.momentum_used)
    throw ContractViolation(
        "history expansion requires plain SGD; this pair was trained with momentum");
  if (!history.complete_for(pair.step))
    throw ContractViolation("history expansion requires all gradients since step 0");

  DenseMatrix acc(pair.student.rows, pair.student.cols, 0.0);
  double alpha_pow = pair.alpha;  // alpha^{t - j} for j = t-1 down to 0
  for (std::size_t k = history.size(); k-- > 0;) {
    add_scaled_in_place(acc, history.entry(k).grad, alpha_pow);
    alpha_pow *= pair.alpha;
  }
  return acc;
}

DenseMatrix apply_input_second_moment(const DenseMatrix& m, const DenseVector& x_tilde) {
  // M (x xT) computed as (M x) xT.
  return outer(matvec(m, x_tilde), x_tilde);
}

}  // namespace

double verify_history_identity(const LinearPair& pair, const GradientHistory& history,
                               const DenseVector& x_tilde) {
  if (pair.step == 0) return 0.0;
  const DenseMatrix lhs = cons_grad(pair.student, pair.teacher, x_tilde);
  const DenseMatrix weighted = weighted_history_sum(pair, history);
  const DenseMatrix rhs =
      scale(apply_input_second_moment(weighted, x_tilde), -pair.lr);
  return max_abs(sub(lhs, rhs));
}

BoundCheck check_cons_bound(const LinearPair& pair, const GradientHistory& history,
                            const DenseVector& x_tilde) {
  if (pair.momentum_used)
    throw ContractViolation(
        "history expansion requires plain SGD; this pair was trained with momentum");
  if (!history.complete_for(pair.step))
    throw ContractViolation("history expansion requires all gradients since step 0");

  BoundCheck out;
  out.lhs = frobenius_norm(cons_grad(pair.student, pair.teacher, x_tilde));
  double alpha_pow = pair.alpha;
  for (std::size_t k = history.size(); k-- > 0;) {
    out.rhs += alpha_pow * pair.lr *
               frobenius_norm(apply_input_second_moment(history.entry(k).grad, x_tilde));
    alpha_pow *= pair.alpha;
  }
  return out;
}

BoundCheck check_recon_bound(const LinearPair& pair, const GradientHistory& history,
                             const DenseVector& x_tilde) {
  if (pair.momentum_used)
    throw ContractViolation(
        "history expansion requires plain SGD; this pair was trained with momentum");
  if (!history.complete_for(pair.step))
    throw ContractViolation("history expansion requires all gradients since step 0");

  BoundCheck out;
  DenseMatrix acc(pair.student.rows, pair.student.cols, 0.0);
  for (std::size_t k = 0; k < history.size(); ++k) {
    const DenseMatrix term =
        apply_input_second_moment(history.entry(k).grad, x_tilde);
    add_scaled_in_place(acc, term, pair.lr);
    out.rhs += pair.lr * frobenius_norm(term);
  }
  out.lhs = frobenius_norm(acc);
  return out;
}

CovarianceFixedPoint covariance_fixed_point(const VectorDataset& dataset,
                                            double mask_ratio, Rng& rng,
                                            bool with_bias, std::size_t n_estimate,
                                            std::size_t n_residual, double pinv_cutoff) {
  if (dataset.size() == 0)
    throw ContractViolation("covariance_fixed_point: empty dataset");
  const std::size_t dim = dataset.dim;
  const std::size_t in_dim = with_bias ? dim + 1 : dim;

  auto draw_pair = [&](DenseVector& x, DenseVector& x_tilde) {
    const DenseVector& point = dataset.points[rng.next_below(dataset.size())];
    const MaskSpec mask = draw_mask(dim, mask_ratio, rng);
    x = point;
    DenseVector masked = apply_vector_mask(point, mask);
    if (with_bias) {
      x_tilde = DenseVector(dim + 1);
      for (std::size_t i = 0; i < dim; ++i) x_tilde[i] = masked[i];
      x_tilde[dim] = 1.0;
    } else {
      x_tilde = std::move(masked);
    }
  };

  DenseMatrix sigma_x_xt(dim, in_dim, 0.0);
  DenseMatrix sigma_xt_xt(in_dim, in_dim, 0.0);
  DenseVector x, x_tilde;
  for (std::size_t n = 0; n < n_estimate; ++n) {
    draw_pair(x, x_tilde);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < in_dim; ++j) sigma_x_xt(i, j) += x[i] * x_tilde[j];
    for (std::size_t i = 0; i < in_dim; ++i)
      for (std::size_t j = 0; j <= i; ++j) sigma_xt_xt(i, j) += x_tilde[i] * x_tilde[j];
  }
  const double inv_n = 1.0 / static_cast<double>(n_estimate);
  scale_in_place(sigma_x_xt, inv_n);
  for (std::size_t i = 0; i < in_dim; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      sigma_xt_xt(i, j) *= inv_n;
      sigma_xt_xt(j, i) = sigma_xt_xt(i, j);
    }

  CovarianceFixedPoint out;
  const PinvResult pinv = pinv_psd(sigma_xt_xt, pinv_cutoff);
  out.pinv_truncated = pinv.truncated;
  out.s_star = matmul(sigma_x_xt, pinv.matrix);

  DenseMatrix mean_grad(dim, in_dim, 0.0);
  for (std::size_t n = 0; n < n_residual; ++n) {
    draw_pair(x, x_tilde);
    add_scaled_in_place(mean_grad, recon_grad(out.s_star, x_tilde, x), 1.0);
  }
  scale_in_place(mean_grad, 1.0 / static_cast<double>(n_residual));
  out.residual = frobenius_norm(mean_grad);
  return out;
}

ProbeRecord run_probe(const LinearPair& pair, const DenseVector& x,
                      const DenseVector& x_other, ProbeCase probe_case,
                      double mask_ratio, bool use_momentum, Rng& rng) {
  const std::size_t dim = pair.out_dim();
  if (x.len != dim) throw ContractViolation("run_probe: point dimension mismatch");

  // The probe takes a real step, so it operates on a full copy of the
  // training state.
  LinearPair clone = pair;

  const MaskSpec mask1 = draw_mask(dim, mask_ratio, rng);
  const DenseVector masked1 = apply_vector_mask(x, mask1);
  const DenseVector in1 = clone.lift(masked1);

  const DenseMatrix g_full = add(recon_grad(clone.student, in1, x),
                                 cons_grad(clone.student, clone.teacher, in1));
  sgd_step(clone, g_full, use_momentum);
  ema_update(clone);

  DenseVector masked2;
  const DenseVector* target2 = &x;
  switch (probe_case) {
    case ProbeCase::kSame:
      masked2 = masked1;
      break;
    case ProbeCase::kSimilar:
      masked2 = apply_vector_mask(x, draw_mask(dim, mask_ratio, rng));
      break;
    case ProbeCase::kDifferent:
      if (x_other.len != dim)
        throw ContractViolation("run_probe: independent point dimension mismatch");
      masked2 = apply_vector_mask(x_other, draw_mask(dim, mask_ratio, rng));
      target2 = &x_other;
      break;
  }
  const DenseVector in2 = clone.lift(masked2);

  const DenseMatrix g_recon = recon_grad(clone.student, in2, *target2);
  const DenseMatrix g_cons = cons_grad(clone.student, clone.teacher, in2);

  ProbeRecord rec;
  rec.probe_case = probe_case;
  rec.norm_recon = frobenius_norm(g_recon);
  rec.norm_cons = frobenius_norm(g_cons);
  rec.cos_prev_full_vs_cons = cosine_flat(g_full, g_cons);
  rec.cos_recon_vs_cons = cosine_flat(g_recon, g_cons);
  rec.input_similarity = cosine(masked1, masked2);
  return rec;
}

}  // namespace maelab
