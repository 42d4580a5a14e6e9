#include "maelab/shallow_net.hpp"

#include <cmath>
#include <numbers>

#include "maelab/masking.hpp"

namespace maelab {

namespace {

double act_value(Activation act, double u) {
  if (act == Activation::kTanh) return std::tanh(u);
  return 0.5 * u * (1.0 + std::erf(u * 0.70710678118654752440));
}

double act_derivative(Activation act, double u) {
  if (act == Activation::kTanh) {
    const double t = std::tanh(u);
    return 1.0 - t * t;
  }
  const double phi = 0.5 * (1.0 + std::erf(u * 0.70710678118654752440));
  const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  return phi + u * pdf;
}

}  // namespace

ShallowNet ShallowNet::init(std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                            Activation activation, double alpha, double lr,
                            double momentum, Rng& rng, double init_scale) {
  ShallowNet net;
  net.a = DenseMatrix(hidden, in_dim);
  net.b = DenseMatrix(out_dim, hidden);
  const double scale_a = init_scale / std::sqrt(static_cast<double>(in_dim));
  const double scale_b = init_scale / std::sqrt(static_cast<double>(hidden));
  for (double& v : net.a.data) v = scale_a * rng.normal();
  for (double& v : net.b.data) v = scale_b * rng.normal();
  net.c = net.a;
  net.d = net.b;
  net.velocity_a = DenseMatrix(hidden, in_dim, 0.0);
  net.velocity_b = DenseMatrix(out_dim, hidden, 0.0);
  net.activation = activation;
  net.alpha = alpha;
  net.lr = lr;
  net.momentum = momentum;
  return net;
}

DenseVector shallow_forward(const ShallowNet& net, const DenseVector& x_tilde,
                            bool use_teacher) {
  const DenseMatrix& first = use_teacher ? net.c : net.a;
  const DenseMatrix& second = use_teacher ? net.d : net.b;
  if (first.cols != x_tilde.len)
    throw ContractViolation("shallow_forward: input length mismatch");
  DenseVector hidden = matvec(first, x_tilde);
  for (double& v : hidden.data) v = act_value(net.activation, v);
  return matvec(second, hidden);
}

ShallowGrads shallow_grads(const ShallowNet& net, const DenseVector& x_tilde,
                           const DenseVector& x) {
  if (net.a.cols != x_tilde.len || net.b.rows != x.len)
    throw ContractViolation("shallow_grads: shape mismatch");

  const DenseVector pre = matvec(net.a, x_tilde);
  DenseVector hidden(pre.len);
  DenseVector dact(pre.len);
  for (std::size_t i = 0; i < pre.len; ++i) {
    hidden[i] = act_value(net.activation, pre[i]);
    dact[i] = act_derivative(net.activation, pre[i]);
  }
  const DenseVector pred = matvec(net.b, hidden);
  const DenseVector teacher_pred = shallow_forward(net, x_tilde, /*use_teacher=*/true);

  // For each loss 0.5||pred - target||^2: dB = r h^T and
  // dA = (B^T r . s'(A xt)) xt^T with r = pred - target.
  auto grads_for_target = [&](const DenseVector& target, DenseMatrix& ga, DenseMatrix& gb) {
    const DenseVector r = sub(pred, target);
    gb = outer(r, hidden);
    DenseVector back = matvec(transpose(net.b), r);
    for (std::size_t i = 0; i < back.len; ++i) back[i] *= dact[i];
    ga = outer(back, x_tilde);
  };

  ShallowGrads g;
  grads_for_target(x, g.a_recon, g.b_recon);
  grads_for_target(teacher_pred, g.a_cons, g.b_cons);
  return g;
}

void shallow_sgd_step(ShallowNet& net, const DenseMatrix& grad_a,
                      const DenseMatrix& grad_b, bool use_momentum) {
  if (!grad_a.same_shape(net.a) || !grad_b.same_shape(net.b))
    throw ContractViolation("shallow_sgd_step: gradient shape mismatch");
  if (use_momentum) {
    scale_in_place(net.velocity_a, net.momentum);
    add_scaled_in_place(net.velocity_a, grad_a, 1.0);
    add_scaled_in_place(net.a, net.velocity_a, -net.lr);
    scale_in_place(net.velocity_b, net.momentum);
    add_scaled_in_place(net.velocity_b, grad_b, 1.0);
    add_scaled_in_place(net.b, net.velocity_b, -net.lr);
  } else {
    add_scaled_in_place(net.a, grad_a, -net.lr);
    add_scaled_in_place(net.b, grad_b, -net.lr);
  }
  net.step += 1;
}

void shallow_ema_update(ShallowNet& net) {
  scale_in_place(net.c, net.alpha);
  add_scaled_in_place(net.c, net.a, 1.0 - net.alpha);
  scale_in_place(net.d, net.alpha);
  add_scaled_in_place(net.d, net.b, 1.0 - net.alpha);
}

namespace {

double stacked_norm(const DenseMatrix& a, const DenseMatrix& b) {
  const double na = frobenius_norm(a);
  const double nb = frobenius_norm(b);
  return std::sqrt(na * na + nb * nb);
}

double stacked_cosine(const DenseMatrix& a1, const DenseMatrix& b1,
                      const DenseMatrix& a2, const DenseMatrix& b2) {
  const double n1 = stacked_norm(a1, b1);
  const double n2 = stacked_norm(a2, b2);
  if (n1 == 0.0 || n2 == 0.0) return 0.0;
  return (dot_flat(a1, a2) + dot_flat(b1, b2)) / (n1 * n2);
}

}  // namespace

ProbeRecord run_shallow_probe(const ShallowNet& net, const DenseVector& x,
                              const DenseVector& x_other, ProbeCase probe_case,
                              double mask_ratio, bool use_momentum, Rng& rng) {
  if (x.len != net.in_dim()) throw ContractViolation("run_shallow_probe: point dimension mismatch");
  ShallowNet clone = net;

  const MaskSpec mask1 = draw_mask(clone.in_dim(), mask_ratio, rng);
  const DenseVector in1 = apply_vector_mask(x, mask1);

  const ShallowGrads g1 = shallow_grads(clone, in1, x);
  const DenseMatrix g1_a = g1.a_total();
  const DenseMatrix g1_b = g1.b_total();
  shallow_sgd_step(clone, g1_a, g1_b, use_momentum);
  shallow_ema_update(clone);

  DenseVector in2;
  const DenseVector* target2 = &x;
  switch (probe_case) {
    case ProbeCase::kSame:
      in2 = in1;
      break;
    case ProbeCase::kSimilar:
      in2 = apply_vector_mask(x, draw_mask(clone.in_dim(), mask_ratio, rng));
      break;
    case ProbeCase::kDifferent:
      if (x_other.len != net.in_dim())
        throw ContractViolation("run_shallow_probe: independent point dimension mismatch");
      in2 = apply_vector_mask(x_other, draw_mask(clone.in_dim(), mask_ratio, rng));
      target2 = &x_other;
      break;
  }

  const ShallowGrads g2 = shallow_grads(clone, in2, *target2);

  ProbeRecord rec;
  rec.probe_case = probe_case;
  rec.norm_recon = stacked_norm(g2.a_recon, g2.b_recon);
  rec.norm_cons = stacked_norm(g2.a_cons, g2.b_cons);
  rec.cos_prev_full_vs_cons = stacked_cosine(g1_a, g1_b, g2.a_cons, g2.b_cons);
  rec.cos_recon_vs_cons = stacked_cosine(g2.a_recon, g2.b_recon, g2.a_cons, g2.b_cons);
  rec.input_similarity = cosine(in1, in2);
  return rec;
}

}  // namespace maelab
