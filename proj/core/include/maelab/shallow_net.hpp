#pragma once

#include <cstddef>

#include "maelab/linear_lab.hpp"  // ProbeCase, ProbeRecord
#include "maelab/matrix.hpp"
#include "maelab/rng.hpp"

namespace maelab {

enum class Activation { kTanh, kGelu };

/// Single-hidden-layer student/teacher pair: student B sigma(A x), teacher
/// D sigma(C x). The teacher mirrors the student's shapes and starts as an
/// exact copy; it only ever receives EMA updates.
struct ShallowNet {
  DenseMatrix a;  // student first layer, hidden x in
  DenseMatrix b;  // student second layer, out x hidden
  DenseMatrix c;  // teacher first layer
  DenseMatrix d;  // teacher second layer
  Activation activation = Activation::kTanh;
  double alpha = 0.9;
  double lr = 0.001;
  double momentum = 0.97;
  DenseMatrix velocity_a;
  DenseMatrix velocity_b;
  long step = 0;

  static ShallowNet init(std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                         Activation activation, double alpha, double lr, double momentum,
                         Rng& rng, double init_scale = 0.1);

  std::size_t in_dim() const { return a.cols; }
  std::size_t hidden_dim() const { return a.rows; }
  std::size_t out_dim() const { return b.rows; }
};

/// B sigma(A x_tilde) (student) or D sigma(C x_tilde) (teacher).
DenseVector shallow_forward(const ShallowNet& net, const DenseVector& x_tilde,
                            bool use_teacher);

struct ShallowGrads {
  DenseMatrix a_recon;  // d L_r / dA
  DenseMatrix b_recon;  // d L_r / dB
  DenseMatrix a_cons;   // d L_c / dA
  DenseMatrix b_cons;   // d L_c / dB

  DenseMatrix a_total() const { return add(a_recon, a_cons); }
  DenseMatrix b_total() const { return add(b_recon, b_cons); }
};

/// Hand-coded backprop for 0.5||B s(A xt) - x||^2 + 0.5||B s(A xt) -
/// StopGrad(D s(C xt))||^2, split into the two loss components. The teacher
/// weights receive no gradient.
ShallowGrads shallow_grads(const ShallowNet& net, const DenseVector& x_tilde,
                           const DenseVector& x);

void shallow_sgd_step(ShallowNet& net, const DenseMatrix& grad_a,
                      const DenseMatrix& grad_b, bool use_momentum);

/// C = alpha C + (1-alpha) A, D = alpha D + (1-alpha) B.
void shallow_ema_update(ShallowNet& net);

/// Two-input probe on a deep copy of the net, mirroring the linear protocol.
/// Gradients are flattened over [A, B] for norms and cosines. x_other
/// supplies the independent point for kDifferent.
ProbeRecord run_shallow_probe(const ShallowNet& net, const DenseVector& x,
                              const DenseVector& x_other, ProbeCase probe_case,
                              double mask_ratio, bool use_momentum, Rng& rng);

}  // namespace maelab
