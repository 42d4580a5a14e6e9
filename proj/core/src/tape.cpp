#include "maelab/tape.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace maelab {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi + x * pdf;
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw ContractViolation("Tape: node id out of range");
  return id;
}

Tape::NodeId Tape::leaf(DenseMatrix value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.value = maelab::matmul(va, vb);
  return push(std::move(n));
}

Tape::NodeId Tape::transpose(NodeId a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a;
  n.value = maelab::transpose(value(a));
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = maelab::add(value(a), value(b));
  return push(std::move(n));
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId row) {
  const auto& va = value(a);
  const auto& vr = value(row);
  if (vr.rows != 1 || vr.cols != va.cols)
    throw ContractViolation("Tape::add_rowvec: row must be 1 x cols(a)");
  Node n;
  n.op = Op::kAddRowVec;
  n.a = a;
  n.b = row;
  n.value = va;
  for (std::size_t i = 0; i < va.rows; ++i)
    for (std::size_t j = 0; j < va.cols; ++j) n.value(i, j) += vr.data[j];
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = c;
  n.value = maelab::scale(value(a), c);
  return push(std::move(n));
}

Tape::NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.value = value(a);
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

Tape::NodeId Tape::gelu(NodeId a) {
  Node n;
  n.op = Op::kGelu;
  n.a = a;
  n.value = value(a);
  for (double& v : n.value.data) v = gelu_value(v);
  return push(std::move(n));
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a;
  n.value = value(a);
  DenseMatrix& m = n.value;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = m(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      m(i, j) = std::exp(m(i, j) - mx);
      denom += m(i, j);
    }
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) /= denom;
  }
  return push(std::move(n));
}

Tape::NodeId Tape::layer_norm_rows(NodeId a, NodeId gamma, NodeId beta, double eps) {
  const auto& va = value(a);
  const auto& vg = value(gamma);
  const auto& vb = value(beta);
  if (vg.rows != 1 || vg.cols != va.cols || vb.rows != 1 || vb.cols != va.cols)
    throw ContractViolation("Tape::layer_norm_rows: gamma/beta must be 1 x cols(a)");
  Node n;
  n.op = Op::kLayerNormRows;
  n.a = a;
  n.b = gamma;
  n.c = beta;
  n.scalar = eps;
  n.value = DenseMatrix(va.rows, va.cols);
  for (std::size_t i = 0; i < va.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < va.cols; ++j) mean += va(i, j);
    mean /= static_cast<double>(va.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < va.cols; ++j) {
      const double d = va(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(va.cols);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < va.cols; ++j)
      n.value(i, j) = vg.data[j] * (va(i, j) - mean) * inv_std + vb.data[j];
  }
  return push(std::move(n));
}

Tape::NodeId Tape::gather_rows(NodeId a, std::vector<std::size_t> index) {
  const auto& va = value(a);
  for (std::size_t r : index)
    if (r >= va.rows) throw ContractViolation("Tape::gather_rows: index out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.a = a;
  n.value = DenseMatrix(index.size(), va.cols);
  for (std::size_t k = 0; k < index.size(); ++k)
    for (std::size_t j = 0; j < va.cols; ++j) n.value(k, j) = va(index[k], j);
  n.index = std::move(index);
  return push(std::move(n));
}

Tape::NodeId Tape::scatter_rows(NodeId a, std::vector<std::size_t> index, std::size_t total) {
  const auto& va = value(a);
  if (index.size() != va.rows)
    throw ContractViolation("Tape::scatter_rows: one index per input row required");
  std::vector<bool> seen(total, false);
  for (std::size_t r : index) {
    if (r >= total) throw ContractViolation("Tape::scatter_rows: index out of range");
    if (seen[r]) throw ContractViolation("Tape::scatter_rows: duplicate index");
    seen[r] = true;
  }
  Node n;
  n.op = Op::kScatterRows;
  n.a = a;
  n.value = DenseMatrix(total, va.cols, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k)
    for (std::size_t j = 0; j < va.cols; ++j) n.value(index[k], j) = va(k, j);
  n.index = std::move(index);
  return push(std::move(n));
}

Tape::NodeId Tape::sum_all(NodeId a) {
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  double acc = 0.0;
  for (double v : value(a).data) acc += v;
  n.value = DenseMatrix(1, 1, acc);
  return push(std::move(n));
}

Tape::NodeId Tape::mean_all(NodeId a) {
  const auto& va = value(a);
  if (va.size() == 0) throw ContractViolation("Tape::mean_all: empty input");
  Node n;
  n.op = Op::kMeanAll;
  n.a = a;
  double acc = 0.0;
  for (double v : va.data) acc += v;
  n.value = DenseMatrix(1, 1, acc / static_cast<double>(va.size()));
  return push(std::move(n));
}

Tape::NodeId Tape::masked_row_mse(NodeId a, NodeId b, std::vector<std::size_t> rows) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (!va.same_shape(vb)) throw ContractViolation("Tape::masked_row_mse: shape mismatch");
  if (rows.empty()) throw ContractViolation("Tape::masked_row_mse: empty row set");
  for (std::size_t r : rows)
    if (r >= va.rows) throw ContractViolation("Tape::masked_row_mse: row out of range");
  Node n;
  n.op = Op::kMaskedRowMse;
  n.a = a;
  n.b = b;
  double acc = 0.0;
  for (std::size_t r : rows) {
    for (std::size_t j = 0; j < va.cols; ++j) {
      const double d = va(r, j) - vb(r, j);
      acc += d * d;
    }
  }
  acc /= static_cast<double>(rows.size() * va.cols);
  n.value = DenseMatrix(1, 1, acc);
  n.index = std::move(rows);
  return push(std::move(n));
}

Tape::NodeId Tape::stop_grad(NodeId a) {
  Node n;
  n.op = Op::kStopGrad;
  n.a = a;
  n.value = value(a);
  return push(std::move(n));
}

void Tape::backward(NodeId output) {
  check(output);
  const Node& out = nodes_[output];
  if (out.value.rows != 1 || out.value.cols != 1)
    throw ContractViolation("Tape::backward: output must be scalar-valued");

  for (Node& n : nodes_) {
    n.adjoint = DenseMatrix(n.value.rows, n.value.cols, 0.0);
  }
  nodes_[output].adjoint(0, 0) = 1.0;
  for (NodeId id = output; id >= 0; --id) backprop_node(id);
}

void Tape::backprop_node(NodeId id) {
  Node& n = nodes_[id];
  const DenseMatrix& g = n.adjoint;
  switch (n.op) {
    case Op::kLeaf:
    case Op::kStopGrad:
      return;
    case Op::kMatMul: {
      // dA += G B^T, dB += A^T G.
      const DenseMatrix& va = nodes_[n.a].value;
      const DenseMatrix& vb = nodes_[n.b].value;
      DenseMatrix& da = nodes_[n.a].adjoint;
      DenseMatrix& db = nodes_[n.b].adjoint;
      for (std::size_t i = 0; i < va.rows; ++i)
        for (std::size_t k = 0; k < va.cols; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < vb.cols; ++j) acc += g(i, j) * vb(k, j);
          da(i, k) += acc;
        }
      for (std::size_t k = 0; k < va.cols; ++k)
        for (std::size_t i = 0; i < va.rows; ++i) {
          const double aik = va(i, k);
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < vb.cols; ++j) db(k, j) += aik * g(i, j);
        }
      return;
    }
    case Op::kTranspose: {
      DenseMatrix& da = nodes_[n.a].adjoint;
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) da(j, i) += g(i, j);
      return;
    }
    case Op::kAdd: {
      add_scaled_in_place(nodes_[n.a].adjoint, g, 1.0);
      add_scaled_in_place(nodes_[n.b].adjoint, g, 1.0);
      return;
    }
    case Op::kAddRowVec: {
      add_scaled_in_place(nodes_[n.a].adjoint, g, 1.0);
      DenseMatrix& dr = nodes_[n.b].adjoint;
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) dr(0, j) += g(i, j);
      return;
    }
    case Op::kScale: {
      add_scaled_in_place(nodes_[n.a].adjoint, g, n.scalar);
      return;
    }
    case Op::kTanh: {
      DenseMatrix& da = nodes_[n.a].adjoint;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value.data[i];
        da.data[i] += g.data[i] * (1.0 - y * y);
      }
      return;
    }
    case Op::kGelu: {
      const DenseMatrix& va = nodes_[n.a].value;
      DenseMatrix& da = nodes_[n.a].adjoint;
      for (std::size_t i = 0; i < g.size(); ++i)
        da.data[i] += g.data[i] * gelu_derivative(va.data[i]);
      return;
    }
    case Op::kSoftmaxRows: {
      // dx_i = y_i * (g_i - <g_i, y_i>).
      DenseMatrix& da = nodes_[n.a].adjoint;
      const DenseMatrix& y = n.value;
      for (std::size_t i = 0; i < y.rows; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) inner += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols; ++j)
          da(i, j) += y(i, j) * (g(i, j) - inner);
      }
      return;
    }
    case Op::kLayerNormRows: {
      const DenseMatrix& va = nodes_[n.a].value;
      const DenseMatrix& vg = nodes_[n.b].value;
      DenseMatrix& da = nodes_[n.a].adjoint;
      DenseMatrix& dgamma = nodes_[n.b].adjoint;
      DenseMatrix& dbeta = nodes_[n.c].adjoint;
      const std::size_t c = va.cols;
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < va.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += va(i, j);
        mean *= inv_c;
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = va(i, j) - mean;
          var += d * d;
        }
        var *= inv_c;
        const double inv_std = 1.0 / std::sqrt(var + n.scalar);

        // h_j = gamma_j * g_j; dx = (h - mean(h) - xhat * mean(h*xhat)) / std.
        double mean_h = 0.0;
        double mean_hx = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double xhat = (va(i, j) - mean) * inv_std;
          const double h = vg.data[j] * g(i, j);
          mean_h += h;
          mean_hx += h * xhat;
          dgamma(0, j) += g(i, j) * xhat;
          dbeta(0, j) += g(i, j);
        }
        mean_h *= inv_c;
        mean_hx *= inv_c;
        for (std::size_t j = 0; j < c; ++j) {
          const double xhat = (va(i, j) - mean) * inv_std;
          const double h = vg.data[j] * g(i, j);
          da(i, j) += (h - mean_h - xhat * mean_hx) * inv_std;
        }
      }
      return;
    }
    case Op::kGatherRows: {
      DenseMatrix& da = nodes_[n.a].adjoint;
      for (std::size_t k = 0; k < n.index.size(); ++k)
        for (std::size_t j = 0; j < g.cols; ++j) da(n.index[k], j) += g(k, j);
      return;
    }
    case Op::kScatterRows: {
      DenseMatrix& da = nodes_[n.a].adjoint;
      for (std::size_t k = 0; k < n.index.size(); ++k)
        for (std::size_t j = 0; j < g.cols; ++j) da(k, j) += g(n.index[k], j);
      return;
    }
    case Op::kSumAll: {
      const double s = g(0, 0);
      DenseMatrix& da = nodes_[n.a].adjoint;
      for (double& v : da.data) v += s;
      return;
    }
    case Op::kMeanAll: {
      DenseMatrix& da = nodes_[n.a].adjoint;
      const double s = g(0, 0) / static_cast<double>(da.size());
      for (double& v : da.data) v += s;
      return;
    }
    case Op::kMaskedRowMse: {
      const DenseMatrix& va = nodes_[n.a].value;
      const DenseMatrix& vb = nodes_[n.b].value;
      DenseMatrix& da = nodes_[n.a].adjoint;
      DenseMatrix& db = nodes_[n.b].adjoint;
      const double s =
          2.0 * g(0, 0) / static_cast<double>(n.index.size() * va.cols);
      for (std::size_t r : n.index) {
        for (std::size_t j = 0; j < va.cols; ++j) {
          const double d = s * (va(r, j) - vb(r, j));
          da(r, j) += d;
          db(r, j) -= d;
        }
      }
      return;
    }
  }
}

}  // namespace maelab
