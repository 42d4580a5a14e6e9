#pragma once

#include <cstddef>
#include <vector>

#include "maelab/matrix.hpp"

namespace maelab {

/// Reverse-mode automatic differentiation over a fixed primitive set: matmul,
/// transpose, add (elementwise and row-broadcast), scale, tanh, GELU, row
/// softmax, row layer-norm, gather/scatter by row index, sum/mean reductions,
/// and a masked squared-error loss. Anything the lab models need composes
/// from these.
///
/// Nodes reference only earlier nodes, so a single reverse sweep from a
/// scalar output accumulates exact adjoints for every leaf.
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(DenseMatrix value);
  /// Leaf whose adjoint is discarded; exempts constants (targets, inputs)
  /// from gradient bookkeeping. Functionally identical to leaf().
  NodeId constant(DenseMatrix value) { return leaf(std::move(value)); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add(NodeId a, NodeId b);
  /// a (n x c) + row (1 x c) broadcast over rows.
  NodeId add_rowvec(NodeId a, NodeId row);
  NodeId scale(NodeId a, double c);
  NodeId tanh(NodeId a);
  NodeId gelu(NodeId a);
  NodeId softmax_rows(NodeId a);
  /// Per-row layer norm with affine parameters gamma, beta (both 1 x c).
  NodeId layer_norm_rows(NodeId a, NodeId gamma, NodeId beta, double eps = 1e-6);
  NodeId gather_rows(NodeId a, std::vector<std::size_t> index);
  /// Rows of a placed at `index` within a (total x c) zero matrix. Indices
  /// must be unique and in range.
  NodeId scatter_rows(NodeId a, std::vector<std::size_t> index, std::size_t total);
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);
  /// Mean over `rows` of the per-element mean squared error between a and b;
  /// entries outside `rows` contribute nothing.
  NodeId masked_row_mse(NodeId a, NodeId b, std::vector<std::size_t> rows);
  /// Identity in value; drops the adjoint in backward.
  NodeId stop_grad(NodeId a);

  const DenseMatrix& value(NodeId id) const { return nodes_[check(id)].value; }
  const DenseMatrix& adjoint(NodeId id) const { return nodes_[check(id)].adjoint; }

  /// Reverse sweep from a scalar-valued node. Resets all adjoints first;
  /// afterwards adjoint(leaf) holds d(output)/d(leaf).
  void backward(NodeId output);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  enum class Op {
    kLeaf,
    kMatMul,
    kTranspose,
    kAdd,
    kAddRowVec,
    kScale,
    kTanh,
    kGelu,
    kSoftmaxRows,
    kLayerNormRows,
    kGatherRows,
    kScatterRows,
    kSumAll,
    kMeanAll,
    kMaskedRowMse,
    kStopGrad,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    NodeId c = -1;
    double scalar = 0.0;
    std::vector<std::size_t> index;
    DenseMatrix value;
    DenseMatrix adjoint;
  };

  NodeId push(Node n);
  NodeId check(NodeId id) const;
  void backprop_node(NodeId id);

  std::vector<Node> nodes_;
};

}  // namespace maelab
