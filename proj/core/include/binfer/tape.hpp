#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "binfer/tensor.hpp"

namespace binfer {

enum class Op : std::uint8_t {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddConst,
  kRelu,
  kTanh,
  kExp,
  kLog,
  kSquare,
  kSum,
  kMean,
  kLogSumExp,
  kSoftmax,
  kGather,
  kConcat,
  kSliceCols,
  kStack,
};

struct NodeId {
  std::uint32_t index = 0;
};

/// Record of one forward operation: kind, input node ids and the computed
/// value. Node ids are topologically ordered by construction (inputs always
/// precede consumers), which is what lets backward() do a single reverse scan.
struct TapeNode {
  Op op = Op::kLeaf;
  Tensor value;
  std::vector<std::uint32_t> inputs;
  int axis = -1;                       // log_sum_exp / softmax / concat
  double c = 0.0;                      // scale / add_const payload
  std::size_t col0 = 0, col1 = 0;      // slice_cols
  std::vector<std::size_t> indices;    // gather
  bool requires_grad = false;
};

/// Per-evaluation recording structure for reverse-mode differentiation.
/// Build a graph with the op builders, call backward(loss) once, then discard
/// the tape. Every forward result is checked for NaN/Inf and a
/// std::domain_error is raised at the offending op, so divergence surfaces at
/// its source rather than in a later loss value.
class Tape {
 public:
  /// Differentiable input.
  NodeId leaf(Tensor value);
  /// Non-differentiable input (data, noise draws, frozen parameters).
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  /// Shift-stabilized: the per-axis max is subtracted before exponentiation.
  NodeId log_sum_exp(NodeId a, int axis);
  /// Shift-stabilized softmax along `axis`.
  NodeId softmax(NodeId a, int axis);
  /// out[i] = a[i, indices[i]] for a rank-2 input.
  NodeId gather(NodeId a, std::vector<std::size_t> indices);
  NodeId concat(NodeId a, NodeId b, int axis);
  NodeId slice_cols(NodeId a, std::size_t col0, std::size_t col1);
  /// Stack single-element nodes into a rank-1 vector.
  NodeId stack(const std::vector<NodeId>& scalars);

  struct OpAttrs {
    int axis = -1;
    double c = 0.0;
    std::size_t col0 = 0, col1 = 0;
    std::vector<std::size_t> indices;
  };
  /// Generic entry point dispatching on the op name ("matmul", "add", ...).
  NodeId forward(const std::string& op_kind, const std::vector<NodeId>& inputs,
                 const OpAttrs& attrs);
  NodeId forward(const std::string& op_kind, const std::vector<NodeId>& inputs) {
    return forward(op_kind, inputs, OpAttrs{});
  }

  const Tensor& value(NodeId id) const { return nodes_[id.index].value; }
  const TapeNode& node(NodeId id) const { return nodes_[id.index]; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse pass from a scalar loss node. Adjoints accumulate across
  /// fan-out; each node is visited exactly once in reverse id order. Returns
  /// one adjoint per node id; nodes that do not require grad (or that the
  /// loss does not reach) keep an empty Tensor.
  std::vector<Tensor> backward(NodeId loss) const;

 private:
  NodeId push(TapeNode n);
  std::vector<TapeNode> nodes_;
};

// Composites built from the primitive ops.

/// Numerically stable softplus: relu(x) + log(1 + exp(-|x|)).
NodeId softplus(Tape& t, NodeId x);
/// Hard clamp with unit gradient inside [lo, hi] and zero outside.
NodeId clamp(Tape& t, NodeId x, double lo, double hi);
/// sum(a * b).
NodeId dot(Tape& t, NodeId a, NodeId b);

}  // namespace binfer
