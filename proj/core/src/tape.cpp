#include "binfer/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace binfer {

namespace {

// Broadcast plan for binary elementwise ops. Supported combinations:
// identical shapes, matrix [m,n] with row vector [n], and anything with a
// rank-0 scalar.
enum class BMap { kSame, kRow, kScalar };

struct BinaryPlan {
  std::vector<std::size_t> out_shape;
  BMap a = BMap::kSame;
  BMap b = BMap::kSame;
  std::size_t inner = 0;  // row length when kRow is involved
};

BinaryPlan binary_plan(const Tensor& a, const Tensor& b, const char* op) {
  BinaryPlan p;
  if (a.same_shape(b)) {
    p.out_shape = a.shape();
    return p;
  }
  if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.cols()) {
    p.out_shape = a.shape();
    p.b = BMap::kRow;
    p.inner = a.cols();
    return p;
  }
  if (b.rank() == 2 && a.rank() == 1 && a.shape()[0] == b.cols()) {
    p.out_shape = b.shape();
    p.a = BMap::kRow;
    p.inner = b.cols();
    return p;
  }
  if (b.rank() == 0) {
    p.out_shape = a.shape();
    p.b = BMap::kScalar;
    return p;
  }
  if (a.rank() == 0) {
    p.out_shape = b.shape();
    p.a = BMap::kScalar;
    return p;
  }
  throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a.shape()) +
                              " and " + shape_str(b.shape()) + " do not conform");
}

inline std::size_t bmap_index(BMap m, std::size_t i, std::size_t inner) {
  switch (m) {
    case BMap::kSame: return i;
    case BMap::kRow: return i % inner;
    case BMap::kScalar: return 0;
  }
  return 0;
}

void ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw std::domain_error(std::string("tape op '") + op + "' produced non-finite values");
  }
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kScale: return "scale";
    case Op::kAddConst: return "add_const";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kLogSumExp: return "log_sum_exp";
    case Op::kSoftmax: return "softmax";
    case Op::kGather: return "gather";
    case Op::kConcat: return "concat";
    case Op::kSliceCols: return "slice_cols";
    case Op::kStack: return "stack";
  }
  return "?";
}

}  // namespace

NodeId Tape::push(TapeNode n) {
  for (std::uint32_t in : n.inputs) {
    assert(in < nodes_.size() && "tape inputs must precede consumers");
    (void)in;
  }
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::leaf(Tensor value) {
  ensure_finite(value, "leaf");
  TapeNode n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value) {
  ensure_finite(value, "constant");
  TapeNode n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = false;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
    throw std::invalid_argument("matmul: shapes " + shape_str(A.shape()) + " x " +
                                shape_str(B.shape()) + " do not conform");
  }
  std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double av = A.data()[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  ensure_finite(out, "matmul");
  TapeNode node;
  node.op = Op::kMatmul;
  node.value = std::move(out);
  node.inputs = {a.index, b.index};
  node.requires_grad = nodes_[a.index].requires_grad || nodes_[b.index].requires_grad;
  return push(std::move(node));
}

namespace {
Tensor binary_forward(Op op, const Tensor& A, const Tensor& B, const BinaryPlan& p) {
  Tensor out(p.out_shape);
  std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double av = A.data()[bmap_index(p.a, i, p.inner)];
    double bv = B.data()[bmap_index(p.b, i, p.inner)];
    double r = 0.0;
    switch (op) {
      case Op::kAdd: r = av + bv; break;
      case Op::kSub: r = av - bv; break;
      case Op::kMul: r = av * bv; break;
      case Op::kDiv: r = av / bv; break;
      default: break;
    }
    out.data()[i] = r;
  }
  return out;
}
}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  BinaryPlan p = binary_plan(value(a), value(b), "add");
  Tensor out = binary_forward(Op::kAdd, value(a), value(b), p);
  ensure_finite(out, "add");
  TapeNode node;
  node.op = Op::kAdd;
  node.value = std::move(out);
  node.inputs = {a.index, b.index};
  node.requires_grad = nodes_[a.index].requires_grad || nodes_[b.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  BinaryPlan p = binary_plan(value(a), value(b), "sub");
  Tensor out = binary_forward(Op::kSub, value(a), value(b), p);
  ensure_finite(out, "sub");
  TapeNode node;
  node.op = Op::kSub;
  node.value = std::move(out);
  node.inputs = {a.index, b.index};
  node.requires_grad = nodes_[a.index].requires_grad || nodes_[b.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  BinaryPlan p = binary_plan(value(a), value(b), "mul");
  Tensor out = binary_forward(Op::kMul, value(a), value(b), p);
  ensure_finite(out, "mul");
  TapeNode node;
  node.op = Op::kMul;
  node.value = std::move(out);
  node.inputs = {a.index, b.index};
  node.requires_grad = nodes_[a.index].requires_grad || nodes_[b.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::div(NodeId a, NodeId b) {
  BinaryPlan p = binary_plan(value(a), value(b), "div");
  Tensor out = binary_forward(Op::kDiv, value(a), value(b), p);
  ensure_finite(out, "div");
  TapeNode node;
  node.op = Op::kDiv;
  node.value = std::move(out);
  node.inputs = {a.index, b.index};
  node.requires_grad = nodes_[a.index].requires_grad || nodes_[b.index].requires_grad;
  return push(std::move(node));
}

#define BINFER_UNARY(fn_name, op_enum, expr)                                  \
  NodeId Tape::fn_name(NodeId a) {                                           \
    const Tensor& A = value(a);                                               \
    Tensor out(A.shape());                                                    \
    for (std::size_t i = 0; i < A.size(); ++i) {                              \
      double x = A.data()[i];                                                 \
      (void)x;                                                                \
      out.data()[i] = (expr);                                                 \
    }                                                                         \
    ensure_finite(out, op_name(op_enum));                                     \
    TapeNode node;                                                            \
    node.op = op_enum;                                                        \
    node.value = std::move(out);                                              \
    node.inputs = {a.index};                                                  \
    node.requires_grad = nodes_[a.index].requires_grad;                       \
    return push(std::move(node));                                             \
  }

BINFER_UNARY(neg, Op::kNeg, -x)
BINFER_UNARY(relu, Op::kRelu, x > 0.0 ? x : 0.0)
BINFER_UNARY(tanh, Op::kTanh, std::tanh(x))
BINFER_UNARY(exp, Op::kExp, std::exp(x))
BINFER_UNARY(log, Op::kLog, std::log(x))
BINFER_UNARY(square, Op::kSquare, x * x)

#undef BINFER_UNARY

NodeId Tape::scale(NodeId a, double c) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out.data()[i] = c * A.data()[i];
  ensure_finite(out, "scale");
  TapeNode node;
  node.op = Op::kScale;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.c = c;
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::add_const(NodeId a, double c) {
  const Tensor& A = value(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out.data()[i] = A.data()[i] + c;
  ensure_finite(out, "add_const");
  TapeNode node;
  node.op = Op::kAddConst;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.c = c;
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::sum(NodeId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.data()[i];
  Tensor out = Tensor::scalar(s);
  ensure_finite(out, "sum");
  TapeNode node;
  node.op = Op::kSum;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::mean(NodeId a) {
  const Tensor& A = value(a);
  if (A.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.data()[i];
  Tensor out = Tensor::scalar(s / static_cast<double>(A.size()));
  ensure_finite(out, "mean");
  TapeNode node;
  node.op = Op::kMean;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

namespace {
// Iterate rank-1/rank-2 tensors as `slices` x `width` with the reduction
// running over `width`. axis=1 walks rows, axis=0 walks columns.
struct AxisView {
  std::size_t slices, width, slice_stride, elem_stride;
};

AxisView axis_view(const Tensor& t, int axis, const char* op) {
  if (t.rank() == 1) {
    if (axis != 0) throw std::invalid_argument(std::string(op) + ": axis must be 0 for rank-1");
    return {1, t.shape()[0], 0, 1};
  }
  if (t.rank() == 2) {
    if (axis == 1) return {t.rows(), t.cols(), t.cols(), 1};
    if (axis == 0) return {t.cols(), t.rows(), 1, t.cols()};
    throw std::invalid_argument(std::string(op) + ": axis out of range");
  }
  throw std::invalid_argument(std::string(op) + ": rank-1 or rank-2 required");
}
}  // namespace

NodeId Tape::log_sum_exp(NodeId a, int axis) {
  const Tensor& A = value(a);
  AxisView v = axis_view(A, axis, "log_sum_exp");
  Tensor out = (A.rank() == 1) ? Tensor(std::vector<std::size_t>{})
                               : Tensor({v.slices});
  for (std::size_t s = 0; s < v.slices; ++s) {
    const double* base = A.data() + s * v.slice_stride;
    double mx = base[0];
    for (std::size_t j = 1; j < v.width; ++j) mx = std::max(mx, base[j * v.elem_stride]);
    double acc = 0.0;
    for (std::size_t j = 0; j < v.width; ++j) acc += std::exp(base[j * v.elem_stride] - mx);
    out.data()[s] = mx + std::log(acc);
  }
  ensure_finite(out, "log_sum_exp");
  TapeNode node;
  node.op = Op::kLogSumExp;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.axis = axis;
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::softmax(NodeId a, int axis) {
  const Tensor& A = value(a);
  AxisView v = axis_view(A, axis, "softmax");
  Tensor out(A.shape());
  for (std::size_t s = 0; s < v.slices; ++s) {
    const double* base = A.data() + s * v.slice_stride;
    double* obase = out.data() + s * v.slice_stride;
    double mx = base[0];
    for (std::size_t j = 1; j < v.width; ++j) mx = std::max(mx, base[j * v.elem_stride]);
    double acc = 0.0;
    for (std::size_t j = 0; j < v.width; ++j) {
      double e = std::exp(base[j * v.elem_stride] - mx);
      obase[j * v.elem_stride] = e;
      acc += e;
    }
    for (std::size_t j = 0; j < v.width; ++j) obase[j * v.elem_stride] /= acc;
  }
  ensure_finite(out, "softmax");
  TapeNode node;
  node.op = Op::kSoftmax;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.axis = axis;
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::gather(NodeId a, std::vector<std::size_t> indices) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw std::invalid_argument("gather: rank-2 input required");
  if (indices.size() != A.rows()) {
    throw std::invalid_argument("gather: need one index per row");
  }
  Tensor out({A.rows()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= A.cols()) throw std::invalid_argument("gather: index out of range");
    out.data()[i] = A.at(i, indices[i]);
  }
  ensure_finite(out, "gather");
  TapeNode node;
  node.op = Op::kGather;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.indices = std::move(indices);
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::concat(NodeId a, NodeId b, int axis) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Tensor out;
  if (A.rank() == 1 && B.rank() == 1) {
    if (axis != 0) throw std::invalid_argument("concat: axis must be 0 for rank-1");
    out = Tensor({A.size() + B.size()});
    std::size_t i = 0;
    for (std::size_t j = 0; j < A.size(); ++j) out.data()[i++] = A.data()[j];
    for (std::size_t j = 0; j < B.size(); ++j) out.data()[i++] = B.data()[j];
  } else if (A.rank() == 2 && B.rank() == 2 && axis == 0) {
    if (A.cols() != B.cols()) throw std::invalid_argument("concat axis 0: column counts differ");
    out = Tensor({A.rows() + B.rows(), A.cols()});
    std::size_t i = 0;
    for (std::size_t j = 0; j < A.size(); ++j) out.data()[i++] = A.data()[j];
    for (std::size_t j = 0; j < B.size(); ++j) out.data()[i++] = B.data()[j];
  } else if (A.rank() == 2 && B.rank() == 2 && axis == 1) {
    if (A.rows() != B.rows()) throw std::invalid_argument("concat axis 1: row counts differ");
    out = Tensor({A.rows(), A.cols() + B.cols()});
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A.at(r, c);
      for (std::size_t c = 0; c < B.cols(); ++c) out.at(r, A.cols() + c) = B.at(r, c);
    }
  } else {
    throw std::invalid_argument("concat: unsupported shapes " + shape_str(A.shape()) +
                                ", " + shape_str(B.shape()));
  }
  ensure_finite(out, "concat");
  TapeNode node;
  node.op = Op::kConcat;
  node.value = std::move(out);
  node.inputs = {a.index, b.index};
  node.axis = axis;
  node.requires_grad = nodes_[a.index].requires_grad || nodes_[b.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::slice_cols(NodeId a, std::size_t col0, std::size_t col1) {
  const Tensor& A = value(a);
  if (A.rank() != 2 || col0 >= col1 || col1 > A.cols()) {
    throw std::invalid_argument("slice_cols: bad column range");
  }
  Tensor out({A.rows(), col1 - col0});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = col0; c < col1; ++c) out.at(r, c - col0) = A.at(r, c);
  }
  TapeNode node;
  node.op = Op::kSliceCols;
  node.value = std::move(out);
  node.inputs = {a.index};
  node.col0 = col0;
  node.col1 = col1;
  node.requires_grad = nodes_[a.index].requires_grad;
  return push(std::move(node));
}

NodeId Tape::stack(const std::vector<NodeId>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("stack: no inputs");
  Tensor out({scalars.size()});
  TapeNode node;
  node.op = Op::kStack;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& v = value(scalars[i]);
    if (v.size() != 1) throw std::invalid_argument("stack: inputs must be single-element");
    out.data()[i] = v.data()[0];
    node.inputs.push_back(scalars[i].index);
    node.requires_grad = node.requires_grad || nodes_[scalars[i].index].requires_grad;
  }
  node.value = std::move(out);
  return push(std::move(node));
}

NodeId Tape::forward(const std::string& op_kind, const std::vector<NodeId>& in,
                     const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument("forward '" + op_kind + "': expected " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(in.size()));
    }
  };
  if (op_kind == "matmul") { need(2); return matmul(in[0], in[1]); }
  if (op_kind == "add") { need(2); return add(in[0], in[1]); }
  if (op_kind == "sub") { need(2); return sub(in[0], in[1]); }
  if (op_kind == "mul") { need(2); return mul(in[0], in[1]); }
  if (op_kind == "div") { need(2); return div(in[0], in[1]); }
  if (op_kind == "neg") { need(1); return neg(in[0]); }
  if (op_kind == "scale") { need(1); return scale(in[0], attrs.c); }
  if (op_kind == "add_const") { need(1); return add_const(in[0], attrs.c); }
  if (op_kind == "relu") { need(1); return relu(in[0]); }
  if (op_kind == "tanh") { need(1); return tanh(in[0]); }
  if (op_kind == "exp") { need(1); return exp(in[0]); }
  if (op_kind == "log") { need(1); return log(in[0]); }
  if (op_kind == "square") { need(1); return square(in[0]); }
  if (op_kind == "sum") { need(1); return sum(in[0]); }
  if (op_kind == "mean") { need(1); return mean(in[0]); }
  if (op_kind == "log_sum_exp") { need(1); return log_sum_exp(in[0], attrs.axis); }
  if (op_kind == "softmax") { need(1); return softmax(in[0], attrs.axis); }
  if (op_kind == "gather") { need(1); return gather(in[0], attrs.indices); }
  if (op_kind == "concat") { need(2); return concat(in[0], in[1], attrs.axis); }
  if (op_kind == "slice_cols") { need(1); return slice_cols(in[0], attrs.col0, attrs.col1); }
  if (op_kind == "stack") { return stack(in); }
  throw std::invalid_argument("forward: unknown op kind '" + op_kind + "'");
}

std::vector<Tensor> Tape::backward(NodeId loss) const {
  const TapeNode& loss_node = nodes_[loss.index];
  if (loss_node.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss_node.value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  if (!loss_node.requires_grad) return grads;
  grads[loss.index] = Tensor::full(loss_node.value.shape(), 1.0);

  auto buf = [&](std::uint32_t idx) -> Tensor& {
    if (grads[idx].size() != nodes_[idx].value.size()) {
      grads[idx] = Tensor(nodes_[idx].value.shape());
    }
    return grads[idx];
  };
  auto wants = [&](std::uint32_t idx) { return nodes_[idx].requires_grad; };

  for (std::uint32_t id = loss.index + 1; id-- > 0;) {
    const TapeNode& n = nodes_[id];
    if (!n.requires_grad || grads[id].empty()) continue;
    const Tensor& g = grads[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        const Tensor& B = nodes_[n.inputs[1]].value;
        std::size_t m = A.rows(), k = A.cols(), w = B.cols();
        if (wants(n.inputs[0])) {
          Tensor& dA = buf(n.inputs[0]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              double gij = g.data()[i * w + j];
              if (gij == 0.0) continue;
              for (std::size_t p = 0; p < k; ++p)
                dA.data()[i * k + p] += gij * B.data()[p * w + j];
            }
        }
        if (wants(n.inputs[1])) {
          Tensor& dB = buf(n.inputs[1]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double aip = A.data()[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < w; ++j)
                dB.data()[p * w + j] += aip * g.data()[i * w + j];
            }
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        const Tensor& B = nodes_[n.inputs[1]].value;
        BinaryPlan p = binary_plan(A, B, op_name(n.op));
        bool wa = wants(n.inputs[0]), wb = wants(n.inputs[1]);
        Tensor* dA = wa ? &buf(n.inputs[0]) : nullptr;
        Tensor* dB = wb ? &buf(n.inputs[1]) : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double gi = g.data()[i];
          std::size_t ia = bmap_index(p.a, i, p.inner);
          std::size_t ib = bmap_index(p.b, i, p.inner);
          switch (n.op) {
            case Op::kAdd:
              if (wa) dA->data()[ia] += gi;
              if (wb) dB->data()[ib] += gi;
              break;
            case Op::kSub:
              if (wa) dA->data()[ia] += gi;
              if (wb) dB->data()[ib] -= gi;
              break;
            case Op::kMul:
              if (wa) dA->data()[ia] += gi * B.data()[ib];
              if (wb) dB->data()[ib] += gi * A.data()[ia];
              break;
            case Op::kDiv: {
              double bv = B.data()[ib];
              if (wa) dA->data()[ia] += gi / bv;
              if (wb) dB->data()[ib] -= gi * A.data()[ia] / (bv * bv);
              break;
            }
            default: break;
          }
        }
        break;
      }
      case Op::kNeg: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] -= g.data()[i];
        break;
      }
      case Op::kScale: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += n.c * g.data()[i];
        break;
      }
      case Op::kAddConst: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i];
        break;
      }
      case Op::kRelu: {
        if (!wants(n.inputs[0])) break;
        const Tensor& X = nodes_[n.inputs[0]].value;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (X.data()[i] > 0.0) d.data()[i] += g.data()[i];
        break;
      }
      case Op::kTanh: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double y = n.value.data()[i];
          d.data()[i] += g.data()[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kExp: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          d.data()[i] += g.data()[i] * n.value.data()[i];
        break;
      }
      case Op::kLog: {
        if (!wants(n.inputs[0])) break;
        const Tensor& X = nodes_[n.inputs[0]].value;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          d.data()[i] += g.data()[i] / X.data()[i];
        break;
      }
      case Op::kSquare: {
        if (!wants(n.inputs[0])) break;
        const Tensor& X = nodes_[n.inputs[0]].value;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          d.data()[i] += 2.0 * X.data()[i] * g.data()[i];
        break;
      }
      case Op::kSum: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        double gs = g.data()[0];
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += gs;
        break;
      }
      case Op::kMean: {
        if (!wants(n.inputs[0])) break;
        Tensor& d = buf(n.inputs[0]);
        double gs = g.data()[0] / static_cast<double>(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += gs;
        break;
      }
      case Op::kLogSumExp: {
        if (!wants(n.inputs[0])) break;
        const Tensor& X = nodes_[n.inputs[0]].value;
        AxisView v = axis_view(X, n.axis, "log_sum_exp");
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t s = 0; s < v.slices; ++s) {
          double ys = n.value.data()[s];
          double gs = g.data()[s];
          for (std::size_t j = 0; j < v.width; ++j) {
            std::size_t idx = s * v.slice_stride + j * v.elem_stride;
            d.data()[idx] += gs * std::exp(X.data()[idx] - ys);
          }
        }
        break;
      }
      case Op::kSoftmax: {
        if (!wants(n.inputs[0])) break;
        const Tensor& Y = n.value;
        AxisView v = axis_view(Y, n.axis, "softmax");
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t s = 0; s < v.slices; ++s) {
          double dotgy = 0.0;
          for (std::size_t j = 0; j < v.width; ++j) {
            std::size_t idx = s * v.slice_stride + j * v.elem_stride;
            dotgy += g.data()[idx] * Y.data()[idx];
          }
          for (std::size_t j = 0; j < v.width; ++j) {
            std::size_t idx = s * v.slice_stride + j * v.elem_stride;
            d.data()[idx] += Y.data()[idx] * (g.data()[idx] - dotgy);
          }
        }
        break;
      }
      case Op::kGather: {
        if (!wants(n.inputs[0])) break;
        const Tensor& A = nodes_[n.inputs[0]].value;
        Tensor& d = buf(n.inputs[0]);
        for (std::size_t i = 0; i < n.indices.size(); ++i)
          d.data()[i * A.cols() + n.indices[i]] += g.data()[i];
        break;
      }
      case Op::kConcat: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        const Tensor& B = nodes_[n.inputs[1]].value;
        bool wa = wants(n.inputs[0]), wb = wants(n.inputs[1]);
        if (n.axis == 1 && A.rank() == 2) {
          Tensor* dA = wa ? &buf(n.inputs[0]) : nullptr;
          Tensor* dB = wb ? &buf(n.inputs[1]) : nullptr;
          std::size_t total = A.cols() + B.cols();
          for (std::size_t r = 0; r < A.rows(); ++r) {
            for (std::size_t c = 0; c < A.cols(); ++c)
              if (wa) dA->data()[r * A.cols() + c] += g.data()[r * total + c];
            for (std::size_t c = 0; c < B.cols(); ++c)
              if (wb) dB->data()[r * B.cols() + c] += g.data()[r * total + A.cols() + c];
          }
        } else {
          // axis 0 (and rank-1): contiguous halves
          if (wa) {
            Tensor& dA = buf(n.inputs[0]);
            for (std::size_t i = 0; i < A.size(); ++i) dA.data()[i] += g.data()[i];
          }
          if (wb) {
            Tensor& dB = buf(n.inputs[1]);
            for (std::size_t i = 0; i < B.size(); ++i) dB.data()[i] += g.data()[A.size() + i];
          }
        }
        break;
      }
      case Op::kSliceCols: {
        if (!wants(n.inputs[0])) break;
        const Tensor& A = nodes_[n.inputs[0]].value;
        Tensor& d = buf(n.inputs[0]);
        std::size_t w = n.col1 - n.col0;
        for (std::size_t r = 0; r < A.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c)
            d.data()[r * A.cols() + n.col0 + c] += g.data()[r * w + c];
        break;
      }
      case Op::kStack: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          if (!wants(n.inputs[i])) continue;
          Tensor& d = buf(n.inputs[i]);
          d.data()[0] += g.data()[i];
        }
        break;
      }
    }
  }
  return grads;
}

NodeId softplus(Tape& t, NodeId x) {
  // relu(x) + log(1 + exp(x - 2 relu(x))); the exponent is -|x|, so exp stays
  // in (0, 1] and the result never overflows.
  NodeId r = t.relu(x);
  NodeId neg_abs = t.sub(x, t.scale(r, 2.0));
  return t.add(r, t.log(t.add_const(t.exp(neg_abs), 1.0)));
}

NodeId clamp(Tape& t, NodeId x, double lo, double hi) {
  // lo + relu(x - lo) - relu(x - hi)
  NodeId a = t.relu(t.add_const(x, -lo));
  NodeId b = t.relu(t.add_const(x, -hi));
  return t.add_const(t.sub(a, b), lo);
}

NodeId dot(Tape& t, NodeId a, NodeId b) { return t.sum(t.mul(a, b)); }

}  // namespace binfer
