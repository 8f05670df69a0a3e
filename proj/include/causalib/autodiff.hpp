#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "causalib/errors.hpp"
#include "causalib/tensor.hpp"

namespace causalib {

// Reverse-mode autodiff over a define-by-run tape. A Graph is rebuilt per
// forward pass; node ids are indices into an append-only node sequence, so
// inputs always precede their consumers and one reverse sweep visits each
// node exactly once.
//
// Elementwise add/sub/mul accept equal shapes, a scalar operand, or a
// length-n row vector against an (m,n) matrix (bias-style broadcast; the
// gradient of the broadcast operand is reduced by summation).

enum class Op {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSum,
  kMean,
  kL1Diff,
  kL2Diff,
  kSoftmaxXent,
  kClip,
  kSign,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScalarMul: return "scalar-mul";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kL1Diff: return "l1-norm-of-difference";
    case Op::kL2Diff: return "l2-norm-of-difference";
    case Op::kSoftmaxXent: return "softmax-cross-entropy";
    case Op::kClip: return "clip";
    case Op::kSign: return "sign";
  }
  return "?";
}

struct Node {
  Op op = Op::kLeaf;
  std::vector<int> inputs;
  Tensor value;
  double attr0 = 0.0;        // scalar-mul factor / clip lo
  double attr1 = 0.0;        // clip hi
  std::vector<int> labels;   // softmax-cross-entropy targets
  bool requires_grad = false;
};

/// Leaf node id -> gradient tensor of identical shape.
class GradientMap {
 public:
  void set(int id, Tensor g) { grads_[id] = std::move(g); }
  bool contains(int id) const { return grads_.count(id) != 0; }
  const Tensor& at(int id) const {
    auto it = grads_.find(id);
    if (it == grads_.end()) throw ContractError("GradientMap: no gradient for node " + std::to_string(id));
    return it->second;
  }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<int, Tensor> grads_;
};

class Graph {
 public:
  /// Differentiable leaf (parameter or attacked input).
  int leaf(Tensor t) { return push_leaf(std::move(t), true); }
  /// Non-differentiable leaf (data batch, noise draw, selector matrix).
  int constant(Tensor t) { return push_leaf(std::move(t), false); }

  int matmul(int a, int b) {
    const Tensor &ta = value(a), &tb = value(b);
    return push(Op::kMatmul, {a, b}, causalib::matmul(ta, tb));
  }

  int add(int a, int b) { return ew(Op::kAdd, a, b); }
  int sub(int a, int b) { return ew(Op::kSub, a, b); }
  int mul(int a, int b) { return ew(Op::kMul, a, b); }

  int scalar_mul(int a, double c) {
    return push(Op::kScalarMul, {a}, scale(value(a), c), c);
  }

  int relu(int a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(Op::kRelu, {a}, std::move(out));
  }

  int exp(int a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::exp(v);
    return push(Op::kExp, {a}, std::move(out));
  }

  int log(int a) {
    Tensor out = value(a);
    for (double& v : out.data) {
      if (v <= 0.0) throw NumericError("log: domain violation (input <= 0)");
      v = std::log(v);
    }
    return push(Op::kLog, {a}, std::move(out));
  }

  int square(int a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v * v;
    return push(Op::kSquare, {a}, std::move(out));
  }

  int sum(int a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    return push(Op::kSum, {a}, Tensor::scalar(s));
  }

  int mean(int a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    return push(Op::kMean, {a}, Tensor::scalar(s / static_cast<double>(value(a).size())));
  }

  /// Mean absolute difference over all entries (scalar).
  int l1_diff(int a, int b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape(ta, tb, "l1-norm-of-difference");
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += std::abs(ta.data[i] - tb.data[i]);
    return push(Op::kL1Diff, {a, b}, Tensor::scalar(s / static_cast<double>(ta.size())));
  }

  /// Root-mean-square difference over all entries (scalar).
  /// Subgradient at identical inputs is 0 (same convention as relu at its kink).
  int l2_diff(int a, int b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape(ta, tb, "l2-norm-of-difference");
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      double d = ta.data[i] - tb.data[i];
      s += d * d;
    }
    return push(Op::kL2Diff, {a, b}, Tensor::scalar(std::sqrt(s / static_cast<double>(ta.size()))));
  }

  /// Fused mean cross-entropy of softmax(logits) against integer labels,
  /// stabilized by subtracting the row max before exponentiation.
  int softmax_xent(int logits, std::vector<int> labels) {
    const Tensor& t = value(logits);
    if (t.ndim() != 2)
      throw ShapeError("softmax-cross-entropy: logits must be 2-D, got " + shape_str(t.shape));
    const std::size_t B = t.shape[0], C = t.shape[1];
    if (labels.size() != B)
      throw ShapeError("softmax-cross-entropy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(B) + " rows");
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
      int y = labels[r];
      if (y < 0 || static_cast<std::size_t>(y) >= C)
        throw ContractError("softmax-cross-entropy: label " + std::to_string(y) +
                            " out of range for " + std::to_string(C) + " classes");
      const double* row = t.data.data() + r * C;
      double m = row[0];
      for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
      double lse = 0.0;
      for (std::size_t c = 0; c < C; ++c) lse += std::exp(row[c] - m);
      total += m + std::log(lse) - row[y];
    }
    int id = push(Op::kSoftmaxXent, {logits}, Tensor::scalar(total / static_cast<double>(B)));
    nodes_[id].labels = std::move(labels);
    return id;
  }

  int clip(int a, double lo, double hi) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::min(std::max(v, lo), hi);
    return push(Op::kClip, {a}, std::move(out), lo, hi);
  }

  int sign(int a) {
    return push(Op::kSign, {a}, causalib::sign(value(a)));
  }

  /// Generic entry point keyed by operation tag (used by the property-test
  /// graph generator). Unary/binary ops only; softmax-cross-entropy needs
  /// labels and goes through its named method.
  int forward_op(Op op, const std::vector<int>& in, double attr0 = 0.0, double attr1 = 1.0) {
    switch (op) {
      case Op::kMatmul: return matmul(in.at(0), in.at(1));
      case Op::kAdd: return add(in.at(0), in.at(1));
      case Op::kSub: return sub(in.at(0), in.at(1));
      case Op::kMul: return mul(in.at(0), in.at(1));
      case Op::kScalarMul: return scalar_mul(in.at(0), attr0);
      case Op::kRelu: return relu(in.at(0));
      case Op::kExp: return exp(in.at(0));
      case Op::kLog: return log(in.at(0));
      case Op::kSquare: return square(in.at(0));
      case Op::kSum: return sum(in.at(0));
      case Op::kMean: return mean(in.at(0));
      case Op::kL1Diff: return l1_diff(in.at(0), in.at(1));
      case Op::kL2Diff: return l2_diff(in.at(0), in.at(1));
      case Op::kClip: return clip(in.at(0), attr0, attr1);
      case Op::kSign: return sign(in.at(0));
      default:
        throw ContractError(std::string("forward_op: unsupported tag ") + op_name(op));
    }
  }

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode gradients of a scalar output w.r.t. every differentiable
  /// leaf. Leaves unreachable from the output map to zero tensors.
  GradientMap backward(int output) const {
    const Node& out = nodes_.at(static_cast<std::size_t>(output));
    if (out.value.size() != 1)
      throw ContractError("backward: output must be scalar, got shape " +
                          shape_str(out.value.shape));

    std::vector<Tensor> grads(nodes_.size());
    grads[output] = Tensor::full(out.value.shape, 1.0);

    for (int id = output; id >= 0; --id) {
      if (grads[id].data.empty()) continue;  // unreachable from output
      const Node& n = nodes_[id];
      const Tensor& g = grads[id];
      ensure_finite(g, "backward");
      switch (n.op) {
        case Op::kLeaf:
          break;
        case Op::kMatmul: {
          const Tensor &a = value(n.inputs[0]), &b = value(n.inputs[1]);
          Tensor ga = Tensor::zeros(a.shape);
          Tensor gb = Tensor::zeros(b.shape);
          as_matrix(ga).noalias() = as_matrix(g) * as_matrix(b).transpose();
          as_matrix(gb).noalias() = as_matrix(a).transpose() * as_matrix(g);
          accumulate(grads, n.inputs[0], std::move(ga));
          accumulate(grads, n.inputs[1], std::move(gb));
          break;
        }
        case Op::kAdd:
        case Op::kSub: {
          const Tensor &a = value(n.inputs[0]), &b = value(n.inputs[1]);
          accumulate(grads, n.inputs[0], reduce_to(g, a.shape));
          Tensor gb = reduce_to(g, b.shape);
          if (n.op == Op::kSub)
            for (double& v : gb.data) v = -v;
          accumulate(grads, n.inputs[1], std::move(gb));
          break;
        }
        case Op::kMul: {
          const Tensor &a = value(n.inputs[0]), &b = value(n.inputs[1]);
          accumulate(grads, n.inputs[0], reduce_to(mul_broadcast(g, b), a.shape));
          accumulate(grads, n.inputs[1], reduce_to(mul_broadcast(g, a), b.shape));
          break;
        }
        case Op::kScalarMul:
          accumulate(grads, n.inputs[0], scale(g, n.attr0));
          break;
        case Op::kRelu: {
          const Tensor& x = value(n.inputs[0]);
          Tensor gx = g;
          for (std::size_t i = 0; i < gx.size(); ++i)
            if (x.data[i] <= 0.0) gx.data[i] = 0.0;  // subgradient 0 at the kink
          accumulate(grads, n.inputs[0], std::move(gx));
          break;
        }
        case Op::kExp: {
          accumulate(grads, n.inputs[0], mul(g, n.value));
          break;
        }
        case Op::kLog: {
          const Tensor& x = value(n.inputs[0]);
          Tensor gx = g;
          for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] /= x.data[i];
          accumulate(grads, n.inputs[0], std::move(gx));
          break;
        }
        case Op::kSquare: {
          const Tensor& x = value(n.inputs[0]);
          Tensor gx = g;
          for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] *= 2.0 * x.data[i];
          accumulate(grads, n.inputs[0], std::move(gx));
          break;
        }
        case Op::kSum: {
          const Tensor& x = value(n.inputs[0]);
          accumulate(grads, n.inputs[0], Tensor::full(x.shape, g.data[0]));
          break;
        }
        case Op::kMean: {
          const Tensor& x = value(n.inputs[0]);
          accumulate(grads, n.inputs[0],
                     Tensor::full(x.shape, g.data[0] / static_cast<double>(x.size())));
          break;
        }
        case Op::kL1Diff: {
          const Tensor &a = value(n.inputs[0]), &b = value(n.inputs[1]);
          const double c = g.data[0] / static_cast<double>(a.size());
          Tensor ga = Tensor::zeros(a.shape);
          for (std::size_t i = 0; i < a.size(); ++i) {
            double d = a.data[i] - b.data[i];
            ga.data[i] = d > 0.0 ? c : (d < 0.0 ? -c : 0.0);
          }
          Tensor gb = scale(ga, -1.0);
          accumulate(grads, n.inputs[0], std::move(ga));
          accumulate(grads, n.inputs[1], std::move(gb));
          break;
        }
        case Op::kL2Diff: {
          const Tensor &a = value(n.inputs[0]), &b = value(n.inputs[1]);
          const double rms = n.value.data[0];
          Tensor ga = Tensor::zeros(a.shape);
          if (rms > 0.0) {
            const double c = g.data[0] / (static_cast<double>(a.size()) * rms);
            for (std::size_t i = 0; i < a.size(); ++i)
              ga.data[i] = c * (a.data[i] - b.data[i]);
          }
          Tensor gb = scale(ga, -1.0);
          accumulate(grads, n.inputs[0], std::move(ga));
          accumulate(grads, n.inputs[1], std::move(gb));
          break;
        }
        case Op::kSoftmaxXent: {
          const Tensor& logits = value(n.inputs[0]);
          const std::size_t B = logits.shape[0], C = logits.shape[1];
          const double gb = g.data[0] / static_cast<double>(B);
          Tensor gx = Tensor::zeros(logits.shape);
          for (std::size_t r = 0; r < B; ++r) {
            const double* row = logits.data.data() + r * C;
            double m = row[0];
            for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - m);
            double* grow = gx.data.data() + r * C;
            for (std::size_t c = 0; c < C; ++c) grow[c] = gb * std::exp(row[c] - m) / z;
            grow[n.labels[r]] -= gb;
          }
          accumulate(grads, n.inputs[0], std::move(gx));
          break;
        }
        case Op::kClip: {
          const Tensor& x = value(n.inputs[0]);
          Tensor gx = g;
          for (std::size_t i = 0; i < gx.size(); ++i)
            if (x.data[i] < n.attr0 || x.data[i] > n.attr1) gx.data[i] = 0.0;
          accumulate(grads, n.inputs[0], std::move(gx));
          break;
        }
        case Op::kSign: {
          accumulate(grads, n.inputs[0], Tensor::zeros(value(n.inputs[0]).shape));
          break;
        }
      }
    }

    GradientMap gm;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      if (!nodes_[id].requires_grad) continue;
      if (grads[id].data.empty())
        gm.set(static_cast<int>(id), Tensor::zeros(nodes_[id].value.shape));
      else {
        ensure_finite(grads[id], "backward(leaf)");
        gm.set(static_cast<int>(id), std::move(grads[id]));
      }
    }
    return gm;
  }

 private:
  std::vector<Node> nodes_;

  int push_leaf(Tensor t, bool requires_grad) {
    ensure_finite(t, "leaf");
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(t);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int push(Op op, std::vector<int> inputs, Tensor out, double attr0 = 0.0, double attr1 = 0.0) {
    ensure_finite(out, op_name(op));
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.value = std::move(out);
    n.attr0 = attr0;
    n.attr1 = attr1;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                       shape_str(b.shape));
  }

  // Broadcast classification for elementwise binaries.
  enum class Bc { kSame, kAScalar, kBScalar, kARow, kBRow };

  static Bc classify(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Bc::kSame;
    if (a.size() == 1) return Bc::kAScalar;
    if (b.size() == 1) return Bc::kBScalar;
    auto is_row_of = [](const Tensor& vec, const Tensor& mat) {
      return mat.ndim() == 2 && vec.size() == mat.shape[1] &&
             (vec.ndim() == 1 || (vec.ndim() == 2 && vec.shape[0] == 1));
    };
    if (is_row_of(b, a)) return Bc::kBRow;
    if (is_row_of(a, b)) return Bc::kARow;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }

  int ew(Op op, int ia, int ib) {
    const Tensor &a = value(ia), &b = value(ib);
    Bc bc = classify(a, b, op_name(op));
    const Tensor& big = (bc == Bc::kAScalar || bc == Bc::kARow) ? b : a;
    Tensor out = Tensor::zeros(big.shape);
    auto apply = [op](double x, double y) {
      switch (op) {
        case Op::kAdd: return x + y;
        case Op::kSub: return x - y;
        default: return x * y;
      }
    };
    const std::size_t n = out.size();
    const std::size_t ncols = big.ndim() == 2 ? big.shape[1] : n;
    for (std::size_t i = 0; i < n; ++i) {
      double x, y;
      switch (bc) {
        case Bc::kSame: x = a.data[i]; y = b.data[i]; break;
        case Bc::kAScalar: x = a.data[0]; y = b.data[i]; break;
        case Bc::kBScalar: x = a.data[i]; y = b.data[0]; break;
        case Bc::kARow: x = a.data[i % ncols]; y = b.data[i]; break;
        case Bc::kBRow: x = a.data[i]; y = b.data[i % ncols]; break;
      }
      out.data[i] = apply(x, y);
    }
    return push(op, {ia, ib}, std::move(out));
  }

  /// Elementwise product where `small` may be scalar or row-broadcast against `g`.
  static Tensor mul_broadcast(const Tensor& g, const Tensor& small) {
    if (g.same_shape(small)) return mul(g, small);
    Tensor out = g;
    if (small.size() == 1) {
      for (double& v : out.data) v *= small.data[0];
      return out;
    }
    const std::size_t ncols = small.size();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= small.data[i % ncols];
    return out;
  }

  /// Sum-reduce a full-shaped gradient onto a (possibly broadcast) operand shape.
  static Tensor reduce_to(const Tensor& g, const Shape& target) {
    if (g.shape == target) return g;
    const std::size_t tn = shape_numel(target);
    if (tn == 1) {
      double s = 0.0;
      for (double v : g.data) s += v;
      return Tensor(target, {s});
    }
    // row-vector target: column sums
    Tensor out = Tensor::zeros(target);
    for (std::size_t i = 0; i < g.size(); ++i) out.data[i % tn] += g.data[i];
    return out;
  }

  static void accumulate(std::vector<Tensor>& grads, int id, Tensor delta) {
    if (grads[id].data.empty()) {
      grads[id] = std::move(delta);
    } else {
      Tensor& g = grads[id];
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += delta.data[i];
    }
  }
};

/// Max over coordinates of |central difference - autodiff gradient| /
/// max(|autodiff gradient|, 1e-8). `build` constructs the scalar output from
/// a leaf holding x; it is re-run at each perturbed point, so it must be a
/// pure function of the leaf value.
template <typename BuildFn>
double finite_difference_check(BuildFn&& build, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_difference_check: h must be positive");
  Graph g;
  int xid = g.leaf(x);
  int out = build(g, xid);
  Tensor grad = g.backward(out).at(xid);

  auto eval = [&](const Tensor& p) {
    Graph gp;
    int pid = gp.leaf(p);
    return gp.value(build(gp, pid)).item();
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe.data[i] = x.data[i] + h;
    double fp = eval(probe);
    probe.data[i] = x.data[i] - h;
    double fm = eval(probe);
    probe.data[i] = x.data[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_check: non-finite evaluation");
    double cd = (fp - fm) / (2.0 * h);
    double err = std::abs(cd - grad.data[i]) / std::max(std::abs(grad.data[i]), 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace causalib
