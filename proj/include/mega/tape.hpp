#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mega/common.hpp"

namespace mega {

/// Dense row-major tensor of 64-bit floats. Rank 1 for vectors, rank 2 for
/// matrices; scalars are rank-1 tensors of size 1.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != element_count(shape))
      throw NumericError(msg("tensor data length ", data.size(), " does not match shape ",
                             shape_str(shape)));
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = element_count(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> d) {
    std::size_t n = d.size();
    return Tensor({n}, std::move(d));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }
};

/// Reverse-mode gradient tape. Node creation order is a topological order of
/// the computation, so backward() is a single reverse sweep; gradients
/// accumulate additively at fan-out.
class Tape {
 public:
  using NodeId = std::int32_t;

  NodeId leaf(Tensor value) { return push(Op::Leaf, std::move(value), -1, -1); }

  NodeId leaf_zeros(std::size_t n) { return push(Op::Leaf, Tensor::zeros({n}), -1, -1); }

  NodeId matvec(NodeId w, NodeId x) {
    const Tensor& W = value(w);
    const Tensor& X = value(x);
    if (W.shape.size() != 2 || X.shape.size() != 1 || W.cols() != X.size())
      throw NumericError(msg("matvec: shape mismatch ", Tensor::shape_str(W.shape), " vs ",
                             Tensor::shape_str(X.shape)));
    Tensor out = Tensor::zeros({W.rows()});
    for (std::size_t r = 0; r < W.rows(); ++r) {
      double acc = 0.0;
      const double* row = W.data.data() + r * W.cols();
      for (std::size_t c = 0; c < W.cols(); ++c) acc += row[c] * X.data[c];
      out.data[r] = acc;
    }
    return push(Op::MatVec, std::move(out), w, x);
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
      throw NumericError(msg("add: shape mismatch ", Tensor::shape_str(A.shape), " vs ",
                             Tensor::shape_str(B.shape)));
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    return push(Op::Add, std::move(out), a, b);
  }

  NodeId elemwise_mul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
      throw NumericError(msg("elemwise_mul: shape mismatch ", Tensor::shape_str(A.shape), " vs ",
                             Tensor::shape_str(B.shape)));
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    return push(Op::Mul, std::move(out), a, b);
  }

  NodeId concat(std::span<const NodeId> parts) {
    if (parts.empty()) throw NumericError("concat: no inputs");
    std::size_t total = 0;
    for (NodeId p : parts) {
      if (value(p).shape.size() != 1)
        throw NumericError(msg("concat: expected vectors, got ",
                               Tensor::shape_str(value(p).shape)));
      total += value(p).size();
    }
    Tensor out = Tensor::zeros({total});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& v = value(p);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
      off += v.size();
    }
    return push_variadic(Op::Concat, std::move(out), parts);
  }

  NodeId relu(NodeId x) {
    Tensor out = value(x);
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(Op::Relu, std::move(out), x, -1);
  }

  NodeId softmax(NodeId x) {
    const Tensor& X = value(x);
    if (X.shape.size() != 1 || X.size() == 0)
      throw NumericError(msg("softmax: expected non-empty vector, got ",
                             Tensor::shape_str(X.shape)));
    Tensor out = X;
    double mx = out.data[0];
    for (double v : out.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (auto& v : out.data) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : out.data) v /= sum;
    return push(Op::Softmax, std::move(out), x, -1);
  }

  NodeId dot(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B) || A.shape.size() != 1)
      throw NumericError(msg("dot: shape mismatch ", Tensor::shape_str(A.shape), " vs ",
                             Tensor::shape_str(B.shape)));
    double acc = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) acc += A.data[i] * B.data[i];
    return push(Op::Dot, Tensor::scalar(acc), a, b);
  }

  NodeId mean(std::span<const NodeId> xs) { return reduce(Op::Mean, xs); }

  NodeId sum(std::span<const NodeId> xs) { return reduce(Op::Sum, xs); }

  NodeId pick(NodeId v, std::size_t k) {
    const Tensor& V = value(v);
    if (V.shape.size() != 1 || k >= V.size())
      throw NumericError(msg("pick: index ", k, " out of range for ",
                             Tensor::shape_str(V.shape)));
    NodeId id = push(Op::Pick, Tensor::scalar(V.data[k]), v, -1);
    nodes_[static_cast<std::size_t>(id)].aux = static_cast<std::uint32_t>(k);
    return id;
  }

  NodeId scale(NodeId v, NodeId s) {
    const Tensor& V = value(v);
    const Tensor& S = value(s);
    if (S.size() != 1)
      throw NumericError(msg("scale: scalar operand has shape ", Tensor::shape_str(S.shape)));
    Tensor out = V;
    for (auto& x : out.data) x *= S.data[0];
    return push(Op::Scale, std::move(out), v, s);
  }

  /// Numerically stable binary cross-entropy on a logit; gradient is
  /// sigmoid(z) - label.
  NodeId bce_with_logits(NodeId logit, double label) {
    const Tensor& Z = value(logit);
    if (Z.size() != 1)
      throw NumericError(msg("bce_with_logits: logit has shape ", Tensor::shape_str(Z.shape)));
    double z = Z.data[0];
    double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    NodeId id = push(Op::BceLogits, Tensor::scalar(loss), logit, -1);
    nodes_[static_cast<std::size_t>(id)].scalar = label;
    return id;
  }

  const Tensor& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& grad(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).grad; }

  std::size_t size() const { return nodes_.size(); }

  /// Seeds the (scalar) loss gradient and sweeps the tape backward once.
  void backward(NodeId loss, double seed = 1.0) {
    if (value(loss).size() != 1)
      throw NumericError(msg("backward: loss must be scalar, got ",
                             Tensor::shape_str(value(loss).shape)));
    for (auto& n : nodes_) {
      n.grad.shape = n.value.shape;
      n.grad.data.assign(n.value.size(), 0.0);
    }
    nodes_[static_cast<std::size_t>(loss)].grad.data[0] = seed;
    for (std::size_t i = nodes_.size(); i-- > 0;) backstep(nodes_[i]);
  }

  void reset() {
    nodes_.clear();
    pool_.clear();
  }

 private:
  enum class Op : std::uint8_t {
    Leaf, MatVec, Add, Mul, Concat, Relu, Softmax, Dot, Mean, Sum, Pick, Scale, BceLogits
  };

  struct Node {
    Op op;
    NodeId a = -1;  // or pool offset for variadic ops
    NodeId b = -1;  // or pool count for variadic ops
    std::uint32_t aux = 0;
    double scalar = 0.0;
    Tensor value;
    Tensor grad;
  };

  NodeId push(Op op, Tensor value, NodeId a, NodeId b) {
    check_finite(value, op);
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId push_variadic(Op op, Tensor value, std::span<const NodeId> inputs) {
    check_finite(value, op);
    Node n;
    n.op = op;
    n.a = static_cast<NodeId>(pool_.size());
    n.b = static_cast<NodeId>(inputs.size());
    pool_.insert(pool_.end(), inputs.begin(), inputs.end());
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId reduce(Op op, std::span<const NodeId> xs) {
    if (xs.empty()) throw NumericError("mean/sum: no inputs");
    const Tensor& first = value(xs[0]);
    Tensor out = first;
    for (std::size_t i = 1; i < xs.size(); ++i) {
      const Tensor& v = value(xs[i]);
      if (!v.same_shape(first))
        throw NumericError(msg("mean/sum: shape mismatch ", Tensor::shape_str(first.shape),
                               " vs ", Tensor::shape_str(v.shape)));
      for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += v.data[k];
    }
    if (op == Op::Mean)
      for (auto& v : out.data) v /= static_cast<double>(xs.size());
    return push_variadic(op, std::move(out), xs);
  }

  static const char* op_name(Op op) {
    static constexpr const char* kNames[] = {"leaf",    "matvec", "add",  "elemwise_mul",
                                             "concat",  "relu",   "softmax", "dot",
                                             "mean",    "sum",    "pick", "scale",
                                             "bce_with_logits"};
    return kNames[static_cast<std::size_t>(op)];
  }

  void check_finite(const Tensor& t, Op op) const {
    for (double v : t.data)
      if (!std::isfinite(v))
        throw NumericError(msg("non-finite value produced by ", op_name(op)));
  }

  Tensor& gref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor& vref(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  void backstep(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatVec: {
        const Tensor& W = vref(n.a);
        const Tensor& X = vref(n.b);
        Tensor& gW = gref(n.a);
        Tensor& gX = gref(n.b);
        for (std::size_t r = 0; r < W.rows(); ++r) {
          double gr = g.data[r];
          if (gr == 0.0) continue;
          const double* row = W.data.data() + r * W.cols();
          double* gwrow = gW.data.data() + r * W.cols();
          for (std::size_t c = 0; c < W.cols(); ++c) {
            gwrow[c] += gr * X.data[c];
            gX.data[c] += gr * row[c];
          }
        }
        break;
      }
      case Op::Add: {
        Tensor& ga = gref(n.a);
        Tensor& gb = gref(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = vref(n.a);
        const Tensor& B = vref(n.b);
        Tensor& ga = gref(n.a);
        Tensor& gb = gref(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i] * B.data[i];
          gb.data[i] += g.data[i] * A.data[i];
        }
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (NodeId k = 0; k < n.b; ++k) {
          NodeId input = pool_[static_cast<std::size_t>(n.a + k)];
          Tensor& gi = gref(input);
          for (std::size_t i = 0; i < gi.size(); ++i) gi.data[i] += g.data[off + i];
          off += gi.size();
        }
        break;
      }
      case Op::Relu: {
        const Tensor& A = vref(n.a);
        Tensor& ga = gref(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (A.data[i] > 0.0) ga.data[i] += g.data[i];
        break;
      }
      case Op::Softmax: {
        const Tensor& Y = n.value;
        Tensor& ga = gref(n.a);
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g.data[i] * Y.data[i];
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data[i] += Y.data[i] * (g.data[i] - gy);
        break;
      }
      case Op::Dot: {
        const Tensor& A = vref(n.a);
        const Tensor& B = vref(n.b);
        Tensor& ga = gref(n.a);
        Tensor& gb = gref(n.b);
        double gs = g.data[0];
        for (std::size_t i = 0; i < A.size(); ++i) {
          ga.data[i] += gs * B.data[i];
          gb.data[i] += gs * A.data[i];
        }
        break;
      }
      case Op::Mean:
      case Op::Sum: {
        double w = n.op == Op::Mean ? 1.0 / static_cast<double>(n.b) : 1.0;
        for (NodeId k = 0; k < n.b; ++k) {
          NodeId input = pool_[static_cast<std::size_t>(n.a + k)];
          Tensor& gi = gref(input);
          for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += w * g.data[i];
        }
        break;
      }
      case Op::Pick: {
        gref(n.a).data[n.aux] += g.data[0];
        break;
      }
      case Op::Scale: {
        const Tensor& V = vref(n.a);
        const Tensor& S = vref(n.b);
        Tensor& gv = gref(n.a);
        Tensor& gs = gref(n.b);
        double s = S.data[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          gv.data[i] += g.data[i] * s;
          acc += g.data[i] * V.data[i];
        }
        gs.data[0] += acc;
        break;
      }
      case Op::BceLogits: {
        double z = vref(n.a).data[0];
        double sig = 1.0 / (1.0 + std::exp(-z));
        gref(n.a).data[0] += g.data[0] * (sig - n.scalar);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> pool_;
};

}  // namespace mega
