#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fkan/array.hpp"

namespace fkan {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Define-by-run reverse-mode tape over Array2 values.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. Only nodes
/// that transitively depend on a parameter carry a pullback.
class Tape {
 public:
  using Pullback = std::function<void(Tape&, const Array2& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array2 value) { return push(std::move(value), false, {}); }
  Var parameter(Array2 value) { return push(std::move(value), true, {}); }

  /// Records an operation result. `pullback` is kept only when one of the
  /// inputs requires a gradient.
  Var record(Array2 value, std::initializer_list<Var> inputs, Pullback pullback) {
    bool needs_grad = false;
    for (Var v : inputs) needs_grad = needs_grad || nodes_.at(v.id).requires_grad;
    return push(std::move(value), needs_grad, needs_grad ? std::move(pullback) : Pullback{});
  }

  const Array2& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  /// Moves a node's value out, leaving it empty. Only valid once nothing
  /// else will read the node.
  Array2 take(Var v) { return std::move(nodes_.at(v.id).value); }

  /// Adds `contribution` to the gradient of `v` if `v` is differentiable.
  template <typename Expr>
  void accumulate(Var v, const Expr& contribution) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = contribution;
    } else {
      n.grad += contribution;
    }
  }

  /// Reverse sweep from a scalar node. Gradients from a previous sweep are
  /// discarded.
  void backward(Var loss) {
    const Node& l = nodes_.at(loss.id);
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      throw ShapeError("backward: loss must be a 1 x 1 scalar, got " + shape_string(l.value));
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!l.requires_grad) return;
    nodes_[loss.id].grad = Array2::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.pullback || n.grad.size() == 0) continue;
      // The pullback may append to other nodes' grads but never to its own.
      n.pullback(*this, n.grad);
    }
  }

  /// Gradient of the last backward() target with respect to `v`; zeros when
  /// `v` was not reached.
  Array2 gradient(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Array2::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  struct Node {
    Array2 value;
    Array2 grad;
    bool requires_grad = false;
    Pullback pullback;
  };

  Var push(Array2 value, bool requires_grad, Pullback pullback) {
    FKAN_ASSERT_FINITE(value);
    nodes_.push_back(Node{std::move(value), Array2{}, requires_grad, std::move(pullback)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

namespace ops {

/// W z
inline Var matmul(Tape& t, Var w, Var z) {
  const Array2& W = t.value(w);
  const Array2& Z = t.value(z);
  if (W.cols() != Z.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(W) + " * " +
                     shape_string(Z));
  }
  Array2 out(W.rows(), Z.cols());
  out.noalias() = W * Z;
  return t.record(std::move(out), {w, z}, [w, z](Tape& tp, const Array2& g) {
    if (tp.requires_grad(w)) tp.accumulate(w, (g * tp.value(z).transpose()).eval());
    if (tp.requires_grad(z)) tp.accumulate(z, (tp.value(w).transpose() * g).eval());
  });
}

/// W z + b, where b is either [out x 1] (broadcast over the batch) or
/// [out x N].
inline Var matmul_add(Tape& t, Var w, Var z, Var b) {
  const Array2& W = t.value(w);
  const Array2& Z = t.value(z);
  const Array2& B = t.value(b);
  if (W.cols() != Z.rows()) {
    throw ShapeError("matmul_add: inner dimensions disagree, " + shape_string(W) + " * " +
                     shape_string(Z));
  }
  const bool broadcast = B.cols() == 1 && Z.cols() != 1;
  if (B.rows() != W.rows() || (!broadcast && B.cols() != Z.cols())) {
    throw ShapeError("matmul_add: bias " + shape_string(B) + " not compatible with output [" +
                     std::to_string(W.rows()) + " x " + std::to_string(Z.cols()) + "]");
  }
  Array2 out(W.rows(), Z.cols());
  if (broadcast) {
    out.colwise() = B.col(0);
  } else {
    out = B;
  }
  out.noalias() += W * Z;
  return t.record(std::move(out), {w, z, b}, [w, z, b, broadcast](Tape& tp, const Array2& g) {
    if (tp.requires_grad(w)) tp.accumulate(w, (g * tp.value(z).transpose()).eval());
    if (tp.requires_grad(z)) tp.accumulate(z, (tp.value(w).transpose() * g).eval());
    if (tp.requires_grad(b)) {
      if (broadcast) {
        tp.accumulate(b, g.rowwise().sum().eval());
      } else {
        tp.accumulate(b, g);
      }
    }
  });
}

/// Elementwise tanh(omega0 * h).
inline Var tanh_scaled(Tape& t, Var h, double omega0) {
  if (!(omega0 > 0.0)) throw std::invalid_argument("tanh_scaled: omega0 must be positive");
  Array2 out = (omega0 * t.value(h).array()).tanh().matrix();
  const std::size_t self = t.size();
  return t.record(std::move(out), {h}, [h, omega0, self](Tape& tp, const Array2& g) {
    const auto& y = tp.value(Var{self}).array();
    tp.accumulate(h, (g.array() * (omega0 * (1.0 - y.square()))).matrix().eval());
  });
}

namespace detail {

// Sum over k of sign * k * g[m*K+k-1, n] * partner[m*K+k-1, n], per (m, n).
inline Array2 harmonic_pull(const Array2& g, const Array2& partner, int K, double sign) {
  const Eigen::Index d = g.rows() / K;
  Array2 dx = Array2::Zero(d, g.cols());
  for (Eigen::Index m = 0; m < d; ++m) {
    for (int k = 1; k <= K; ++k) {
      const Eigen::Index r = m * K + (k - 1);
      dx.row(m).array() += (sign * k) * g.row(r).array() * partner.row(r).array();
    }
  }
  return dx;
}

}  // namespace detail

/// sin(kx) and cos(kx) blocks for k = 1..K without recording anything.
inline std::pair<Array2, Array2> harmonics(const Array2& X, int K) {
  if (K < 1) throw std::invalid_argument("harmonics: K must be at least 1");
  const Eigen::Index d = X.rows();
  const Eigen::Index n = X.cols();
  Array2 S(d * K, n);
  Array2 C(d * K, n);
  for (Eigen::Index m = 0; m < d; ++m) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s1 = std::sin(X(m, j));
      const double c1 = std::cos(X(m, j));
      double s = s1;
      double c = c1;
      for (int k = 0; k < K; ++k) {
        S(m * K + k, j) = s;
        C(m * K + k, j) = c;
        // angle addition: (k+1)x from kx and x
        const double s_next = s * c1 + c * s1;
        const double c_next = c * c1 - s * s1;
        s = s_next;
        c = c_next;
      }
    }
  }
  return {std::move(S), std::move(C)};
}

/// Harmonic features of each input coordinate. For x of shape [d x N] returns
/// (S, C), each [d*K x N], with row m*K + (k-1) holding sin(k x_m) and
/// cos(k x_m) respectively, k = 1..K.
inline std::pair<Var, Var> sin_cos_features(Tape& t, Var x, int K) {
  if (K < 1) throw std::invalid_argument("sin_cos_features: K must be at least 1");
  auto [S, C] = harmonics(t.value(x), K);
  // The cos block is recorded immediately after the sin block, so each
  // pullback can find the partner block by id.
  const std::size_t sin_id = t.size();
  const std::size_t cos_id = sin_id + 1;
  Var sv = t.record(std::move(S), {x}, [x, K, cos_id](Tape& tp, const Array2& g) {
    // d sin(kx)/dx = k cos(kx)
    const Array2& Cv = tp.value(Var{cos_id});
    tp.accumulate(x, detail::harmonic_pull(g, Cv, K, 1.0));
  });
  Var cv = t.record(std::move(C), {x}, [x, K, sin_id](Tape& tp, const Array2& g) {
    // d cos(kx)/dx = -k sin(kx)
    const Array2& Sv = tp.value(Var{sin_id});
    tp.accumulate(x, detail::harmonic_pull(g, Sv, K, -1.0));
  });
  return {sv, cv};
}

/// [a | b] column concatenation.
inline Var hcat(Tape& t, Var a, Var b) {
  const Array2& A = t.value(a);
  const Array2& B = t.value(b);
  if (A.rows() != B.rows()) {
    throw ShapeError("hcat: row counts differ, " + shape_string(A) + " | " + shape_string(B));
  }
  Array2 out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Eigen::Index split = A.cols();
  return t.record(std::move(out), {a, b}, [a, b, split](Tape& tp, const Array2& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.leftCols(split).eval());
    if (tp.requires_grad(b)) tp.accumulate(b, g.rightCols(g.cols() - split).eval());
  });
}

/// Sum of all entries, as a 1 x 1 node.
inline Var sum(Tape& t, Var x) {
  Array2 out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.record(std::move(out), {x}, [x](Tape& tp, const Array2& g) {
    const Array2& X = tp.value(x);
    tp.accumulate(x, Array2::Constant(X.rows(), X.cols(), g(0, 0)));
  });
}

inline Var scale(Tape& t, Var x, double alpha) {
  Array2 out = alpha * t.value(x);
  return t.record(std::move(out), {x},
                  [x, alpha](Tape& tp, const Array2& g) { tp.accumulate(x, (alpha * g).eval()); });
}

/// Mean over the batch (columns) of the squared residual norm (summed over
/// rows): (1/N) sum_n ||pred_n - target_n||^2.
inline Var l2_loss(Tape& t, Var pred, const Array2& target) {
  const Array2& P = t.value(pred);
  require_same_shape(P, target, "l2_loss");
  if (P.cols() == 0) throw ShapeError("l2_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(P.cols());
  Array2 residual = P - target;
  Array2 out(1, 1);
  out(0, 0) = residual.squaredNorm() * inv_n;
  return t.record(std::move(out), {pred},
                  [pred, inv_n, residual = std::move(residual)](Tape& tp, const Array2& g) {
                    tp.accumulate(pred, ((2.0 * inv_n * g(0, 0)) * residual).eval());
                  });
}

}  // namespace ops
}  // namespace fkan
