#pragma once

// Dense tensors with an eagerly recorded reverse-mode tape.
//
// A tensor of shape (d0, ..., dk) is stored as a row-major Eigen matrix of
// (d0 * ... * d(k-1)) rows and dk columns, so every op that acts on the last
// axis (bias, softmax, layer norm) works row-wise and matmul treats all
// leading axes as one batch axis.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trace/errors.hpp"

namespace trace {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RowMatrixd = RowMatrix<double>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename Scalar>
struct TensorNode {
  Shape shape;
  RowMatrix<Scalar> value;
  RowMatrix<Scalar> grad;
  bool trainable = false;
  bool requires_grad = false;
};

template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = RowMatrix<Scalar>;

  BasicTensor() = default;

  /// Wraps `value` (already laid out as rows x last-dim) under `shape`.
  BasicTensor(Shape shape, Matrix value, bool trainable = false)
      : node_(std::make_shared<TensorNode<Scalar>>()) {
    if (shape.empty()) throw ContractError("tensor shape must have at least one axis");
    for (Index d : shape) {
      if (d <= 0) throw ContractError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (value.cols() != shape.back() || value.size() != shape_size(shape)) {
      throw ContractError("tensor storage does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(value);
    node_->trainable = trainable;
    node_->requires_grad = trainable;
  }

  static BasicTensor constant(Matrix value) {
    Shape s{value.rows(), value.cols()};
    return BasicTensor(std::move(s), std::move(value), false);
  }
  static BasicTensor parameter(Matrix value) {
    Shape s{value.rows(), value.cols()};
    return BasicTensor(std::move(s), std::move(value), true);
  }
  static BasicTensor parameter(Shape shape, Matrix value) {
    return BasicTensor(std::move(shape), std::move(value), true);
  }
  static BasicTensor zeros(Shape shape, bool trainable = false) {
    const Index cols = shape.back();
    const Index rows = shape_size(shape) / cols;
    return BasicTensor(std::move(shape), Matrix::Zero(rows, cols), trainable);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  /// Direct write access; used by optimizers and checks, never while a tape
  /// still references this tensor's forward value.
  Matrix& mutable_value() { return node_->value; }

  Scalar item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return node_->value(0, 0);
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() {
    ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) node_->grad.setZero();
  }
  void ensure_grad() {
    if (!has_grad()) node_->grad = Matrix::Zero(rows(), cols());
  }

  bool trainable() const { return node_->trainable; }
  void set_trainable(bool on) {
    node_->trainable = on;
    node_->requires_grad = on;
  }
  bool requires_grad() const { return node_->requires_grad; }

  bool all_finite() const {
    if (!node_->value.allFinite()) return false;
    return !has_grad() || node_->grad.allFinite();
  }

  /// Deep copy with a fresh node; the copy is detached from any tape.
  BasicTensor clone() const { return BasicTensor(shape(), value(), trainable()); }

  TensorNode<Scalar>& node() const { return *node_; }
  const std::shared_ptr<TensorNode<Scalar>>& handle() const { return node_; }

 private:
  std::shared_ptr<TensorNode<Scalar>> node_;
};

/// Ordered record of executed primitives. Ops append a backward closure
/// when any input requires a gradient; backward() replays them in reverse.
template <typename Scalar>
class BasicTape {
 public:
  enum class Mode { record, inference };

  explicit BasicTape(Mode mode = Mode::record) : mode_(mode) {}

  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  bool recording() const { return mode_ == Mode::record; }
  std::size_t size() const { return entries_.size(); }

  void record(std::function<void()> backward) { entries_.push_back(std::move(backward)); }

  /// Seeds d(loss)/d(loss) = 1 and propagates through every recorded op once,
  /// newest first. The tape is cleared afterwards.
  void backward(BasicTensor<Scalar>& loss) {
    if (loss.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw ContractError("backward(): loss does not depend on any trainable tensor");
    }
    loss.mutable_grad().setConstant(Scalar{1});
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

  void clear() { entries_.clear(); }

 private:
  Mode mode_;
  std::vector<std::function<void()>> entries_;
};

using Tensor = BasicTensor<double>;
using Tape = BasicTape<double>;

namespace detail {

template <typename Scalar>
BasicTensor<Scalar> make_result(BasicTape<Scalar>& tape, Shape shape, RowMatrix<Scalar> value,
                                bool any_input_requires_grad) {
  BasicTensor<Scalar> out(std::move(shape), std::move(value), false);
  out.node().requires_grad = tape.recording() && any_input_requires_grad;
  return out;
}

template <typename Scalar>
RowMatrix<Scalar>& grad_of(const BasicTensor<Scalar>& t) {
  auto& n = t.node();
  if (n.grad.size() != n.value.size()) n.grad = RowMatrix<Scalar>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// (..., k) x (k, n) -> (..., n). Leading axes of `a` act as one row axis.
template <typename Scalar>
BasicTensor<Scalar> matmul(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a,
                           const BasicTensor<Scalar>& b) {
  detail::require(b.shape().size() == 2, "matmul: right operand must be 2-D, got " + shape_string(b.shape()));
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ: " + shape_string(a.shape()) +
                                            " x " + shape_string(b.shape()));
  Shape shape = a.shape();
  shape.back() = b.cols();
  RowMatrix<Scalar> value = a.value() * b.value();
  auto out = detail::make_result(tape, std::move(shape), std::move(value),
                                 a.requires_grad() || b.requires_grad());
  if (out.requires_grad()) {
    auto an = a.handle(), bn = b.handle(), on = out.handle();
    tape.record([an, bn, on] {
      if (an->requires_grad) {
        if (an->grad.size() != an->value.size()) an->grad = RowMatrix<Scalar>::Zero(an->value.rows(), an->value.cols());
        an->grad.noalias() += on->grad * bn->value.transpose();
      }
      if (bn->requires_grad) {
        if (bn->grad.size() != bn->value.size()) bn->grad = RowMatrix<Scalar>::Zero(bn->value.rows(), bn->value.cols());
        bn->grad.noalias() += an->value.transpose() * on->grad;
      }
    });
  }
  return out;
}

/// Adds a length-n bias to every row of a (..., n) tensor.
template <typename Scalar>
BasicTensor<Scalar> add_bias(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x,
                             const BasicTensor<Scalar>& bias) {
  detail::require(bias.size() == x.cols(), "add_bias: bias length " + std::to_string(bias.size()) +
                                               " does not match last axis of " + shape_string(x.shape()));
  RowMatrix<Scalar> value = x.value();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> b = bias.value().template reshaped<Eigen::RowMajor>(1, x.cols());
  value.rowwise() += b;
  auto out = detail::make_result(tape, x.shape(), std::move(value), x.requires_grad() || bias.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), bn = bias.handle(), on = out.handle();
    tape.record([xn, bn, on] {
      if (xn->requires_grad) {
        if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
        xn->grad += on->grad;
      }
      if (bn->requires_grad) {
        if (bn->grad.size() != bn->value.size()) bn->grad = RowMatrix<Scalar>::Zero(bn->value.rows(), bn->value.cols());
        bn->grad.template reshaped<Eigen::RowMajor>(1, on->grad.cols()) += on->grad.colwise().sum();
      }
    });
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> add(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "add: shapes differ: " + shape_string(a.shape()) + " vs " +
                                               shape_string(b.shape()));
  auto out = detail::make_result(tape, a.shape(), RowMatrix<Scalar>(a.value() + b.value()),
                                 a.requires_grad() || b.requires_grad());
  if (out.requires_grad()) {
    auto an = a.handle(), bn = b.handle(), on = out.handle();
    tape.record([an, bn, on] {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        if (n->grad.size() != n->value.size()) n->grad = RowMatrix<Scalar>::Zero(n->value.rows(), n->value.cols());
        n->grad += on->grad;
      }
    });
  }
  return out;
}

/// Element-wise product of equally shaped tensors.
template <typename Scalar>
BasicTensor<Scalar> mul(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "mul: shapes differ: " + shape_string(a.shape()) + " vs " +
                                               shape_string(b.shape()));
  auto out = detail::make_result(tape, a.shape(), RowMatrix<Scalar>(a.value().cwiseProduct(b.value())),
                                 a.requires_grad() || b.requires_grad());
  if (out.requires_grad()) {
    auto an = a.handle(), bn = b.handle(), on = out.handle();
    tape.record([an, bn, on] {
      if (an->requires_grad) {
        if (an->grad.size() != an->value.size()) an->grad = RowMatrix<Scalar>::Zero(an->value.rows(), an->value.cols());
        an->grad += on->grad.cwiseProduct(bn->value);
      }
      if (bn->requires_grad) {
        if (bn->grad.size() != bn->value.size()) bn->grad = RowMatrix<Scalar>::Zero(bn->value.rows(), bn->value.cols());
        bn->grad += on->grad.cwiseProduct(an->value);
      }
    });
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> scale(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x, Scalar factor) {
  auto out = detail::make_result(tape, x.shape(), RowMatrix<Scalar>(x.value() * factor), x.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), on = out.handle();
    tape.record([xn, on, factor] {
      if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
      xn->grad += on->grad * factor;
    });
  }
  return out;
}

/// Sum of all entries as a (1) tensor.
template <typename Scalar>
BasicTensor<Scalar> sum(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x) {
  RowMatrix<Scalar> value(1, 1);
  value(0, 0) = x.value().sum();
  auto out = detail::make_result(tape, Shape{1}, std::move(value), x.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), on = out.handle();
    tape.record([xn, on] {
      if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
      xn->grad.array() += on->grad(0, 0);
    });
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> mean(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x) {
  return scale(tape, sum(tape, x), Scalar{1} / static_cast<Scalar>(x.size()));
}

// ---------------------------------------------------------------------------
// Element-wise activations

enum class Activation { relu, selu, sigmoid };

Activation parse_activation(const std::string& name);
std::string to_string(Activation kind);

inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= Scalar{0}) return Scalar{1} / (Scalar{1} + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar{1} + e);
}

/// ReLU'(0) is taken as 0.
template <typename Scalar>
BasicTensor<Scalar> activation(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x, Activation kind) {
  const auto& in = x.value();
  RowMatrix<Scalar> value(in.rows(), in.cols());
  const Scalar lam = static_cast<Scalar>(kSeluLambda);
  const Scalar alpha = static_cast<Scalar>(kSeluAlpha);
  switch (kind) {
    case Activation::relu:
      value = in.cwiseMax(Scalar{0});
      break;
    case Activation::selu:
      value = in.unaryExpr([=](Scalar v) { return v > Scalar{0} ? lam * v : lam * alpha * std::expm1(v); });
      break;
    case Activation::sigmoid:
      value = in.unaryExpr([](Scalar v) { return stable_sigmoid(v); });
      break;
  }
  auto out = detail::make_result(tape, x.shape(), std::move(value), x.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), on = out.handle();
    tape.record([xn, on, kind, lam, alpha] {
      if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
      const auto& v = xn->value.array();
      const auto& g = on->grad.array();
      switch (kind) {
        case Activation::relu:
          xn->grad.array() += (v > Scalar{0}).select(g, Scalar{0});
          break;
        case Activation::selu:
          xn->grad.array() += g * (v > Scalar{0}).select(RowMatrix<Scalar>::Constant(v.rows(), v.cols(), lam).array(),
                                                          lam * alpha * v.exp());
          break;
        case Activation::sigmoid: {
          const auto& y = on->value.array();
          xn->grad.array() += g * y * (Scalar{1} - y);
          break;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

template <typename Scalar>
RowMatrix<Scalar> softmax_rows_value(const RowMatrix<Scalar>& x) {
  RowMatrix<Scalar> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

/// Softmax over the last axis, stabilized by subtracting each row's max.
template <typename Scalar>
BasicTensor<Scalar> softmax_rows(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x) {
  auto out = detail::make_result(tape, x.shape(), softmax_rows_value(x.value()), x.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), on = out.handle();
    tape.record([xn, on] {
      if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
      const auto& y = on->value;
      const auto& g = on->grad;
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = y.cwiseProduct(g).rowwise().sum();
      xn->grad.array() += y.array() * (g.colwise() - dot).array();
    });
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row zero-mean/unit-variance normalization followed by gain and bias.
template <typename Scalar>
BasicTensor<Scalar> layer_norm(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x,
                               const BasicTensor<Scalar>& gain, const BasicTensor<Scalar>& bias,
                               Scalar eps = static_cast<Scalar>(kLayerNormEps)) {
  if (!(eps > Scalar{0})) throw ContractError("layer_norm: eps must be positive");
  const Index n = x.cols();
  detail::require(gain.size() == n && bias.size() == n,
                  "layer_norm: gain/bias length must equal last axis of " + shape_string(x.shape()));
  const auto& v = x.value();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mu = v.rowwise().mean();
  RowMatrix<Scalar> centered = v.colwise() - mu;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<Scalar>(n)) + eps).rsqrt().matrix();
  RowMatrix<Scalar> xhat = centered.array().colwise() * inv_std.array();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> g = gain.value().template reshaped<Eigen::RowMajor>(1, n);
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> b = bias.value().template reshaped<Eigen::RowMajor>(1, n);
  RowMatrix<Scalar> value = (xhat.array().rowwise() * g.array()).matrix();
  value.rowwise() += b;
  auto out = detail::make_result(tape, x.shape(), std::move(value),
                                 x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), gn = gain.handle(), bn = bias.handle(), on = out.handle();
    tape.record([xn, gn, bn, on, xhat = std::move(xhat), inv_std, n] {
      const auto& dy = on->grad;
      if (gn->requires_grad) {
        if (gn->grad.size() != gn->value.size()) gn->grad = RowMatrix<Scalar>::Zero(gn->value.rows(), gn->value.cols());
        gn->grad.template reshaped<Eigen::RowMajor>(1, n) += dy.cwiseProduct(xhat).colwise().sum();
      }
      if (bn->requires_grad) {
        if (bn->grad.size() != bn->value.size()) bn->grad = RowMatrix<Scalar>::Zero(bn->value.rows(), bn->value.cols());
        bn->grad.template reshaped<Eigen::RowMajor>(1, n) += dy.colwise().sum();
      }
      if (xn->requires_grad) {
        if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> g = gn->value.template reshaped<Eigen::RowMajor>(1, n);
        RowMatrix<Scalar> dxhat = (dy.array().rowwise() * g.array()).matrix();
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m1 = dxhat.rowwise().mean();
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
        RowMatrix<Scalar> dx = dxhat.colwise() - m1;
        dx -= (xhat.array().colwise() * m2.array()).matrix();
        xn->grad += (dx.array().colwise() * inv_std.array()).matrix();
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token plumbing

/// Replaces rows whose `keep` flag is false by exact zeros; no gradient
/// reaches the input through a dropped row.
template <typename Scalar>
BasicTensor<Scalar> mask_rows(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x, const std::vector<bool>& keep) {
  detail::require(static_cast<Index>(keep.size()) == x.rows(), "mask_rows: mask length does not match rows");
  RowMatrix<Scalar> value = x.value();
  for (Index r = 0; r < value.rows(); ++r) {
    if (!keep[static_cast<std::size_t>(r)]) value.row(r).setZero();
  }
  auto out = detail::make_result(tape, x.shape(), std::move(value), x.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), on = out.handle();
    tape.record([xn, on, keep] {
      if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
      for (Index r = 0; r < on->grad.rows(); ++r) {
        if (keep[static_cast<std::size_t>(r)]) xn->grad.row(r) += on->grad.row(r);
      }
    });
  }
  return out;
}

/// Gathers rows of `table` (R, E) by index into a (B, E) tensor.
template <typename Scalar>
BasicTensor<Scalar> embedding_lookup(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& table,
                                     const std::vector<int>& indices) {
  detail::require(table.shape().size() == 2, "embedding_lookup: table must be 2-D");
  const Index rows = table.rows();
  RowMatrix<Scalar> value(static_cast<Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= rows) {
      throw ContractError("embedding_lookup: index " + std::to_string(indices[i]) + " outside [0, " +
                          std::to_string(rows - 1) + "]");
    }
    value.row(static_cast<Index>(i)) = table.value().row(indices[i]);
  }
  detail::require(!indices.empty(), "embedding_lookup: empty index list");
  Shape shape{value.rows(), value.cols()};
  auto out = detail::make_result(tape, std::move(shape), std::move(value), table.requires_grad());
  if (out.requires_grad()) {
    auto tn = table.handle(), on = out.handle();
    tape.record([tn, on, indices] {
      if (tn->grad.size() != tn->value.size()) tn->grad = RowMatrix<Scalar>::Zero(tn->value.rows(), tn->value.cols());
      for (std::size_t i = 0; i < indices.size(); ++i) tn->grad.row(indices[i]) += on->grad.row(static_cast<Index>(i));
    });
  }
  return out;
}

/// Concatenates (B, n_i, E) pieces along the token axis into (B, sum n_i, E).
/// A 2-D piece (B, E) counts as a single token.
template <typename Scalar>
BasicTensor<Scalar> concat_tokens(BasicTape<Scalar>& tape, const std::vector<BasicTensor<Scalar>>& pieces) {
  detail::require(!pieces.empty(), "concat_tokens: nothing to concatenate");
  const Index batch = pieces.front().shape().front();
  const Index width = pieces.front().cols();
  std::vector<Index> counts;
  Index total = 0;
  bool any_grad = false;
  for (const auto& p : pieces) {
    const auto& s = p.shape();
    detail::require(s.size() == 2 || s.size() == 3, "concat_tokens: pieces must be (B,E) or (B,N,E)");
    detail::require(s.front() == batch, "concat_tokens: batch sizes differ");
    detail::require(p.cols() == width, "concat_tokens: embedding sizes differ (" + std::to_string(p.cols()) +
                                           " vs " + std::to_string(width) + ")");
    counts.push_back(s.size() == 3 ? s[1] : 1);
    total += counts.back();
    any_grad = any_grad || p.requires_grad();
  }
  RowMatrix<Scalar> value(batch * total, width);
  Index offset = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& src = pieces[i].value();
    for (Index b = 0; b < batch; ++b) {
      value.middleRows(b * total + offset, counts[i]) = src.middleRows(b * counts[i], counts[i]);
    }
    offset += counts[i];
  }
  auto out = detail::make_result(tape, Shape{batch, total, width}, std::move(value), any_grad);
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode<Scalar>>> nodes;
    for (const auto& p : pieces) nodes.push_back(p.handle());
    auto on = out.handle();
    tape.record([nodes, counts, on, batch, total] {
      Index off = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        auto* n = nodes[i].get();
        if (n->requires_grad) {
          if (n->grad.size() != n->value.size()) n->grad = RowMatrix<Scalar>::Zero(n->value.rows(), n->value.cols());
          for (Index b = 0; b < batch; ++b) {
            n->grad.middleRows(b * counts[i], counts[i]) += on->grad.middleRows(b * total + off, counts[i]);
          }
        }
        off += counts[i];
      }
    });
  }
  return out;
}

/// Arithmetic mean over the token axis: (B, N, E) -> (B, E).
template <typename Scalar>
BasicTensor<Scalar> mean_tokens(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x) {
  detail::require(x.shape().size() == 3, "mean_tokens: expected (B,N,E), got " + shape_string(x.shape()));
  const Index batch = x.shape()[0], tokens = x.shape()[1], width = x.shape()[2];
  RowMatrix<Scalar> value(batch, width);
  for (Index b = 0; b < batch; ++b) {
    value.row(b) = x.value().middleRows(b * tokens, tokens).colwise().sum() / static_cast<Scalar>(tokens);
  }
  auto out = detail::make_result(tape, Shape{batch, width}, std::move(value), x.requires_grad());
  if (out.requires_grad()) {
    auto xn = x.handle(), on = out.handle();
    tape.record([xn, on, tokens] {
      if (xn->grad.size() != xn->value.size()) xn->grad = RowMatrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
      const Scalar inv = Scalar{1} / static_cast<Scalar>(tokens);
      for (Index b = 0; b < on->grad.rows(); ++b) {
        xn->grad.middleRows(b * tokens, tokens).rowwise() += on->grad.row(b) * inv;
      }
    });
  }
  return out;
}

/// Inverted dropout; identity when rate == 0.
template <typename Scalar, typename Rng>
BasicTensor<Scalar> dropout(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  RowMatrix<Scalar> mask(x.rows(), x.cols());
  const Scalar s = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : Scalar{0};
  auto m = BasicTensor<Scalar>(x.shape(), std::move(mask), false);
  return mul(tape, x, m);
}

// ---------------------------------------------------------------------------
// Attention

/// Per-(sample, head) post-softmax weights of one attention call; entry
/// [h] is a (B*N, N) matrix whose row b*N+q holds query q of sample b.
template <typename Scalar>
struct BasicAttentionWeights {
  Index batch = 0;
  Index tokens = 0;
  std::vector<RowMatrix<Scalar>> heads;
};

/// Scaled dot-product attention over (B, N, E) query/key/value tensors split
/// into `n_heads` heads of width E / n_heads; returns the concatenated head
/// contexts, before any output projection.
template <typename Scalar>
BasicTensor<Scalar> attention(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& q, const BasicTensor<Scalar>& k,
                              const BasicTensor<Scalar>& v, int n_heads,
                              BasicAttentionWeights<Scalar>* capture = nullptr) {
  detail::require(q.shape().size() == 3, "attention: expected (B,N,E) inputs");
  detail::require(q.shape() == k.shape() && q.shape() == v.shape(), "attention: q/k/v shapes differ");
  const Index batch = q.shape()[0], tokens = q.shape()[1], width = q.shape()[2];
  detail::require(n_heads >= 1 && width % n_heads == 0,
                  "attention: embedding size " + std::to_string(width) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  const Index dh = width / n_heads;
  const Scalar sc = Scalar{1} / std::sqrt(static_cast<Scalar>(dh));

  std::vector<RowMatrix<Scalar>> probs(static_cast<std::size_t>(n_heads), RowMatrix<Scalar>(batch * tokens, tokens));
  RowMatrix<Scalar> value(batch * tokens, width);
  for (Index b = 0; b < batch; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      const auto qb = q.value().block(b * tokens, h * dh, tokens, dh);
      const auto kb = k.value().block(b * tokens, h * dh, tokens, dh);
      const auto vb = v.value().block(b * tokens, h * dh, tokens, dh);
      RowMatrix<Scalar> scores = (qb * kb.transpose()) * sc;
      auto p = probs[static_cast<std::size_t>(h)].middleRows(b * tokens, tokens);
      p = softmax_rows_value(scores);
      value.block(b * tokens, h * dh, tokens, dh).noalias() = p * vb;
    }
  }
  if (capture) {
    capture->batch = batch;
    capture->tokens = tokens;
    capture->heads = probs;
  }
  auto out = detail::make_result(tape, q.shape(), std::move(value),
                                 q.requires_grad() || k.requires_grad() || v.requires_grad());
  if (out.requires_grad()) {
    auto qn = q.handle(), kn = k.handle(), vn = v.handle(), on = out.handle();
    tape.record([qn, kn, vn, on, probs = std::move(probs), batch, tokens, dh, sc, n_heads] {
      for (auto* n : {qn.get(), kn.get(), vn.get()}) {
        if (n->requires_grad && n->grad.size() != n->value.size())
          n->grad = RowMatrix<Scalar>::Zero(n->value.rows(), n->value.cols());
      }
      for (Index b = 0; b < batch; ++b) {
        for (int h = 0; h < n_heads; ++h) {
          const auto p = probs[static_cast<std::size_t>(h)].middleRows(b * tokens, tokens);
          const auto go = on->grad.block(b * tokens, h * dh, tokens, dh);
          const auto qb = qn->value.block(b * tokens, h * dh, tokens, dh);
          const auto kb = kn->value.block(b * tokens, h * dh, tokens, dh);
          const auto vb = vn->value.block(b * tokens, h * dh, tokens, dh);
          if (vn->requires_grad) vn->grad.block(b * tokens, h * dh, tokens, dh).noalias() += p.transpose() * go;
          RowMatrix<Scalar> dp = go * vb.transpose();
          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = dp.cwiseProduct(p).rowwise().sum();
          RowMatrix<Scalar> ds = (p.array() * (dp.colwise() - dot).array()).matrix() * sc;
          if (qn->requires_grad) qn->grad.block(b * tokens, h * dh, tokens, dh).noalias() += ds * kb;
          if (kn->requires_grad) kn->grad.block(b * tokens, h * dh, tokens, dh).noalias() += ds.transpose() * qb;
        }
      }
    });
  }
  return out;
}

}  // namespace trace
