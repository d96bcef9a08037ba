#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape owns every intermediate produced during one forward pass. Var is a
// cheap handle (tape pointer + node index); nodes are appended in creation
// order, so the node list is always topologically sorted and backward() is a
// single reverse sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "latent_shield/tensor.hpp"

namespace lshield {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the gradient held by `node` into its inputs.
  using BackwardFn = std::function<void(Tape& tape, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op result. The node requires grad iff any input does; the
  /// backward function is dropped otherwise.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar output. All gradients are reset first, so
  /// calling this twice gives the same result as calling it once.
  void backward(Var output);

  /// d(output)/d(v) from the last backward(); zeros if v was unreachable.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  // Accessors for op implementations.
  const Tensor& value(std::size_t node) const { return nodes_[node].value; }
  bool requires_grad(std::size_t node) const { return nodes_[node].requires_grad; }
  const std::vector<double>& grad_of(std::size_t node) const { return nodes_[node].grad; }
  /// Gradient accumulator of an input node, allocated on first touch.
  std::vector<double>& grad_accumulator(std::size_t node);

 private:
  friend class Var;

  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::vector<double> grad;
  };

  void check_owned(const Var& v) const;

  // deque: references returned by value() stay valid as the tape grows.
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of (N, C, H, W) input with (O, C, K, K) kernel, optional
/// per-output-channel bias of shape (O).
Var conv2d(Var input, Var kernel, std::optional<Var> bias, Conv2dOptions opts);

enum class Elementwise { silu, square, log, exp, add_const, mul_const };

/// `constant` is only read by add_const and mul_const.
Var elementwise(Var x, Elementwise kind, double constant = 0.0);

inline Var silu(Var x) { return elementwise(x, Elementwise::silu); }
inline Var square(Var x) { return elementwise(x, Elementwise::square); }
inline Var log(Var x) { return elementwise(x, Elementwise::log); }
inline Var exp(Var x) { return elementwise(x, Elementwise::exp); }
inline Var add_const(Var x, double c) { return elementwise(x, Elementwise::add_const, c); }
inline Var mul_const(Var x, double c) { return elementwise(x, Elementwise::mul_const, c); }

enum class Reduction { sum, mean };

Var reduce(Var x, Reduction kind);
inline Var sum(Var x) { return reduce(x, Reduction::sum); }
inline Var mean(Var x) { return reduce(x, Reduction::mean); }

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var reshape(Var x, Shape shape);
/// Concatenates rank-4 tensors along the channel axis.
Var concat_channels(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return mul_const(a, s); }

}  // namespace lshield
