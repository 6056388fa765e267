#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gain/parameters.hpp"
#include "gain/tensor.hpp"

GAIN_NAMESPACE_BEGIN

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while
/// its tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode gradient tape.
///
/// Every op appends a node holding its forward value and, when any input
/// requires a gradient, a closure that pushes the output gradient back to
/// its inputs. A tape is single-threaded; independent minibatches use
/// independent tapes.
class Tape {
 public:
  enum class Mode { record, inference };
  using Backward = std::function<void(const Tensor& out_grad, const Tensor& out_value)>;

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool recording() const noexcept { return mode_ == Mode::record; }

  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Differentiable leaf owned by the tape.
  Var variable(Tensor value);
  /// Differentiable leaf aliasing a model parameter. Repeated calls with the
  /// same parameter return the same node, so its gradient accumulates once.
  Var parameter(const Parameter& param);

  /// Appends an op result. `backward` is dropped when no input needs a
  /// gradient or the tape is in inference mode. Throws NumericFault when the
  /// value contains NaN/Inf and finiteness checks are on.
  Var record(const char* op, Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             Backward backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Mutable gradient buffer of `v`, zero-initialised on first access.
  Tensor& grad_buffer(Var v);
  /// Gradient of `v` after backward(); zeros when `v` was not reached.
  const Tensor& grad(Var v);

  /// Propagates d(loss)/d(node) to every node that needs a gradient.
  void backward(Var loss);

  /// Gradients of every store parameter, zeros for parameters not on this
  /// tape.
  GradientSet parameter_gradients(const ParameterStore& store);

  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
    bool needs_grad = false;
    bool has_grad = false;
    const char* op = "";
  };

  Var push(Node node);

  Mode mode_;
  bool check_finite_ = true;
  std::deque<Node> nodes_;  // deque: value() references survive later pushes
  std::unordered_map<const Parameter*, int> param_nodes_;
};

GAIN_NAMESPACE_END
