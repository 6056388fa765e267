#include "gain/tape.hpp"

GAIN_NAMESPACE_BEGIN

const Tensor& Var::value() const {
  if (!tape_) throw ConfigError("value() on an empty Var");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = recording();
  n.op = "variable";
  return push(std::move(n));
}

Var Tape::parameter(const Parameter& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.external = &param.value;
  n.needs_grad = recording();
  n.op = "parameter";
  Var v = push(std::move(n));
  param_nodes_.emplace(&param, v.id());
  return v;
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs,
                 Backward backward) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericFault(std::string("non-finite value produced by ") + op + " " +
                       value.shape_string());
  }
  Node n;
  n.owned = std::move(value);
  n.op = op;
  if (recording()) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ConfigError(std::string(op) + ": input from another tape");
      if (nodes_[in.id()].needs_grad) n.needs_grad = true;
    }
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Tensor(value(v).shape(), Real(0));
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v); }

void Tape::backward(Var loss) {
  if (!recording()) throw ConfigError("backward() on an inference-mode tape");
  if (loss.tape_ != this) throw ConfigError("backward(): loss from another tape");
  if (value(loss).size() != 1) {
    throw ConfigError("backward() needs a scalar loss, got " + value(loss).shape_string());
  }
  if (!nodes_[loss.id()].needs_grad) return;
  grad_buffer(loss)[0] += Real(1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || !n.has_grad) continue;
    n.backward(n.grad, n.external ? *n.external : n.owned);
  }
}

GradientSet Tape::parameter_gradients(const ParameterStore& store) {
  GradientSet grads;
  grads.reserve(store.size());
  for (const Parameter& p : store) {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end() || !nodes_[it->second].has_grad) {
      grads.emplace_back(p.value.shape(), Real(0));
    } else {
      grads.push_back(nodes_[it->second].grad);
    }
  }
  return grads;
}

GAIN_NAMESPACE_END
