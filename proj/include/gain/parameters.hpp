#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "gain/tensor.hpp"

GAIN_NAMESPACE_BEGIN

struct Parameter {
  std::string name;
  Tensor value;
};

/// Trainable tensors addressable by stable names, kept in insertion order.
/// References returned by add()/get() stay valid for the store's lifetime.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Parameter* find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const;
  bool all_finite() const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient tensor per parameter, aligned with ParameterStore order.
using GradientSet = std::vector<Tensor>;

GradientSet zero_gradients(const ParameterStore& store);

/// dst += src, element-wise over every parameter.
void accumulate(GradientSet& dst, const GradientSet& src);

void scale(GradientSet& grads, Real factor);

GAIN_NAMESPACE_END
