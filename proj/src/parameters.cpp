#include "gain/parameters.hpp"

GAIN_NAMESPACE_BEGIN

Parameter& ParameterStore::add(std::string name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(init)});
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

GradientSet zero_gradients(const ParameterStore& store) {
  GradientSet grads;
  grads.reserve(store.size());
  for (const auto& p : store) grads.emplace_back(p.value.shape(), Real(0));
  return grads;
}

void accumulate(GradientSet& dst, const GradientSet& src) {
  if (dst.size() != src.size()) throw ConfigError("gradient set size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i].same_shape(src[i])) {
      throw ConfigError("gradient shape mismatch " + dst[i].shape_string() + " vs " +
                        src[i].shape_string());
    }
    Real* d = dst[i].data();
    const Real* s = src[i].data();
    for (std::size_t j = 0; j < dst[i].size(); ++j) d[j] += s[j];
  }
}

void scale(GradientSet& grads, Real factor) {
  for (auto& g : grads) {
    for (auto& x : g.values()) x *= factor;
  }
}

GAIN_NAMESPACE_END
