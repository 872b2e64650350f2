#include "spatialref/params.hpp"

namespace spatialref {

std::size_t ParamStore::add(std::string name, ad::Tensor value) {
  if (lookup_.contains(name)) throw ConfigError("duplicate parameter " + name);
  lookup_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

bool ParamStore::contains(std::string_view name) const { return find(name).has_value(); }

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw IndexError("unknown parameter " + std::string(name));
  return *i;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& v : values_)
    if (!v.all_finite()) return false;
  return true;
}

GradMap zero_grads(const ParamStore& params) {
  GradMap g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.emplace_back(params[i].shape());
  return g;
}

void accumulate(GradMap& into, const GradMap& from, double weight) {
  if (into.size() != from.size()) throw ShapeError("gradient maps differ in size");
  for (std::size_t i = 0; i < into.size(); ++i) {
    auto dst = into[i].data();
    auto src = from[i].data();
    if (dst.size() != src.size()) throw ShapeError("gradient shape mismatch for parameter " + std::to_string(i));
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
  }
}

Binding::Binding(ad::Tape& tape, const ParamStore& params)
    : tape_(tape), params_(params), node_ids_(params.size(), -1) {}

ad::Var Binding::operator()(std::string_view name) {
  const std::size_t i = params_.index(name);
  if (node_ids_[i] < 0) node_ids_[i] = tape_.parameter(params_[i]).id;
  return ad::Var{&tape_, node_ids_[i]};
}

GradMap Binding::collect(const ad::Gradients& grads) const {
  GradMap out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (node_ids_[i] >= 0 && grads.reached(node_ids_[i]))
      out.push_back(grads.of(node_ids_[i]));
    else
      out.emplace_back(params_[i].shape());
  }
  return out;
}

}  // namespace spatialref
