#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spatialref/autodiff.hpp"

namespace spatialref {

// Named, ordered collection of trainable tensors.
class ParamStore {
 public:
  std::size_t add(std::string name, ad::Tensor value);
  std::size_t size() const { return values_.size(); }
  bool contains(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  const ad::Tensor& operator[](std::size_t i) const { return values_[i]; }
  ad::Tensor& operator[](std::size_t i) { return values_[i]; }
  const ad::Tensor& at(std::string_view name) const { return values_[index(name)]; }
  ad::Tensor& at(std::string_view name) { return values_[index(name)]; }

  std::size_t scalar_count() const;
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> values_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

// One gradient tensor per parameter, aligned with ParamStore indices.
using GradMap = std::vector<ad::Tensor>;

GradMap zero_grads(const ParamStore& params);
void accumulate(GradMap& into, const GradMap& from, double weight = 1.0);

// Lazily places parameters on a tape, at most once each.
class Binding {
 public:
  Binding(ad::Tape& tape, const ParamStore& params);

  ad::Var operator()(std::string_view name);
  ad::Tape& tape() { return tape_; }
  const ParamStore& params() const { return params_; }

  // Gradient per parameter; unbound or unreachable parameters get zeros.
  GradMap collect(const ad::Gradients& grads) const;

 private:
  ad::Tape& tape_;
  const ParamStore& params_;
  std::vector<int> node_ids_;
};

}  // namespace spatialref
