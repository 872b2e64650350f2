#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spatialref/params.hpp"

namespace spatialref {

inline constexpr double kGradCheckTolerance = 1e-4;

struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0;

  bool passed() const { return max_error < kGradCheckTolerance; }
};

using ParamLoss = std::function<ad::Var(Binding&)>;

// Central-difference check of the loss gradient with respect to every scalar in
// `params`. Same error measure as ad::grad_check.
double grad_check_params(ParamStore& params, const ParamLoss& loss, double step = 1e-5);

// Every primitive op plus the composite model paths, `instances` random cases
// each.
std::vector<CheckResult> run_grad_check_suite(std::size_t instances = 100, std::uint64_t seed = 7);

}  // namespace spatialref
