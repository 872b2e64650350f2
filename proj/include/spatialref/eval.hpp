#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spatialref/data.hpp"
#include "spatialref/model.hpp"

namespace spatialref {

struct EvalRow {
  std::size_t predicted_source = 0;
  std::size_t true_source = 0;
  double source_distance = 0;
  Vec3 predicted_target;
  double target_distance = 0;
};

// Distances are in block lengths.
struct EvalReport {
  double source_accuracy = 0;
  double source_median = 0;
  double source_mean = 0;
  double target_median = 0;
  double target_mean = 0;
  std::vector<EvalRow> rows;

  // Dev selection score: accuracy minus mean target distance.
  double selection_score() const { return source_accuracy - target_mean; }
};

double median(std::vector<double> values);

EvalReport compute_report(std::span<const std::size_t> predicted_sources, std::span<const Vec3> predicted_targets,
                          std::span<const InstructionRecord> records);

struct EvalOptions {
  bool sampled = false;  // draw target predictions instead of expectations
  std::uint64_t seed = 0;
};

// Argmax of the (ensemble-averaged) source distribution and the averaged target.
EvalReport evaluate(std::span<const Model* const> members, std::span<const InstructionRecord> records,
                    const EvalOptions& options = {});

std::string report_json(const EvalReport& report, bool include_rows = false);

}  // namespace spatialref
