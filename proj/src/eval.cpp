#include "spatialref/eval.hpp"

#include <algorithm>
#include <random>

#include <json.hpp>

namespace spatialref {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalReport compute_report(std::span<const std::size_t> predicted_sources, std::span<const Vec3> predicted_targets,
                          std::span<const InstructionRecord> records) {
  if (records.empty()) throw ConfigError("evaluation split is empty");
  if (predicted_sources.size() != records.size() || predicted_targets.size() != records.size())
    throw ShapeError("prediction count does not match record count");
  EvalReport r;
  std::vector<double> src, tgt;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (predicted_sources[i] >= rec.world.size()) throw IndexError("predicted source out of range");
    EvalRow row;
    row.predicted_source = predicted_sources[i];
    row.true_source = rec.source;
    row.source_distance = distance(rec.world.blocks[row.predicted_source], rec.world.blocks[rec.source]);
    row.predicted_target = predicted_targets[i];
    row.target_distance = distance(predicted_targets[i], rec.target);
    correct += row.predicted_source == row.true_source;
    src.push_back(row.source_distance);
    tgt.push_back(row.target_distance);
    r.rows.push_back(row);
  }
  const double n = static_cast<double>(records.size());
  r.source_accuracy = static_cast<double>(correct) / n;
  // Sorted summation keeps the means independent of example order.
  auto mean_of = [n](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += x;
    return s / n;
  };
  r.source_mean = mean_of(src);
  r.target_mean = mean_of(tgt);
  r.source_median = median(std::move(src));
  r.target_median = median(std::move(tgt));
  return r;
}

EvalReport evaluate(std::span<const Model* const> members, std::span<const InstructionRecord> records,
                    const EvalOptions& options) {
  if (records.empty()) throw ConfigError("evaluation split is empty");
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> sources;
  std::vector<Vec3> targets;
  sources.reserve(records.size());
  targets.reserve(records.size());
  for (const auto& rec : records) {
    const auto p = ensemble_predict(members, rec, options.sampled, options.sampled ? &rng : nullptr);
    sources.push_back(p.source);
    targets.push_back(p.target);
  }
  return compute_report(sources, targets, records);
}

std::string report_json(const EvalReport& report, bool include_rows) {
  nlohmann::ordered_json j;
  j["source_accuracy"] = report.source_accuracy;
  j["source_median"] = report.source_median;
  j["source_mean"] = report.source_mean;
  j["target_median"] = report.target_median;
  j["target_mean"] = report.target_mean;
  j["count"] = report.rows.size();
  if (include_rows) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"predicted_source", r.predicted_source},
                      {"true_source", r.true_source},
                      {"source_distance", r.source_distance},
                      {"predicted_target", {r.predicted_target.x, r.predicted_target.y, r.predicted_target.z}},
                      {"target_distance", r.target_distance}});
    }
    j["rows"] = rows;
  }
  return j.dump(2);
}

}  // namespace spatialref
