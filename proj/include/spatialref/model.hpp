#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spatialref/alignment.hpp"
#include "spatialref/autodiff.hpp"
#include "spatialref/config.hpp"
#include "spatialref/data.hpp"
#include "spatialref/encoders.hpp"
#include "spatialref/params.hpp"
#include "spatialref/target.hpp"

namespace spatialref {

// A record turned into model inputs.
struct PreparedExample {
  std::vector<int> tokens;
  WorldState world;
  ad::Tensor features;  // [n x feature_dim]
  std::size_t source = 0;
  Vec3 target;
};

// Tape handles produced by one forward pass.
struct ModelOutputs {
  ad::Var source_scores;         // [n]
  ad::Var reference_scores;      // [n]
  ad::Var reference_log_probs;   // [n]
  ad::Var mu;                    // [3]
  ad::Var positions;             // [n x 3], constant
  ad::Var summary;               // instruction vector feeding the offset head
};

// Source classifier plus reference/offset target model. With joint training
// both subtasks share one encoder tower ("enc"); otherwise the source side uses
// "src" and the target side "tgt".
class Model {
 public:
  Model(TrainConfig config, Vocabulary vocab);

  const TrainConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const std::string& source_tower() const { return source_tower_; }
  const std::string& target_tower() const { return target_tower_; }
  AttentionDims attention_dims() const;
  // Baseline regression input width (the offset-head summary).
  std::size_t summary_dim() const;

  PreparedExample prepare(const InstructionRecord& record) const;
  PreparedExample prepare(const std::string& instruction, const WorldState& world) const;

  // Dropout is active iff dropout_rng is non-null.
  ModelOutputs forward(Binding& bind, const PreparedExample& ex, std::mt19937_64* dropout_rng = nullptr) const;

 private:
  TrainConfig config_;
  Vocabulary vocab_;
  ParamStore params_;
  std::string source_tower_;
  std::string target_tower_;
};

struct Prediction {
  std::vector<double> source_dist;
  std::vector<double> reference_dist;
  Vec3 offset_mean;
  TargetPrediction target;
  std::size_t source = 0;  // argmax of source_dist
};

// Inference without dropout. sampled=true draws the target from the
// reference/offset distributions using rng; otherwise the expectation is used.
Prediction predict(const Model& model, const PreparedExample& ex, bool sampled = false,
                   std::mt19937_64* rng = nullptr);

struct EnsemblePrediction {
  std::vector<double> source_dist;
  std::size_t source = 0;
  Vec3 target;
  std::vector<Prediction> members;
};

// Averages member source distributions and target positions. Members may mix
// attention variants but must share one vocabulary.
EnsemblePrediction ensemble_predict(std::span<const Model* const> members, const InstructionRecord& record,
                                    bool sampled = false, std::mt19937_64* rng = nullptr);

std::size_t argmax(std::span<const double> v);

// ---- checkpoints ----------------------------------------------------------------
// Layout (little-endian): magic "SRCK", u32 version, u64 header length, UTF-8
// JSON header {config, vocab, params:[{name, shape, offset}]}, then the f64
// parameter values back to back. See docs/checkpoint-format.md.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace spatialref
