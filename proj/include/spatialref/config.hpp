#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spatialref/alignment.hpp"
#include "spatialref/target.hpp"
#include "spatialref/world.hpp"

namespace spatialref {

enum class BaselineKind { None, Linear };

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline(std::string_view text);
std::string_view to_string(FeatureSet set);
FeatureSet parse_features(std::string_view text);

// Every tunable of a run. Loaded from flat `key = value` text; '#' starts a comment.
struct TrainConfig {
  // optimization
  double learning_rate = 0.001;
  double clip_norm = 5.0;
  double weight_decay = 1e-5;
  double dropout = 0.2;
  std::size_t batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 1;

  // architecture
  AttentionKind attention = AttentionKind::Cnn;
  FeatureSet features = FeatureSet::Full;
  bool joint = true;
  std::size_t word_dim = 256;
  std::size_t hidden_dim = 256;
  std::size_t block_dim = 64;
  std::size_t cnn_filters = 64;
  std::size_t offset_hidden = 64;

  // target inference
  InferenceMode inference = InferenceMode::Expectation;
  double sigma_o = 0.5;
  BaselineKind baseline = BaselineKind::Linear;
  std::size_t samples = 1;  // K draws per example once annealing reaches N = 1
  int anneal_epochs_per_stage = 2;
  int anneal_warmup_epochs = 2;  // expectation-loss epochs before the first sampled stage
  std::vector<int> anneal_stages{20, 15, 10, 8, 6, 5, 4, 3, 2, 1};

  // data
  double noise_local = 0.1;
  double noise_global = 1.0;
  double block_length = 1.0;
  std::size_t max_blocks = kDefaultMaxBlocks;
  std::string data;  // dataset directory for `train`
  std::string out = "model.ckpt";

  std::size_t ensemble_size = 8;

  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();
  void validate() const;

  AnnealSchedule anneal_schedule() const;

  // Round-trips through parse_config.
  std::string to_text() const;
};

TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

}  // namespace spatialref
