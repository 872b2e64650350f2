#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spatialref/config.hpp"
#include "spatialref/data.hpp"
#include "spatialref/eval.hpp"
#include "spatialref/model.hpp"
#include "spatialref/params.hpp"
#include "spatialref/target.hpp"

namespace spatialref {

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

// Uniform(+-sqrt(6/(fan_in+fan_out))) for every matrix, zero for every vector,
// except the LSTM forget-gate bias slice which is set to 1.
void init_params(Model& model, std::mt19937_64& rng);

enum class TargetObjective { Expectation, Intermediate, Reinforce };

struct LossPlan {
  TargetObjective kind = TargetObjective::Expectation;
  std::size_t samples = 1;  // N for Intermediate, K for Reinforce
  bool include_source = true;
  bool include_target = true;
};

// Target objective used in a given epoch: expectation throughout for
// expectation models; for sampling models expectation during warmup, then the
// annealed N sequence, with the score-function estimator once N reaches 1.
LossPlan objective_for_epoch(const TrainConfig& config, int epoch);

struct ExampleResult {
  double loss = 0;         // reported L_src + L_tgt
  double source_loss = 0;
  double target_loss = 0;  // squared distance, L_N, or mean sampled distance
  GradMap grads;
};

// When `baseline` is non-null it supplies the subtracted value for sampled
// objectives and is then fitted to the observed loss.
ExampleResult example_gradient(const Model& model, const PreparedExample& ex, const LossPlan& plan,
                               LinearBaseline* baseline, std::mt19937_64& rng, bool dropout_active);

struct BatchResult {
  double loss = 0;  // mean over the batch
  GradMap grads;    // mean over the batch
};

BatchResult joint_loss(const Model& model, std::span<const PreparedExample> batch, const LossPlan& plan,
                       LinearBaseline* baseline, std::mt19937_64& rng, bool dropout_active = false);

struct SamplingGradient {
  GradMap grads;
  double mean_distance = 0;
  double baseline = 0;
  std::vector<SampleDraw> draws;
};

// Score-function gradient of the target sampling loss for one example from K draws.
SamplingGradient sampling_gradient(const Model& model, const PreparedExample& ex, std::size_t samples,
                                   LinearBaseline* baseline, std::mt19937_64& rng);

struct IntermediateResult {
  double loss = 0;
  GradMap grads;
  std::vector<SampleDraw> draws;
};

IntermediateResult intermediate_loss(const Model& model, const PreparedExample& ex, std::size_t draws,
                                     std::mt19937_64& rng, LinearBaseline* baseline = nullptr);

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  double weight_decay = 1e-5;
};

AdamOptions adam_options(const TrainConfig& config);

struct AdamState {
  std::vector<ad::Tensor> first;
  std::vector<ad::Tensor> second;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const ParamStore& params);
};

struct StepReport {
  bool applied = false;  // false when a gradient was non-finite
  double lstm_grad_norm = 0;
  double clip_scale = 1;
};

bool is_lstm_param(const std::string& name);

// Clips the global norm of LSTM gradients, applies decoupled weight decay, then
// a bias-corrected Adam update.
StepReport adam_step(ParamStore& params, GradMap grads, AdamState& state, const AdamOptions& options);

struct EpochLog {
  int epoch = 0;
  LossPlan objective;
  double train_loss = 0;
  EvalReport dev;
  std::size_t skipped_steps = 0;
};

struct TrainResult {
  Model model;  // parameters of the best dev epoch
  std::vector<EpochLog> history;
  int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});

// Members use seeds seed, seed+1, ...; trained concurrently on up to
// `max_threads` threads (0 = hardware concurrency).
std::vector<TrainResult> train_ensemble(const Dataset& data, const TrainConfig& config, std::size_t max_threads = 0);

}  // namespace spatialref
