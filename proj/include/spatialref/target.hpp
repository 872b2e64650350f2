#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spatialref/autodiff.hpp"
#include "spatialref/params.hpp"
#include "spatialref/world.hpp"

namespace spatialref {

enum class InferenceMode { Expectation, Sampling };

std::string_view to_string(InferenceMode mode);
InferenceMode parse_inference(std::string_view text);

// Offset head: mu_o = W_2 sigmoid(W_1 s + a_1) + a_2, covariance sigma_o^2 I.
struct OffsetDims {
  std::size_t input_dim = 256;
  std::size_t hidden_dim = 64;
};

void add_offset_params(ParamStore& params, const OffsetDims& dims);

ad::Var offset_mean(Binding& bind, ad::Var summary);

struct TargetPrediction {
  InferenceMode mode = InferenceMode::Expectation;
  Vec3 position;
  // Sampling mode only.
  std::optional<std::size_t> reference;
  std::optional<Vec3> offset;
};

TargetPrediction predict_expectation(std::span<const double> ref_dist, const WorldState& world, Vec3 offset_mean);
TargetPrediction predict_sample(std::span<const double> ref_dist, const WorldState& world, Vec3 offset_mean,
                                double sigma_o, std::mt19937_64& rng);

double expectation_loss(Vec3 predicted, Vec3 truth);

// Block positions as a constant [n x 3] tensor on the tape.
ad::Var positions_tensor(ad::Tape& tape, const WorldState& world);

// t_E = positions^T p + mu
ad::Var expected_target(ad::Var ref_dist, ad::Var positions, ad::Var mu);
ad::Var expectation_loss(ad::Var expected, Vec3 truth);

// Linear regression from a detached feature vector to the observed distance,
// fitted by per-observation gradient steps on squared error.
class LinearBaseline {
 public:
  LinearBaseline() = default;
  LinearBaseline(std::size_t feature_dim, double learning_rate);

  double predict(std::span<const double> features) const;
  void update(std::span<const double> features, double observed);

  std::size_t feature_dim() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  double learning_rate_ = 1e-3;
};

// Differentiable policy over (reference, offset) for one example.
struct TargetPolicy {
  ad::Var ref_log_probs;  // [n]
  ad::Var mu;             // [3]
  const WorldState* world = nullptr;
  double sigma_o = 0.5;
};

struct SampleDraw {
  std::size_t reference = 0;
  Vec3 offset;
  double distance = 0;
};

struct Surrogate {
  ad::Var objective;  // differentiate this; its gradient is the estimator
  double loss = 0;    // observed value being estimated (mean sampled distance or L_N)
  std::vector<SampleDraw> draws;
};

// Score-function estimator of d/dtheta E||t - R - O|| from K draws:
// mean_i [dlogP(r_i) - 1/2 d(o_i-mu)^T S^-1 (o_i-mu)] * (d_i - baseline).
Surrogate reinforce_surrogate(const TargetPolicy& policy, Vec3 truth, std::size_t samples, double baseline,
                              std::mt19937_64& rng);

// Sample-averaging loss ||t - mean_j (r_j + o_j)|| over N draws. The offset
// draws are reparameterized around mu so mu receives a pathwise gradient; the
// reference choices are scored with log-probabilities times (L_N - baseline).
Surrogate intermediate_loss(const TargetPolicy& policy, Vec3 truth, std::size_t draws, double baseline,
                            std::mt19937_64& rng);

struct AnnealSchedule {
  std::vector<int> stages{20, 15, 10, 8, 6, 5, 4, 3, 2, 1};
  int epochs_per_stage = 2;

  // Throws ConfigError unless stages strictly decrease to 1.
  void validate() const;
};

int anneal_next(const AnnealSchedule& schedule, int epoch);

}  // namespace spatialref
