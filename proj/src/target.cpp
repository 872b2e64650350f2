#include "spatialref/target.hpp"

#include <cmath>

namespace spatialref {

using ad::Tensor;
using ad::Var;

std::string_view to_string(InferenceMode mode) {
  return mode == InferenceMode::Expectation ? "expectation" : "sampling";
}

InferenceMode parse_inference(std::string_view text) {
  if (text == "expectation") return InferenceMode::Expectation;
  if (text == "sampling") return InferenceMode::Sampling;
  throw ConfigError("unknown inference mode '" + std::string(text) + "'");
}

void add_offset_params(ParamStore& params, const OffsetDims& dims) {
  params.add("offset.W_1", Tensor({dims.hidden_dim, dims.input_dim}));
  params.add("offset.a_1", Tensor({dims.hidden_dim}));
  params.add("offset.W_2", Tensor({3, dims.hidden_dim}));
  params.add("offset.a_2", Tensor({3}));
}

Var offset_mean(Binding& bind, Var summary) {
  Var inner = ad::sigmoid(ad::add(ad::matmul(bind("offset.W_1"), summary), bind("offset.a_1")));
  return ad::add(ad::matmul(bind("offset.W_2"), inner), bind("offset.a_2"));
}

namespace {

void check_distribution(std::span<const double> dist, const WorldState& world) {
  if (dist.size() != world.size())
    throw ShapeError("reference distribution has " + std::to_string(dist.size()) + " entries for " +
                     std::to_string(world.size()) + " blocks");
  double total = 0;
  for (double p : dist) {
    if (!(p >= 0)) throw NumericError("reference distribution has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw NumericError("reference distribution does not sum to 1");
}

std::size_t sample_index(std::span<const double> dist, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) return i;
  }
  // Rounding left u beyond the cumulative total; take the last positive entry.
  for (std::size_t i = dist.size(); i-- > 0;)
    if (dist[i] > 0) return i;
  return dist.size() - 1;
}

Vec3 standard_normal3(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec3 e;
  e.x = n01(rng);
  e.y = n01(rng);
  e.z = n01(rng);
  return e;
}

struct Draw {
  std::size_t reference;
  Vec3 noise;  // standard normal; offset = mu + sigma * noise
};

Draw draw_pair(std::span<const double> dist, std::mt19937_64& rng) {
  const std::size_t r = sample_index(dist, rng);
  return {r, standard_normal3(rng)};
}

Vec3 vec3_of(const Tensor& t) { return {t[0], t[1], t[2]}; }

std::vector<double> probabilities(const Var& log_probs) {
  std::vector<double> p(log_probs.value().size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_probs.value()[i]);
  return p;
}

Tensor tensor_of(Vec3 v) { return Tensor::vector({v.x, v.y, v.z}); }

}  // namespace

TargetPrediction predict_expectation(std::span<const double> ref_dist, const WorldState& world, Vec3 mu) {
  check_distribution(ref_dist, world);
  Vec3 expected;
  for (std::size_t i = 0; i < world.size(); ++i) expected = expected + ref_dist[i] * world.blocks[i];
  return {InferenceMode::Expectation, expected + mu, std::nullopt, std::nullopt};
}

TargetPrediction predict_sample(std::span<const double> ref_dist, const WorldState& world, Vec3 mu,
                                double sigma_o, std::mt19937_64& rng) {
  check_distribution(ref_dist, world);
  if (sigma_o < 0) throw ConfigError("sigma_o must be nonnegative");
  const Draw d = draw_pair(ref_dist, rng);
  const Vec3 offset = mu + sigma_o * d.noise;
  return {InferenceMode::Sampling, world.blocks[d.reference] + offset, d.reference, offset};
}

double expectation_loss(Vec3 predicted, Vec3 truth) {
  const Vec3 d = truth - predicted;
  return d.x * d.x + d.y * d.y + d.z * d.z;
}

Var positions_tensor(ad::Tape& tape, const WorldState& world) {
  Tensor p({world.size(), 3});
  for (std::size_t i = 0; i < world.size(); ++i) {
    p.at(i, 0) = world.blocks[i].x;
    p.at(i, 1) = world.blocks[i].y;
    p.at(i, 2) = world.blocks[i].z;
  }
  return tape.constant(std::move(p));
}

Var expected_target(Var ref_dist, Var positions, Var mu) {
  return ad::add(ad::matmul(ad::transpose(positions), ref_dist), mu);
}

Var expectation_loss(Var expected, Vec3 truth) {
  Var t = expected.tape->constant(tensor_of(truth));
  return ad::squared_norm(ad::sub(t, expected));
}

LinearBaseline::LinearBaseline(std::size_t feature_dim, double learning_rate)
    : weights_(feature_dim, 0.0), learning_rate_(learning_rate) {}

double LinearBaseline::predict(std::span<const double> features) const {
  if (features.size() != weights_.size()) throw ShapeError("baseline feature size mismatch");
  double v = bias_;
  for (std::size_t i = 0; i < weights_.size(); ++i) v += weights_[i] * features[i];
  return v;
}

void LinearBaseline::update(std::span<const double> features, double observed) {
  const double err = predict(features) - observed;
  const double step = 2.0 * learning_rate_ * err;
  for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] -= step * features[i];
  bias_ -= step;
}

Surrogate reinforce_surrogate(const TargetPolicy& policy, Vec3 truth, std::size_t samples, double baseline,
                              std::mt19937_64& rng) {
  if (samples == 0) throw ConfigError("sample count must be at least 1");
  if (policy.sigma_o < 0) throw ConfigError("sigma_o must be nonnegative");
  const WorldState& world = *policy.world;
  const auto dist = probabilities(policy.ref_log_probs);
  const Vec3 mu = vec3_of(policy.mu.value());
  ad::Tape& tape = *policy.mu.tape;

  Surrogate out;
  Var total{};
  for (std::size_t i = 0; i < samples; ++i) {
    const Draw d = draw_pair(dist, rng);
    const Vec3 offset = mu + policy.sigma_o * d.noise;
    const double distance = spatialref::distance(truth, world.blocks[d.reference] + offset);
    out.draws.push_back({d.reference, offset, distance});
    out.loss += distance / static_cast<double>(samples);

    Var score = ad::pick(policy.ref_log_probs, d.reference);
    if (policy.sigma_o > 0) {
      Var quad = ad::squared_norm(ad::sub(tape.constant(tensor_of(offset)), policy.mu));
      score = ad::add(score, ad::scale(quad, -0.5 / (policy.sigma_o * policy.sigma_o)));
    }
    Var term = ad::scale(score, (distance - baseline) / static_cast<double>(samples));
    total = total.valid() ? ad::add(total, term) : term;
  }
  out.objective = total;
  return out;
}

Surrogate intermediate_loss(const TargetPolicy& policy, Vec3 truth, std::size_t draws, double baseline,
                            std::mt19937_64& rng) {
  if (draws == 0) throw ConfigError("sample count must be at least 1");
  if (policy.sigma_o < 0) throw ConfigError("sigma_o must be nonnegative");
  const WorldState& world = *policy.world;
  const auto dist = probabilities(policy.ref_log_probs);
  const Vec3 mu = vec3_of(policy.mu.value());
  ad::Tape& tape = *policy.mu.tape;
  const double inv_n = 1.0 / static_cast<double>(draws);

  Surrogate out;
  Vec3 mean_block, mean_noise, mean_offset;
  std::vector<std::size_t> refs;
  refs.reserve(draws);
  for (std::size_t j = 0; j < draws; ++j) {
    const Draw d = draw_pair(dist, rng);
    const Vec3 offset = mu + policy.sigma_o * d.noise;
    out.draws.push_back({d.reference, offset, spatialref::distance(truth, world.blocks[d.reference] + offset)});
    refs.push_back(d.reference);
    mean_block = mean_block + inv_n * world.blocks[d.reference];
    mean_noise = mean_noise + inv_n * d.noise;
    mean_offset = mean_offset + inv_n * offset;
  }
  // ||t - mean_r - sigma*mean_eps - mu||
  const Vec3 residual_const = truth - mean_block - policy.sigma_o * mean_noise;
  Var loss = ad::l2_norm(ad::sub(tape.constant(tensor_of(residual_const)), policy.mu));
  // Same arithmetic as the per-draw distance, so N = 1 reproduces it bit for bit.
  out.loss = spatialref::distance(truth, mean_block + mean_offset);

  Var log_prob_sum{};
  for (std::size_t r : refs) {
    Var lp = ad::pick(policy.ref_log_probs, r);
    log_prob_sum = log_prob_sum.valid() ? ad::add(log_prob_sum, lp) : lp;
  }
  out.objective = ad::add(loss, ad::scale(log_prob_sum, out.loss - baseline));
  return out;
}

void AnnealSchedule::validate() const {
  if (stages.empty()) throw ConfigError("anneal schedule has no stages");
  if (epochs_per_stage < 1) throw ConfigError("anneal epochs per stage must be at least 1");
  for (std::size_t i = 1; i < stages.size(); ++i)
    if (stages[i] >= stages[i - 1]) throw ConfigError("anneal sample sizes must strictly decrease");
  if (stages.back() != 1) throw ConfigError("anneal schedule must end at 1");
}

int anneal_next(const AnnealSchedule& schedule, int epoch) {
  if (epoch < 0) throw ConfigError("epoch must be nonnegative");
  schedule.validate();
  const std::size_t stage = static_cast<std::size_t>(epoch / schedule.epochs_per_stage);
  return stage < schedule.stages.size() ? schedule.stages[stage] : 1;
}

}  // namespace spatialref
