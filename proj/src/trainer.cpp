#include "spatialref/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

namespace spatialref {

using ad::Tensor;
using ad::Var;

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void init_params(Model& model, std::mt19937_64& rng) {
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i];
    if (t.rank() == 2) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const double bound = xavier_bound(t.cols(), t.rows());
      for (auto& v : t.data()) v = bound * u(rng);
    } else {
      t.fill(0.0);
    }
    const auto& name = params.name(i);
    if (name.ends_with(".lstm.bias")) {
      const std::size_t h = t.size() / 4;
      for (std::size_t k = h; k < 2 * h; ++k) t[k] = 1.0;
    }
  }
}

LossPlan objective_for_epoch(const TrainConfig& config, int epoch) {
  LossPlan plan;
  if (config.inference == InferenceMode::Expectation || epoch < config.anneal_warmup_epochs) return plan;
  const int n = anneal_next(config.anneal_schedule(), epoch - config.anneal_warmup_epochs);
  if (n > 1) {
    plan.kind = TargetObjective::Intermediate;
    plan.samples = static_cast<std::size_t>(n);
  } else {
    plan.kind = TargetObjective::Reinforce;
    plan.samples = config.samples;
  }
  return plan;
}

namespace {

struct Pass {
  ExampleResult result;
  std::vector<SampleDraw> draws;
  double baseline = 0;
};

Pass run_example(const Model& model, const PreparedExample& ex, const LossPlan& plan, LinearBaseline* baseline,
                 std::mt19937_64& rng, bool dropout_active) {
  if (!plan.include_source && !plan.include_target) throw ConfigError("objective includes no loss term");
  ad::Tape tape;
  Binding bind(tape, model.params());
  const ModelOutputs out = model.forward(bind, ex, dropout_active ? &rng : nullptr);

  Pass pass;
  Var total{};
  if (plan.include_source) {
    Var ls = source_loss(out.source_scores, ex.source);
    pass.result.source_loss = ls.item();
    total = ls;
  }
  if (plan.include_target) {
    Var objective{};
    if (plan.kind == TargetObjective::Expectation) {
      Var expected = expected_target(block_distribution(out.reference_scores), out.positions, out.mu);
      objective = expectation_loss(expected, ex.target);
      pass.result.target_loss = objective.item();
    } else {
      const auto features = out.summary.value().data();
      pass.baseline = baseline ? baseline->predict(features) : 0.0;
      const TargetPolicy policy{out.reference_log_probs, out.mu, &ex.world, model.config().sigma_o};
      Surrogate s = plan.kind == TargetObjective::Intermediate
                        ? intermediate_loss(policy, ex.target, plan.samples, pass.baseline, rng)
                        : reinforce_surrogate(policy, ex.target, plan.samples, pass.baseline, rng);
      objective = s.objective;
      pass.result.target_loss = s.loss;
      pass.draws = std::move(s.draws);
      if (baseline) baseline->update(features, s.loss);
    }
    total = total.valid() ? ad::add(total, objective) : objective;
  }
  pass.result.loss = pass.result.source_loss + pass.result.target_loss;
  pass.result.grads = bind.collect(tape.backward(total));
  return pass;
}

}  // namespace

ExampleResult example_gradient(const Model& model, const PreparedExample& ex, const LossPlan& plan,
                               LinearBaseline* baseline, std::mt19937_64& rng, bool dropout_active) {
  return run_example(model, ex, plan, baseline, rng, dropout_active).result;
}

BatchResult joint_loss(const Model& model, std::span<const PreparedExample> batch, const LossPlan& plan,
                       LinearBaseline* baseline, std::mt19937_64& rng, bool dropout_active) {
  if (batch.empty()) throw ConfigError("batch is empty");
  BatchResult out;
  out.grads = zero_grads(model.params());
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const ExampleResult r = example_gradient(model, ex, plan, baseline, rng, dropout_active);
    out.loss += w * r.loss;
    accumulate(out.grads, r.grads, w);
  }
  return out;
}

SamplingGradient sampling_gradient(const Model& model, const PreparedExample& ex, std::size_t samples,
                                   LinearBaseline* baseline, std::mt19937_64& rng) {
  LossPlan plan{TargetObjective::Reinforce, samples, false, true};
  Pass p = run_example(model, ex, plan, baseline, rng, false);
  return {std::move(p.result.grads), p.result.target_loss, p.baseline, std::move(p.draws)};
}

IntermediateResult intermediate_loss(const Model& model, const PreparedExample& ex, std::size_t draws,
                                     std::mt19937_64& rng, LinearBaseline* baseline) {
  LossPlan plan{TargetObjective::Intermediate, draws, false, true};
  Pass p = run_example(model, ex, plan, baseline, rng, false);
  return {p.result.target_loss, std::move(p.result.grads), std::move(p.draws)};
}

// ---- optimizer --------------------------------------------------------------------

AdamOptions adam_options(const TrainConfig& c) {
  AdamOptions o;
  o.learning_rate = c.learning_rate;
  o.clip_norm = c.clip_norm;
  o.weight_decay = c.weight_decay;
  return o;
}

AdamState::AdamState(const ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    first.emplace_back(params[i].shape());
    second.emplace_back(params[i].shape());
  }
}

bool is_lstm_param(const std::string& name) { return name.find(".lstm.") != std::string::npos; }

StepReport adam_step(ParamStore& params, GradMap grads, AdamState& state, const AdamOptions& o) {
  if (grads.size() != params.size() || state.first.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  StepReport report;
  for (const auto& g : grads)
    if (!g.all_finite()) return report;

  double sq = 0;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (is_lstm_param(params.name(i)))
      for (double v : grads[i].data()) sq += v * v;
  report.lstm_grad_norm = std::sqrt(sq);
  if (report.lstm_grad_norm > o.clip_norm) {
    report.clip_scale = o.clip_norm / report.lstm_grad_norm;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (is_lstm_param(params.name(i))) grads[i].scale_inplace(report.clip_scale);
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      theta[k] -= o.learning_rate * o.weight_decay * theta[k];
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      theta[k] -= o.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + o.epsilon);
    }
  }
  report.applied = true;
  return report;
}

// ---- training loop ------------------------------------------------------------------

TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (data.dev.empty()) throw ConfigError("dev split is empty");

  std::vector<std::string> texts;
  texts.reserve(data.train.size());
  for (const auto& r : data.train) texts.push_back(r.instruction);
  Model model(config, Vocabulary::build(texts));
  std::mt19937_64 rng(config.seed);
  init_params(model, rng);

  AdamState adam(model.params());
  const AdamOptions opts = adam_options(config);
  std::optional<LinearBaseline> baseline;
  if (config.inference == InferenceMode::Sampling && config.baseline == BaselineKind::Linear)
    baseline.emplace(model.summary_dim(), config.learning_rate);

  const Model* members[] = {&model};
  ParamStore best = model.params();
  double best_score = -INFINITY;
  TrainResult result{model, {}, -1};

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.objective = objective_for_epoch(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::vector<PreparedExample> batch;
    batch.reserve(config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const InstructionRecord& rec = data.train[order[k]];
        InstructionRecord noisy = rec;
        std::tie(noisy.world, noisy.target) =
            add_noise(rec.world, rec.target, config.noise_local, config.noise_global, rng);
        batch.push_back(model.prepare(noisy));
      }
      BatchResult br = joint_loss(model, batch, log.objective, baseline ? &*baseline : nullptr, rng, true);
      if (!std::isfinite(br.loss)) throw NumericError("non-finite training loss");
      loss_sum += br.loss * static_cast<double>(batch.size());
      if (!adam_step(model.params(), std::move(br.grads), adam, opts).applied) ++log.skipped_steps;
    }
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.dev = evaluate(members, data.dev);
    if (log.dev.selection_score() > best_score) {
      best_score = log.dev.selection_score();
      best = model.params();
      result.best_epoch = epoch;
    }
    log.dev.rows.clear();
    if (on_epoch) on_epoch(log);
    result.history.push_back(std::move(log));
  }
  model.params() = std::move(best);
  result.model = std::move(model);
  return result;
}

std::vector<TrainResult> train_ensemble(const Dataset& data, const TrainConfig& config, std::size_t max_threads) {
  const std::size_t n = config.ensemble_size;
  std::vector<std::optional<TrainResult>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        TrainConfig c = config;
        c.seed = config.seed + k;
        slots[k].emplace(train(data, c));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (max_threads == 0) max_threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(n, max_threads); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<TrainResult> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace spatialref
