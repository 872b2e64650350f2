#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "spatialref/errors.hpp"
#include "spatialref/trainer.hpp"

using namespace spatialref;
using ad::Tensor;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.word_dim = 6;
  c.hidden_dim = 8;
  c.block_dim = 8;
  c.cnn_filters = 2;
  c.offset_hidden = 8;
  c.batch_size = 8;
  c.epochs = 2;
  c.ensemble_size = 1;
  c.learning_rate = 0.01;
  return c;
}

const SyntheticDataset& tiny_data() {
  static const SyntheticDataset d = [] {
    SyntheticOptions o;
    o.count = 120;
    o.seed = 5;
    o.max_blocks = 6;
    return generate_synthetic(o);
  }();
  return d;
}

Model fresh_model(const TrainConfig& c, std::uint64_t seed = 3) {
  const Dataset d = tiny_data().records();
  std::vector<std::string> texts;
  for (const auto& r : d.train) texts.push_back(r.instruction);
  Model m(c, Vocabulary::build(texts));
  std::mt19937_64 rng(seed);
  init_params(m, rng);
  return m;
}

double sq(const Tensor& t) {
  double s = 0;
  for (double v : t.values()) s += v * v;
  return s;
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].values() != b[i].values()) return false;
  return true;
}

}  // namespace

TEST_CASE("initialization") {
  CHECK(xavier_bound(256, 256) == doctest::Approx(0.10825).epsilon(1e-4));
  TrainConfig c = tiny_config();
  c.attention = AttentionKind::Dual;
  const Model m = fresh_model(c);
  const auto& p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Tensor& t = p[i];
    if (t.rank() == 2) {
      const double bound = xavier_bound(t.cols(), t.rows());
      double peak = 0;
      for (double v : t.values()) peak = std::max(peak, std::abs(v));
      CHECK(peak <= bound);
      CHECK(peak > 0.5 * bound);
    } else if (p.name(i).ends_with(".lstm.bias")) {
      const std::size_t h = t.size() / 4;
      for (std::size_t k = 0; k < t.size(); ++k) CHECK(t[k] == (k >= h && k < 2 * h ? 1.0 : 0.0));
    } else {
      for (double v : t.values()) CHECK(v == 0.0);
    }
  }
  CHECK(same_params(p, fresh_model(c).params()));
  CHECK_FALSE(same_params(p, fresh_model(c, 4).params()));
}

TEST_CASE("objective schedule") {
  TrainConfig c;
  CHECK(objective_for_epoch(c, 15).kind == TargetObjective::Expectation);
  c.inference = InferenceMode::Sampling;
  c.samples = 3;
  CHECK(objective_for_epoch(c, 0).kind == TargetObjective::Expectation);
  CHECK(objective_for_epoch(c, 1).kind == TargetObjective::Expectation);
  const auto first = objective_for_epoch(c, 2);
  CHECK(first.kind == TargetObjective::Intermediate);
  CHECK(first.samples == 20);
  CHECK(objective_for_epoch(c, 3).samples == 20);
  CHECK(objective_for_epoch(c, 4).samples == 15);
  CHECK(objective_for_epoch(c, 19).samples == 2);
  const auto last = objective_for_epoch(c, 20);
  CHECK(last.kind == TargetObjective::Reinforce);
  CHECK(last.samples == 3);
  CHECK(objective_for_epoch(c, 500).kind == TargetObjective::Reinforce);
}

TEST_CASE("adam step") {
  ParamStore p;
  p.add("enc.lstm.bias", Tensor::vector({1.0, -2.0}));
  p.add("head", Tensor::vector({0.5, 0.5}));
  AdamOptions o;
  o.learning_rate = 0.01;
  o.weight_decay = 0.1;

  SUBCASE("zero gradient only decays") {
    AdamState s(p);
    const auto r = adam_step(p, zero_grads(p), s, o);
    CHECK(r.applied);
    CHECK(p.at("enc.lstm.bias")[0] == doctest::Approx(1.0 * (1 - 0.001)));
    CHECK(p.at("head")[1] == doctest::Approx(0.5 * (1 - 0.001)));
  }
  SUBCASE("first step moves each coordinate by about the learning rate") {
    o.weight_decay = 0;
    AdamState s(p);
    GradMap g = {Tensor::vector({0.3, -0.3}), Tensor::vector({-7.0, 1e-3})};
    adam_step(p, g, s, o);
    CHECK(p.at("enc.lstm.bias")[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.at("enc.lstm.bias")[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p.at("head")[0] == doctest::Approx(0.5 + 0.01).epsilon(1e-6));
    CHECK(p.at("head")[1] == doctest::Approx(0.5 - 0.01).epsilon(1e-4));
    CHECK(s.step == 1);
  }
  SUBCASE("clipping touches only the LSTM group") {
    AdamState s(p);
    GradMap g = {Tensor::vector({6.0, 8.0}), Tensor::vector({100.0, 0.0})};
    const auto r = adam_step(p, g, s, o);
    CHECK(r.lstm_grad_norm == doctest::Approx(10.0));
    CHECK(r.clip_scale == doctest::Approx(0.5));
    CHECK(s.first[0][0] == doctest::Approx(0.1 * 3.0));
    CHECK(s.first[1][0] == doctest::Approx(0.1 * 100.0));
  }
  SUBCASE("non-finite gradient skips the update") {
    AdamState s(p);
    const ParamStore before = p;
    GradMap g = {Tensor::vector({NAN, 0.0}), Tensor::vector({1.0, 1.0})};
    CHECK_FALSE(adam_step(p, g, s, o).applied);
    CHECK(same_params(p, before));
    CHECK(s.step == 0);
  }
  SUBCASE("mismatched gradient count") {
    AdamState s(p);
    CHECK_THROWS_AS(adam_step(p, GradMap{Tensor::vector({1.0, 1.0})}, s, o), ShapeError);
  }
}

TEST_CASE("joint objective structure") {
  const Model m = fresh_model(tiny_config());
  const auto ex = m.prepare(tiny_data().train[0].record);
  std::mt19937_64 rng(1);
  const LossPlan joint{}, src_only{TargetObjective::Expectation, 1, true, false},
      tgt_only{TargetObjective::Expectation, 1, false, true};
  const auto j = example_gradient(m, ex, joint, nullptr, rng, false);
  const auto s = example_gradient(m, ex, src_only, nullptr, rng, false);
  const auto t = example_gradient(m, ex, tgt_only, nullptr, rng, false);
  CHECK(j.loss == doctest::Approx(s.loss + t.loss).epsilon(1e-12));
  CHECK(j.source_loss == s.source_loss);
  CHECK(j.target_loss == t.target_loss);
  const auto& p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    CAPTURE(p.name(i));
    for (std::size_t k = 0; k < p[i].size(); ++k)
      CHECK(j.grads[i][k] == doctest::Approx(s.grads[i][k] + t.grads[i][k]).epsilon(1e-10).scale(1));
    if (p.name(i).starts_with("enc.source.")) {
      CHECK(sq(t.grads[i]) == 0.0);
      CHECK(j.grads[i].values() == s.grads[i].values());
    }
  }
  // The bilinear matrix is shared by both roles.
  const std::size_t w = p.index("enc.attn.W_cnn");
  CHECK(sq(s.grads[w]) > 0);
  CHECK(sq(t.grads[w]) > 0);
  const LossPlan none{TargetObjective::Expectation, 1, false, false};
  CHECK_THROWS_AS(example_gradient(m, ex, none, nullptr, rng, false), ConfigError);
}

TEST_CASE("separate towers do not share parameters") {
  TrainConfig c = tiny_config();
  c.joint = false;
  const Model m = fresh_model(c);
  const auto ex = m.prepare(tiny_data().train[1].record);
  std::mt19937_64 rng(1);
  const auto s = example_gradient(m, ex, {TargetObjective::Expectation, 1, true, false}, nullptr, rng, false);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (m.params().name(i).starts_with("tgt.") || m.params().name(i).starts_with("offset."))
      CHECK(sq(s.grads[i]) == 0.0);
}

TEST_CASE("batch gradient is the mean of example gradients") {
  const Model m = fresh_model(tiny_config());
  std::vector<PreparedExample> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(m.prepare(tiny_data().train[i].record));
  std::mt19937_64 rng(1);
  const auto b = joint_loss(m, batch, {}, nullptr, rng);
  double loss = 0;
  GradMap sum = zero_grads(m.params());
  for (const auto& ex : batch) {
    const auto r = example_gradient(m, ex, {}, nullptr, rng, false);
    loss += r.loss / 3;
    accumulate(sum, r.grads, 1.0 / 3);
  }
  CHECK(b.loss == doctest::Approx(loss).epsilon(1e-12));
  for (std::size_t i = 0; i < sum.size(); ++i)
    for (std::size_t k = 0; k < sum[i].size(); ++k) CHECK(b.grads[i][k] == doctest::Approx(sum[i][k]).epsilon(1e-10));
  CHECK_THROWS_AS(joint_loss(m, std::span<const PreparedExample>{}, {}, nullptr, rng), ConfigError);
}

TEST_CASE("training") {
  const Dataset d = tiny_data().records();
  TrainConfig c = tiny_config();
  c.epochs = 5;
  std::vector<int> seen;
  const auto r = train(d, c, [&](const EpochLog& log) { seen.push_back(log.epoch); });
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});
  REQUIRE(r.history.size() == 5);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  CHECK(r.best_epoch >= 0);
  CHECK(r.model.params().all_finite());
  double best = -INFINITY;
  for (const auto& h : r.history) best = std::max(best, h.dev.selection_score());
  CHECK(r.history[r.best_epoch].dev.selection_score() == best);

  SUBCASE("deterministic for a fixed seed") {
    const auto again = train(d, c);
    CHECK(same_params(r.model.params(), again.model.params()));
    for (std::size_t e = 0; e < 5; ++e) CHECK(again.history[e].train_loss == r.history[e].train_loss);
  }
  SUBCASE("checkpoint round trip") {
    const auto path = (std::filesystem::temp_directory_path() / "spatialref_trainer.ckpt").string();
    save_checkpoint(r.model, path);
    const Model loaded = load_checkpoint(path);
    CHECK(same_params(loaded.params(), r.model.params()));
    CHECK(loaded.vocab() == r.model.vocab());
    CHECK(loaded.config().to_text() == r.model.config().to_text());
    const Model* a[] = {&r.model};
    const Model* b[] = {&loaded};
    const auto ea = evaluate(a, d.dev), eb = evaluate(b, d.dev);
    CHECK(ea.source_accuracy == eb.source_accuracy);
    CHECK(ea.target_mean == eb.target_mean);
    CHECK(ea.target_median == eb.target_median);
  }
  SUBCASE("empty splits are rejected") {
    Dataset empty = d;
    empty.dev.clear();
    CHECK_THROWS_AS(train(empty, c), ConfigError);
  }
}

TEST_CASE("sampling training runs through every objective") {
  const Dataset d = tiny_data().records();
  TrainConfig c = tiny_config();
  c.inference = InferenceMode::Sampling;
  c.anneal_warmup_epochs = 1;
  c.anneal_stages = {3, 1};
  c.anneal_epochs_per_stage = 1;
  c.epochs = 3;
  const auto r = train(d, c);
  REQUIRE(r.history.size() == 3);
  CHECK(r.history[0].objective.kind == TargetObjective::Expectation);
  CHECK(r.history[1].objective.kind == TargetObjective::Intermediate);
  CHECK(r.history[2].objective.kind == TargetObjective::Reinforce);
  for (const auto& h : r.history) CHECK(std::isfinite(h.train_loss));
  CHECK(r.model.params().all_finite());
}

TEST_CASE("ensembles") {
  const Dataset d = tiny_data().records();
  TrainConfig cnn = tiny_config(), dual = tiny_config();
  dual.attention = AttentionKind::Dual;
  const Model a = fresh_model(cnn, 1), b = fresh_model(dual, 2);
  const InstructionRecord& rec = d.dev[0];

  const Model* single[] = {&a};
  const auto one = ensemble_predict(single, rec);
  const auto direct = predict(a, a.prepare(rec));
  CHECK(one.source_dist == direct.source_dist);
  CHECK(one.target == direct.target.position);

  const Model* mixed[] = {&a, &b};
  const auto both = ensemble_predict(mixed, rec);
  REQUIRE(both.members.size() == 2);
  for (std::size_t i = 0; i < rec.world.size(); ++i)
    CHECK(both.source_dist[i] ==
          doctest::Approx(0.5 * (both.members[0].source_dist[i] + both.members[1].source_dist[i])));
  const Vec3 mean = 0.5 * (both.members[0].target.position + both.members[1].target.position);
  CHECK(distance(both.target, mean) < 1e-12);
  CHECK(both.source == argmax(both.source_dist));

  Vocabulary other;
  other.add("unrelated");
  const Model c(cnn, other);
  const Model* bad[] = {&a, &c};
  CHECK_THROWS_AS(ensemble_predict(bad, rec), ConfigError);
  CHECK_THROWS_AS(ensemble_predict(std::span<const Model* const>{}, rec), ConfigError);

  TrainConfig two = tiny_config();
  two.ensemble_size = 2;
  two.epochs = 1;
  const auto members = train_ensemble(d, two, 2);
  REQUIRE(members.size() == 2);
  CHECK(members[0].model.config().seed == two.seed);
  CHECK(members[1].model.config().seed == two.seed + 1);
  CHECK_FALSE(same_params(members[0].model.params(), members[1].model.params()));
  CHECK(same_params(members[0].model.params(), train(d, [&] {
                                                  TrainConfig s = two;
                                                  return s;
                                                }()).model.params()));
}
