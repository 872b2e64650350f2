#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spatialref/errors.hpp"
#include "spatialref/target.hpp"

using namespace spatialref;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

WorldState world_of(std::vector<Vec3> blocks) {
  WorldState w;
  w.blocks = std::move(blocks);
  w.board_min = {-10, -10};
  w.board_max = {10, 10};
  return w;
}

Tensor vec(Vec3 v) { return Tensor::vector({v.x, v.y, v.z}); }

}  // namespace

TEST_CASE("offset_mean") {
  ParamStore p;
  add_offset_params(p, {4, 3});
  p.add("s", Tensor::vector({0.3, -0.2, 1.0, 0.5}));
  p.at("offset.a_2") = Tensor::vector({1, 2, 3});
  {
    Tape tape;
    Binding bind(tape, p);
    const Tensor mu = offset_mean(bind, bind("s")).value();
    CHECK(mu.values() == std::vector<double>{1, 2, 3});
  }
  std::mt19937_64 rng(1);
  for (auto name : {"offset.W_1", "offset.a_1"})
    for (auto& v : p.at(name).data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  {
    Tape tape;
    Binding bind(tape, p);
    CHECK(offset_mean(bind, bind("s")).value().values() == std::vector<double>{1, 2, 3});
  }
  for (int trial = 0; trial < 50; ++trial) {
    for (std::size_t i = 0; i < p.size(); ++i)
      for (auto& v : p[i].data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    Tape tape;
    Binding bind(tape, p);
    const Tensor mu = offset_mean(bind, bind("s")).value();
    auto inner = oracle::matvec(oracle::to_matrix(p.at("offset.W_1")), p.at("s").values());
    for (std::size_t k = 0; k < inner.size(); ++k) inner[k] = oracle::sigmoid(inner[k] + p.at("offset.a_1")[k]);
    const auto outer = oracle::matvec(oracle::to_matrix(p.at("offset.W_2")), inner);
    for (std::size_t k = 0; k < 3; ++k) CHECK(mu[k] == doctest::Approx(outer[k] + p.at("offset.a_2")[k]).epsilon(1e-12));
  }
}

TEST_CASE("predict_expectation") {
  const WorldState w = world_of({{1, 0, 0}, {0, 0, 0}});
  CHECK(predict_expectation(std::vector<double>{1, 0}, w, {1, 0, 0}).position == Vec3{2, 0, 0});
  const WorldState mid = world_of({{0, 0, 0}, {2, 0, 0}});
  CHECK(predict_expectation(std::vector<double>{0.5, 0.5}, mid, {}).position == Vec3{1, 0, 0});
  CHECK_THROWS_AS(predict_expectation(std::vector<double>{0.5, 0.4}, mid, {}), NumericError);
  CHECK_THROWS_AS(predict_expectation(std::vector<double>{1.0}, mid, {}), ShapeError);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<Vec3> blocks;
    for (std::size_t i = 0; i < n; ++i) blocks.push_back({oracle::random_vector(rng, 1)[0], 0.5, 3.0 * i});
    const auto p = oracle::softmax(oracle::random_vector(rng, n, -2, 2));
    const Vec3 mu{0.1, -0.2, 0.3};
    Vec3 expect = mu;
    for (std::size_t i = 0; i < n; ++i) {
      expect.x += p[i] * blocks[i].x;
      expect.y += p[i] * blocks[i].y;
      expect.z += p[i] * blocks[i].z;
    }
    const auto got = predict_expectation(p, world_of(blocks), mu).position;
    for (std::size_t k = 0; k < 3; ++k) CHECK(got[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
}

TEST_CASE("predict_sample") {
  std::mt19937_64 rng(3);
  const WorldState w = world_of({{0, 0, 0}, {4, 1, 2}});
  SUBCASE("degenerate distribution") {
    const auto s = predict_sample(std::vector<double>{0, 1}, w, {1, 1, 1}, 0.0, rng);
    CHECK(s.position == Vec3{5, 2, 3});
    CHECK(*s.reference == 1);
  }
  SUBCASE("reference frequency") {
    int zeros = 0;
    for (int i = 0; i < 100000; ++i) zeros += *predict_sample(std::vector<double>{0.9, 0.1}, w, {}, 0.3, rng).reference == 0;
    CHECK(zeros / 1e5 >= 0.894);
    CHECK(zeros / 1e5 <= 0.906);
  }
  SUBCASE("offset spread and exact composition") {
    const Vec3 mu{0.5, -1, 2};
    double s[3] = {0, 0, 0}, ss[3] = {0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const auto d = predict_sample(std::vector<double>{0.5, 0.5}, w, mu, 0.5, rng);
      CHECK(d.position == w.blocks[*d.reference] + *d.offset);
      for (std::size_t k = 0; k < 3; ++k) {
        const double o = (*d.offset)[k] - mu[k];
        s[k] += o;
        ss[k] += o * o;
      }
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const double sd = std::sqrt(ss[k] / n - (s[k] / n) * (s[k] / n));
      CHECK(sd == doctest::Approx(0.5).epsilon(0.02));
    }
  }
  SUBCASE("reproducible under a seed") {
    std::mt19937_64 a(9), b(9);
    for (int i = 0; i < 100; ++i)
      CHECK(predict_sample(std::vector<double>{0.3, 0.7}, w, {}, 0.5, a).position ==
            predict_sample(std::vector<double>{0.3, 0.7}, w, {}, 0.5, b).position);
  }
}

TEST_CASE("expectation_loss") {
  CHECK(expectation_loss(Vec3{1, 2, 3}, Vec3{1, 2, 3}) == 0);
  CHECK(expectation_loss(Vec3{0, 0, 0}, Vec3{1, 2, 2}) == 9);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = oracle::random_vector(rng, 3, -5, 5), b = oracle::random_vector(rng, 3, -5, 5);
    double sq = 0;
    for (int k = 0; k < 3; ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
    Tape tape;
    const Vec3 pa{a[0], a[1], a[2]}, pb{b[0], b[1], b[2]};
    CHECK(expectation_loss(pa, pb) == doctest::Approx(sq));
    CHECK(expectation_loss(tape.constant(vec(pa)), pb).item() == doctest::Approx(sq));
  }
}

TEST_CASE("reinforce surrogate") {
  const WorldState w = world_of({{0, 0, 0}, {3, 0, 0}});
  const Vec3 truth{1, 0, 0};

  SUBCASE("zero advantage gives zero gradient") {
    Tape tape;
    Var logits = tape.variable(Tensor::vector({30.0, -30.0}));
    Var mu = tape.variable(vec({0, 0, 0}));
    std::mt19937_64 rng(1);
    const TargetPolicy policy{ad::log_softmax(logits), mu, &w, 0.0};
    const auto s = reinforce_surrogate(policy, truth, 4, 1.0, rng);
    for (const auto& d : s.draws) CHECK(d.distance == 1.0);
    const auto g = tape.backward(s.objective);
    for (double v : g.of(logits).values()) CHECK(v == 0.0);
  }

  SUBCASE("two-outcome estimator is unbiased") {
    // E||t - R - mu|| = sum_i p_i d_i, so d/dlogit_j = p_j (d_j - sum_i p_i d_i).
    const std::vector<double> l{0.4, -0.3};
    const Vec3 mu{0.2, 0.1, -0.1};
    const auto p = oracle::softmax(l);
    const double d0 = distance(truth, w.blocks[0] + mu), d1 = distance(truth, w.blocks[1] + mu);
    const double mean_d = p[0] * d0 + p[1] * d1;
    const double exact[2] = {p[0] * (d0 - mean_d), p[1] * (d1 - mean_d)};
    std::mt19937_64 rng(2024);
    const int n = 1000000;
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      Tape tape;
      Var logits = tape.variable(Tensor::vector(l));
      const TargetPolicy policy{ad::log_softmax(logits), tape.constant(vec(mu)), &w, 0.0};
      const auto s = reinforce_surrogate(policy, truth, 1, 0.0, rng);
      const Tensor g = tape.backward(s.objective).of(logits);
      for (int k = 0; k < 2; ++k) {
        sum[k] += g[k];
        sq[k] += g[k] * g[k];
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double m = sum[k] / n, se = std::sqrt((sq[k] / n - m * m) / n);
      CHECK(std::abs(m - exact[k]) < 3 * se);
    }
  }

  SUBCASE("fitted baseline keeps the mean and lowers variance") {
    const std::vector<double> l{0.1, 0.2};
    const Vec3 mu{0.3, 0.0, 0.2};
    std::mt19937_64 ra(77), rb(77);
    LinearBaseline baseline(1, 0.01);
    const std::vector<double> feature{1.0};
    const int n = 200000;
    double sa = 0, sb = 0, qa = 0, qb = 0;
    for (int i = 0; i < n; ++i) {
      double g[2];
      for (int variant = 0; variant < 2; ++variant) {
        Tape tape;
        Var logits = tape.variable(Tensor::vector(l));
        const TargetPolicy policy{ad::log_softmax(logits), tape.variable(vec(mu)), &w, 0.3};
        const double b = variant == 0 ? 0.0 : baseline.predict(feature);
        const auto s = reinforce_surrogate(policy, truth, 1, b, variant == 0 ? ra : rb);
        g[variant] = tape.backward(s.objective).of(logits)[0];
        if (variant == 1) baseline.update(feature, s.loss);
      }
      sa += g[0];
      qa += g[0] * g[0];
      sb += g[1];
      qb += g[1] * g[1];
    }
    const double ma = sa / n, mb = sb / n, va = qa / n - ma * ma, vb = qb / n - mb * mb;
    CHECK(vb < va);
    CHECK(std::abs(ma - mb) < 3 * std::sqrt((va + vb) / n));
  }
  auto zero_draws = [&] {
    Tape tape;
    std::mt19937_64 rng(1);
    const TargetPolicy policy{tape.constant(Tensor::vector({std::log(0.5), std::log(0.5)})), tape.constant(vec({})),
                              &w, 0.5};
    reinforce_surrogate(policy, truth, 0, 0.0, rng);
  };
  CHECK_THROWS_AS(zero_draws(), ConfigError);
}

TEST_CASE("intermediate loss") {
  std::mt19937_64 rng(5);
  const WorldState w = world_of({{0, 0, 0}, {1, 0.5, 1}, {1.5, 0, 0.2}});
  const Vec3 truth{0.7, 0.1, 1.2};

  SUBCASE("N = 1 equals the sampled distance of the same draw") {
    for (int trial = 0; trial < 200; ++trial) {
      const std::uint64_t seed = rng();
      Tape tape;
      const TargetPolicy policy{ad::log_softmax(tape.constant(Tensor::vector(oracle::random_vector(rng, 3)))),
                                tape.variable(Tensor::vector(oracle::random_vector(rng, 3))), &w, 0.4};
      std::mt19937_64 a(seed), b(seed);
      const auto inter = intermediate_loss(policy, truth, 1, 0.0, a);
      const auto single = reinforce_surrogate(policy, truth, 1, 0.0, b);
      CHECK(inter.loss == single.draws[0].distance);
      CHECK(inter.loss == inter.draws[0].distance);
    }
  }
  SUBCASE("degenerate distributions give the deterministic distance for any N") {
    for (std::size_t n : {1u, 5u, 50u}) {
      Tape tape;
      const TargetPolicy policy{ad::log_softmax(tape.constant(Tensor::vector({-50, 50, -50}))),
                                tape.variable(vec({0.2, 0.0, -0.1})), &w, 0.0};
      const auto s = intermediate_loss(policy, truth, n, 0.0, rng);
      CHECK(s.loss == doctest::Approx(distance(truth, w.blocks[1] + Vec3{0.2, 0.0, -0.1})).epsilon(1e-12));
    }
  }
  SUBCASE("large N approaches the expectation distance") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto logits = oracle::random_vector(rng, 3, -1, 1);
      const Vec3 mu{0.1, -0.2, 0.05};
      Tape tape;
      const TargetPolicy policy{ad::log_softmax(tape.constant(Tensor::vector(logits))), tape.variable(vec(mu)), &w, 0.3};
      const auto p = oracle::softmax(logits);
      const Vec3 expected = predict_expectation(p, w, mu).position;
      CHECK(std::abs(intermediate_loss(policy, truth, 10000, 0.0, rng).loss - distance(truth, expected)) < 0.02);
    }
  }
  SUBCASE("offset mean gets the pathwise gradient") {
    Tape tape;
    Var mu = tape.variable(vec({0.1, 0.2, 0.3}));
    const TargetPolicy policy{ad::log_softmax(tape.constant(Tensor::vector({0.0, 0.5, -0.5}))), mu, &w, 0.2};
    const auto s = intermediate_loss(policy, truth, 8, 0.0, rng);
    Vec3 mean_pred;
    for (const auto& d : s.draws) mean_pred = mean_pred + 0.125 * (w.blocks[d.reference] + d.offset);
    const Vec3 r = truth - mean_pred;
    const Tensor g = tape.backward(s.objective).of(mu);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(-r[k] / norm(r)).epsilon(1e-9));
  }
}

TEST_CASE("anneal schedule") {
  const AnnealSchedule s;
  CHECK(anneal_next(s, 0) == 20);
  CHECK(anneal_next(s, 3) == 15);
  CHECK(anneal_next(s, 19) == 1);
  CHECK(anneal_next(s, 500) == 1);
  CHECK_THROWS_AS(anneal_next(s, -1), ConfigError);
  CHECK_THROWS_AS((AnnealSchedule{{5, 5, 1}, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((AnnealSchedule{{5, 2}, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((AnnealSchedule{{5, 1}, 0}.validate()), ConfigError);
}

TEST_CASE("linear baseline regression") {
  LinearBaseline b(2, 0.05);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20000; ++i) {
    const auto x = oracle::random_vector(rng, 2);
    b.update(x, 1.5 + 2.0 * x[0] - x[1]);
  }
  CHECK(b.bias() == doctest::Approx(1.5).epsilon(1e-3));
  CHECK(b.weights()[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK_THROWS_AS(b.predict(std::vector<double>{1.0}), ShapeError);
}
