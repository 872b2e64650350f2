#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spatialref/autodiff.hpp"
#include "spatialref/errors.hpp"
#include "spatialref/gradcheck.hpp"

using namespace spatialref;
using namespace spatialref::ad;

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tensor::scalar(4).shape() == Shape{1});
}

TEST_CASE("forward values of basic ops") {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var col = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  const Tensor r = matmul(eye, col).value();
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r[0] == 3);
  CHECK(r[1] == 4);

  const Tensor s = softmax(tape.constant(Tensor::vector({0, 0, 0})), 0).value();
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(sigmoid(tape.constant(Tensor::vector({0}))).item() == 0.5);
}

TEST_CASE("shape mismatches and non-finite values raise") {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1, 2}));
  Var b = tape.constant(Tensor::vector({1, 2, 3}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), ShapeError);
  CHECK_THROWS_AS(log(tape.constant(Tensor::vector({-1.0}))), NumericError);
  CHECK_THROWS_AS(exp(tape.constant(Tensor::vector({1000.0}))), NumericError);
  CHECK_THROWS_AS(tape.constant(Tensor::vector({NAN})), NumericError);
}

TEST_CASE("backward basics") {
  SUBCASE("x*x at 3") {
    Tape tape;
    Var x = tape.variable(Tensor::scalar(3));
    auto g = tape.backward(mul(x, x));
    CHECK(g.of(x)[0] == 6);
  }
  SUBCASE("sum of softmax has zero gradient") {
    Tape tape;
    Var v = tape.variable(Tensor::vector({0.3, -1.2, 2.0}));
    const Tensor g = tape.backward(sum(softmax(v, 0))).of(v);
    for (double d : g.data()) CHECK(std::abs(d) < 1e-15);
  }
  SUBCASE("two branches accumulate") {
    Tape tape;
    Var x = tape.variable(Tensor::scalar(2));
    auto g = tape.backward(add(mul(x, x), scale(x, 3)));
    CHECK(g.of(x)[0] == doctest::Approx(7));
  }
  SUBCASE("unreached variables get zeros") {
    Tape tape;
    Var x = tape.variable(Tensor::vector({1, 2}));
    Var y = tape.variable(Tensor::vector({3, 4}));
    auto g = tape.backward(sum(x));
    CHECK_FALSE(g.reached(y.id));
    CHECK(g.of(y).shape() == Shape{2});
    CHECK(g.of(y)[0] == 0);
  }
  SUBCASE("non-scalar loss and consumed tape") {
    Tape tape;
    Var x = tape.variable(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
    tape.backward(sum(x));
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(sum(x)), Error);
  }
  SUBCASE("detach blocks gradient") {
    Tape tape;
    Var x = tape.variable(Tensor::scalar(2));
    auto g = tape.backward(mul(x, detach(x)));
    CHECK(g.of(x)[0] == 2);
  }
}

TEST_CASE("parameter leaves view the external tensor") {
  Tensor w = Tensor::vector({1, 2});
  Tape tape;
  Var p = tape.parameter(w);
  CHECK(&p.value() == &w);
  auto g = tape.backward(squared_norm(p));
  CHECK(g.of(p)[1] == 4);
}

TEST_CASE("random three-layer net matches finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor w1({5, 4}, oracle::random_vector(rng, 20)), w2({4, 5}, oracle::random_vector(rng, 20)),
        w3({1, 4}, oracle::random_vector(rng, 4));
    Tensor x0({4}, oracle::random_vector(rng, 4));
    auto f = [&](Tape& t, Var x) {
      Var h = tanh(matmul(t.constant(w1), x));
      h = sigmoid(matmul(t.constant(w2), h));
      return sum(matmul(t.constant(w3), h));
    };
    CHECK(grad_check(f, x0) < 1e-4);
  }
}

TEST_CASE("grad_check examples") {
  CHECK(grad_check([](Tape&, Var x) { return squared_norm(x); }, Tensor::vector({1, 2, 2})) < 1e-6);
  CHECK(grad_check([](Tape& t, Var) { return t.constant(Tensor::scalar(5)); }, Tensor::vector({1, 2})) == 0.0);
  std::mt19937_64 rng(5);
  Tensor W({3, 4}, oracle::random_vector(rng, 12));
  Tensor c = Tensor::vector(oracle::random_vector(rng, 3));
  Tensor h = Tensor::vector(oracle::random_vector(rng, 4));
  CHECK(grad_check([&](Tape& t, Var w) { return sum(mul(t.constant(c), matmul(w, t.constant(h)))); }, W) < 1e-5);
  // Non-finite intermediate values surface as errors.
  CHECK_THROWS_AS(grad_check([](Tape&, Var x) { return sum(log(x)); }, Tensor::vector({1e-7})), NumericError);
}

TEST_CASE("softmax rows are distributions and shift invariant") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + rng() % 5, c = 1 + rng() % 6;
    Tape tape;
    Tensor x({r, c}, oracle::random_vector(rng, r * c, -20, 20));
    Tensor shifted = x;
    const double k = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (auto& v : shifted.data()) v += k;
    const Tensor p = softmax(tape.constant(x), 1).value();
    const Tensor q = softmax(tape.constant(shifted), 1).value();
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(p.at(i, j) >= 0);
        s += p.at(i, j);
        CHECK(std::abs(p.at(i, j) - q.at(i, j)) < 1e-9);
      }
      CHECK(std::abs(s - 1) < 1e-9);
    }
  }
}

TEST_CASE("structural ops") {
  Tape tape;
  SUBCASE("unfold pads short sequences") {
    Var h = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Tensor u = unfold(h, 3).value();
    CHECK(u.shape() == Shape{1, 6});
    CHECK(u[4] == 0);
    CHECK(unfold(h, 1).value().shape() == Shape{2, 2});
  }
  SUBCASE("max_rows routes ties to the first row") {
    Var x = tape.variable(Tensor::matrix(3, 1, {2, 5, 5}));
    auto g = tape.backward(sum(max_rows(x)));
    CHECK(g.of(x)[1] == 1);
    CHECK(g.of(x)[2] == 0);
  }
  SUBCASE("l2_norm has zero subgradient at the origin") {
    Var x = tape.variable(Tensor::vector({0, 0}));
    auto g = tape.backward(l2_norm(x));
    CHECK(g.of(x)[0] == 0);
  }
  SUBCASE("gather_rows accumulates repeated ids") {
    Var table = tape.variable(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
    const int ids[] = {2, 0, 2};
    auto g = tape.backward(sum(gather_rows(table, ids)));
    CHECK(g.of(table).at(2, 0) == 2);
    CHECK(g.of(table).at(1, 0) == 0);
  }
  SUBCASE("index errors") {
    Var x = tape.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(pick(x, 2), IndexError);
    CHECK_THROWS_AS(slice(x, 1, 2), ShapeError);
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(1);
  Tape tape;
  Var x = tape.constant(Tensor({1000}, 1.0));
  CHECK(dropout(x, 0.0, rng).value().values() == x.value().values());
  const Tensor d = dropout(x, 0.2, rng).value();
  std::size_t kept = 0;
  for (double v : d.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.25)));
    kept += v != 0.0;
  }
  CHECK(kept > 740);
  CHECK(kept < 860);
  CHECK_THROWS_AS(dropout(x, 1.0, rng), Error);
}

TEST_CASE("grad-check suite passes on a small sample") {
  const auto results = run_grad_check_suite(5, 99);
  CHECK(results.size() > 40);
  for (const auto& r : results) {
    INFO(r.name, " ", r.max_error);
    CHECK(r.passed());
  }
}
