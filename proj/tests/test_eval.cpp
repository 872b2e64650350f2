#include <doctest.h>

#include <algorithm>
#include <random>

#include "spatialref/errors.hpp"
#include "spatialref/eval.hpp"

using namespace spatialref;

namespace {

InstructionRecord record(std::vector<Vec3> blocks, std::size_t source, Vec3 target) {
  InstructionRecord r;
  r.instruction = "move it";
  r.world.blocks = std::move(blocks);
  r.world.board_max = {10, 10};
  r.source = source;
  r.target = target;
  return r;
}

}  // namespace

TEST_CASE("median") {
  CHECK(median({}) == 0.0);
  CHECK(median({3}) == 3.0);
  CHECK(median({4, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("perfect predictions") {
  const std::vector<InstructionRecord> recs = {record({{0, 0, 0}, {2, 0, 0}}, 1, {5, 0, 5}),
                                               record({{1, 0, 1}, {4, 0, 4}, {7, 1, 7}}, 0, {0, 0, 3})};
  const std::vector<std::size_t> src = {1, 0};
  const std::vector<Vec3> tgt = {{5, 0, 5}, {0, 0, 3}};
  const auto r = compute_report(src, tgt, recs);
  CHECK(r.source_accuracy == 1.0);
  CHECK(r.source_mean == 0.0);
  CHECK(r.source_median == 0.0);
  CHECK(r.target_mean == 0.0);
  CHECK(r.target_median == 0.0);
  CHECK(r.rows.size() == 2);
}

TEST_CASE("one of two correct") {
  const std::vector<InstructionRecord> recs = {record({{0, 0, 0}, {3, 0, 0}}, 0, {0, 0, 0}),
                                               record({{0, 0, 0}, {3, 0, 0}}, 0, {0, 0, 0})};
  const std::vector<std::size_t> src = {0, 1};
  const std::vector<Vec3> tgt = {{1, 0, 0}, {0, 2, 0}};
  const auto r = compute_report(src, tgt, recs);
  CHECK(r.source_accuracy == 0.5);
  CHECK(r.source_median == doctest::Approx(1.5));
  CHECK(r.source_mean == doctest::Approx(1.5));
  CHECK(r.target_median == doctest::Approx(1.5));
  CHECK(r.target_mean == doctest::Approx(1.5));
  CHECK(r.rows[1].source_distance == 3.0);
  const std::string json = report_json(r, true);
  CHECK(json.find("\"source_accuracy\": 0.5") != std::string::npos);
  CHECK(json.find("\"rows\"") != std::string::npos);
  CHECK(report_json(r).find("\"rows\"") == std::string::npos);
}

TEST_CASE("metrics do not depend on example order") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<InstructionRecord> recs;
  std::vector<std::size_t> src;
  std::vector<Vec3> tgt;
  for (int i = 0; i < 101; ++i) {
    recs.push_back(record({{u(rng), 0, u(rng)}, {u(rng), 0, u(rng)}, {u(rng), 0, u(rng)}}, rng() % 3,
                          {u(rng), 0, u(rng)}));
    src.push_back(rng() % 3);
    tgt.push_back({u(rng), u(rng), u(rng)});
  }
  const auto a = compute_report(src, tgt, recs);
  std::vector<std::size_t> perm(recs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<InstructionRecord> r2;
  std::vector<std::size_t> s2;
  std::vector<Vec3> t2;
  for (auto i : perm) {
    r2.push_back(recs[i]);
    s2.push_back(src[i]);
    t2.push_back(tgt[i]);
  }
  const auto b = compute_report(s2, t2, r2);
  CHECK(a.source_accuracy == b.source_accuracy);
  CHECK(a.source_mean == b.source_mean);
  CHECK(a.source_median == b.source_median);
  CHECK(a.target_mean == b.target_mean);
  CHECK(a.target_median == b.target_median);
}

TEST_CASE("invalid inputs") {
  const std::vector<InstructionRecord> none;
  CHECK_THROWS_AS(compute_report({}, {}, none), ConfigError);
  const std::vector<InstructionRecord> one = {record({{0, 0, 0}, {3, 0, 0}}, 0, {0, 0, 0})};
  const std::vector<std::size_t> bad = {2};
  const std::vector<Vec3> tgt = {{0, 0, 0}};
  CHECK_THROWS_AS(compute_report(bad, tgt, one), IndexError);
  const std::vector<std::size_t> two = {0, 0};
  CHECK_THROWS_AS(compute_report(two, tgt, one), ShapeError);
}
