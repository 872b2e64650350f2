#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spatialref/config.hpp"
#include "spatialref/errors.hpp"

using namespace spatialref;

TEST_CASE("defaults") {
  const TrainConfig c;
  CHECK(c.learning_rate == 0.001);
  CHECK(c.dropout == 0.2);
  CHECK(c.clip_norm == 5.0);
  CHECK(c.weight_decay == 1e-5);
  CHECK(c.batch_size == 32);
  CHECK(c.noise_local == 0.1);
  CHECK(c.noise_global == 1.0);
  CHECK(c.sigma_o == 0.5);
  CHECK(c.ensemble_size == 8);
  CHECK(c.anneal_epochs_per_stage == 2);
  CHECK(c.anneal_stages == std::vector<int>{20, 15, 10, 8, 6, 5, 4, 3, 2, 1});
  CHECK(c.hidden_dim == 256);
  CHECK(c.block_dim == 64);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("parse, set, get and round trip") {
  const TrainConfig c = parse_config(
      "# comment\n"
      "attention = dual   # trailing comment\n"
      "inference=sampling\n"
      "\n"
      "joint = false\n"
      "features = coords\n"
      "anneal_stages = 8, 4, 1\n"
      "learning_rate = 0.01\n");
  CHECK(c.attention == AttentionKind::Dual);
  CHECK(c.inference == InferenceMode::Sampling);
  CHECK_FALSE(c.joint);
  CHECK(c.features == FeatureSet::CoordsOnly);
  CHECK(c.anneal_stages == std::vector<int>{8, 4, 1});
  CHECK(c.learning_rate == 0.01);
  const TrainConfig again = parse_config(c.to_text());
  for (const auto& k : TrainConfig::keys()) CHECK(again.get(k) == c.get(k));
  TrainConfig d;
  d.set("baseline", "none");
  CHECK(d.baseline == BaselineKind::None);
  CHECK(d.get("baseline") == "none");
}

TEST_CASE("validation errors") {
  CHECK_THROWS_AS(parse_config("nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("learning_rate\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("learning_rate = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("learning_rate = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dropout = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("attention = rnn\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("anneal_stages = 3, 3, 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("sigma_o = 0\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), IoError);
}

TEST_CASE("load from file") {
  const auto p = std::filesystem::temp_directory_path() / "spatialref_test.cfg";
  std::ofstream(p) << "epochs = 3\nseed = 42\n";
  const TrainConfig c = load_config(p.string());
  CHECK(c.epochs == 3);
  CHECK(c.seed == 42u);
}
