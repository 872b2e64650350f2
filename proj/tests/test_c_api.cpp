#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialref/c_api.h"

extern "C" const char* c_header_version(void);

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  sr_string_free(s);
  return out;
}

void count_epochs(const char* line, void* user) {
  ++*static_cast<int*>(user);
  CHECK(json::parse(line).contains("dev"));
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(sr_version()) == c_header_version());
  CHECK(std::string(sr_status_name(SR_OK)) == "ok");
  CHECK(sr_config_create(nullptr) == SR_ERR_ARGUMENT);
  CHECK(std::string(sr_last_error()).size() > 0);
  sr_model* m = nullptr;
  CHECK(sr_model_load("/nonexistent.ckpt", &m) == SR_ERR_IO);
  CHECK(m == nullptr);
  sr_config_destroy(nullptr);
  sr_dataset_destroy(nullptr);
  sr_model_destroy(nullptr);
}

TEST_CASE("config handles") {
  sr_config* c = nullptr;
  REQUIRE(sr_config_create(&c) == SR_OK);
  CHECK(sr_config_set(c, "attention", "dual") == SR_OK);
  CHECK(sr_config_set(c, "attention", "rnn") == SR_ERR_CONFIG);
  CHECK(sr_config_set(c, "bogus", "1") == SR_ERR_CONFIG);
  char* v = nullptr;
  REQUIRE(sr_config_get(c, "attention", &v) == SR_OK);
  CHECK(take(v) == "dual");
  char* text = nullptr;
  REQUIRE(sr_config_to_text(c, &text) == SR_OK);
  sr_config* d = nullptr;
  REQUIRE(sr_config_parse(text, &d) == SR_OK);
  sr_string_free(text);
  REQUIRE(sr_config_get(d, "attention", &v) == SR_OK);
  CHECK(take(v) == "dual");
  sr_config_destroy(c);
  sr_config_destroy(d);
  CHECK(sr_config_parse("epochs = -\n", &d) == SR_ERR_CONFIG);
}

TEST_CASE("train, save, load, evaluate, predict") {
  const fs::path dir = fs::temp_directory_path() / "spatialref_c_api";
  fs::remove_all(dir);
  fs::create_directories(dir);

  sr_dataset* data = nullptr;
  REQUIRE(sr_dataset_generate(60, 5, 3, &data) == SR_OK);
  size_t n = 0;
  REQUIRE(sr_dataset_size(data, "train", &n) == SR_OK);
  CHECK(n == 42);
  CHECK(sr_dataset_size(data, "holdout", &n) == SR_ERR_CONFIG);
  REQUIRE(sr_dataset_write(data, dir.string().c_str()) == SR_OK);
  sr_dataset* loaded = nullptr;
  REQUIRE(sr_dataset_load(dir.string().c_str(), 1.0, 20, &loaded) == SR_OK);
  REQUIRE(sr_dataset_size(loaded, "test", &n) == SR_OK);
  CHECK(n == 9);

  sr_config* c = nullptr;
  REQUIRE(sr_config_parse("epochs = 2\nword_dim = 4\nhidden_dim = 6\nblock_dim = 6\ncnn_filters = 2\n"
                          "offset_hidden = 6\nbatch_size = 8\n",
                          &c) == SR_OK);
  int epochs = 0;
  sr_model* model = nullptr;
  REQUIRE(sr_train(c, loaded, 0, count_epochs, &epochs, &model) == SR_OK);
  CHECK(epochs == 2);

  const std::string ckpt = (dir / "m.ckpt").string();
  REQUIRE(sr_model_save(model, ckpt.c_str()) == SR_OK);
  sr_model* back = nullptr;
  REQUIRE(sr_model_load(ckpt.c_str(), &back) == SR_OK);

  char* a = nullptr;
  char* b = nullptr;
  const sr_model* one[] = {model};
  const sr_model* other[] = {back};
  REQUIRE(sr_evaluate(one, 1, loaded, "dev", 0, 0, 0, &a) == SR_OK);
  REQUIRE(sr_evaluate(other, 1, loaded, "dev", 0, 0, 1, &b) == SR_OK);
  const json ja = json::parse(take(a)), jb = json::parse(take(b));
  CHECK(ja["target_mean"] == jb["target_mean"]);
  CHECK(ja["source_accuracy"] == jb["source_accuracy"]);
  CHECK(jb["rows"].size() == jb["count"].get<std::size_t>());
  CHECK(sr_evaluate(one, 1, loaded, "nope", 0, 0, 0, &a) == SR_ERR_CONFIG);
  CHECK(sr_evaluate(one, 0, loaded, "dev", 0, 0, 0, &a) == SR_ERR_ARGUMENT);

  const char* world = R"({"world": [[1,0,1],[5,0,5],[9,0,2]], "board": [[0,0],[12,12]]})";
  char* p = nullptr;
  REQUIRE(sr_predict(one, 1, "move the leftmost block behind the rightmost block", world, 1, 7, &p) == SR_OK);
  const json jp = json::parse(take(p));
  CHECK(jp["mode"] == "sampling");
  CHECK(jp["source_distribution"].size() == 3);
  CHECK(jp["members"][0].contains("reference"));
  REQUIRE(sr_predict(one, 1, "move it", world, -1, 7, &p) == SR_OK);
  CHECK(json::parse(take(p))["mode"] == "expectation");
  CHECK(sr_predict(one, 1, "move it", "{\"world\": 3}", 0, 0, &p) == SR_ERR_DATA);

  char* cfg = nullptr;
  REQUIRE(sr_model_config(back, &cfg) == SR_OK);
  CHECK(take(cfg).find("hidden_dim = 6") != std::string::npos);

  sr_model_destroy(model);
  sr_model_destroy(back);
  sr_config_destroy(c);
  sr_dataset_destroy(data);
  sr_dataset_destroy(loaded);
}

TEST_CASE("gradient check entry point") {
  int ok = 0;
  char* out = nullptr;
  REQUIRE(sr_grad_check(2, 11, &ok, &out) == SR_OK);
  CHECK(ok == 1);
  const json j = json::parse(take(out));
  CHECK(j["passed"] == true);
  CHECK(j["checks"].size() > 30);
}
