// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spatialref/c_api.h"

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kInternalError = 2;

// Carries a C API failure up to main.
struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(sr_status s) {
  switch (s) {
    case SR_OK: return kOk;
    case SR_ERR_ARGUMENT:
    case SR_ERR_CONFIG:
    case SR_ERR_IO:
    case SR_ERR_DATA: return kUserError;
    default: return kInternalError;
  }
}

void check(sr_status s) {
  if (s != SR_OK) throw Failure{exit_code_for(s), std::string(sr_status_name(s)) + " error: " + sr_last_error()};
}

struct StringDeleter {
  void operator()(char* s) const { sr_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) { return OwnedString(s).get(); }

template <typename T, void (*Destroy)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle(Handle&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
  ~Handle() { Destroy(ptr); }
};
using Config = Handle<sr_config, sr_config_destroy>;
using Dataset = Handle<sr_dataset, sr_dataset_destroy>;
using Model = Handle<sr_model, sr_model_destroy>;

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw Failure{kUserError, "cannot write " + out_path};
  f << text << '\n';
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Failure{kUserError, "cannot read " + path};
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string config_value(const Config& c, const char* key) {
  char* s = nullptr;
  check(sr_config_get(c.ptr, key, &s));
  return take(s);
}

// model.ckpt -> model.3.ckpt for ensemble member 3.
std::string member_path(const std::string& base, std::size_t member, std::size_t count) {
  if (count == 1) return base;
  const auto slash = base.find_last_of('/');
  const auto dot = base.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return base + "." + std::to_string(member);
  return base.substr(0, dot) + "." + std::to_string(member) + base.substr(dot);
}

std::vector<Model> load_models(const std::vector<std::string>& paths) {
  std::vector<Model> models;
  for (const auto& p : paths) {
    Model m;
    check(sr_model_load(p.c_str(), &m.ptr));
    models.push_back(std::move(m));
  }
  return models;
}

std::vector<const sr_model*> raw(const std::vector<Model>& models) {
  std::vector<const sr_model*> out;
  for (const auto& m : models) out.push_back(m.ptr);
  return out;
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatialref: grounded spatial instruction models"};
  app.require_subcommand(1);
  std::string out_path;

  auto* train = app.add_subcommand("train", "Train a model (or an ensemble) from a config file");
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
  train->add_option("--config", config_path, "Config file of key = value lines")->required();
  train->add_option("--set", overrides, "Override a config key, KEY=VALUE");
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");
  train->add_option("--out", out_path, "Report destination (default stdout)");

  auto* eval = app.add_subcommand("eval", "Evaluate one checkpoint or an averaged ensemble");
  std::vector<std::string> ckpts;
  std::string data_path, split = "test";
  bool sampled_eval = false, rows = false;
  std::uint64_t seed = 0;
  eval->add_option("--ckpt", ckpts, "Checkpoint path; repeat for an ensemble")->required();
  eval->add_option("--data", data_path, "Dataset directory or .jsonl file")->required();
  eval->add_option("--split", split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  eval->add_flag("--sampled-eval", sampled_eval, "Draw target predictions instead of expectations");
  eval->add_option("--seed", seed, "Seed for --sampled-eval");
  eval->add_flag("--rows", rows, "Include per-example rows");
  eval->add_option("--out", out_path, "Report destination (default stdout)");

  auto* predict = app.add_subcommand("predict", "Predict source block and target for one instruction");
  std::string instruction, world_path, mode = "auto";
  std::vector<std::string> predict_ckpts;
  predict->add_option("--ckpt", predict_ckpts, "Checkpoint path; repeat for an ensemble")->required();
  predict->add_option("--instruction", instruction, "Instruction text")->required();
  predict->add_option("--world", world_path, "World file {\"world\": [...], \"board\": [...]}")->required();
  predict->add_option("--mode", mode, "auto, expectation or sampling")
      ->check(CLI::IsMember({"auto", "expectation", "sampling"}));
  predict->add_option("--seed", seed, "Seed for sampling");
  predict->add_option("--out", out_path, "Report destination (default stdout)");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::size_t count = 1000, max_blocks = 10;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--count", count, "Number of records")->check(CLI::PositiveNumber);
  gen->add_option("--max-blocks", max_blocks, "Maximum blocks per world")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* gc = app.add_subcommand("grad-check", "Run the finite-difference gradient suite");
  std::size_t instances = 100;
  std::uint64_t gc_seed = 7;
  gc->add_option("--instances", instances, "Random instances per check")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "Suite seed");
  gc->add_option("--out", out_path, "Report destination (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (train->parsed()) {
      Config cfg;
      check(sr_config_load(config_path.c_str(), &cfg.ptr));
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Failure{kUserError, "--set expects KEY=VALUE, got " + kv};
        check(sr_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
      }
      const std::string data = config_value(cfg, "data");
      if (data.empty()) throw Failure{kUserError, "config key 'data' is not set"};
      Dataset ds;
      check(sr_dataset_load(data.c_str(), std::stod(config_value(cfg, "block_length")),
                            std::stoul(config_value(cfg, "max_blocks")), &ds.ptr));
      const std::size_t members = std::stoul(config_value(cfg, "ensemble_size"));
      const std::string base = config_value(cfg, "out");
      std::vector<std::string> epochs;
      struct Sink {
        std::vector<std::string>* lines;
        bool quiet;
      } sink{&epochs, quiet};
      auto on_epoch = [](const char* json, void* user) {
        auto* s = static_cast<Sink*>(user);
        s->lines->emplace_back(json);
        if (!s->quiet) std::cerr << json << '\n';
      };
      std::string report = "{\n  \"checkpoints\": [";
      for (std::size_t k = 0; k < members; ++k) {
        Model m;
        check(sr_train(cfg.ptr, ds.ptr, k, on_epoch, &sink, &m.ptr));
        const std::string path = member_path(base, k, members);
        check(sr_model_save(m.ptr, path.c_str()));
        report += (k ? ", " : "") + json_string(path);
      }
      report += "],\n  \"epochs\": [";
      for (std::size_t i = 0; i < epochs.size(); ++i) report += (i ? ",\n    " : "\n    ") + epochs[i];
      report += "\n  ]\n}";
      emit(report, out_path);
    } else if (eval->parsed()) {
      const auto models = load_models(ckpts);
      char* s = nullptr;
      Dataset ds;
      char* cfg_text = nullptr;
      check(sr_model_config(models.front().ptr, &cfg_text));
      Config cfg;
      check(sr_config_parse(take(cfg_text).c_str(), &cfg.ptr));
      check(sr_dataset_load(data_path.c_str(), std::stod(config_value(cfg, "block_length")),
                            std::stoul(config_value(cfg, "max_blocks")), &ds.ptr));
      const auto ptrs = raw(models);
      check(sr_evaluate(ptrs.data(), ptrs.size(), ds.ptr, split.c_str(), sampled_eval, seed, rows, &s));
      emit(take(s), out_path);
    } else if (predict->parsed()) {
      const auto models = load_models(predict_ckpts);
      const std::string world = read_text(world_path);
      const int sampled = mode == "auto" ? -1 : mode == "sampling" ? 1 : 0;
      const auto ptrs = raw(models);
      char* s = nullptr;
      check(sr_predict(ptrs.data(), ptrs.size(), instruction.c_str(), world.c_str(), sampled, seed, &s));
      emit(take(s), out_path);
    } else if (gen->parsed()) {
      Dataset ds;
      check(sr_dataset_generate(count, max_blocks, gen_seed, &ds.ptr));
      check(sr_dataset_write(ds.ptr, gen_out.c_str()));
      std::size_t n[3];
      const char* names[] = {"train", "dev", "test"};
      for (int i = 0; i < 3; ++i) check(sr_dataset_size(ds.ptr, names[i], &n[i]));
      std::cout << "{\"out\": " << json_string(gen_out) << ", \"train\": " << n[0] << ", \"dev\": " << n[1]
                << ", \"test\": " << n[2] << "}\n";
    } else if (gc->parsed()) {
      int passed = 0;
      char* s = nullptr;
      check(sr_grad_check(instances, gc_seed, &passed, &s));
      emit(take(s), out_path);
      if (!passed) {
        std::cerr << "gradient check failed\n";
        return kInternalError;
      }
    }
  } catch (const Failure& f) {
    std::cerr << "spatialref: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "spatialref: " << e.what() << '\n';
    return kInternalError;
  }
  return kOk;
}
