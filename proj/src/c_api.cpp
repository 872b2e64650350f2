#include "spatialref/c_api.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialref/config.hpp"
#include "spatialref/data.hpp"
#include "spatialref/errors.hpp"
#include "spatialref/eval.hpp"
#include "spatialref/gradcheck.hpp"
#include "spatialref/model.hpp"
#include "spatialref/trainer.hpp"

using namespace spatialref;
using nlohmann::ordered_json;

struct sr_config {
  TrainConfig value;
};

struct sr_dataset {
  Dataset records;
  std::optional<SyntheticDataset> synthetic;
};

struct sr_model {
  Model value;
};

namespace {

thread_local std::string g_last_error;

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <typename F>
sr_status guarded(F&& body) {
  try {
    body();
    return SR_OK;
  } catch (const ArgumentError& e) {
    g_last_error = e.what();
    return SR_ERR_ARGUMENT;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return SR_ERR_CONFIG;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return SR_ERR_IO;
  } catch (const DataError& e) {
    g_last_error = e.what();
    return SR_ERR_DATA;
  } catch (const ShapeError& e) {
    g_last_error = e.what();
    return SR_ERR_SHAPE;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return SR_ERR_NUMERIC;
  } catch (const IndexError& e) {
    g_last_error = e.what();
    return SR_ERR_INDEX;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ordered_json vec_json(Vec3 v) { return ordered_json::array({v.x, v.y, v.z}); }

std::vector<const Model*> members_of(const sr_model* const* models, std::size_t count) {
  require(models, "models");
  if (count == 0) throw ArgumentError("at least one model is required");
  std::vector<const Model*> out;
  for (std::size_t i = 0; i < count; ++i) {
    require(models[i], "model");
    out.push_back(&models[i]->value);
  }
  return out;
}

std::string_view objective_name(TargetObjective k) {
  switch (k) {
    case TargetObjective::Expectation: return "expectation";
    case TargetObjective::Intermediate: return "intermediate";
    case TargetObjective::Reinforce: return "reinforce";
  }
  return "?";
}

ordered_json metrics_json(const EvalReport& r) {
  return {{"source_accuracy", r.source_accuracy}, {"source_median", r.source_median},
          {"source_mean", r.source_mean},         {"target_median", r.target_median},
          {"target_mean", r.target_mean}};
}

}  // namespace

extern "C" {

const char* sr_last_error(void) { return g_last_error.c_str(); }

const char* sr_version(void) { return "0.1.0"; }

const char* sr_status_name(sr_status status) {
  switch (status) {
    case SR_OK: return "ok";
    case SR_ERR_ARGUMENT: return "argument";
    case SR_ERR_CONFIG: return "config";
    case SR_ERR_IO: return "io";
    case SR_ERR_DATA: return "data";
    case SR_ERR_SHAPE: return "shape";
    case SR_ERR_NUMERIC: return "numeric";
    case SR_ERR_INDEX: return "index";
    case SR_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void sr_string_free(char* s) { std::free(s); }

sr_status sr_config_create(sr_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new sr_config{};
  });
}

sr_status sr_config_load(const char* path, sr_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new sr_config{load_config(path)};
  });
}

sr_status sr_config_parse(const char* text, sr_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new sr_config{parse_config(text)};
  });
}

sr_status sr_config_set(sr_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->value.set(key, value);
  });
}

sr_status sr_config_get(const sr_config* config, const char* key, char** out) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(out, "out");
    *out = dup_string(config->value.get(key));
  });
}

sr_status sr_config_to_text(const sr_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = dup_string(config->value.to_text());
  });
}

void sr_config_destroy(sr_config* config) { delete config; }

sr_status sr_dataset_load(const char* path, double block_length, size_t max_blocks, sr_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    if (!(block_length > 0)) throw ArgumentError("block_length must be positive");
    *out = new sr_dataset{load_dataset(path, block_length, max_blocks), std::nullopt};
  });
}

sr_status sr_dataset_generate(size_t count, size_t max_blocks, uint64_t seed, sr_dataset** out) {
  return guarded([&] {
    require(out, "out");
    SyntheticOptions opts;
    opts.count = count;
    opts.max_blocks = max_blocks;
    opts.min_blocks = std::min(opts.min_blocks, max_blocks);
    opts.seed = seed;
    SyntheticDataset synth = generate_synthetic(opts);
    Dataset records = synth.records();
    *out = new sr_dataset{std::move(records), std::move(synth)};
  });
}

sr_status sr_dataset_write(const sr_dataset* data, const char* dir) {
  return guarded([&] {
    require(data, "data");
    require(dir, "dir");
    if (data->synthetic) {
      write_dataset(*data->synthetic, dir);
      return;
    }
    const std::string base(dir);
    std::filesystem::create_directories(base);
    save_records(base + "/train.jsonl", data->records.train);
    save_records(base + "/dev.jsonl", data->records.dev);
    save_records(base + "/test.jsonl", data->records.test);
  });
}

sr_status sr_dataset_size(const sr_dataset* data, const char* split, size_t* out) {
  return guarded([&] {
    require(data, "data");
    require(split, "split");
    require(out, "out");
    *out = data->records.split(split).size();
  });
}

void sr_dataset_destroy(sr_dataset* data) { delete data; }

sr_status sr_train(const sr_config* config, const sr_dataset* data, size_t member, sr_epoch_callback on_epoch,
                   void* user, sr_model** out) {
  return guarded([&] {
    require(config, "config");
    require(data, "data");
    require(out, "out");
    TrainConfig c = config->value;
    c.seed += member;
    EpochCallback cb;
    if (on_epoch) {
      cb = [&](const EpochLog& log) {
        ordered_json j;
        j["member"] = member;
        j["epoch"] = log.epoch;
        j["objective"] = objective_name(log.objective.kind);
        j["samples"] = log.objective.samples;
        j["train_loss"] = log.train_loss;
        j["skipped_steps"] = log.skipped_steps;
        j["dev"] = metrics_json(log.dev);
        on_epoch(j.dump().c_str(), user);
      };
    }
    TrainResult r = train(data->records, c, cb);
    *out = new sr_model{std::move(r.model)};
  });
}

sr_status sr_model_load(const char* path, sr_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new sr_model{load_checkpoint(path)};
  });
}

sr_status sr_model_save(const sr_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(model->value, path);
  });
}

sr_status sr_model_config(const sr_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = dup_string(model->value.config().to_text());
  });
}

void sr_model_destroy(sr_model* model) { delete model; }

sr_status sr_evaluate(const sr_model* const* models, size_t count, const sr_dataset* data, const char* split,
                      int sampled, uint64_t seed, int include_rows, char** out) {
  return guarded([&] {
    const auto members = members_of(models, count);
    require(data, "data");
    require(split, "split");
    require(out, "out");
    const EvalReport report = evaluate(members, data->records.split(split), {sampled != 0, seed});
    auto j = ordered_json::parse(report_json(report, include_rows != 0));
    ordered_json wrapped{{"split", split}, {"members", count}, {"sampled", sampled != 0}};
    wrapped.update(j);
    *out = dup_string(wrapped.dump(2));
  });
}

sr_status sr_predict(const sr_model* const* models, size_t count, const char* instruction, const char* world_json,
                     int sampled, uint64_t seed, char** out) {
  return guarded([&] {
    const auto members = members_of(models, count);
    require(instruction, "instruction");
    require(world_json, "world_json");
    require(out, "out");
    const TrainConfig& cfg = members.front()->config();
    InstructionRecord rec;
    rec.instruction = instruction;
    rec.world = parse_world(world_json, cfg.block_length, cfg.max_blocks);
    const bool draw = sampled < 0 ? cfg.inference == InferenceMode::Sampling : sampled != 0;
    std::mt19937_64 rng(seed);
    const EnsemblePrediction p = ensemble_predict(members, rec, draw, draw ? &rng : nullptr);

    ordered_json j;
    j["source"] = p.source;
    j["source_distribution"] = p.source_dist;
    j["mode"] = draw ? "sampling" : "expectation";
    j["target"] = vec_json(p.target);
    auto arr = ordered_json::array();
    for (const auto& m : p.members) {
      ordered_json mj;
      mj["reference_distribution"] = m.reference_dist;
      mj["offset_mean"] = vec_json(m.offset_mean);
      if (m.target.reference) mj["reference"] = *m.target.reference;
      if (m.target.offset) mj["offset"] = vec_json(*m.target.offset);
      mj["target"] = vec_json(m.target.position);
      arr.push_back(std::move(mj));
    }
    j["members"] = std::move(arr);
    *out = dup_string(j.dump(2));
  });
}

sr_status sr_grad_check(size_t instances, uint64_t seed, int* all_passed, char** out) {
  return guarded([&] {
    require(all_passed, "all_passed");
    require(out, "out");
    if (instances == 0) throw ArgumentError("instances must be positive");
    const auto results = run_grad_check_suite(instances, seed);
    bool ok = true;
    auto checks = ordered_json::array();
    for (const auto& r : results) {
      ok = ok && r.passed();
      checks.push_back({{"name", r.name}, {"instances", r.instances}, {"max_error", r.max_error}, {"passed", r.passed()}});
    }
    ordered_json j{{"tolerance", kGradCheckTolerance}, {"passed", ok}, {"checks", checks}};
    *all_passed = ok ? 1 : 0;
    *out = dup_string(j.dump(2));
  });
}

}  // extern "C"
