#include "spatialref/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace spatialref {

std::string_view to_string(BaselineKind kind) { return kind == BaselineKind::None ? "none" : "linear"; }

BaselineKind parse_baseline(std::string_view text) {
  if (text == "none") return BaselineKind::None;
  if (text == "linear") return BaselineKind::Linear;
  throw ConfigError("unknown baseline '" + std::string(text) + "'");
}

std::string_view to_string(FeatureSet set) { return set == FeatureSet::Full ? "full" : "coords"; }

FeatureSet parse_features(std::string_view text) {
  if (text == "full") return FeatureSet::Full;
  if (text == "coords") return FeatureSet::CoordsOnly;
  throw ConfigError("unknown feature set '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + std::string(key) + "' expects a nonnegative integer, got '" +
                      std::string(v) + "'");
  return out;
}

int to_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "' expects true/false, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = {
      "learning_rate", "clip_norm", "weight_decay", "dropout", "batch_size", "epochs", "seed",
      "attention", "features", "joint", "word_dim", "hidden_dim", "block_dim", "cnn_filters",
      "offset_hidden", "inference", "sigma_o", "baseline", "samples", "anneal_epochs_per_stage",
      "anneal_warmup_epochs", "anneal_stages", "noise_local", "noise_global", "block_length",
      "max_blocks", "data", "out", "ensemble_size"};
  return k;
}

void TrainConfig::set(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  if (key == "learning_rate") learning_rate = to_double(key, v);
  else if (key == "clip_norm") clip_norm = to_double(key, v);
  else if (key == "weight_decay") weight_decay = to_double(key, v);
  else if (key == "dropout") dropout = to_double(key, v);
  else if (key == "batch_size") batch_size = to_uint(key, v);
  else if (key == "epochs") epochs = to_int(key, v);
  else if (key == "seed") seed = to_uint(key, v);
  else if (key == "attention") attention = parse_attention(v);
  else if (key == "features") features = parse_features(v);
  else if (key == "joint") joint = to_bool(key, v);
  else if (key == "word_dim") word_dim = to_uint(key, v);
  else if (key == "hidden_dim") hidden_dim = to_uint(key, v);
  else if (key == "block_dim") block_dim = to_uint(key, v);
  else if (key == "cnn_filters") cnn_filters = to_uint(key, v);
  else if (key == "offset_hidden") offset_hidden = to_uint(key, v);
  else if (key == "inference") inference = parse_inference(v);
  else if (key == "sigma_o") sigma_o = to_double(key, v);
  else if (key == "baseline") baseline = parse_baseline(v);
  else if (key == "samples") samples = to_uint(key, v);
  else if (key == "anneal_epochs_per_stage") anneal_epochs_per_stage = to_int(key, v);
  else if (key == "anneal_warmup_epochs") anneal_warmup_epochs = to_int(key, v);
  else if (key == "anneal_stages") {
    std::vector<int> stages;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) stages.push_back(to_int(key, trim(item)));
    anneal_stages = std::move(stages);
  } else if (key == "noise_local") noise_local = to_double(key, v);
  else if (key == "noise_global") noise_global = to_double(key, v);
  else if (key == "block_length") block_length = to_double(key, v);
  else if (key == "max_blocks") max_blocks = to_uint(key, v);
  else if (key == "data") data = v;
  else if (key == "out") out = v;
  else if (key == "ensemble_size") ensemble_size = to_uint(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string TrainConfig::get(std::string_view key) const {
  if (key == "learning_rate") return fmt(learning_rate);
  if (key == "clip_norm") return fmt(clip_norm);
  if (key == "weight_decay") return fmt(weight_decay);
  if (key == "dropout") return fmt(dropout);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "seed") return std::to_string(seed);
  if (key == "attention") return std::string(to_string(attention));
  if (key == "features") return std::string(to_string(features));
  if (key == "joint") return joint ? "true" : "false";
  if (key == "word_dim") return std::to_string(word_dim);
  if (key == "hidden_dim") return std::to_string(hidden_dim);
  if (key == "block_dim") return std::to_string(block_dim);
  if (key == "cnn_filters") return std::to_string(cnn_filters);
  if (key == "offset_hidden") return std::to_string(offset_hidden);
  if (key == "inference") return std::string(to_string(inference));
  if (key == "sigma_o") return fmt(sigma_o);
  if (key == "baseline") return std::string(to_string(baseline));
  if (key == "samples") return std::to_string(samples);
  if (key == "anneal_epochs_per_stage") return std::to_string(anneal_epochs_per_stage);
  if (key == "anneal_warmup_epochs") return std::to_string(anneal_warmup_epochs);
  if (key == "anneal_stages") {
    std::string s;
    for (std::size_t i = 0; i < anneal_stages.size(); ++i) s += (i ? "," : "") + std::to_string(anneal_stages[i]);
    return s;
  }
  if (key == "noise_local") return fmt(noise_local);
  if (key == "noise_global") return fmt(noise_global);
  if (key == "block_length") return fmt(block_length);
  if (key == "max_blocks") return std::to_string(max_blocks);
  if (key == "data") return data;
  if (key == "out") return out;
  if (key == "ensemble_size") return std::to_string(ensemble_size);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be nonnegative");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0,1)");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!word_dim || !hidden_dim || !block_dim || !cnn_filters || !offset_hidden)
    throw ConfigError("layer dimensions must be positive");
  if (!(sigma_o > 0)) throw ConfigError("sigma_o must be positive");
  if (samples < 1) throw ConfigError("samples must be at least 1");
  if (anneal_warmup_epochs < 0) throw ConfigError("anneal_warmup_epochs must be nonnegative");
  anneal_schedule().validate();
  if (noise_local < 0 || noise_global < 0) throw ConfigError("noise sigmas must be nonnegative");
  if (!(block_length > 0)) throw ConfigError("block_length must be positive");
  if (max_blocks < 1) throw ConfigError("max_blocks must be at least 1");
  if (ensemble_size < 1) throw ConfigError("ensemble_size must be at least 1");
}

AnnealSchedule TrainConfig::anneal_schedule() const {
  AnnealSchedule s;
  s.stages = anneal_stages;
  s.epochs_per_stage = anneal_epochs_per_stage;
  return s;
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
  return out;
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_number) + ": expected key = value");
    c.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace spatialref
