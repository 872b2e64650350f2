#include "spatialref/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "spatialref/errors.hpp"

namespace spatialref {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

const std::vector<InstructionRecord>& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, dev or test)");
}

namespace {

Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string(what) + " must be [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec2 parse_vec2(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument(std::string(what) + " must be [x,z]");
  return {j[0].get<double>(), j[1].get<double>()};
}

void parse_geometry(const json& j, WorldState& world, double block_length) {
  if (!j.contains("world") || !j["world"].is_array()) throw std::invalid_argument("missing \"world\" array");
  if (!j.contains("board") || !j["board"].is_array() || j["board"].size() != 2)
    throw std::invalid_argument("\"board\" must be [[minx,minz],[maxx,maxz]]");
  for (const auto& b : j["world"]) world.blocks.push_back((1.0 / block_length) * parse_vec3(b, "block"));
  const Vec2 lo = parse_vec2(j["board"][0], "board corner");
  const Vec2 hi = parse_vec2(j["board"][1], "board corner");
  world.board_min = {lo.x / block_length, lo.z / block_length};
  world.board_max = {hi.x / block_length, hi.z / block_length};
}

ordered_json vec3_json(Vec3 v) { return ordered_json::array({v.x, v.y, v.z}); }

}  // namespace

InstructionRecord parse_record(std::string_view line, std::size_t line_number, double block_length,
                               std::size_t max_blocks, OracleInfo* oracle) {
  if (!(block_length > 0)) throw ConfigError("block_length must be positive");
  InstructionRecord rec;
  long long source = -1;
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
    rec.instruction = j.at("instruction").get<std::string>();
    parse_geometry(j, rec.world, block_length);
    source = j.at("source").get<long long>();
    rec.target = (1.0 / block_length) * parse_vec3(j.at("target"), "target");
    if (oracle && j.contains("oracle")) {
      const auto& o = j["oracle"];
      oracle->reference = o.at("reference").get<std::size_t>();
      oracle->offset = (1.0 / block_length) * parse_vec3(o.at("offset"), "offset");
      oracle->source_selector = o.value("source_selector", "");
      oracle->reference_selector = o.value("reference_selector", "");
      oracle->direction = o.value("direction", "");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what(), line_number);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed record: ") + e.what(), line_number);
  }
  try {
    rec.world.validate(max_blocks);
  } catch (const DataError& e) {
    throw DataError(e.what(), line_number);
  }
  if (source < 0 || static_cast<std::size_t>(source) >= rec.world.size())
    throw DataError("source index " + std::to_string(source) + " out of range for " +
                        std::to_string(rec.world.size()) + " blocks",
                    line_number);
  rec.source = static_cast<std::size_t>(source);
  if (!std::isfinite(rec.target.x) || !std::isfinite(rec.target.y) || !std::isfinite(rec.target.z))
    throw DataError("non-finite target", line_number);
  return rec;
}

std::string format_record(const InstructionRecord& r, const OracleInfo* oracle) {
  ordered_json j;
  j["instruction"] = r.instruction;
  ordered_json world = ordered_json::array();
  for (const auto& b : r.world.blocks) world.push_back(vec3_json(b));
  j["world"] = world;
  j["board"] = ordered_json::array({ordered_json::array({r.world.board_min.x, r.world.board_min.z}),
                                    ordered_json::array({r.world.board_max.x, r.world.board_max.z})});
  j["source"] = r.source;
  j["target"] = vec3_json(r.target);
  if (oracle) {
    ordered_json o;
    o["reference"] = oracle->reference;
    o["offset"] = vec3_json(oracle->offset);
    o["source_selector"] = oracle->source_selector;
    o["reference_selector"] = oracle->reference_selector;
    o["direction"] = oracle->direction;
    j["oracle"] = o;
  }
  return j.dump();
}

std::vector<InstructionRecord> load_records(const std::string& path, double block_length, std::size_t max_blocks,
                                            std::vector<OracleInfo>* oracles) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<InstructionRecord> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    OracleInfo oracle;
    out.push_back(parse_record(line, line_number, block_length, max_blocks, oracles ? &oracle : nullptr));
    if (oracles) oracles->push_back(oracle);
  }
  return out;
}

void save_records(const std::string& path, std::span<const InstructionRecord> records,
                  std::span<const OracleInfo> oracles) {
  if (!oracles.empty() && oracles.size() != records.size())
    throw ConfigError("oracle list must match the record list");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < records.size(); ++i)
    out << format_record(records[i], oracles.empty() ? nullptr : &oracles[i]) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

Dataset load_dataset(const std::string& path, double block_length, std::size_t max_blocks) {
  Dataset d;
  if (fs::is_directory(path)) {
    d.train = load_records((fs::path(path) / "train.jsonl").string(), block_length, max_blocks);
    d.dev = load_records((fs::path(path) / "dev.jsonl").string(), block_length, max_blocks);
    d.test = load_records((fs::path(path) / "test.jsonl").string(), block_length, max_blocks);
  } else {
    d.train = load_records(path, block_length, max_blocks);
    d.dev = d.train;
    d.test = d.train;
  }
  return d;
}

WorldState parse_world(std::string_view json_text, double block_length, std::size_t max_blocks) {
  WorldState w;
  try {
    const json j = json::parse(json_text);
    parse_geometry(j, w, block_length);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed world: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed world: ") + e.what());
  }
  w.validate(max_blocks);
  return w;
}

// ---- synthetic ----------------------------------------------------------------

std::string_view to_string(Selector s) {
  switch (s) {
    case Selector::Leftmost: return "leftmost";
    case Selector::Rightmost: return "rightmost";
    case Selector::Frontmost: return "front";
    case Selector::Backmost: return "back";
    case Selector::Topmost: return "top";
  }
  return "?";
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Left: return "left";
    case Direction::Right: return "right";
    case Direction::Front: return "front";
    case Direction::Behind: return "behind";
  }
  return "?";
}

Vec3 unit_offset(Direction d) {
  switch (d) {
    case Direction::Left: return {-1, 0, 0};
    case Direction::Right: return {1, 0, 0};
    case Direction::Front: return {0, 0, -1};
    case Direction::Behind: return {0, 0, 1};
  }
  return {};
}

std::optional<std::size_t> select_extremal(const WorldState& world, Selector s, double margin) {
  if (world.size() < 2) return std::nullopt;
  // Key to maximize.
  auto key = [s](const Vec3& b) {
    switch (s) {
      case Selector::Leftmost: return -b.x;
      case Selector::Rightmost: return b.x;
      case Selector::Frontmost: return -b.z;
      case Selector::Backmost: return b.z;
      case Selector::Topmost: return b.y;
    }
    return 0.0;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < world.size(); ++i)
    if (key(world.blocks[i]) > key(world.blocks[best])) best = i;
  for (std::size_t i = 0; i < world.size(); ++i)
    if (i != best && key(world.blocks[best]) - key(world.blocks[i]) < margin) return std::nullopt;
  return best;
}

namespace {

constexpr std::array kSelectors = {Selector::Leftmost, Selector::Rightmost, Selector::Frontmost,
                                   Selector::Backmost, Selector::Topmost};
constexpr std::array kDirections = {Direction::Left, Direction::Right, Direction::Front, Direction::Behind};

constexpr std::array<const char*, 4> kTemplates = {
    "move the {src} block {dir} the {ref} block",
    "put the {src} block {dir} the {ref} block",
    "place the {src} block {dir} the {ref} one",
    "take the {src} block and move it {dir} the {ref} block",
};

std::string direction_phrase(Direction d) {
  switch (d) {
    case Direction::Left: return "one space to the left of";
    case Direction::Right: return "one space to the right of";
    case Direction::Front: return "in front of";
    case Direction::Behind: return "behind";
  }
  return "";
}

std::string realize(const char* pattern, Selector src, Direction dir, Selector ref) {
  std::string out = pattern;
  auto replace = [&out](const std::string& slot, std::string_view value) {
    const auto pos = out.find(slot);
    if (pos != std::string::npos) out.replace(pos, slot.size(), value);
  };
  replace("{src}", to_string(src));
  replace("{dir}", direction_phrase(dir));
  replace("{ref}", to_string(ref));
  return out;
}

std::optional<WorldState> place_blocks(const SyntheticOptions& opt, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> count_dist(opt.min_blocks, opt.max_blocks);
  const std::size_t n = count_dist(rng);
  std::size_t stacked = 0;
  if (std::bernoulli_distribution(opt.stack_probability)(rng)) stacked = n >= 4 ? 1 + rng() % 2 : 1;
  const std::size_t ground = n - stacked;

  WorldState w;
  w.board_min = opt.board_min;
  w.board_max = opt.board_max;
  std::uniform_real_distribution<double> ux(opt.board_min.x + 0.5, opt.board_max.x - 0.5);
  std::uniform_real_distribution<double> uz(opt.board_min.z + 0.5, opt.board_max.z - 0.5);
  std::size_t attempts = 0;
  while (w.blocks.size() < ground) {
    if (++attempts > 100 * opt.max_retries) return std::nullopt;
    const Vec3 c{ux(rng), 0.0, uz(rng)};
    const bool clear = std::all_of(w.blocks.begin(), w.blocks.end(),
                                   [&](const Vec3& b) { return std::hypot(b.x - c.x, b.z - c.z) >= 1.0; });
    if (clear) w.blocks.push_back(c);
  }
  if (stacked > 0) {
    const Vec3 base = w.blocks[rng() % ground];
    for (std::size_t k = 1; k <= stacked; ++k) w.blocks.push_back({base.x, static_cast<double>(k), base.z});
  }
  std::shuffle(w.blocks.begin(), w.blocks.end(), rng);
  return w;
}

SyntheticRecord generate_one(const SyntheticOptions& opt, std::mt19937_64& rng) {
  for (std::size_t attempt = 0; attempt < opt.max_retries; ++attempt) {
    auto world = place_blocks(opt, rng);
    if (!world) break;
    std::vector<std::pair<Selector, std::size_t>> valid;
    for (Selector s : kSelectors)
      if (auto i = select_extremal(*world, s, opt.selector_margin)) valid.emplace_back(s, *i);
    if (valid.size() < 2) continue;
    std::shuffle(valid.begin(), valid.end(), rng);
    const auto [src_sel, src] = valid[0];
    std::optional<std::pair<Selector, std::size_t>> ref;
    for (std::size_t k = 1; k < valid.size(); ++k)
      if (valid[k].second != src) {
        ref = valid[k];
        break;
      }
    if (!ref) continue;
    const Direction dir = kDirections[rng() % kDirections.size()];
    const char* pattern = kTemplates[rng() % kTemplates.size()];

    SyntheticRecord out;
    out.record.instruction = realize(pattern, src_sel, dir, ref->first);
    out.record.world = std::move(*world);
    out.record.source = src;
    out.oracle.reference = ref->second;
    out.oracle.offset = unit_offset(dir);
    out.oracle.source_selector = std::string(to_string(src_sel));
    out.oracle.reference_selector = std::string(to_string(ref->first));
    out.oracle.direction = std::string(to_string(dir));
    out.record.target = out.record.world.blocks[ref->second] + out.oracle.offset;
    return out;
  }
  throw DataError("block placement failed after " + std::to_string(opt.max_retries) + " retries");
}

}  // namespace

Dataset SyntheticDataset::records() const {
  Dataset d;
  auto strip = [](const std::vector<SyntheticRecord>& in, std::vector<InstructionRecord>& out) {
    out.reserve(in.size());
    for (const auto& r : in) out.push_back(r.record);
  };
  strip(train, d.train);
  strip(dev, d.dev);
  strip(test, d.test);
  return d;
}

SyntheticDataset generate_synthetic(const SyntheticOptions& opt) {
  if (opt.count < 1) throw ConfigError("count must be at least 1");
  if (opt.min_blocks < 2 || opt.min_blocks > opt.max_blocks)
    throw ConfigError("block count range must satisfy 2 <= min <= max");
  if (opt.max_blocks > kDefaultMaxBlocks) throw ConfigError("max_blocks exceeds the world limit");
  if (!(opt.board_min.x + 1 < opt.board_max.x && opt.board_min.z + 1 < opt.board_max.z))
    throw ConfigError("board too small");
  if (opt.train_fraction < 0 || opt.dev_fraction < 0 || opt.train_fraction + opt.dev_fraction > 1)
    throw ConfigError("split fractions must be nonnegative and sum to at most 1");

  std::mt19937_64 rng(opt.seed);
  std::vector<SyntheticRecord> all;
  all.reserve(opt.count);
  for (std::size_t i = 0; i < opt.count; ++i) all.push_back(generate_one(opt, rng));

  const auto n_train = static_cast<std::size_t>(std::llround(opt.train_fraction * static_cast<double>(opt.count)));
  const auto n_dev = std::min(opt.count - n_train,
                              static_cast<std::size_t>(std::llround(opt.dev_fraction * static_cast<double>(opt.count))));
  SyntheticDataset out;
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.dev.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                 all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), all.end());
  return out;
}

void write_dataset(const SyntheticDataset& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const std::vector<SyntheticRecord>* splits[] = {&data.train, &data.dev, &data.test};
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<InstructionRecord> recs;
    std::vector<OracleInfo> oracles;
    for (const auto& r : *splits[s]) {
      recs.push_back(r.record);
      oracles.push_back(r.oracle);
    }
    save_records((fs::path(dir) / (std::string(kSplitNames[s]) + ".jsonl")).string(), recs, oracles);
  }
}

}  // namespace spatialref
