#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spatialref/world.hpp"

namespace spatialref {

// One supervised example; all geometry in block-length units.
struct InstructionRecord {
  std::string instruction;
  WorldState world;
  std::size_t source = 0;
  Vec3 target;

  friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

// Latent generation facts for synthetic records. Written under the "oracle"
// key and never handed to a model.
struct OracleInfo {
  std::size_t reference = 0;
  Vec3 offset;
  std::string source_selector;
  std::string reference_selector;
  std::string direction;

  friend bool operator==(const OracleInfo&, const OracleInfo&) = default;
};

struct Dataset {
  std::vector<InstructionRecord> train;
  std::vector<InstructionRecord> dev;
  std::vector<InstructionRecord> test;

  // "train", "dev" or "test"; throws ConfigError otherwise.
  const std::vector<InstructionRecord>& split(std::string_view name) const;
};

// Parses one line: {"instruction", "world", "board", "source", "target"} plus an
// optional "oracle" object. Coordinates are divided by block_length.
InstructionRecord parse_record(std::string_view line, std::size_t line_number, double block_length = 1.0,
                               std::size_t max_blocks = kDefaultMaxBlocks, OracleInfo* oracle = nullptr);
std::string format_record(const InstructionRecord& record, const OracleInfo* oracle = nullptr);

std::vector<InstructionRecord> load_records(const std::string& path, double block_length = 1.0,
                                            std::size_t max_blocks = kDefaultMaxBlocks,
                                            std::vector<OracleInfo>* oracles = nullptr);
void save_records(const std::string& path, std::span<const InstructionRecord> records,
                  std::span<const OracleInfo> oracles = {});

inline constexpr const char* kSplitNames[] = {"train", "dev", "test"};

// `path` is either a directory holding train/dev/test .jsonl files, or a single
// .jsonl file whose records are all placed in every split.
Dataset load_dataset(const std::string& path, double block_length = 1.0,
                     std::size_t max_blocks = kDefaultMaxBlocks);

// World file for prediction: {"world": [[x,y,z],...], "board": [[minx,minz],[maxx,maxz]]}.
WorldState parse_world(std::string_view json_text, double block_length = 1.0,
                       std::size_t max_blocks = kDefaultMaxBlocks);

// ---- synthetic generation ---------------------------------------------------

enum class Selector { Leftmost, Rightmost, Frontmost, Backmost, Topmost };
enum class Direction { Left, Right, Front, Behind };

std::string_view to_string(Selector s);
std::string_view to_string(Direction d);
Vec3 unit_offset(Direction d);

// Index of the block picked by an extremal selector, when it beats the
// runner-up by at least `margin` along its axis. Left/right use x, front/back
// use z (front is smaller z), top uses y.
std::optional<std::size_t> select_extremal(const WorldState& world, Selector s, double margin);

struct SyntheticOptions {
  std::size_t count = 1000;
  std::size_t min_blocks = 3;
  std::size_t max_blocks = 10;
  std::uint64_t seed = 1;
  Vec2 board_min{0, 0};
  Vec2 board_max{12, 12};
  double train_fraction = 0.70;
  double dev_fraction = 0.15;
  double selector_margin = 1.0;
  double stack_probability = 0.4;
  std::size_t max_retries = 1000;
};

struct SyntheticRecord {
  InstructionRecord record;
  OracleInfo oracle;
};

struct SyntheticDataset {
  std::vector<SyntheticRecord> train;
  std::vector<SyntheticRecord> dev;
  std::vector<SyntheticRecord> test;

  Dataset records() const;
  std::size_t size() const { return train.size() + dev.size() + test.size(); }
};

SyntheticDataset generate_synthetic(const SyntheticOptions& options);

// Writes train.jsonl, dev.jsonl and test.jsonl (with oracle fields) under dir.
void write_dataset(const SyntheticDataset& data, const std::string& dir);

}  // namespace spatialref
