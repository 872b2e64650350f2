#include "spatialref/world.hpp"

#include <cmath>
#include <string>

#include "spatialref/errors.hpp"

namespace spatialref {

double norm(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

double distance(Vec3 a, Vec3 b) { return norm(a - b); }

void WorldState::validate(std::size_t max_blocks) const {
  if (blocks.empty()) throw DataError("world has no blocks");
  if (blocks.size() > max_blocks)
    throw DataError("world has " + std::to_string(blocks.size()) + " blocks, maximum is " +
                    std::to_string(max_blocks));
  if (!(board_min.x < board_max.x && board_min.z < board_max.z))
    throw DataError("board min corner must be below max corner componentwise");
  for (const auto& b : blocks)
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.z))
      throw DataError("non-finite block coordinate");
}

std::size_t feature_dim(FeatureSet set) {
  return set == FeatureSet::Full ? kFullFeatureDim : kCoordFeatureDim;
}

std::array<double, kFullFeatureDim> BlockFeatures::flatten() const {
  std::array<double, kFullFeatureDim> out{};
  std::size_t k = 0;
  for (double v : coords) out[k++] = v;
  for (double v : corner_distances) out[k++] = v;
  for (double v : edge_distances) out[k++] = v;
  out[k] = stack_flag;
  return out;
}

int detect_stack(const WorldState& world, std::size_t index) {
  if (index >= world.size()) throw IndexError("block index " + std::to_string(index) + " out of range");
  const Vec3 b = world.blocks[index];
  for (std::size_t j = 0; j < world.size(); ++j) {
    if (j == index) continue;
    const Vec3 o = world.blocks[j];
    const double horizontal = std::hypot(o.x - b.x, o.z - b.z);
    const double dy = std::abs(o.y - b.y);
    if (horizontal < 0.5 && dy > 0.0 && dy <= 1.5) return 1;
  }
  return 0;
}

BlockFeatures featurize(const WorldState& world, std::size_t index) {
  if (index >= world.size()) throw IndexError("block index " + std::to_string(index) + " out of range");
  const Vec3 b = world.blocks[index];
  const auto& lo = world.board_min;
  const auto& hi = world.board_max;
  BlockFeatures f;
  f.coords = {b.x, b.y, b.z};
  f.corner_distances = {std::hypot(b.x - lo.x, b.z - lo.z), std::hypot(b.x - hi.x, b.z - lo.z),
                        std::hypot(b.x - lo.x, b.z - hi.z), std::hypot(b.x - hi.x, b.z - hi.z)};
  f.edge_distances = {std::abs(b.x - lo.x), std::abs(hi.x - b.x), std::abs(b.z - lo.z),
                      std::abs(hi.z - b.z)};
  f.stack_flag = detect_stack(world, index);
  return f;
}

std::vector<double> feature_matrix(const WorldState& world, FeatureSet set) {
  const std::size_t dim = feature_dim(set);
  std::vector<double> out;
  out.reserve(world.size() * dim);
  for (std::size_t i = 0; i < world.size(); ++i) {
    const auto flat = featurize(world, i).flatten();
    out.insert(out.end(), flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(dim));
  }
  return out;
}

std::pair<WorldState, Vec3> add_noise(const WorldState& world, Vec3 target, double local_sigma,
                                      double global_sigma, std::mt19937_64& rng) {
  if (local_sigma < 0 || global_sigma < 0) throw ConfigError("noise sigmas must be nonnegative");
  WorldState noisy = world;
  if (local_sigma > 0) {
    std::normal_distribution<double> local(0.0, local_sigma);
    for (auto& b : noisy.blocks) {
      b.x += local(rng);
      b.z += local(rng);
    }
  }
  if (global_sigma > 0) {
    std::normal_distribution<double> shift(0.0, global_sigma);
    target.x += shift(rng);
    target.z += shift(rng);
  }
  return {std::move(noisy), target};
}

}  // namespace spatialref
