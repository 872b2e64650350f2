#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <utility>
#include <vector>

namespace spatialref {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
};

double norm(Vec3 v);
double distance(Vec3 a, Vec3 b);

// Point in the horizontal x-z plane.
struct Vec2 {
  double x = 0, z = 0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline constexpr std::size_t kDefaultMaxBlocks = 20;

// Block positions in block-length units, y vertical. The board is the
// axis-aligned rectangle [board_min, board_max] in the x-z plane.
struct WorldState {
  std::vector<Vec3> blocks;
  Vec2 board_min{0, 0};
  Vec2 board_max{1, 1};

  std::size_t size() const { return blocks.size(); }
  // Throws DataError when the invariants do not hold.
  void validate(std::size_t max_blocks = kDefaultMaxBlocks) const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

enum class FeatureSet { Full, CoordsOnly };

inline constexpr std::size_t kFullFeatureDim = 12;
inline constexpr std::size_t kCoordFeatureDim = 3;

std::size_t feature_dim(FeatureSet set);

// coords (3) | corner distances (4) | edge distances (4) | stack flag (1)
struct BlockFeatures {
  std::array<double, 3> coords{};
  // Corners ordered (min.x,min.z), (max.x,min.z), (min.x,max.z), (max.x,max.z).
  std::array<double, 4> corner_distances{};
  // Edges ordered x=min.x, x=max.x, z=min.z, z=max.z.
  std::array<double, 4> edge_distances{};
  double stack_flag = 0;

  std::array<double, kFullFeatureDim> flatten() const;
};

BlockFeatures featurize(const WorldState& world, std::size_t index);

// 1 iff another block is within 0.5 horizontally and 0 < |dy| <= 1.5.
int detect_stack(const WorldState& world, std::size_t index);

// Row-major [n x feature_dim(set)] feature matrix for every block.
std::vector<double> feature_matrix(const WorldState& world, FeatureSet set);

// Perturbs every block's (x,z) with independent N(0, local^2) draws and shifts
// the target's (x,z) by one N(0, global^2) draw. y is left untouched.
std::pair<WorldState, Vec3> add_noise(const WorldState& world, Vec3 target, double local_sigma,
                                      double global_sigma, std::mt19937_64& rng);

}  // namespace spatialref
