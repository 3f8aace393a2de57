#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stereovox/geometry.hpp"
#include "stereovox/grid.hpp"

namespace svx {

/// Deterministic 64-bit mixer used to derive per-scene seeds and texture hashes.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Uniform real in [lo, hi) drawn from the raw 64-bit engine output; unlike
/// std::uniform_real_distribution the sequence is identical on every platform.
double uniform(std::mt19937_64& rng, double lo, double hi);

enum class ObstacleKind { box, sphere };

struct Obstacle {
  ObstacleKind kind = ObstacleKind::box;
  Vec3 center;
  /// Full box extents; spheres use size.x as the diameter.
  Vec3 size{1.0, 1.0, 1.0};
  std::uint64_t texture_seed = 0;
  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<Obstacle> obstacles;
  bool ground_plane = false;
  CameraModel camera;
  GridSpec grid;
  /// Octree levels in the ground-truth pyramid.
  int pyramid_levels = 3;
  /// Textured wall behind the ROI that fills the background.
  double backdrop_depth_m = 64.0;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Parameters of the random scene generator.
struct SceneDistribution {
  CameraModel camera;
  GridSpec grid;
  int pyramid_levels = 3;
  /// Obstacles may not come closer than step_scale * voxel size.
  double step_scale = 1.0;
  int min_obstacles = 1;
  int max_obstacles = 3;
  double sphere_probability = 0.25;
  double min_size_m = 0.8;
  double max_size_m = 3.0;
  double max_height_m = 4.0;
  double min_center_depth_m = 2.5;
  /// Fraction of z_max used as the farthest obstacle center.
  double max_depth_fraction = 0.85;
  /// Fraction of the half-width used for lateral placement.
  double lateral_fraction = 0.8;
  bool ground_plane = false;
};

struct StereoSample {
  std::string id;
  Image<float> left;
  Image<float> right;
  DepthMap gt_depth;
  OccupancyPyramid gt_pyramid;
  SceneSpec scene;
};

/// Draw a scene; obstacles failing the ROI or depth constraints are resampled.
SceneSpec sample_scene(const SceneDistribution& dist, std::uint64_t seed);

/// Ray-cast both views. Left intensities come from a solid random texture with
/// Lambertian shading; right pixels show the same surface points seen from the
/// right camera, and surfaces hidden from the left camera get fresh noise.
StereoSample render_scene(const SceneSpec& spec);

/// Same geometry with every texture seed remixed with salt.
SceneSpec retextured(SceneSpec spec, std::uint64_t salt);

/// Box-filtered intensity of the left or right view around continuous pixel
/// coordinates; render_scene samples these at integer pixel centers.
float render_left_pixel(const SceneSpec& spec, double u, double v);
float render_right_pixel(const SceneSpec& spec, double u, double v);

nlohmann::json to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneDistribution& d);

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::string left, right, depth, scene, pyramid;  ///< paths relative to the dataset root
};

struct Manifest {
  std::uint64_t master_seed = 0;
  nlohmann::json config;
  std::vector<ManifestEntry> entries;
};

/// Split sizes for n scenes: 80/10/10 with remainders going to train.
std::array<int, 3> split_sizes(int n_scenes);

/// Render n scenes into `<root>/<split>/<id>/...` and write `<root>/manifest.json`.
Manifest generate_dataset(int n_scenes, const SceneDistribution& dist, std::uint64_t master_seed,
                          const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& root);

/// Load one split of a dataset in the on-disk layout. Works for any dataset
/// materialized in that layout, not only generated ones.
std::vector<StereoSample> load_split(const std::filesystem::path& root, Split split);
StereoSample load_sample(const std::filesystem::path& root, const ManifestEntry& entry);

}  // namespace svx
