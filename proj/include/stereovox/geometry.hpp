#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stereovox/grid.hpp"

namespace svx {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Rectified pinhole stereo pair. The left camera is the reference view; the
/// right camera sits `baseline_m` to its right.
struct CameraModel {
  double focal_length_px = 64.0;
  double baseline_m = 0.75;
  int image_width = 128;
  int image_height = 64;
  double cx = 64.0;
  double cy = 64.0;

  /// f_u * b; disparity = constant / depth.
  double constant() const { return focal_length_px * baseline_m; }
  double disparity_of(double depth) const { return constant() / depth; }
  double depth_of(double disparity) const { return constant() / disparity; }
  void validate() const;

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

/// Region of interest voxel grid. Grid frame: x right in [-s_x/2, s_x/2],
/// y up in [0, s_y], z forward in [0, s_z].
struct GridSpec {
  double voxel_size_m = 0.5;
  int nx = 32;
  int ny = 32;
  int nz = 32;

  static GridSpec cube(double voxel_size_m, int n) { return {voxel_size_m, n, n, n}; }

  std::array<double, 3> extents() const { return {nx * voxel_size_m, ny * voxel_size_m, nz * voxel_size_m}; }
  std::size_t total_voxels() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  double z_max() const { return nz * voxel_size_m; }
  double x_min() const { return -0.5 * nx * voxel_size_m; }
  bool is_cubic() const { return nx == ny && ny == nz; }
  /// Diagonal length of the ROI box.
  double diagonal() const;
  void validate() const;

  /// Voxel holding a grid-frame point; faces belong to the voxel above them
  /// except the max face, which belongs to the last voxel.
  std::optional<Index3> voxel_of(const Vec3& p) const;
  /// Center of voxel (i, j, k) at a pyramid level of `resolution` cells per axis.
  Vec3 voxel_center(const Index3& idx, int resolution) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

enum class PlanSource { voxel, full, even };

std::string to_string(PlanSource s);
PlanSource plan_source_from_string(const std::string& s);

/// Disparity levels (image pixels) sampled by the cost volume.
struct DisparityPlan {
  std::vector<double> levels;
  double step_scale = 1.0;
  PlanSource source = PlanSource::voxel;
  /// Cell stride between consecutive levels for uniform plans (1 for full).
  int stride = 1;

  std::size_t size() const { return levels.size(); }
  friend bool operator==(const DisparityPlan&, const DisparityPlan&) = default;
};

/// Feature maps are computed at 1/4 of the image resolution.
inline constexpr int kFeatureDownsample = 4;
/// Granularity used to deduplicate voxel-plane disparities, in pixels.
inline constexpr double kDisparityQuantum = 0.25;

/// Raw voxel-plane disparities c / z for z = a*l_v, 2*a*l_v, ... <= z_max,
/// ordered by increasing depth, before deduplication.
std::vector<double> voxel_plane_disparities(const CameraModel& cam, const GridSpec& grid, double step_scale);

/// Voxel cost volume plan: one disparity per depth plane spaced a*l_v apart,
/// quantized to `quantum` pixels and deduplicated, ordered by increasing depth.
DisparityPlan plan_disparity_levels(const CameraModel& cam, const GridSpec& grid, double step_scale,
                                    double quantum = kDisparityQuantum);

/// Uniform plan over feature-scale shifts {0, stride, 2*stride, ...}, `count`
/// levels, expressed in image pixels. stride 1 is the full interlacing plan.
DisparityPlan uniform_plan(int count, int stride);

struct BackprojectResult {
  std::vector<Vec3> points;  ///< camera frame, meters
  std::size_t skipped = 0;   ///< non-positive or NaN depths
};

/// One camera-frame point per valid pixel: X = (u-cx) Z / f, Y = (v-cy) Z / f.
BackprojectResult backproject_depth(const DepthMap& depth, const CameraModel& cam);

/// Fixed camera-to-grid transform (image y points down, grid y points up).
inline Vec3 camera_to_grid(const Vec3& p) { return {p.x, -p.y, p.z}; }
inline Vec3 grid_to_camera(const Vec3& p) { return {p.x, -p.y, p.z}; }

/// Occupancy at the finest resolution: a voxel is set iff at least
/// `min_points` grid-frame points fall inside it.
OccupancyGrid voxelize(const std::vector<Vec3>& grid_points, const GridSpec& grid, int min_points = 1);

/// OR-reduce each 2x2x2 block to build `levels` grids, coarse to fine.
OccupancyPyramid build_pyramid(const OccupancyGrid& finest, int levels);

/// OR-reduce one level.
OccupancyGrid downsample_or(const OccupancyGrid& fine);

DisparityMap disparity_from_depth(const DepthMap& depth, const CameraModel& cam);
/// Invalid (non-positive, NaN) disparities map to NaN depth.
DepthMap depth_from_disparity(const DisparityMap& disparity, const CameraModel& cam);

/// Standard pipeline: disparity -> depth -> point cloud -> voxel grid.
OccupancyGrid pipeline_voxelize(const DisparityMap& disparity, const CameraModel& cam, const GridSpec& grid,
                                int min_points = 1);

/// Ground-truth closure used for datasets: build_pyramid(voxelize(backproject(depth))).
OccupancyPyramid ground_truth_pyramid(const DepthMap& depth, const CameraModel& cam, const GridSpec& grid,
                                      int levels, int min_points = 1);

}  // namespace svx
