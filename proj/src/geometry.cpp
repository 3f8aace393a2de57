#include "stereovox/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svx {

void CameraModel::validate() const {
  if (!(focal_length_px > 0.0)) throw std::invalid_argument("focal length must be positive");
  if (!(baseline_m > 0.0)) throw std::invalid_argument("baseline must be positive");
  if (image_width <= 0 || image_height <= 0) throw std::invalid_argument("image dimensions must be positive");
}

double GridSpec::diagonal() const {
  const auto e = extents();
  return std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
}

void GridSpec::validate() const {
  if (!(voxel_size_m > 0.0)) throw std::invalid_argument("voxel size must be positive");
  if (nx <= 0 || ny <= 0 || nz <= 0) throw std::invalid_argument("voxel counts must be positive");
}

namespace {

// floor((p - lo) / size) with the max face folded into the last cell.
std::optional<int> axis_cell(double p, double lo, double size, int n) {
  const double hi = lo + n * size;
  if (!(p >= lo) || p > hi) return std::nullopt;
  if (p == hi) return n - 1;
  const int i = static_cast<int>(std::floor((p - lo) / size));
  return std::clamp(i, 0, n - 1);
}

}  // namespace

std::optional<Index3> GridSpec::voxel_of(const Vec3& p) const {
  const auto i = axis_cell(p.x, x_min(), voxel_size_m, nx);
  const auto j = axis_cell(p.y, 0.0, voxel_size_m, ny);
  const auto k = axis_cell(p.z, 0.0, voxel_size_m, nz);
  if (!i || !j || !k) return std::nullopt;
  return Index3{*i, *j, *k};
}

Vec3 GridSpec::voxel_center(const Index3& idx, int resolution) const {
  const auto e = extents();
  const double sx = e[0] / resolution;
  const double sy = e[1] / resolution;
  const double sz = e[2] / resolution;
  return {x_min() + (idx.x + 0.5) * sx, (idx.y + 0.5) * sy, (idx.z + 0.5) * sz};
}

std::string to_string(PlanSource s) {
  switch (s) {
    case PlanSource::voxel: return "voxel";
    case PlanSource::full: return "full";
    case PlanSource::even: return "even";
  }
  return "unknown";
}

PlanSource plan_source_from_string(const std::string& s) {
  if (s == "voxel") return PlanSource::voxel;
  if (s == "full") return PlanSource::full;
  if (s == "even") return PlanSource::even;
  throw std::invalid_argument("unknown plan source '" + s + "'");
}

std::vector<double> voxel_plane_disparities(const CameraModel& cam, const GridSpec& grid, double step_scale) {
  cam.validate();
  grid.validate();
  if (!(step_scale > 0.0)) throw std::invalid_argument("step scale must be positive");
  const double c = cam.constant();
  const double step = step_scale * grid.voxel_size_m;
  const double z_max = grid.z_max();
  // Integer step count avoids accumulating rounding in z.
  const auto steps = static_cast<long>(std::floor(z_max / step * (1.0 + 1e-12)));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, steps)));
  for (long k = 1; k <= steps; ++k) out.push_back(c / (static_cast<double>(k) * step));
  return out;
}

DisparityPlan plan_disparity_levels(const CameraModel& cam, const GridSpec& grid, double step_scale,
                                    double quantum) {
  if (!(quantum > 0.0)) throw std::invalid_argument("disparity quantum must be positive");
  const auto raw = voxel_plane_disparities(cam, grid, step_scale);
  if (raw.empty()) throw std::invalid_argument("step scale leaves no depth plane inside the ROI");

  const double feature_width = static_cast<double>(cam.image_width) / kFeatureDownsample;
  if (raw.front() / kFeatureDownsample > feature_width)
    throw std::invalid_argument("nearest depth plane disparity " + std::to_string(raw.front()) +
                                " px exceeds the feature map width; ROI too close for this camera");

  DisparityPlan plan;
  plan.step_scale = step_scale;
  plan.source = PlanSource::voxel;
  for (double d : raw) {
    const double q = std::round(d / quantum) * quantum;
    if (q <= 0.0) continue;
    if (!plan.levels.empty() && q >= plan.levels.back()) continue;
    plan.levels.push_back(q);
  }
  return plan;
}

DisparityPlan uniform_plan(int count, int stride) {
  if (count <= 0 || stride <= 0) throw std::invalid_argument("uniform plan needs positive count and stride");
  DisparityPlan plan;
  plan.source = stride == 1 ? PlanSource::full : PlanSource::even;
  plan.stride = stride;
  plan.step_scale = 0.0;
  for (int i = 0; i < count; ++i) plan.levels.push_back(static_cast<double>(i * stride * kFeatureDownsample));
  return plan;
}

BackprojectResult backproject_depth(const DepthMap& depth, const CameraModel& cam) {
  cam.validate();
  BackprojectResult res;
  res.points.reserve(depth.size());
  const double f = cam.focal_length_px;
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double z = depth(u, v);
      if (!(z > 0.0) || !std::isfinite(z)) {
        ++res.skipped;
        continue;
      }
      res.points.push_back({(u - cam.cx) * z / f, (v - cam.cy) * z / f, z});
    }
  }
  return res;
}

OccupancyGrid voxelize(const std::vector<Vec3>& grid_points, const GridSpec& grid, int min_points) {
  grid.validate();
  if (min_points < 1) throw std::invalid_argument("min_points must be at least 1");
  Grid3<std::uint32_t> counts(grid.nx, grid.ny, grid.nz, 0u);
  for (const auto& p : grid_points)
    if (auto idx = grid.voxel_of(p)) ++counts(idx->x, idx->y, idx->z);
  OccupancyGrid occ(grid.nx, grid.ny, grid.nz, 0);
  for (std::size_t i = 0; i < counts.size(); ++i)
    occ[i] = counts[i] >= static_cast<std::uint32_t>(min_points) ? 1 : 0;
  return occ;
}

OccupancyGrid downsample_or(const OccupancyGrid& fine) {
  if (fine.nx() % 2 || fine.ny() % 2 || fine.nz() % 2)
    throw std::invalid_argument("grid resolution not divisible by 2");
  OccupancyGrid coarse(fine.nx() / 2, fine.ny() / 2, fine.nz() / 2, 0);
  for (int z = 0; z < fine.nz(); ++z)
    for (int y = 0; y < fine.ny(); ++y)
      for (int x = 0; x < fine.nx(); ++x)
        if (fine(x, y, z)) coarse(x / 2, y / 2, z / 2) = 1;
  return coarse;
}

OccupancyPyramid build_pyramid(const OccupancyGrid& finest, int levels) {
  if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
  const int div = 1 << (levels - 1);
  if (finest.nx() % div || finest.ny() % div || finest.nz() % div)
    throw std::invalid_argument("finest resolution not divisible by 2^(levels-1)");
  OccupancyPyramid pyr;
  pyr.first_level = 1;
  pyr.levels.resize(static_cast<std::size_t>(levels));
  pyr.levels.back() = finest;
  for (int l = levels - 2; l >= 0; --l)
    pyr.levels[static_cast<std::size_t>(l)] = downsample_or(pyr.levels[static_cast<std::size_t>(l) + 1]);
  return pyr;
}

DisparityMap disparity_from_depth(const DepthMap& depth, const CameraModel& cam) {
  DisparityMap out(depth.width(), depth.height(), 0.0);
  const double c = cam.constant();
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double z = depth[i];
    out[i] = (z > 0.0 && std::isfinite(z)) ? c / z : std::nan("");
  }
  return out;
}

DepthMap depth_from_disparity(const DisparityMap& disparity, const CameraModel& cam) {
  DepthMap out(disparity.width(), disparity.height(), 0.0f);
  const double c = cam.constant();
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    const double d = disparity[i];
    out[i] = (d > 0.0 && std::isfinite(d)) ? static_cast<float>(c / d) : std::nanf("");
  }
  return out;
}

namespace {

std::vector<Vec3> to_grid_frame(std::vector<Vec3> pts) {
  for (auto& p : pts) p = camera_to_grid(p);
  return pts;
}

}  // namespace

OccupancyGrid pipeline_voxelize(const DisparityMap& disparity, const CameraModel& cam, const GridSpec& grid,
                                int min_points) {
  const DepthMap depth = depth_from_disparity(disparity, cam);
  return voxelize(to_grid_frame(backproject_depth(depth, cam).points), grid, min_points);
}

OccupancyPyramid ground_truth_pyramid(const DepthMap& depth, const CameraModel& cam, const GridSpec& grid,
                                      int levels, int min_points) {
  return build_pyramid(voxelize(to_grid_frame(backproject_depth(depth, cam).points), grid, min_points), levels);
}

}  // namespace svx
