#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stereovox/geometry.hpp"
#include "stereovox/grid.hpp"

namespace svx {

inline constexpr double kSoftIouEps = 1e-6;

/// Per-level weights of the hierarchical loss, coarse to fine.
struct LossWeights {
  std::vector<double> w;

  /// The four reference weights 0.30, 0.27, 0.23, 0.20.
  static LossWeights reference();
  /// First `levels` reference weights rescaled to sum to one; uniform beyond four levels.
  static LossWeights for_levels(int levels);
};

/// 1 - I / (P + Y - I + eps) for probabilities p and binary targets y. When
/// `grad` is non-null, adds weight * dL/dp to it.
template <class T>
double soft_iou_loss(const T* p, const std::uint8_t* y, std::size_t n, T* grad = nullptr, double weight = 1.0,
                     double eps = kSoftIouEps) {
  double inter = 0.0, ps = 0.0, ys = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = static_cast<double>(p[i]);
    const double yi = y[i] ? 1.0 : 0.0;
    inter += pi * yi;
    ps += pi;
    ys += yi;
  }
  const double u = ps + ys - inter + eps;
  if (grad) {
    const double u2 = u * u;
    for (std::size_t i = 0; i < n; ++i) {
      const double yi = y[i] ? 1.0 : 0.0;
      grad[i] += static_cast<T>(-weight * (yi * u - inter * (1.0 - yi)) / u2);
    }
  }
  return 1.0 - inter / u;
}

template <class T>
double soft_iou_loss(const Grid3<T>& pred, const OccupancyGrid& gt, Grid3<T>* grad = nullptr, double weight = 1.0) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("soft_iou_loss: shape mismatch");
  if (grad && !grad->same_shape(pred)) *grad = Grid3<T>(pred.nx(), pred.ny(), pred.nz());
  return soft_iou_loss(pred.data(), gt.data(), pred.size(), grad ? grad->data() : nullptr, weight);
}

struct LossValue {
  double total = 0.0;
  std::vector<double> per_level;  ///< unweighted, one per predicted level
};

/// Weighted sum of per-level soft IoU losses over the levels present in
/// `pred`, matched to `gt` by level number. `weights` has one entry per
/// predicted level. When `grad` is non-null it receives dL/dpred.
template <class T>
LossValue total_loss(const Pyramid<T>& pred, const OccupancyPyramid& gt, const LossWeights& weights,
                     Pyramid<T>* grad = nullptr) {
  if (static_cast<int>(weights.w.size()) != pred.level_count())
    throw std::invalid_argument("total_loss: " + std::to_string(weights.w.size()) + " weights for " +
                                std::to_string(pred.level_count()) + " levels");
  if (grad) {
    grad->first_level = pred.first_level;
    grad->levels.clear();
    for (const auto& g : pred.levels) grad->levels.emplace_back(g.nx(), g.ny(), g.nz());
  }
  LossValue v;
  for (int i = 0; i < pred.level_count(); ++i) {
    const int level = pred.first_level + i;
    if (!gt.has_level(level)) throw std::invalid_argument("total_loss: ground truth lacks level " + std::to_string(level));
    const double w = weights.w[static_cast<std::size_t>(i)];
    const double l = soft_iou_loss(pred.levels[static_cast<std::size_t>(i)], gt.level(level),
                                   grad ? &grad->levels[static_cast<std::size_t>(i)] : nullptr, w);
    v.per_level.push_back(l);
    v.total += w * l;
  }
  return v;
}

/// |A and B| / |A or B|, 1 when both are empty.
double eval_iou(const OccupancyGrid& pred, const OccupancyGrid& gt);

/// Symmetric Chamfer distance in meters between occupied voxel centers: the
/// sum of both directional mean nearest-neighbour distances. Voxel size is
/// the grid's voxel size scaled to the grids' resolution. One empty side
/// costs the ROI diagonal; both empty cost 0.
double chamfer_distance(const OccupancyGrid& pred, const OccupancyGrid& gt, const GridSpec& grid);

/// Exact squared Euclidean distance transform in voxel units: for every cell,
/// the squared distance to the nearest occupied cell (a large sentinel when
/// none is occupied).
std::vector<std::int64_t> squared_distance_transform(const OccupancyGrid& g);

struct LevelMetrics {
  int level = 0;
  int resolution = 0;
  double iou = 0.0;
  double cd = 0.0;
};

struct MetricsReport {
  std::string name;
  std::vector<LevelMetrics> per_level;
  std::int64_t macs = 0;
  std::int64_t decoder_macs = 0;
  std::int64_t parameters = 0;
  int samples = 0;
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);
/// Header plus one row per report: name, samples, iou_l*, cd_l*, macs, decoder_macs, parameters.
std::string metrics_csv(const std::vector<MetricsReport>& reports);
/// Fixed-width text table of the same rows.
std::string metrics_table(const std::vector<MetricsReport>& reports);

}  // namespace svx
