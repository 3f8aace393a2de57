#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stereovox/grid.hpp"
#include "stereovox/voxelnet.hpp"

namespace svx {

/// Region in front of the robot as fractions of the grid extent per axis;
/// scaled to every level's resolution.
struct FrontRegion {
  double x0 = 0.25, x1 = 0.75;
  double y0 = 0.0, y1 = 1.0;
  double z0 = 0.0, z1 = 0.5;

  /// Half-open index box [lo, hi) at `resolution` cells per axis.
  void box(int resolution, Index3& lo, Index3& hi) const;
  void validate() const;
};

/// Occupied cells of `g` inside the front region.
std::size_t front_occupancy(const OccupancyGrid& g, const FrontRegion& region);

struct ExitState {
  int level = 1;
  int levels = 1;
  FrontRegion region;

  /// Starts at the finest level.
  static ExitState initial(int levels, FrontRegion region = {});
};

/// i = state.level: i - 1 when the binarized level-i output of the previous
/// step is empty inside the front region, else i + 1; clamped to [1, levels].
int next_exit_level(const ExitState& state, const ProbabilityPyramid& prev, float threshold = 0.5f);
/// Same rule given the occupied count directly.
int next_exit_level(int level, int levels, std::size_t front_occupied);

/// Decoder truncated after `level`.
DecodeOutput decode_to_level(const VoxelNet& net, const std::vector<float>& latent, int level,
                             DecodeMode mode = DecodeMode::sparse_pred);

struct TraceRow {
  int t = 0;
  int exit_level = 0;
  std::size_t front_occupied = 0;
  std::int64_t decoder_macs = 0;
};

/// Runs the network step by step, decoding each frame only to the current exit level.
class EarlyExitController {
 public:
  EarlyExitController(const VoxelNet& net, FrontRegion region = {}, DecodeMode mode = DecodeMode::sparse_pred);

  /// Decodes one frame at the current level, logs it, then advances the level.
  DecodeOutput step(const std::vector<float>& latent);
  const ExitState& state() const { return state_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  const VoxelNet& net_;
  DecodeMode mode_;
  ExitState state_;
  std::vector<TraceRow> trace_;
};

/// CSV with columns t, exit_level, front_occupied, decoder_macs.
std::string trace_csv(const std::vector<TraceRow>& rows);

}  // namespace svx
