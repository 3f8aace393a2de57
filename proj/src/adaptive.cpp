#include "stereovox/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace svx {

void FrontRegion::validate() const {
  auto ok = [](double a, double b) { return a >= 0.0 && b <= 1.0 && a < b; };
  if (!ok(x0, x1) || !ok(y0, y1) || !ok(z0, z1))
    throw std::invalid_argument("front region fractions must satisfy 0 <= lo < hi <= 1");
}

void FrontRegion::box(int resolution, Index3& lo, Index3& hi) const {
  validate();
  auto lo_of = [&](double f) { return static_cast<int>(std::floor(f * resolution)); };
  auto hi_of = [&](double f) { return std::max(1, static_cast<int>(std::ceil(f * resolution))); };
  lo = {lo_of(x0), lo_of(y0), lo_of(z0)};
  hi = {hi_of(x1), hi_of(y1), hi_of(z1)};
}

std::size_t front_occupancy(const OccupancyGrid& g, const FrontRegion& region) {
  Index3 lo, hi;
  region.box(g.resolution(), lo, hi);
  std::size_t n = 0;
  for (int z = lo.z; z < hi.z; ++z)
    for (int y = lo.y; y < hi.y; ++y)
      for (int x = lo.x; x < hi.x; ++x) n += g(x, y, z) != 0;
  return n;
}

ExitState ExitState::initial(int levels, FrontRegion region) {
  if (levels < 1) throw std::invalid_argument("exit state needs at least one level");
  region.validate();
  return {levels, levels, region};
}

int next_exit_level(int level, int levels, std::size_t front_occupied) {
  const int next = front_occupied == 0 ? level - 1 : level + 1;
  return std::clamp(next, 1, levels);
}

int next_exit_level(const ExitState& state, const ProbabilityPyramid& prev, float threshold) {
  const auto& g = prev.level(state.level);
  return next_exit_level(state.level, state.levels, front_occupancy(binarize(g, threshold), state.region));
}

DecodeOutput decode_to_level(const VoxelNet& net, const std::vector<float>& latent, int level, DecodeMode mode) {
  if (level < 1 || level > net.config().decoder.levels)
    throw std::invalid_argument("decode_to_level: level " + std::to_string(level) + " outside [1, " +
                                std::to_string(net.config().decoder.levels) + "]");
  if (mode == DecodeMode::straight || mode == DecodeMode::sparse_gt)
    throw std::invalid_argument("early exit needs a hierarchical prediction-driven decode mode");
  return net.decode(latent, mode, nullptr, level);
}

EarlyExitController::EarlyExitController(const VoxelNet& net, FrontRegion region, DecodeMode mode)
    : net_(net), mode_(mode), state_(ExitState::initial(net.config().decoder.levels, region)) {}

DecodeOutput EarlyExitController::step(const std::vector<float>& latent) {
  DecodeOutput out = decode_to_level(net_, latent, state_.level, mode_);
  const auto macs = count_macs(net_.config(), mode_ == DecodeMode::dense ? nullptr : &out.masks, state_.level);
  const auto occupied = front_occupancy(
      binarize(out.probabilities.level(state_.level), static_cast<float>(net_.config().decoder.mask_threshold)),
      state_.region);
  trace_.push_back({static_cast<int>(trace_.size()), state_.level, occupied, macs.decoder()});
  state_.level = next_exit_level(state_.level, state_.levels, occupied);
  return out;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  os << "t,exit_level,front_occupied,decoder_macs\n";
  for (const auto& r : rows) os << r.t << ',' << r.exit_level << ',' << r.front_occupied << ',' << r.decoder_macs << '\n';
  return os.str();
}

}  // namespace svx
