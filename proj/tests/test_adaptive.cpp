#include <doctest.h>

#include <random>

#include "stereovox/adaptive.hpp"
#include "stereovox/config.hpp"

using namespace svx;

namespace {

// Four-level pyramid of 1^3 ... 8^3 probabilities, all at `value`.
ProbabilityPyramid uniform_pyramid(int levels, float value) {
  ProbabilityPyramid p;
  for (int l = 1; l <= levels; ++l) p.levels.emplace_back(1 << l, value);
  return p;
}

std::vector<int> run(int levels, const std::vector<bool>& occupied) {
  auto state = ExitState::initial(levels);
  std::vector<int> out;
  for (bool occ : occupied) {
    state.level = next_exit_level(state, uniform_pyramid(levels, occ ? 0.9f : 0.1f));
    out.push_back(state.level);
  }
  return out;
}

NetworkConfig small_network() {
  auto rc = preset_config("desk");
  return network_config_of(rc);
}

}  // namespace

TEST_CASE("front region") {
  FrontRegion r;
  Index3 lo, hi;
  r.box(8, lo, hi);
  CHECK(lo == Index3{2, 0, 0});
  CHECK(hi == Index3{6, 8, 4});
  r.box(1, lo, hi);
  CHECK(lo == Index3{0, 0, 0});
  CHECK(hi == Index3{1, 1, 1});

  OccupancyGrid g(8);
  g(1, 0, 0) = 1;  // left of the region
  g(3, 7, 5) = 1;  // beyond it
  CHECK(front_occupancy(g, r) == 0);
  g(3, 7, 3) = 1;
  CHECK(front_occupancy(g, r) == 1);

  FrontRegion bad;
  bad.z0 = 0.6;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("exit level recurrence") {
  CHECK(ExitState::initial(4).level == 4);
  CHECK(run(4, {false, false, false, false, false}) == std::vector<int>{3, 2, 1, 1, 1});
  CHECK(run(4, {true, true, true}) == std::vector<int>{4, 4, 4});
  CHECK(run(4, {false, true, false, true, false, true}) == std::vector<int>{3, 4, 3, 4, 3, 4});
  for (int level = 1; level <= 4; ++level) {
    CHECK(next_exit_level(level, 4, 0) == std::max(1, level - 1));
    CHECK(next_exit_level(level, 4, 5) == std::min(4, level + 1));
  }
}

TEST_CASE("the rule reads the previous exit level of the pyramid") {
  auto p = uniform_pyramid(3, 0.1f);
  p.level(2)(1, 1, 0) = 0.8f;
  auto s = ExitState::initial(3);
  s.level = 2;
  CHECK(next_exit_level(s, p) == 3);
  s.level = 3;
  CHECK(next_exit_level(s, p) == 2);
}

TEST_CASE("truncated decodes are prefixes of the full decode") {
  VoxelNet net(small_network());
  net.init(3);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<float> latent(128);
    for (auto& v : latent) v = static_cast<float>(nn::normal(rng));
    for (auto mode : {DecodeMode::dense, DecodeMode::sparse_pred}) {
      const auto full = net.decode(latent, mode);
      std::int64_t prev_macs = 0;
      for (int k = 1; k <= 3; ++k) {
        const auto part = decode_to_level(net, latent, k, mode);
        REQUIRE(part.probabilities.level_count() == k);
        for (int l = 1; l <= k; ++l) CHECK(part.probabilities.level(l) == full.probabilities.level(l));
        const auto macs = count_macs(net.config(), nullptr, k).decoder();
        CHECK(macs > prev_macs);
        prev_macs = macs;
      }
    }
  }
  std::vector<float> latent(128, 0.0f);
  CHECK_THROWS(decode_to_level(net, latent, 0));
  CHECK_THROWS(decode_to_level(net, latent, 4));
}

TEST_CASE("controller trace") {
  VoxelNet net(small_network());
  net.init(1);
  EarlyExitController ctl(net);
  std::vector<float> latent(128, 0.0f);
  for (int t = 0; t < 4; ++t) ctl.step(latent);
  const auto& trace = ctl.trace();
  REQUIRE(trace.size() == 4);
  CHECK(trace[0].exit_level == 3);
  for (std::size_t t = 1; t < trace.size(); ++t)
    CHECK(trace[t].exit_level == next_exit_level(trace[t - 1].exit_level, 3, trace[t - 1].front_occupied));
  const auto csv = trace_csv(trace);
  CHECK(csv.rfind("t,exit_level,front_occupied,decoder_macs\n", 0) == 0);
}
