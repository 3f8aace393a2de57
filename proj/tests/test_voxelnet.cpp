#include <doctest.h>

#include <cmath>
#include <random>

#include "stereovox/config.hpp"
#include "stereovox/scene.hpp"
#include "stereovox/voxelnet.hpp"

using namespace svx;
using nn::Tensor;

namespace {

NetworkConfig desk_network(DecodeMode mode = DecodeMode::dense) {
  auto rc = preset_config("desk");
  auto cfg = network_config_of(rc);
  cfg.decoder.mode = mode;
  return cfg;
}

// Random weights with head biases spread around zero so that masks are neither
// empty nor full.
void randomize(VoxelNet& net, std::uint64_t seed) {
  net.init(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : net.params().all())
    if (p.name.find("head.bias") != std::string::npos)
      for (auto& v : p.value.data) v = static_cast<float>(uniform(rng, -0.6, 0.6));
}

std::vector<float> random_latent(int n, std::mt19937_64& rng) {
  std::vector<float> z(static_cast<std::size_t>(n));
  for (auto& v : z) v = static_cast<float>(nn::normal(rng));
  return z;
}

Image<float> noise_image(int w, int h, std::mt19937_64& rng) {
  Image<float> img(w, h);
  for (auto& v : img.values()) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  return img;
}

OccupancyPyramid random_pyramid(const DecoderConfig& dec, std::mt19937_64& rng, double p) {
  OccupancyGrid fine(dec.resolution(dec.levels));
  for (auto& v : fine.values()) v = uniform(rng, 0.0, 1.0) < p ? 1 : 0;
  return build_pyramid(fine, dec.levels);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("feature maps are a quarter of the input") {
  VoxelNet net(desk_network());
  net.init(1);
  std::mt19937_64 rng(2);
  const auto img = noise_image(128, 64, rng);
  const auto f = net.extract_features(img);
  CHECK(f.shape == std::vector<int>{16, 16, 32});
  CHECK(net.extract_features(img) == f);
}

TEST_CASE("a 4 px image shift moves features by one cell") {
  VoxelNet net(desk_network());
  net.init(3);
  std::mt19937_64 rng(4);
  const auto img = noise_image(128, 64, rng);
  Image<float> shifted(128, 64);
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 128; ++u) shifted(u, v) = img(std::max(0, u - 4), v);
  const auto a = net.extract_features(img);
  const auto b = net.extract_features(shifted);
  std::vector<double> xa, xb;
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  for (int c = 0; c < C; ++c)
    for (int y = 2; y < H - 2; ++y)
      for (int x = 2; x < W - 3; ++x) {
        xa.push_back(a.data[(static_cast<std::size_t>(c) * H + y) * W + x]);
        xb.push_back(b.data[(static_cast<std::size_t>(c) * H + y) * W + x + 1]);
      }
  CHECK(correlation(xa, xb) > 0.9);
}

TEST_CASE("cost volume interlacing") {
  SUBCASE("hand example with a one-cell shift") {
    Tensor l({1, 1, 4}), r({1, 1, 4});
    l.data = {1, 2, 3, 4};
    r.data = {5, 6, 7, 8};
    DisparityPlan plan;
    plan.levels = {4.0};
    for (auto mode : {ShiftMode::nearest, ShiftMode::linear}) {
      const auto cv = build_cost_volume(l, r, plan, mode);
      CHECK(cv.data.shape == std::vector<int>{2, 1, 1, 4});
      CHECK(cv.data.data == std::vector<float>{1, 2, 3, 4, 0, 5, 6, 7});
    }
  }
  SUBCASE("zero shift of identical maps") {
    std::mt19937_64 rng(5);
    Tensor f({3, 2, 5});
    for (auto& v : f.data) v = static_cast<float>(nn::normal(rng));
    DisparityPlan plan;
    plan.levels = {0.0};
    const auto cv = build_cost_volume(f, f, plan);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 10; ++i) CHECK(cv.data.data[(2 * c) * 10 + i] == cv.data.data[(2 * c + 1) * 10 + i]);
  }
  SUBCASE("nearest rounds fractional shifts") {
    Tensor l({1, 1, 4}), r({1, 1, 4});
    l.data = {1, 2, 3, 4};
    r.data = {5, 6, 7, 8};
    DisparityPlan plan;
    plan.levels = {5.0, 7.0};  // 1.25 and 1.75 cells
    const auto cv = build_cost_volume(l, r, plan, ShiftMode::nearest);
    CHECK(std::vector<float>(cv.data.data.begin() + 8, cv.data.data.begin() + 12) == std::vector<float>{0, 5, 6, 7});
    CHECK(std::vector<float>(cv.data.data.begin() + 12, cv.data.data.end()) == std::vector<float>{0, 0, 5, 6});
  }
  SUBCASE("shape and plan checks") {
    VoxelNet net(desk_network());
    const auto& cfg = net.config();
    Tensor f({16, 16, 32});
    const auto cv = build_cost_volume(f, f, cfg.plan);
    CHECK(cv.data.shape == std::vector<int>{32, static_cast<int>(cfg.plan.levels.size()), 16, 32});
    DisparityPlan wide;
    wide.levels = {128.0};
    CHECK_THROWS(build_cost_volume(f, f, wide));
    CHECK_THROWS(build_cost_volume(f, Tensor({16, 16, 31}), cfg.plan));
  }
  SUBCASE("backward is the adjoint") {
    std::mt19937_64 rng(6);
    Tensor l({2, 3, 6}), r({2, 3, 6});
    for (auto& v : l.data) v = static_cast<float>(nn::normal(rng));
    for (auto& v : r.data) v = static_cast<float>(nn::normal(rng));
    DisparityPlan plan;
    plan.levels = {0.0, 2.5, 6.0, 13.0};
    for (auto mode : {ShiftMode::nearest, ShiftMode::linear}) {
      const auto cv = build_cost_volume(l, r, plan, mode);
      Tensor g(cv.data.shape);
      for (auto& v : g.data) v = static_cast<float>(nn::normal(rng));
      Tensor gl(l.shape), gr(r.shape);
      cost_volume_backward(g, plan, mode, gl, gr);
      double lhs = 0, rhs = 0;
      for (std::size_t i = 0; i < g.numel(); ++i) lhs += static_cast<double>(g.data[i]) * cv.data.data[i];
      for (std::size_t i = 0; i < l.numel(); ++i) rhs += static_cast<double>(gl.data[i]) * l.data[i];
      for (std::size_t i = 0; i < r.numel(); ++i) rhs += static_cast<double>(gr.data[i]) * r.data[i];
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
    }
  }
}

TEST_CASE("latent size and paper level resolutions") {
  auto rc = preset_config("paper");
  const auto cfg = network_config_of(rc);
  CHECK(cfg.decoder.n_latent == 128);
  CHECK(cfg.decoder.resolution(1) == 8);
  CHECK(cfg.decoder.resolution(2) == 16);
  CHECK(cfg.decoder.resolution(3) == 32);
  CHECK(cfg.decoder.resolution(4) == 64);

  VoxelNet net(desk_network());
  net.init(7);
  std::mt19937_64 rng(8);
  const auto l = noise_image(128, 64, rng), r = noise_image(128, 64, rng);
  const auto z = net.infer_latent(l, r);
  CHECK(z.size() == 128);
  CHECK(net.infer_latent(l, r) == z);
}

TEST_CASE("decoder contracts") {
  const auto cfg = desk_network();
  VoxelNet net(cfg);
  randomize(net, 9);
  std::mt19937_64 rng(10);
  const auto z = random_latent(cfg.decoder.n_latent, rng);

  SUBCASE("probabilities lie in [0, 1] and resolutions double") {
    const auto out = net.decode(z, DecodeMode::dense);
    REQUIRE(out.probabilities.level_count() == 3);
    for (int l = 1; l <= 3; ++l) {
      CHECK(out.probabilities.level(l).resolution() == cfg.decoder.resolution(l));
      for (float p : out.probabilities.level(l).values()) CHECK((p >= 0.0f && p <= 1.0f));
    }
  }
  SUBCASE("sparse_gt requires a ground-truth pyramid") { CHECK_THROWS(net.decode(z, DecodeMode::sparse_gt)); }
  SUBCASE("straight mode needs a straight network") { CHECK_THROWS(net.decode(z, DecodeMode::straight)); }
  SUBCASE("straight networks emit only the finest level") {
    VoxelNet s(desk_network(DecodeMode::straight));
    s.init(11);
    const auto out = s.decode(z, DecodeMode::straight);
    CHECK(out.probabilities.level_count() == 1);
    CHECK(out.probabilities.first_level == 3);
    CHECK(out.masks.empty());
  }
}

TEST_CASE("sparse_pred equals dense decoding") {
  const auto cfg = desk_network();
  VoxelNet net(cfg);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    randomize(net, 100 + trial);
    const auto z = random_latent(cfg.decoder.n_latent, rng);
    const auto dense = net.decode(z, DecodeMode::dense);
    const auto sparse = net.decode(z, DecodeMode::sparse_pred);
    CHECK(dense.masks == sparse.masks);
    CHECK(count_occupied(dense.masks[0]) > 0);
    float worst = 0.0f;
    for (int l = 1; l <= 3; ++l)
      for (std::size_t i = 0; i < dense.probabilities.level(l).size(); ++i)
        worst = std::max(worst, std::abs(dense.probabilities.level(l)[i] - sparse.probabilities.level(l)[i]));
    CHECK(worst <= 1e-5f);
  }
}

TEST_CASE("masked ancestors zero every descendant") {
  const auto cfg = desk_network();
  VoxelNet net(cfg);
  randomize(net, 13);
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const auto z = random_latent(cfg.decoder.n_latent, rng);
    const auto gt = random_pyramid(cfg.decoder, rng, 0.002);
    for (auto mode : {DecodeMode::sparse_gt, DecodeMode::dense, DecodeMode::sparse_pred}) {
      const auto out = net.decode(z, mode, &gt);
      for (int a = 1; a < 3; ++a) {
        const auto& mask = mode == DecodeMode::sparse_gt ? gt.level(a) : out.masks[static_cast<std::size_t>(a - 1)];
        for (int l = a + 1; l <= 3; ++l) {
          const auto& p = out.probabilities.level(l);
          const int s = 1 << (l - a);
          for (std::size_t i = 0; i < p.size(); ++i) {
            const auto c = p.coord(i);
            if (!mask(c.x / s, c.y / s, c.z / s)) CHECK(p[i] == 0.0f);
          }
        }
      }
    }
  }
}

TEST_CASE("MAC counting") {
  SUBCASE("a 3x3 conv over a 4x4 output") {
    nn::ParameterStore ps;
    nn::Conv2d conv(ps, "c", 1, 1, 3, 1, 1);
    CHECK(conv.macs(4, 4) == 144);
  }
  const auto cfg = desk_network();
  SUBCASE("an empty level-1 mask removes the finer levels") {
    std::vector<OccupancyGrid> masks{OccupancyGrid(8), OccupancyGrid(16)};
    const auto r = count_macs(cfg, &masks);
    CHECK(r.decoder_levels[0] > 0);
    CHECK(r.decoder_levels[1] == 0);
    CHECK(r.decoder_levels[2] == 0);
  }
  SUBCASE("full masks match dense counts") {
    std::vector<OccupancyGrid> masks{OccupancyGrid(8, 1), OccupancyGrid(16, 1)};
    CHECK(count_macs(cfg, &masks).decoder() == count_macs(cfg).decoder());
  }
  SUBCASE("parameter count matches the network") {
    VoxelNet net(cfg);
    CHECK(count_macs(cfg).parameters == net.params().count());
    VoxelNet straight(desk_network(DecodeMode::straight));
    CHECK(count_macs(straight.config()).parameters == straight.params().count());
  }
  SUBCASE("truncated decodes count fewer MACs") {
    CHECK(count_macs(cfg, nullptr, 1).decoder() < count_macs(cfg, nullptr, 3).decoder());
  }
  SUBCASE("cost-volume MACs grow with the plan size") {
    auto c = cfg;
    std::int64_t prev = 0;
    for (int n : {1, 2, 4, 8, 16}) {
      c.plan = uniform_plan(n, 1);
      const auto total = count_macs(c).total();
      CHECK(total >= prev);
      prev = total;
    }
  }
}
