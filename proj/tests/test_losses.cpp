#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "stereovox/losses.hpp"
#include "stereovox/scene.hpp"

using namespace svx;

namespace {

OccupancyGrid random_grid(int r, double p, std::mt19937_64& rng) {
  OccupancyGrid g(r);
  for (auto& v : g.values()) v = uniform(rng, 0.0, 1.0) < p ? 1 : 0;
  return g;
}

double brute_iou(const OccupancyGrid& a, const OccupancyGrid& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double directed_mean(const std::vector<Index3>& from, const std::vector<Index3>& to, double voxel) {
  double sum = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
      best = std::min(best, voxel * std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

double brute_chamfer(const OccupancyGrid& a, const OccupancyGrid& b, const GridSpec& grid) {
  const auto pa = occupied_cells(a), pb = occupied_cells(b);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) return grid.diagonal();
  const double voxel = grid.voxel_size_m * grid.nx / a.nx();
  return directed_mean(pa, pb, voxel) + directed_mean(pb, pa, voxel);
}

}  // namespace

TEST_CASE("soft IoU examples") {
  OccupancyGrid y(2);
  y(0, 0, 0) = y(1, 0, 0) = y(0, 1, 0) = y(1, 1, 0) = 1;
  SUBCASE("perfect prediction") {
    ProbabilityGrid p(2);
    for (std::size_t i = 0; i < y.size(); ++i) p[i] = y[i];
    CHECK(soft_iou_loss(p, y) == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("disjoint supports") {
    ProbabilityGrid p(2);
    p(0, 0, 1) = 1.0f;
    CHECK(soft_iou_loss(p, y) == doctest::Approx(1.0));
  }
  SUBCASE("half of the support") {
    ProbabilityGrid p(2);
    p(0, 0, 0) = p(1, 0, 0) = 1.0f;
    CHECK(soft_iou_loss(p, y) == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("shape mismatch") { CHECK_THROWS(soft_iou_loss(ProbabilityGrid(4), y)); }
}

TEST_CASE("soft IoU complements eval IoU on binary inputs") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_grid(6, 0.3, rng), b = random_grid(6, 0.3, rng);
    ProbabilityGrid p(6);
    for (std::size_t i = 0; i < a.size(); ++i) p[i] = a[i];
    const double loss = soft_iou_loss(p, b);
    CHECK(loss >= 0.0);
    CHECK(loss <= 1.0);
    if (count_occupied(a) + count_occupied(b) > 0) CHECK(std::abs(loss - (1.0 - eval_iou(a, b))) <= 1e-6);
  }
}

TEST_CASE("loss weights") {
  const auto ref = LossWeights::reference();
  CHECK(ref.w == std::vector<double>{0.30, 0.27, 0.23, 0.20});
  const auto three = LossWeights::for_levels(3);
  REQUIRE(three.w.size() == 3);
  CHECK(three.w[0] == doctest::Approx(0.30 / 0.80));
  CHECK(three.w[2] == doctest::Approx(0.23 / 0.80));
  CHECK(LossWeights::for_levels(4).w == ref.w);
}

TEST_CASE("total loss") {
  OccupancyGrid fine(8);
  fine(1, 2, 3) = fine(5, 5, 5) = 1;
  const auto gt = build_pyramid(fine, 4);
  SUBCASE("perfect prediction") {
    ProbabilityPyramid p;
    for (const auto& l : gt.levels) {
      ProbabilityGrid g(l.nx());
      for (std::size_t i = 0; i < l.size(); ++i) g[i] = l[i];
      p.levels.push_back(g);
    }
    CHECK(total_loss(p, gt, LossWeights::reference()).total == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("unit per-level losses sum the weights") {
    ProbabilityPyramid p;
    for (const auto& l : gt.levels) p.levels.emplace_back(l.nx());
    const auto v = total_loss(p, gt, LossWeights::reference());
    CHECK(v.total == doctest::Approx(1.0));
    CHECK(v.per_level == std::vector<double>{1.0, 1.0, 1.0, 1.0});
  }
  SUBCASE("level count mismatch") {
    ProbabilityPyramid p;
    for (const auto& l : gt.levels) p.levels.emplace_back(l.nx());
    CHECK_THROWS(total_loss(p, gt, LossWeights::for_levels(3)));
  }
}

TEST_CASE("total loss gradient matches central differences") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    OccupancyGrid fine(8);
    for (auto& v : fine.values()) v = uniform(rng, 0.0, 1.0) < 0.05 ? 1 : 0;
    const auto gt = build_pyramid(fine, 3);
    Pyramid<double> p;
    for (const auto& l : gt.levels) {
      Grid3<double> g(l.nx());
      for (auto& v : g.values()) v = uniform(rng, 0.01, 0.99);
      p.levels.push_back(g);
    }
    const auto w = LossWeights::for_levels(3);
    Pyramid<double> grad;
    total_loss(p, gt, w, &grad);
    double worst = 0.0;
    for (int l = 0; l < 3; ++l)
      for (std::size_t i = 0; i < p.levels[l].size(); ++i) {
        const double h = 1e-6, keep = p.levels[l][i];
        p.levels[l][i] = keep + h;
        const double up = total_loss(p, gt, w).total;
        p.levels[l][i] = keep - h;
        const double down = total_loss(p, gt, w).total;
        p.levels[l][i] = keep;
        const double fd = (up - down) / (2 * h);
        const double an = grad.levels[l][i];
        worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-8));
      }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("eval IoU") {
  OccupancyGrid a(2), b(2);
  CHECK(eval_iou(a, b) == 1.0);
  a(0, 0, 0) = a(1, 0, 0) = 1;
  b(1, 0, 0) = b(1, 1, 1) = 1;
  CHECK(eval_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(eval_iou(a, a) == 1.0);

  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_grid(1 + static_cast<int>(rng() % 16), 0.2, rng);
    const auto y = random_grid(x.nx(), 0.2, rng);
    CHECK(eval_iou(x, y) == brute_iou(x, y));
  }
}

TEST_CASE("eval IoU is invariant under a shared axis permutation") {
  std::mt19937_64 rng(4);
  const auto a = random_grid(6, 0.3, rng), b = random_grid(6, 0.3, rng);
  OccupancyGrid pa(6), pb(6);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        pa(z, x, y) = a(x, y, z);
        pb(z, x, y) = b(x, y, z);
      }
  CHECK(eval_iou(pa, pb) == eval_iou(a, b));
}

TEST_CASE("Chamfer distance") {
  const auto grid = GridSpec::cube(0.5, 4);
  SUBCASE("identical sets") {
    OccupancyGrid a(4);
    a(1, 2, 3) = a(0, 0, 0) = 1;
    CHECK(chamfer_distance(a, a, grid) == 0.0);
  }
  SUBCASE("one cell apart") {
    OccupancyGrid a(4), b(4);
    a(1, 1, 1) = 1;
    b(2, 1, 1) = 1;
    CHECK(chamfer_distance(a, b, grid) == doctest::Approx(1.0));
  }
  SUBCASE("empty sides") {
    OccupancyGrid a(4), b(4);
    CHECK(chamfer_distance(a, b, grid) == 0.0);
    a(0, 0, 0) = 1;
    CHECK(chamfer_distance(a, b, grid) == doctest::Approx(grid.diagonal()));
    CHECK(chamfer_distance(b, a, grid) == doctest::Approx(grid.diagonal()));
  }
  SUBCASE("coarser levels use larger voxels") {
    const auto g32 = GridSpec::cube(0.5, 32);
    OccupancyGrid a(8), b(8);
    a(0, 0, 0) = 1;
    b(1, 0, 0) = 1;
    CHECK(chamfer_distance(a, b, g32) == doctest::Approx(4.0));
  }
  SUBCASE("brute-force oracle on random grids") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
      const int r = 1 << (static_cast<int>(rng() % 5));
      const auto g = GridSpec::cube(0.25 + 0.25 * static_cast<double>(rng() % 3), 16);
      const auto a = random_grid(r, uniform(rng, 0.0, 0.2), rng);
      const auto b = random_grid(r, uniform(rng, 0.0, 0.2), rng);
      const double cd = chamfer_distance(a, b, g);
      CHECK(cd == brute_chamfer(a, b, g));
      CHECK(cd == chamfer_distance(b, a, g));
    }
  }
}

TEST_CASE("distance transform agrees with exhaustive search") {
  std::mt19937_64 rng(6);
  const auto g = random_grid(9, 0.03, rng);
  const auto dt = squared_distance_transform(g);
  const auto cells = occupied_cells(g);
  REQUIRE(!cells.empty());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = g.coord(i);
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& o : cells) {
      const std::int64_t dx = c.x - o.x, dy = c.y - o.y, dz = c.z - o.z;
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    CHECK(dt[i] == best);
  }
}

TEST_CASE("metrics report serialization") {
  MetricsReport r;
  r.name = "dense";
  r.per_level = {{1, 8, 0.75, 1.5}, {2, 16, 0.5, 1.25}};
  r.macs = 1000;
  r.decoder_macs = 400;
  r.parameters = 77;
  r.samples = 5;
  const auto back = metrics_from_json(to_json(r));
  CHECK(back.name == r.name);
  CHECK(back.per_level.size() == 2);
  CHECK(back.per_level[1].iou == 0.5);
  CHECK(back.macs == 1000);
  const auto csv = metrics_csv({r});
  CHECK(csv.find("iou_l1") != std::string::npos);
  CHECK(csv.find("dense") != std::string::npos);
  CHECK(metrics_table({r}).find("dense") != std::string::npos);
}
