#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "stereovox/geometry.hpp"
#include "stereovox/io.hpp"
#include "stereovox/scene.hpp"
#include "test_util.hpp"

using namespace svx;
namespace fs = std::filesystem;

namespace {

SceneSpec empty_scene() {
  SceneSpec s;
  s.seed = 9;
  s.grid = GridSpec::cube(0.5, 32);
  return s;
}

SceneSpec unit_cube_scene() {
  auto s = empty_scene();
  Obstacle cube;
  cube.center = {0.0, 0.5, 4.0};
  cube.size = {1.0, 1.0, 1.0};
  cube.texture_seed = 17;
  s.obstacles.push_back(cube);
  return s;
}

}  // namespace

TEST_CASE("empty scene has an empty pyramid") {
  const auto s = render_scene(empty_scene());
  REQUIRE(s.gt_pyramid.level_count() == 3);
  for (const auto& l : s.gt_pyramid.levels) CHECK(count_occupied(l) == 0);
}

TEST_CASE("unit cube occupies the voxels of its visible front face") {
  const auto s = render_scene(unit_cube_scene());
  const auto& g = s.scene.grid;
  // The camera sits at the cube's base height and lateral center, so only the
  // face z = 3.5, |x| < 0.5, 0 < y < 1 is visible.
  std::set<Index3> expected;
  for (int z = 0; z < g.nz; ++z)
    for (int y = 0; y < g.ny; ++y)
      for (int x = 0; x < g.nx; ++x) {
        const double x0 = g.x_min() + x * g.voxel_size_m, y0 = y * g.voxel_size_m, z0 = z * g.voxel_size_m;
        const bool hits_x = x0 < 0.5 && x0 + g.voxel_size_m > -0.5;
        const bool hits_y = y0 < 1.0 && y0 + g.voxel_size_m > 0.0;
        const bool hits_z = z0 <= 3.5 && 3.5 < z0 + g.voxel_size_m;
        if (hits_x && hits_y && hits_z) expected.insert({x, y, z});
      }
  const auto cells = occupied_cells(s.gt_pyramid.level(3));
  CHECK(std::set<Index3>(cells.begin(), cells.end()) == expected);
  CHECK(expected.size() == 4);
}

TEST_CASE("right view is the left view shifted by the disparity") {
  const auto spec = unit_cube_scene();
  const auto s = render_scene(spec);
  const auto& cam = spec.camera;
  int checked = 0;
  for (int v = 0; v < cam.image_height; ++v)
    for (int u = 0; u < cam.image_width; ++u) {
      // interior of the front face, away from its silhouette
      bool interior = true;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          const int uu = std::clamp(u + du, 0, cam.image_width - 1), vv = std::clamp(v + dv, 0, cam.image_height - 1);
          interior &= std::abs(s.gt_depth(uu, vv) - 3.5f) < 1e-4f;
        }
      if (!interior) continue;
      const double d = cam.disparity_of(s.gt_depth(u, v));
      CHECK(std::abs(render_right_pixel(spec, u - d, v) - s.left(u, v)) <= 1e-3);
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("scenes that exceed the disparity budget are rejected") {
  auto s = empty_scene();
  Obstacle near;
  near.center = {0.0, 0.5, 1.0};
  near.size = {0.4, 1.0, 0.4};
  s.obstacles.push_back(near);
  CHECK_THROWS_AS(render_scene(s), std::invalid_argument);
}

TEST_CASE("sampled scenes respect the distribution") {
  SceneDistribution dist;
  dist.step_scale = 4.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = sample_scene(dist, seed);
    CHECK(s.obstacles.size() >= 1);
    CHECK(s.obstacles.size() <= 3);
    for (const auto& o : s.obstacles) {
      const double half = o.kind == ObstacleKind::box ? o.size.z / 2 : o.size.x / 2;
      CHECK(o.center.z - half > dist.step_scale * dist.grid.voxel_size_m);
      CHECK(o.center.z + half < dist.grid.z_max());
    }
    CHECK(sample_scene(dist, seed) == s);
  }
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(100) == std::array<int, 3>{80, 10, 10});
  CHECK(split_sizes(10) == std::array<int, 3>{8, 1, 1});
  CHECK(split_sizes(500) == std::array<int, 3>{400, 50, 50});
}

TEST_CASE("dataset generation is byte-reproducible and round trips") {
  SceneDistribution dist;
  dist.step_scale = 4.0;
  const test::TempDir a, b;
  generate_dataset(10, dist, 123, a.path());
  generate_dataset(10, dist, 123, b.path());
  CHECK(test::same_tree(a.path(), b.path()));

  const auto m = read_manifest(a.path());
  CHECK(m.entries.size() == 10);
  int counts[3] = {0, 0, 0};
  for (const auto& e : m.entries) ++counts[static_cast<int>(e.split)];
  CHECK(counts[0] == 8);
  CHECK(counts[1] == 1);
  CHECK(counts[2] == 1);

  for (auto split : {Split::train, Split::val, Split::test})
    for (const auto& s : load_split(a.path(), split)) {
      CHECK(s.gt_pyramid == ground_truth_pyramid(s.gt_depth, s.scene.camera, s.scene.grid, s.scene.pyramid_levels));
      const auto fresh = render_scene(s.scene);
      double worst = 0.0;
      for (std::size_t i = 0; i < s.left.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(s.left[i] - fresh.left[i])));
      CHECK(worst <= 0.5 / 255.0 + 1e-6);
      CHECK(s.gt_depth == fresh.gt_depth);
    }
}

TEST_CASE("missing dataset files name the path") {
  const test::TempDir d;
  try {
    read_manifest(d.path());
    FAIL("expected an exception");
  } catch (const IoError& e) {
    CHECK(e.path().filename() == "manifest.json");
  }
}
