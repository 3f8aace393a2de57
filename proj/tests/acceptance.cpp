// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [work_dir] [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "stereovox/adaptive.hpp"
#include "stereovox/config.hpp"
#include "stereovox/io.hpp"
#include "stereovox/losses.hpp"
#include "stereovox/training.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace svx;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

OccupancyGrid random_grid(int r, double p, std::mt19937_64& rng) {
  OccupancyGrid g(r);
  for (auto& v : g.values()) v = uniform(rng, 0.0, 1.0) < p ? 1 : 0;
  return g;
}

NetworkConfig desk_network() { return network_config_of(preset_config("desk")); }

void randomize_heads(VoxelNet& net, std::uint64_t seed) {
  net.init(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : net.params().all())
    if (p.name.find("head.bias") != std::string::npos)
      for (auto& v : p.value.data) v = static_cast<float>(uniform(rng, -0.6, 0.6));
}

Image<float> noise_image(int w, int h, std::mt19937_64& rng) {
  Image<float> img(w, h);
  for (auto& v : img.values()) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  return img;
}

// Every parent equals the OR of its eight children.
std::size_t pyramid_violations(const OccupancyPyramid& p) {
  std::size_t bad = 0;
  for (int l = p.first_level; l < p.last_level(); ++l) {
    const auto& parent = p.level(l);
    const auto& child = p.level(l + 1);
    for (int z = 0; z < parent.nz(); ++z)
      for (int y = 0; y < parent.ny(); ++y)
        for (int x = 0; x < parent.nx(); ++x) {
          bool any = false;
          for (int c = 0; c < 8; ++c) any |= child(2 * x + (c & 1), 2 * y + (c >> 1 & 1), 2 * z + (c >> 2)) != 0;
          bad += (parent(x, y, z) != 0) != any;
        }
  }
  return bad;
}

Outcome c1_pyramid() {
  const auto t0 = clk::now();
  std::size_t bad = 0;
  for (int pattern = 0; pattern < 256; ++pattern) {
    OccupancyGrid g(2);
    for (int i = 0; i < 8; ++i) g[static_cast<std::size_t>(i)] = pattern >> i & 1;
    const auto p = build_pyramid(g, 2);
    bad += p.level(1)(0, 0, 0) != (pattern != 0 ? 1 : 0);
    bad += !(p.level(2) == g);
  }
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const auto g = random_grid(64, std::pow(10.0, uniform(rng, -5.0, -0.5)), rng);
    const auto p = build_pyramid(g, 4);
    bad += pyramid_violations(p);
    bad += !(p.level(4) == g);
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < 10.0, std::to_string(bad) + " violations in 256 patterns and 1000 grids, " + fmt("%.1fs", s)};
}

Outcome c2_dense_sparse() {
  const auto t0 = clk::now();
  const auto cfg = desk_network();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    VoxelNet net(cfg);
    randomize_heads(net, 1000 + static_cast<std::uint64_t>(t));
    const auto left = noise_image(cfg.camera.image_width, cfg.camera.image_height, rng);
    const auto right = noise_image(cfg.camera.image_width, cfg.camera.image_height, rng);
    const auto latent = net.infer_latent(left, right);
    const auto dense = net.decode(latent, DecodeMode::dense);
    const auto sparse = net.decode(latent, DecodeMode::sparse_pred);
    if (dense.masks != sparse.masks) worst = std::numeric_limits<double>::infinity();
    for (int l = 1; l <= cfg.decoder.levels; ++l) {
      const auto& a = dense.probabilities.level(l);
      const auto& b = sparse.probabilities.level(l);
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
    }
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-5 && s < 120.0, "max |dense - sparse_pred| " + fmt("%.3g", worst) + ", " + fmt("%.1fs", s)};
}

// Counts descendants of zeroed ancestors that carry a non-zero probability.
std::size_t dominance_violations(const DecodeOutput& out, const OccupancyPyramid* gt, int levels) {
  std::size_t bad = 0;
  for (int l = 1; l < levels; ++l) {
    const auto& mask = gt ? gt->level(l) : out.masks[static_cast<std::size_t>(l - 1)];
    for (int k = l + 1; k <= levels; ++k) {
      const auto& p = out.probabilities.level(k);
      const int s = 1 << (k - l);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const auto c = p.coord(i);
        if (!mask(c.x / s, c.y / s, c.z / s) && p[i] != 0.0f) ++bad;
      }
    }
  }
  return bad;
}

Outcome c3_mask_dominance() {
  const auto cfg = desk_network();
  const int L = cfg.decoder.levels;
  std::mt19937_64 rng(3);
  std::size_t bad = 0, checked = 0;
  for (int t = 0; t < 30; ++t) {
    VoxelNet net(cfg);
    randomize_heads(net, 2000 + static_cast<std::uint64_t>(t));
    std::vector<float> latent(static_cast<std::size_t>(cfg.decoder.n_latent));
    for (auto& v : latent) v = static_cast<float>(nn::normal(rng));
    const auto gt = build_pyramid(random_grid(cfg.decoder.resolution(L), uniform(rng, 0.001, 0.05), rng), L);
    for (auto mode : {DecodeMode::sparse_gt, DecodeMode::dense, DecodeMode::sparse_pred}) {
      bad += dominance_violations(net.decode(latent, mode, &gt), mode == DecodeMode::sparse_gt ? &gt : nullptr, L);
      ++checked;
    }
  }
  return {bad == 0, std::to_string(bad) + " non-zero descendants over " + std::to_string(checked) + " random masks"};
}

Outcome c4_loss_gradient() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto gt = build_pyramid(random_grid(8, uniform(rng, 0.01, 0.3), rng), 4);
    Pyramid<double> p;
    for (const auto& l : gt.levels) {
      Grid3<double> g(l.nx());
      for (auto& v : g.values()) v = uniform(rng, 0.01, 0.99);
      p.levels.push_back(g);
    }
    const auto w = LossWeights::reference();
    Pyramid<double> grad;
    total_loss(p, gt, w, &grad);
    for (int l = 0; l < p.level_count(); ++l)
      for (std::size_t i = 0; i < p.levels[l].size(); ++i) {
        const double h = 1e-6, keep = p.levels[l][i];
        p.levels[l][i] = keep + h;
        const double up = total_loss(p, gt, w).total;
        p.levels[l][i] = keep - h;
        const double down = total_loss(p, gt, w).total;
        p.levels[l][i] = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(grad.levels[l][i] - fd) / std::max(std::abs(fd), 1e-8));
      }
  }
  return {worst <= 1e-4, "max relative error " + fmt("%.3g", worst) + " on 20 toy pyramids"};
}

double brute_directed(const std::vector<Index3>& from, const std::vector<Index3>& to, double voxel) {
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

Outcome c5_metric_oracles() {
  std::mt19937_64 rng(5);
  int cd_bad = 0, iou_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int r = 1 << static_cast<int>(rng() % 5);
    const auto grid = GridSpec::cube(0.5, 32);
    const auto a = random_grid(r, uniform(rng, 0.0, 0.3), rng), b = random_grid(r, uniform(rng, 0.0, 0.3), rng);
    const auto pa = occupied_cells(a), pb = occupied_cells(b);
    const double voxel = grid.voxel_size_m * grid.nx / r;
    double want;
    if (pa.empty() && pb.empty()) want = 0.0;
    else if (pa.empty() || pb.empty()) want = grid.diagonal();
    else want = brute_directed(pa, pb, voxel) + brute_directed(pb, pa, voxel);
    cd_bad += chamfer_distance(a, b, grid) != want;

    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      inter += a[i] && b[i];
      uni += a[i] || b[i];
    }
    const double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    iou_bad += eval_iou(a, b) != iou;
  }
  return {cd_bad == 0 && iou_bad == 0,
          std::to_string(cd_bad) + " Chamfer and " + std::to_string(iou_bad) + " IoU mismatches in 100 pairs"};
}

Outcome c6_plan() {
  int bad = 0;
  for (const char* preset : {"desk", "paper"}) {
    const auto rc = preset_config(preset);
    const auto cam = camera_of(rc);
    const auto grid = grid_of(rc);
    const auto raw = voxel_plane_disparities(cam, grid, rc.step_scale);
    std::vector<double> want;
    const double fb = cam.focal_length_px * cam.baseline_m;
    for (double z = rc.step_scale * grid.voxel_size_m; z <= grid.z_max() + 1e-12; z += rc.step_scale * grid.voxel_size_m)
      want.push_back(fb / z);
    if (raw.size() != want.size()) ++bad;
    else
      for (std::size_t i = 0; i < raw.size(); ++i) bad += std::abs(raw[i] - want[i]) > 1e-9;
    const auto plan = plan_of(rc);
    for (std::size_t k = 1; k < plan.levels.size(); ++k) bad += !(plan.levels[k] < plan.levels[k - 1]);
  }
  return {bad == 0, std::to_string(bad) + " mismatches against d = f b / z for the desk and paper cameras"};
}

Outcome c7_cost_volume_macs() {
  auto rc = preset_config("paper");
  const auto voxel = network_config_of(rc);
  rc.plan_source = "full";
  const auto full = network_config_of(rc);
  const auto mv = count_macs(voxel).total(), mf = count_macs(full).total();
  bool monotone = true;
  std::int64_t prev = 0;
  for (std::size_t n = 1; n <= voxel.plan.levels.size(); ++n) {
    auto cfg = voxel;
    cfg.plan.levels.resize(n);
    const auto m = count_macs(cfg).total();
    monotone &= m >= prev;
    prev = m;
  }
  return {voxel.plan.levels.size() == 12 && full.plan.levels.size() == 48 && mv < mf && monotone,
          "voxel plan (" + std::to_string(voxel.plan.levels.size()) + " levels) " + fmt("%.1fM", mv / 1e6) +
              " vs full plan (" + std::to_string(full.plan.levels.size()) + ") " + fmt("%.1fM", mf / 1e6) +
              (monotone ? ", monotone" : ", not monotone")};
}

Outcome c8_pruning_macs() {
  const auto cfg = desk_network();
  const auto dist = scene_distribution_of(preset_config("desk"));
  int wins = 0, trials = 0;
  std::uint64_t seed = 0;
  while (trials < 50) {
    const auto s = render_scene(sample_scene(dist, mix_seed(8, seed++)));
    const auto& l1 = s.gt_pyramid.level(1);
    if (static_cast<double>(count_occupied(l1)) > 0.25 * static_cast<double>(l1.size())) continue;
    VoxelNet net(cfg);
    net.init(3000 + static_cast<std::uint64_t>(trials));
    const auto latent = net.infer_latent(s.left, s.right);
    const auto out = net.decode(latent, DecodeMode::sparse_pred);
    const auto sparse = count_macs(cfg, &out.masks).decoder();
    const auto dense = count_macs(cfg).decoder();
    wins += sparse < dense;
    ++trials;
  }
  return {wins == trials, std::to_string(wins) + "/" + std::to_string(trials) + " trials with fewer decoder MACs"};
}

Outcome c9_learnability(const fs::path& work) {
  const auto t0 = clk::now();
  auto rc = preset_config("desk");
  rc.seed = 2024;
  rc.dataset = (work / "data").string();
  rc.out_dir = (work / "run").string();
  rc.augment = "retexture";
  fs::remove_all(rc.dataset);
  generate_dataset(rc.n_scenes, scene_distribution_of(rc), *rc.seed, rc.dataset);
  const auto train_set = load_split(rc.dataset, Split::train);
  const auto val_set = load_split(rc.dataset, Split::val);
  const auto test_set = load_split(rc.dataset, Split::test);
  auto tc = train_config_of(rc);
  tc.verbose = true;
  VoxelNet net(tc.network);
  net.init(tc.seed);
  train(net, tc, train_set, val_set);
  const auto report = evaluate(net, test_set, tc.eval_mode, "test");
  write_text(work / "run" / "test_metrics.txt", metrics_table({report}));
  const double s = seconds_since(t0);
  const auto& lv = report.per_level;
  bool monotone = true;
  for (std::size_t l = 1; l < lv.size(); ++l) monotone &= lv[l].iou <= lv[l - 1].iou;
  std::string ious;
  for (const auto& l : lv) ious += (ious.empty() ? "" : "/") + fmt("%.3f", l.iou);
  const bool pass = lv.front().iou >= 0.5 && lv.back().iou >= 0.2 && monotone && s <= 1800.0;
  return {pass, "test IoU " + ious + " (need >= 0.5 coarse, >= 0.2 finest, non-increasing), " + fmt("%.0fs", s)};
}

Outcome c10_early_exit() {
  auto seq = [](std::vector<bool> occupied) {
    int level = ExitState::initial(4).level;
    std::vector<int> out;
    for (bool o : occupied) out.push_back(level = next_exit_level(level, 4, o ? 1 : 0));
    return out;
  };
  bool ok = seq({false, false, false, false, false}) == std::vector<int>{3, 2, 1, 1, 1};
  ok &= seq({true, true, true}) == std::vector<int>{4, 4, 4};
  ok &= seq({false, true, false, true}) == std::vector<int>{3, 4, 3, 4};

  auto rc = preset_config("desk");
  rc.levels = 4;
  rc.initial_resolution = 2;
  rc.decoder_channels = {32, 16, 8, 4, 4};
  const auto cfg = network_config_of(rc);
  std::mt19937_64 rng(10);
  std::size_t mismatches = 0;
  for (int t = 0; t < 5; ++t) {
    VoxelNet net(cfg);
    randomize_heads(net, 4000 + static_cast<std::uint64_t>(t));
    std::vector<float> latent(static_cast<std::size_t>(cfg.decoder.n_latent));
    for (auto& v : latent) v = static_cast<float>(nn::normal(rng));
    const auto full = net.decode(latent, DecodeMode::sparse_pred);
    for (int k = 1; k <= 4; ++k) {
      const auto part = decode_to_level(net, latent, k);
      if (part.probabilities.level_count() != k) ++mismatches;
      for (int l = 1; l <= std::min(k, part.probabilities.level_count()); ++l)
        mismatches += !(part.probabilities.level(l) == full.probabilities.level(l));
    }
  }
  const bool sequences = ok;
  ok &= mismatches == 0;
  return {ok, std::string("level sequences ") + (sequences ? "match" : "differ") + ", " + std::to_string(mismatches) +
                  " prefix mismatches"};
}

Outcome c11_pipeline() {
  const auto rc = preset_config("desk");
  const auto dist = scene_distribution_of(rc);
  const auto cam = camera_of(rc);
  const auto grid = grid_of(rc);
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    const auto s = render_scene(sample_scene(dist, mix_seed(11, static_cast<std::uint64_t>(i))));
    bad += !(pipeline_voxelize(disparity_from_depth(s.gt_depth, cam), cam, grid) == s.gt_pyramid.level(rc.levels));
  }
  return {bad == 0, std::to_string(bad) + "/100 scenes differ from the ground truth"};
}

Outcome c12_determinism() {
  auto rc = preset_config("desk");
  rc.seed = 12;
  const test::TempDir a, b;
  const auto dist = scene_distribution_of(rc);
  generate_dataset(20, dist, *rc.seed, a.path() / "data");
  generate_dataset(20, dist, *rc.seed, b.path() / "data");
  const bool synth_same = test::same_tree(a.path() / "data", b.path() / "data");

  auto tc = train_config_of(rc);
  tc.epochs = 2;
  tc.batch_size = 4;
  const auto train_set = load_split(a.path() / "data", Split::train);
  const auto val_set = load_split(a.path() / "data", Split::val);
  std::vector<std::string> curves;
  for (const auto* dir : {&a, &b}) {
    tc.out_dir = dir->path() / "run";
    VoxelNet net(tc.network);
    net.init(tc.seed);
    train(net, tc, train_set, val_set);
    curves.push_back(test::slurp(tc.out_dir / "loss_curve.csv") + test::slurp(tc.out_dir / "step_losses.csv"));
  }
  const bool train_same = curves[0] == curves[1] && !curves[0].empty();
  return {synth_same && train_same, std::string("synth ") + (synth_same ? "identical" : "differs") + ", loss curves " +
                                        (train_same ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_work";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::stoi(argv[i]));
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"octree pyramid soundness", c1_pyramid},
      {"dense/sparse decode equivalence", c2_dense_sparse},
      {"mask dominance", c3_mask_dominance},
      {"loss gradient check", c4_loss_gradient},
      {"metric oracles", c5_metric_oracles},
      {"disparity plan correctness", c6_plan},
      {"cost-volume MAC reduction", c7_cost_volume_macs},
      {"octree pruning MAC reduction", c8_pruning_macs},
      {"learnability", [&] { return c9_learnability(work); }},
      {"early-exit trace", c10_early_exit},
      {"baseline pipeline round trip", c11_pipeline},
      {"determinism", c12_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %2d  %-32s %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
