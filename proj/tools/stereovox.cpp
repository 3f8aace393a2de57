// Command-line front end: synth, train, eval, ablate, infer, plot, trace.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "stereovox/adaptive.hpp"
#include "stereovox/checkpoint.hpp"
#include "stereovox/config.hpp"
#include "stereovox/io.hpp"
#include "stereovox/plot.hpp"
#include "stereovox/training.hpp"

namespace fs = std::filesystem;
using namespace svx;

namespace {

/// Config file plus one --key flag per config key, applied in that order.
struct ConfigFlags {
  std::string file;
  std::string preset;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "flat key = value config file");
    for (const auto& k : config_keys()) {
      auto* opt = app->add_option("--" + k.name, values[k.name], k.help);
      options[k.name] = opt;
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (options.at("preset")->count()) set_config_value(cfg, "preset", values.at("preset"));
    if (!file.empty()) {
      const RunConfig from_file = load_config_file(file);
      const auto seed = cfg.seed;
      cfg = from_file;
      if (!cfg.seed) cfg.seed = seed;
    }
    for (const auto& k : config_keys())
      if (k.name != "preset" && options.at(k.name)->count()) set_config_value(cfg, k.name, values.at(k.name));
    return cfg;
  }
};

std::vector<StereoSample> load_limited(const RunConfig& cfg, Split split, int limit) {
  auto samples = load_split(cfg.dataset, split);
  if (limit >= 0 && static_cast<std::size_t>(limit) < samples.size()) samples.resize(static_cast<std::size_t>(limit));
  return samples;
}

void require_seed(const RunConfig& cfg, const char* cmd) {
  if (!cfg.seed) throw CLI::ValidationError(std::string(cmd) + ": --seed is required");
}

int cmd_synth(const RunConfig& cfg) {
  require_seed(cfg, "synth");
  const auto m = generate_dataset(cfg.n_scenes, scene_distribution_of(cfg), *cfg.seed, cfg.dataset);
  const auto s = split_sizes(cfg.n_scenes);
  std::printf("wrote %zu scenes to %s (train %d, val %d, test %d)\n", m.entries.size(), cfg.dataset.c_str(), s[0],
              s[1], s[2]);
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  require_seed(cfg, "train");
  TrainConfig tc = train_config_of(cfg);
  tc.verbose = true;
  const auto train_set = load_limited(cfg, Split::train, cfg.train_limit);
  const auto val_set = load_split(cfg.dataset, Split::val);
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config.txt", to_text(cfg));
  VoxelNet net(tc.network);
  net.init(tc.seed);
  std::printf("training on %zu scenes, validating on %zu; %lld parameters\n", train_set.size(), val_set.size(),
              static_cast<long long>(net.params().count()));
  const auto r = train(net, tc, train_set, val_set);
  std::printf("best epoch %d, finest val IoU %.4f; checkpoint %s\n", r.best_epoch, r.best_val_iou,
              (fs::path(cfg.out_dir) / "best.ckpt").c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split, std::string mode,
             const std::string& out) {
  auto ck = load_checkpoint(checkpoint);
  if (mode.empty()) mode = cfg.eval_mode;
  const auto samples = load_split(cfg.dataset, split_from_string(split));
  const auto report = evaluate(*ck.net, samples, decode_mode_from_string(mode), mode);
  std::cout << metrics_table({report});
  if (!out.empty()) {
    const fs::path base(out);
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    write_json(base.string() + ".json", to_json(report));
    write_text(base.string() + ".csv", metrics_csv({report}));
  }
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis) {
  require_seed(cfg, "ablate");
  std::vector<AblationVariant> variants;
  if (axis == "cost_volume") variants = cost_volume_variants(cfg);
  else if (axis == "decode") variants = decode_variants();
  else throw CLI::ValidationError("--axis must be cost_volume or decode");
  const auto train_set = load_limited(cfg, Split::train, cfg.train_limit);
  const auto val_set = load_split(cfg.dataset, Split::val);
  const auto test_set = load_split(cfg.dataset, Split::test);
  const auto rows = ablate(cfg, variants, train_set, val_set, test_set);
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / ("ablation_" + axis + ".csv"), metrics_csv(rows));
  const auto table = metrics_table(rows);
  write_text(fs::path(cfg.out_dir) / ("ablation_" + axis + ".txt"), table);
  std::cout << table;
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& left, const std::string& right, const std::string& out,
              std::string mode, int max_level) {
  auto ck = load_checkpoint(checkpoint);
  const auto& net = *ck.net;
  const auto& ncfg = net.config();
  if (mode.empty()) mode = ncfg.decoder.mode == DecodeMode::straight ? "straight" : "sparse_pred";
  const auto dm = decode_mode_from_string(mode);
  if (dm == DecodeMode::sparse_gt) throw CLI::ValidationError("infer has no ground truth; use dense or sparse_pred");
  const auto latent = net.infer_latent(read_png_gray(left), read_png_gray(right));
  const DecodeOutput res = net.decode(latent, dm, nullptr, max_level);
  const auto bin = binarize(res.probabilities, static_cast<float>(ncfg.decoder.mask_threshold));

  fs::create_directories(out);
  write_json(fs::path(out) / "pyramid.json", pyramid_to_json(bin, ncfg.grid));
  for (int l = bin.first_level; l <= bin.last_level(); ++l) {
    const std::string stem = "level" + std::to_string(l);
    write_bitmask(fs::path(out) / (stem + ".bin"), bin.level(l), l);
    write_projection_png(fs::path(out) / (stem + ".png"), bin.level(l));
  }
  const auto macs = count_macs(ncfg, dm == DecodeMode::sparse_pred ? &res.masks : nullptr, max_level);
  write_json(fs::path(out) / "macs.json", to_json(macs));
  for (int l = bin.first_level; l <= bin.last_level(); ++l)
    std::printf("level %d: %d^3, %zu occupied\n", l, bin.level(l).nx(), count_occupied(bin.level(l)));
  std::printf("MACs %.2fM (decoder %.2fM)\n", macs.total() / 1e6, macs.decoder() / 1e6);
  return 0;
}

int cmd_plot(const std::string& curve, const std::string& pyramid, const std::string& out) {
  if (curve.empty() == pyramid.empty()) throw CLI::ValidationError("plot needs exactly one of --curve or --pyramid");
  if (!curve.empty()) {
    auto cols = read_csv_columns(curve);
    std::vector<Series> loss, iou;
    for (auto& c : cols) {
      if (c.name.find("loss") != std::string::npos) loss.push_back(c);
      else if (c.name.find("iou") != std::string::npos) iou.push_back(c);
    }
    const fs::path base(out);
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    write_text(base.string() + "_loss.svg", line_chart_svg(loss, "loss", cols.empty() ? "" : cols.front().name));
    if (!iou.empty()) write_text(base.string() + "_iou.svg", line_chart_svg(iou, "validation IoU", cols.front().name));
    std::printf("wrote %s_loss.svg%s\n", base.c_str(), iou.empty() ? "" : (" and " + base.string() + "_iou.svg").c_str());
    return 0;
  }
  const auto p = pyramid_from_json(read_json(pyramid));
  fs::create_directories(out);
  for (int l = p.first_level; l <= p.last_level(); ++l) {
    const auto path = fs::path(out) / ("level" + std::to_string(l) + ".png");
    write_projection_png(path, p.level(l));
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}

int cmd_trace(const RunConfig& cfg, const std::string& checkpoint, const std::string& split, int steps,
              const std::string& out) {
  auto ck = load_checkpoint(checkpoint);
  const auto samples = load_split(cfg.dataset, split_from_string(split));
  if (samples.empty()) throw std::invalid_argument("split has no samples");
  EarlyExitController ctl(*ck.net);
  for (int t = 0; t < steps; ++t) {
    const auto& s = samples[static_cast<std::size_t>(t) % samples.size()];
    ctl.step(ck.net->infer_latent(s.left, s.right));
  }
  const auto csv = trace_csv(ctl.trace());
  if (out.empty()) std::cout << csv;
  else write_text(out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo to octree occupancy: data synthesis, training, evaluation and inference"};
  app.require_subcommand(1);

  ConfigFlags synth_flags, train_flags, eval_flags, ablate_flags, trace_flags;
  auto* synth = app.add_subcommand("synth", "render a synthetic dataset");
  synth_flags.attach(synth);

  auto* train_cmd = app.add_subcommand("train", "train a network on a dataset");
  train_flags.attach(train_cmd);

  std::string checkpoint, split = "test", mode, out;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  eval_flags.attach(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--mode", mode, "decode mode (default: eval_mode)");
  eval->add_option("--out", out, "report path prefix (.json and .csv are appended)");

  std::string axis = "cost_volume";
  auto* abl = app.add_subcommand("ablate", "train and compare variants along one axis");
  ablate_flags.attach(abl);
  abl->add_option("--axis", axis, "cost_volume or decode");

  std::string left, right, infer_out = "infer_out";
  int max_level = -1;
  auto* infer = app.add_subcommand("infer", "decode one stereo pair");
  infer->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  infer->add_option("--left", left, "left PNG")->required();
  infer->add_option("--right", right, "right PNG")->required();
  infer->add_option("--out", infer_out, "output directory");
  infer->add_option("--mode", mode, "dense, sparse_pred or straight");
  infer->add_option("--max-level", max_level, "stop decoding after this level");

  std::string curve, pyramid, plot_out = "plot";
  auto* plot = app.add_subcommand("plot", "render loss curves or voxel projections");
  plot->add_option("--curve", curve, "loss_curve.csv written by train");
  plot->add_option("--pyramid", pyramid, "pyramid JSON");
  plot->add_option("--out", plot_out, "output prefix (curves) or directory (pyramids)");

  int steps = 20;
  std::string trace_out;
  auto* trace = app.add_subcommand("trace", "run the early-exit controller over a split");
  trace_flags.attach(trace);
  trace->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  trace->add_option("--split", split, "train, val or test");
  trace->add_option("--steps", steps, "frames to process");
  trace->add_option("--out", trace_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_flags.resolve());
    if (*train_cmd) return cmd_train(train_flags.resolve());
    if (*eval) return cmd_eval(eval_flags.resolve(), checkpoint, split, mode, out);
    if (*abl) return cmd_ablate(ablate_flags.resolve(), axis);
    if (*infer) return cmd_infer(checkpoint, left, right, infer_out, mode, max_level);
    if (*plot) return cmd_plot(curve, pyramid, plot_out);
    if (*trace) return cmd_trace(trace_flags.resolve(), checkpoint, split, steps, trace_out);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
