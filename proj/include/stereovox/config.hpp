#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stereovox/geometry.hpp"
#include "stereovox/scene.hpp"
#include "stereovox/voxelnet.hpp"

namespace svx {

/// Every setting of a run, flattened so it maps one-to-one onto `key = value`
/// lines and `--key` flags.
struct RunConfig {
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;

  // camera and grid
  double focal_length_px = 64.0;
  double baseline_m = 0.75;
  int image_width = 128;
  int image_height = 64;
  double cx = 64.0;
  double cy = 64.0;
  double voxel_size_m = 0.5;
  int grid_resolution = 32;

  // cost volume
  std::string plan_source = "voxel";
  double step_scale = 4.0;
  int plan_count = 16;
  int plan_stride = 1;
  std::string shift = "nearest";

  // network
  int feature_channels = 16;
  std::vector<int> feature_hidden = {8, 16};
  int match_channels = 8;
  std::vector<int> encoder_channels = {32, 64};
  int n_latent = 128;
  int initial_resolution = 4;
  int levels = 3;
  std::vector<int> decoder_channels = {32, 16, 8, 4};
  double mask_threshold = 0.5;

  // training
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::string train_mode = "sparse_gt";
  std::string eval_mode = "sparse_pred";
  /// Training augmentation: none or retexture.
  std::string augment = "none";
  /// Empty selects the reference weights for the configured level count.
  std::vector<double> loss_weights;
  /// Cap on training samples used (-1: all).
  int train_limit = -1;

  // data
  std::string dataset = "data";
  std::string out_dir = "runs/default";
  int n_scenes = 500;
  int min_obstacles = 1;
  int max_obstacles = 3;
  double min_size_m = 0.8;
  double max_size_m = 3.0;
  bool ground_plane = false;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// All recognised keys in file order.
const std::vector<ConfigKey>& config_keys();

/// Named defaults: "desk" (64x128 images, 32^3 grid) or "paper" (400x880, 64^3).
RunConfig preset_config(const std::string& name);

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Parses `key = value` lines; `#` starts a comment. A `preset` line resets
/// to that preset before later keys apply.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<text>");
RunConfig load_config_file(const std::filesystem::path& path);
std::string to_text(const RunConfig& cfg);

CameraModel camera_of(const RunConfig& cfg);
GridSpec grid_of(const RunConfig& cfg);
DisparityPlan plan_of(const RunConfig& cfg);
NetworkConfig network_config_of(const RunConfig& cfg);
SceneDistribution scene_distribution_of(const RunConfig& cfg);

}  // namespace svx
