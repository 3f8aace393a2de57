#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stereovox/geometry.hpp"
#include "stereovox/grid.hpp"
#include "stereovox/nn.hpp"

namespace svx {

enum class DecodeMode { straight, dense, sparse_gt, sparse_pred };
std::string to_string(DecodeMode m);
DecodeMode decode_mode_from_string(const std::string& s);

/// How fractional feature-scale shifts are sampled from the right feature map.
enum class ShiftMode { nearest, linear };
std::string to_string(ShiftMode m);
ShiftMode shift_mode_from_string(const std::string& s);

struct DecoderConfig {
  int n_latent = 128;
  /// Resolution of the stem volume; level l has resolution delta * 2^l.
  int initial_resolution = 4;
  int levels = 3;
  double mask_threshold = 0.5;
  DecodeMode mode = DecodeMode::dense;
  /// Stem channels followed by one width per level (levels + 1 entries).
  std::vector<int> channels = {32, 16, 8, 4};

  int resolution(int level) const { return initial_resolution << level; }
  void validate() const;
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct NetworkConfig {
  CameraModel camera;
  GridSpec grid = GridSpec::cube(0.5, 32);
  DisparityPlan plan;
  ShiftMode shift = ShiftMode::nearest;
  /// Hidden widths of the two stride-2 feature stages.
  std::vector<int> feature_hidden = {8, 16};
  int feature_channels = 16;
  /// Per-plane matching width after the pointwise match layer.
  int match_channels = 8;
  /// Widths of the stride-2 encoder stages.
  std::vector<int> encoder_channels = {32, 64};
  DecoderConfig decoder;

  void validate() const;
  int feature_height() const { return camera.image_height / kFeatureDownsample; }
  int feature_width() const { return camera.image_width / kFeatureDownsample; }
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

nlohmann::json to_json(const DecoderConfig& c);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// C x H/4 x W/4 feature map.
using FeatureMap = nn::Tensor;

/// 2C x |D| x H/4 x W/4, left channel i at 2i and right channel i at 2i+1.
struct CostVolume {
  nn::Tensor data;
  DisparityPlan plan;
};

/// Builds the interlaced cost volume. Shifts are levels / 4 feature cells;
/// columns shifted in from outside the map are zero.
CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, const DisparityPlan& plan,
                             ShiftMode shift = ShiftMode::nearest);
/// Adjoint of build_cost_volume; accumulates into grad_left / grad_right.
void cost_volume_backward(const nn::Tensor& grad, const DisparityPlan& plan, ShiftMode shift, FeatureMap& grad_left,
                          FeatureMap& grad_right);

/// Image to network input tensor [1, H, W], centered around zero.
nn::Tensor image_tensor(const Image<float>& img);

/// Per-level binary masks that pruned each level: level l of the decode was
/// computed only under upsample(mask[l-1]).
struct DecodeOutput {
  ProbabilityPyramid probabilities;
  /// masks[l-1] is the binary mask derived at level l (empty in straight mode).
  std::vector<OccupancyGrid> masks;
};

struct MacReport {
  std::int64_t features = 0;
  std::int64_t cost_volume = 0;
  std::int64_t match = 0;
  std::int64_t encoder = 0;
  std::int64_t stem = 0;
  /// decoder_levels[l-1]: MACs of level l (deconv, conv, head).
  std::vector<std::int64_t> decoder_levels;
  std::int64_t parameters = 0;

  std::int64_t decoder() const;
  std::int64_t total() const;
};
nlohmann::json to_json(const MacReport& r);

/// Analytic MAC and parameter count. Without masks every site is counted;
/// with masks (masks[l-1] pruning level l+1) only active sites are. A decode
/// truncated at `max_level` counts nothing beyond it.
MacReport count_macs(const NetworkConfig& cfg, const std::vector<OccupancyGrid>* masks = nullptr,
                     int max_level = -1);

class VoxelNet {
 public:
  explicit VoxelNet(NetworkConfig cfg);
  VoxelNet(const VoxelNet&) = delete;
  VoxelNet& operator=(const VoxelNet&) = delete;

  /// He-normal weights from a seeded engine; head biases start negative so
  /// the initial prediction is mostly free space.
  void init(std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  /// Intermediate activations of one sample, kept for the backward pass.
  struct Tape {
    std::array<std::vector<nn::Tensor>, 2> feature_acts;  // input then each stage output, per view
    CostVolume cost;
    nn::Tensor match;  // [M, D, Hf, Wf] after ReLU
    std::vector<nn::Tensor> encoder_acts;  // reshaped match, then each stage output
    std::vector<float> latent;  // standardized
    float latent_inv_std = 1.0f;
    nn::Tensor stem;  // [c0, d, d, d] after ReLU
    struct Level {
      nn::ActiveSet active;  // sites computed at this level
      nn::Tensor up;         // deconv output after ReLU and mask
      nn::Tensor body;       // conv output after ReLU and mask
      nn::Tensor prob;       // [1, r, r, r] masked sigmoid (finest only in straight mode)
      bool has_head = false;
    };
    std::vector<Level> levels;
    DecodeMode mode = DecodeMode::dense;
  };

  FeatureMap extract_features(const Image<float>& image) const;
  std::vector<float> encode(const CostVolume& cost) const;
  /// Runs the decoder through `max_level` (all levels when -1). sparse_gt needs `gt`.
  DecodeOutput decode(const std::vector<float>& latent, DecodeMode mode, const OccupancyPyramid* gt = nullptr,
                      int max_level = -1) const;

  /// Full forward pass recording a tape.
  DecodeOutput forward(const Image<float>& left, const Image<float>& right, DecodeMode mode,
                       const OccupancyPyramid* gt, Tape* tape) const;
  /// Latent only (features, cost volume and encoder).
  std::vector<float> infer_latent(const Image<float>& left, const Image<float>& right) const;

  /// Accumulates parameter gradients given dLoss/dprob per produced level
  /// (same layout as the output pyramid).
  void backward(const Tape& tape, const ProbabilityPyramid& grad_prob);

 private:
  struct FeatureStage {
    nn::Conv2d conv;
    bool relu = true;
  };
  struct Level {
    nn::Deconv3d deconv;
    nn::Conv3d conv;
    nn::Pointwise head;
  };

  nn::Tensor run_features(const Image<float>& image, std::vector<nn::Tensor>* acts) const;
  std::vector<float> run_encoder(const CostVolume& cost, nn::Tensor* match, std::vector<nn::Tensor>* acts,
                                 float* inv_std) const;
  DecodeOutput run_decoder(const std::vector<float>& latent, DecodeMode mode, const OccupancyPyramid* gt,
                           int max_level, Tape* tape) const;
  void features_backward(const std::vector<nn::Tensor>& acts, nn::Tensor grad);

  NetworkConfig cfg_;
  nn::ParameterStore params_;
  std::vector<FeatureStage> features_;
  nn::Pointwise match_;
  std::vector<nn::Conv2d> encoder_;
  nn::Linear to_latent_;
  nn::Linear stem_;
  std::vector<Level> levels_;
  int encoder_out_size_ = 0;
};

}  // namespace svx
