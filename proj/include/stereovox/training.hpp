#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stereovox/config.hpp"
#include "stereovox/losses.hpp"
#include "stereovox/scene.hpp"
#include "stereovox/voxelnet.hpp"

namespace svx {

/// Training augmentation. retexture re-renders each training scene from the
/// second epoch on with texture seeds remixed by the epoch; geometry and
/// targets stay fixed.
enum class Augment { none, retexture };
Augment augment_from_string(const std::string& s);
std::string to_string(Augment a);

struct TrainConfig {
  NetworkConfig network;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  DecodeMode mode = DecodeMode::sparse_gt;
  DecodeMode eval_mode = DecodeMode::sparse_pred;
  LossWeights weights;
  Augment augment = Augment::none;
  /// Stop after this many optimizer steps (-1: run every epoch).
  int max_steps = -1;
  /// Where best.ckpt, last.ckpt and the loss curves go; empty keeps everything in memory.
  std::filesystem::path out_dir;
  bool verbose = false;

  void validate() const;
};

/// Training settings of a run configuration (seed must be set).
TrainConfig train_config_of(const RunConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::vector<double> val_iou;  ///< per level, coarse to fine
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  /// Mean batch loss of every optimizer step.
  std::vector<double> step_losses;
  int best_epoch = -1;
  double best_val_iou = -1.0;
};

/// Thrown when a loss turns non-finite; the message names epoch, batch and level losses.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trains `net` in place with Adam, shuffling the training set each epoch from
/// (seed, epoch). After every epoch the validation set is scored and the best
/// finest-level IoU weights are kept; `net` ends holding those weights.
TrainResult train(VoxelNet& net, const TrainConfig& cfg, const std::vector<StereoSample>& train_set,
                  const std::vector<StereoSample>& val_set);

/// One optimizer step over a batch; returns the mean loss.
double train_step(VoxelNet& net, nn::Adam& opt, const TrainConfig& cfg, const std::vector<const StereoSample*>& batch,
                  std::vector<double>* level_losses = nullptr);

/// Weights used for a network's produced levels.
LossWeights effective_weights(const TrainConfig& cfg);

/// Per-level IoU and Chamfer distance over `samples`, with MACs averaged over
/// the masks each sample produced. Straight decodes are scored at coarser
/// levels through the OR-pyramid of their finest prediction.
MetricsReport evaluate(const VoxelNet& net, const std::vector<StereoSample>& samples, DecodeMode mode,
                       const std::string& name = "");

/// Mean validation loss in the training mode.
double validation_loss(const VoxelNet& net, const TrainConfig& cfg, const std::vector<StereoSample>& samples);

/// CSV of epoch logs: epoch, train_loss, val_loss, val_iou_l*. Wall time is left out so
/// equal seeds give equal files.
std::string loss_curve_csv(const TrainResult& r);

struct AblationVariant {
  std::string name;
  /// key = value overrides applied on top of the base configuration.
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// Cost-volume axis of the comparison: full, two even strides, and the voxel plan.
std::vector<AblationVariant> cost_volume_variants(const RunConfig& base);
/// Decode axis: straight, dense, sparse_gt, sparse_pred.
std::vector<AblationVariant> decode_variants();

/// Trains and evaluates each variant on the same data and seed.
std::vector<MetricsReport> ablate(const RunConfig& base, const std::vector<AblationVariant>& variants,
                                  const std::vector<StereoSample>& train_set, const std::vector<StereoSample>& val_set,
                                  const std::vector<StereoSample>& test_set);

}  // namespace svx
