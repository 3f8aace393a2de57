#include "stereovox/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "stereovox/checkpoint.hpp"
#include "stereovox/io.hpp"

namespace svx {

namespace fs = std::filesystem;

Augment augment_from_string(const std::string& s) {
  if (s == "none") return Augment::none;
  if (s == "retexture") return Augment::retexture;
  throw std::invalid_argument("unknown augmentation '" + s + "' (none, retexture)");
}

std::string to_string(Augment a) { return a == Augment::retexture ? "retexture" : "none"; }

void TrainConfig::validate() const {
  network.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam moment coefficients must be in [0, 1)");
  if ((mode == DecodeMode::straight) != (network.decoder.mode == DecodeMode::straight))
    throw std::invalid_argument("straight training needs a straight network");
  if ((eval_mode == DecodeMode::straight) != (mode == DecodeMode::straight))
    throw std::invalid_argument("straight networks are evaluated in straight mode only");
  const auto w = effective_weights(*this);
  for (double x : w.w)
    if (!(x >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
}

TrainConfig train_config_of(const RunConfig& c) {
  if (!c.seed) throw std::invalid_argument("a master seed is required (--seed)");
  TrainConfig t;
  t.network = network_config_of(c);
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.learning_rate = c.learning_rate;
  t.beta1 = c.beta1;
  t.beta2 = c.beta2;
  t.seed = *c.seed;
  t.mode = decode_mode_from_string(c.train_mode);
  t.eval_mode = decode_mode_from_string(c.eval_mode);
  t.weights.w = c.loss_weights;
  t.augment = augment_from_string(c.augment);
  t.out_dir = c.out_dir;
  t.validate();
  return t;
}

LossWeights effective_weights(const TrainConfig& cfg) {
  const int L = cfg.network.decoder.levels;
  if (cfg.mode == DecodeMode::straight) return {{1.0}};
  if (cfg.weights.w.empty()) return LossWeights::for_levels(L);
  if (static_cast<int>(cfg.weights.w.size()) != L)
    throw std::invalid_argument("loss_weights has " + std::to_string(cfg.weights.w.size()) + " entries for " +
                                std::to_string(L) + " levels");
  return cfg.weights;
}

namespace {

std::string join_losses(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << "L" << i + 1 << "=" << v[i];
  return os.str();
}

struct ParamSnapshot {
  std::vector<std::vector<float>> values;

  static ParamSnapshot take(const nn::ParameterStore& ps) {
    ParamSnapshot s;
    for (const auto& p : ps.all()) s.values.push_back(p.value.data);
    return s;
  }
  void restore(nn::ParameterStore& ps) const {
    std::size_t i = 0;
    for (auto& p : ps.all()) p.value.data = values[i++];
  }
};

}  // namespace

double train_step(VoxelNet& net, nn::Adam& opt, const TrainConfig& cfg, const std::vector<const StereoSample*>& batch,
                  std::vector<double>* level_losses) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto weights = effective_weights(cfg);
  LossWeights scaled = weights;
  for (auto& w : scaled.w) w /= static_cast<double>(batch.size());

  net.params().zero_grad();
  double total = 0.0;
  std::vector<double> levels(weights.w.size(), 0.0);
  VoxelNet::Tape tape;
  for (const auto* s : batch) {
    const auto out = net.forward(s->left, s->right, cfg.mode, &s->gt_pyramid, &tape);
    ProbabilityPyramid grad;
    const auto loss = total_loss(out.probabilities, s->gt_pyramid, scaled, &grad);
    double unweighted = 0.0;
    for (std::size_t l = 0; l < loss.per_level.size(); ++l) {
      levels[l] += loss.per_level[l] / static_cast<double>(batch.size());
      unweighted += weights.w[l] * loss.per_level[l];
    }
    if (!std::isfinite(unweighted))
      throw TrainingDiverged("non-finite loss on sample " + s->id + " (" + join_losses(loss.per_level) + ")");
    total += unweighted;
    net.backward(tape, grad);
  }
  opt.step(net.params());
  if (level_losses) *level_losses = levels;
  return total / static_cast<double>(batch.size());
}

double validation_loss(const VoxelNet& net, const TrainConfig& cfg, const std::vector<StereoSample>& samples) {
  if (samples.empty()) return 0.0;
  const auto weights = effective_weights(cfg);
  double sum = 0.0;
  for (const auto& s : samples) {
    const auto out = net.forward(s.left, s.right, cfg.mode, &s.gt_pyramid, nullptr);
    sum += total_loss(out.probabilities, s.gt_pyramid, weights).total;
  }
  return sum / static_cast<double>(samples.size());
}

MetricsReport evaluate(const VoxelNet& net, const std::vector<StereoSample>& samples, DecodeMode mode,
                       const std::string& name) {
  const auto& cfg = net.config();
  const int L = cfg.decoder.levels;
  const float tau = static_cast<float>(cfg.decoder.mask_threshold);
  MetricsReport r;
  r.name = name;
  r.samples = static_cast<int>(samples.size());
  r.per_level.resize(static_cast<std::size_t>(L));
  for (int l = 1; l <= L; ++l) r.per_level[static_cast<std::size_t>(l - 1)] = {l, cfg.decoder.resolution(l), 0.0, 0.0};
  const bool pruned = mode == DecodeMode::sparse_gt || mode == DecodeMode::sparse_pred;
  double macs = 0.0, decoder_macs = 0.0;
  for (const auto& s : samples) {
    const auto out = net.forward(s.left, s.right, mode, &s.gt_pyramid, nullptr);
    OccupancyPyramid pred = binarize(out.probabilities, tau);
    if (mode == DecodeMode::straight) pred = build_pyramid(pred.level(L), L);
    for (int l = 1; l <= L; ++l) {
      auto& m = r.per_level[static_cast<std::size_t>(l - 1)];
      m.iou += eval_iou(pred.level(l), s.gt_pyramid.level(l));
      m.cd += chamfer_distance(pred.level(l), s.gt_pyramid.level(l), cfg.grid);
    }
    const auto rep = count_macs(cfg, pruned ? &out.masks : nullptr);
    macs += static_cast<double>(rep.total());
    decoder_macs += static_cast<double>(rep.decoder());
    r.parameters = rep.parameters;
  }
  if (!samples.empty()) {
    const double n = static_cast<double>(samples.size());
    for (auto& m : r.per_level) {
      m.iou /= n;
      m.cd /= n;
    }
    r.macs = std::llround(macs / n);
    r.decoder_macs = std::llround(decoder_macs / n);
  } else {
    const auto rep = count_macs(cfg);
    r.macs = rep.total();
    r.decoder_macs = rep.decoder();
    r.parameters = rep.parameters;
  }
  return r;
}

TrainResult train(VoxelNet& net, const TrainConfig& cfg, const std::vector<StereoSample>& train_set,
                  const std::vector<StereoSample>& val_set) {
  cfg.validate();
  if (net.config() != cfg.network) throw std::invalid_argument("network does not match the training configuration");
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  nn::Adam opt;
  opt.lr = cfg.learning_rate;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;

  TrainResult result;
  ParamSnapshot best = ParamSnapshot::take(net.params());
  std::vector<std::size_t> order(train_set.size());
  std::vector<StereoSample> augmented;
  int steps = 0;
  bool stop = false;
  using clock = std::chrono::steady_clock;

  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    const auto t0 = clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    if (cfg.augment == Augment::retexture && epoch > 1) {
      if (augmented.empty()) augmented = train_set;
      for (std::size_t i = 0; i < augmented.size(); ++i) {
        auto views = render_scene(retextured(train_set[i].scene, static_cast<std::uint64_t>(epoch)));
        augmented[i].left = std::move(views.left);
        augmented[i].right = std::move(views.right);
      }
    }
    const auto& samples = augmented.empty() ? train_set : augmented;

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const StereoSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch.push_back(&samples[order[i]]);
      double loss = 0.0;
      try {
        loss = train_step(net, opt, cfg, batch);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches + 1) + ": " +
                               e.what());
      }
      result.step_losses.push_back(loss);
      epoch_loss += loss;
      ++batches;
      if (cfg.max_steps >= 0 && ++steps >= cfg.max_steps) {
        stop = true;
        break;
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / std::max(1, batches);
    if (!val_set.empty()) {
      log.val_loss = validation_loss(net, cfg, val_set);
      const auto m = evaluate(net, val_set, cfg.eval_mode);
      for (const auto& l : m.per_level) log.val_iou.push_back(l.iou);
    }
    log.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    const double score = log.val_iou.empty() ? -log.train_loss : log.val_iou.back();
    if (result.best_epoch < 0 || score > result.best_val_iou) {
      result.best_epoch = epoch;
      result.best_val_iou = score;
      best = ParamSnapshot::take(net.params());
      if (!cfg.out_dir.empty()) save_checkpoint(cfg.out_dir / "best.ckpt", net, {{"epoch", epoch}, {"seed", cfg.seed}});
    }
    if (cfg.verbose) {
      std::printf("epoch %3d  train %.4f  val %.4f  iou", epoch, log.train_loss, log.val_loss);
      for (double v : log.val_iou) std::printf(" %.3f", v);
      std::printf("  (%.1fs)\n", log.seconds);
      std::fflush(stdout);
    }
    result.epochs.push_back(std::move(log));
  }

  if (!cfg.out_dir.empty()) {
    save_checkpoint(cfg.out_dir / "last.ckpt", net, {{"epoch", result.epochs.size()}, {"seed", cfg.seed}});
    write_text(cfg.out_dir / "loss_curve.csv", loss_curve_csv(result));
    std::ostringstream steps_csv;
    steps_csv.precision(9);
    steps_csv << "step,loss\n";
    for (std::size_t i = 0; i < result.step_losses.size(); ++i) steps_csv << i + 1 << ',' << result.step_losses[i] << '\n';
    write_text(cfg.out_dir / "step_losses.csv", steps_csv.str());
  }
  best.restore(net.params());
  return result;
}

std::string loss_curve_csv(const TrainResult& r) {
  std::size_t L = 0;
  for (const auto& e : r.epochs) L = std::max(L, e.val_iou.size());
  std::ostringstream os;
  os.precision(9);
  os << "epoch,train_loss,val_loss";
  for (std::size_t l = 1; l <= L; ++l) os << ",val_iou_l" << l;
  os << '\n';
  for (const auto& e : r.epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.val_loss;
    for (std::size_t l = 0; l < L; ++l) os << ',' << (l < e.val_iou.size() ? e.val_iou[l] : 0.0);
    os << '\n';
  }
  return os.str();
}

std::vector<AblationVariant> cost_volume_variants(const RunConfig& base) {
  const int n = base.plan_count;
  return {
      {"full-" + std::to_string(n), {{"plan_source", "full"}, {"plan_count", std::to_string(n)}}},
      {"even-" + std::to_string(n / 2),
       {{"plan_source", "even"}, {"plan_count", std::to_string(n / 2)}, {"plan_stride", "2"}}},
      {"even-" + std::to_string(n / 4),
       {{"plan_source", "even"}, {"plan_count", std::to_string(n / 4)}, {"plan_stride", "4"}}},
      {"voxel-" + std::to_string(plan_disparity_levels(camera_of(base), grid_of(base), base.step_scale).size()),
       {{"plan_source", "voxel"}}},
  };
}

std::vector<AblationVariant> decode_variants() {
  return {
      {"straight", {{"train_mode", "straight"}, {"eval_mode", "straight"}}},
      {"dense", {{"train_mode", "dense"}, {"eval_mode", "dense"}}},
      {"sparse_gt", {{"train_mode", "sparse_gt"}, {"eval_mode", "sparse_gt"}}},
      {"sparse_pred", {{"train_mode", "sparse_gt"}, {"eval_mode", "sparse_pred"}}},
  };
}

std::vector<MetricsReport> ablate(const RunConfig& base, const std::vector<AblationVariant>& variants,
                                  const std::vector<StereoSample>& train_set, const std::vector<StereoSample>& val_set,
                                  const std::vector<StereoSample>& test_set) {
  std::vector<MetricsReport> rows;
  for (const auto& v : variants) {
    RunConfig c = base;
    for (const auto& [k, val] : v.overrides) set_config_value(c, k, val);
    if (!base.out_dir.empty()) c.out_dir = (fs::path(base.out_dir) / v.name).string();
    TrainConfig tc = train_config_of(c);
    VoxelNet net(tc.network);
    net.init(tc.seed);
    train(net, tc, train_set, val_set);
    rows.push_back(evaluate(net, test_set, tc.eval_mode, v.name));
  }
  return rows;
}

}  // namespace svx
