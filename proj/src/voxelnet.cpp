#include "stereovox/voxelnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "stereovox/io.hpp"

namespace svx {

using nlohmann::json;
using nn::ActiveSet;
using nn::Tensor;
using nn::shape_string;

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::straight: return "straight";
    case DecodeMode::dense: return "dense";
    case DecodeMode::sparse_gt: return "sparse_gt";
    case DecodeMode::sparse_pred: return "sparse_pred";
  }
  return "unknown";
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "straight") return DecodeMode::straight;
  if (s == "dense") return DecodeMode::dense;
  if (s == "sparse_gt") return DecodeMode::sparse_gt;
  if (s == "sparse_pred") return DecodeMode::sparse_pred;
  throw std::invalid_argument("unknown decode mode '" + s + "'");
}

std::string to_string(ShiftMode m) { return m == ShiftMode::nearest ? "nearest" : "linear"; }

ShiftMode shift_mode_from_string(const std::string& s) {
  if (s == "nearest") return ShiftMode::nearest;
  if (s == "linear") return ShiftMode::linear;
  throw std::invalid_argument("unknown shift mode '" + s + "'");
}

void DecoderConfig::validate() const {
  if (n_latent <= 0) throw std::invalid_argument("n_latent must be positive");
  if (initial_resolution <= 0) throw std::invalid_argument("initial resolution must be positive");
  if (levels < 1) throw std::invalid_argument("decoder needs at least one level");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw std::invalid_argument("mask threshold must be in (0,1)");
  if (static_cast<int>(channels.size()) != levels + 1)
    throw std::invalid_argument("decoder channels need levels + 1 entries, got " + std::to_string(channels.size()));
  for (int c : channels)
    if (c <= 0) throw std::invalid_argument("decoder channel widths must be positive");
}

void NetworkConfig::validate() const {
  camera.validate();
  grid.validate();
  decoder.validate();
  if (!grid.is_cubic()) throw std::invalid_argument("the octree decoder needs a cubic grid");
  if (decoder.resolution(decoder.levels) != grid.nx)
    throw std::invalid_argument("finest decoder resolution " + std::to_string(decoder.resolution(decoder.levels)) +
                                " does not match grid resolution " + std::to_string(grid.nx));
  if (camera.image_width % kFeatureDownsample || camera.image_height % kFeatureDownsample)
    throw std::invalid_argument("image dimensions must be divisible by 4");
  if (plan.levels.empty()) throw std::invalid_argument("disparity plan is empty");
  if (feature_hidden.size() != 2) throw std::invalid_argument("feature_hidden needs two widths");
  if (feature_channels <= 0 || match_channels <= 0) throw std::invalid_argument("channel widths must be positive");
  if (encoder_channels.empty()) throw std::invalid_argument("encoder needs at least one stage");
}

json to_json(const DecoderConfig& c) {
  return {{"n_latent", c.n_latent},         {"initial_resolution", c.initial_resolution},
          {"levels", c.levels},             {"mask_threshold", c.mask_threshold},
          {"mode", to_string(c.mode)},      {"channels", c.channels}};
}

DecoderConfig decoder_config_from_json(const json& j) {
  DecoderConfig c;
  c.n_latent = j.at("n_latent").get<int>();
  c.initial_resolution = j.at("initial_resolution").get<int>();
  c.levels = j.at("levels").get<int>();
  c.mask_threshold = j.at("mask_threshold").get<double>();
  c.mode = decode_mode_from_string(j.at("mode").get<std::string>());
  c.channels = j.at("channels").get<std::vector<int>>();
  return c;
}

json to_json(const NetworkConfig& c) {
  return {{"camera", to_json(c.camera)},
          {"grid", to_json(c.grid)},
          {"plan", to_json(c.plan)},
          {"shift", to_string(c.shift)},
          {"feature_hidden", c.feature_hidden},
          {"feature_channels", c.feature_channels},
          {"match_channels", c.match_channels},
          {"encoder_channels", c.encoder_channels},
          {"decoder", to_json(c.decoder)}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig c;
  c.camera = camera_from_json(j.at("camera"));
  c.grid = grid_from_spec_json(j.at("grid"));
  c.plan = plan_from_json(j.at("plan"));
  c.shift = shift_mode_from_string(j.at("shift").get<std::string>());
  c.feature_hidden = j.at("feature_hidden").get<std::vector<int>>();
  c.feature_channels = j.at("feature_channels").get<int>();
  c.match_channels = j.at("match_channels").get<int>();
  c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  c.decoder = decoder_config_from_json(j.at("decoder"));
  return c;
}

// ---------------------------------------------------------------------------
// Cost volume

namespace {

struct Shift {
  int cells = 0;
  float frac = 0.0f;  // weight of column x - cells - 1
};

Shift shift_of(double level, ShiftMode mode) {
  const double s = level / kFeatureDownsample;
  if (mode == ShiftMode::nearest) return {static_cast<int>(std::lround(s)), 0.0f};
  const double k = std::floor(s);
  return {static_cast<int>(k), static_cast<float>(s - k)};
}

void check_plan(const DisparityPlan& plan, int feature_width) {
  if (plan.levels.empty()) throw std::invalid_argument("cost volume: empty disparity plan");
  for (double d : plan.levels) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("cost volume: disparity levels must be >= 0");
    if (d / kFeatureDownsample >= feature_width)
      throw std::invalid_argument("cost volume: disparity " + std::to_string(d) + " px shifts by at least the feature width " +
                                  std::to_string(feature_width));
  }
}

}  // namespace

CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, const DisparityPlan& plan,
                             ShiftMode mode) {
  if (left.shape != right.shape || left.shape.size() != 3)
    throw std::invalid_argument("cost volume: feature maps must share a [C,H,W] shape, got " +
                                shape_string(left.shape) + " and " + shape_string(right.shape));
  const int C = left.dim(0), H = left.dim(1), W = left.dim(2);
  check_plan(plan, W);
  const int D = static_cast<int>(plan.levels.size());
  CostVolume cv{Tensor({2 * C, D, H, W}), plan};
  const std::size_t HW = static_cast<std::size_t>(H) * W;
  for (int d = 0; d < D; ++d) {
    const Shift sh = shift_of(plan.levels[static_cast<std::size_t>(d)], mode);
    for (int c = 0; c < C; ++c) {
      float* outl = cv.data.ptr() + (static_cast<std::size_t>(2 * c) * D + d) * HW;
      float* outr = cv.data.ptr() + (static_cast<std::size_t>(2 * c + 1) * D + d) * HW;
      const float* fl = left.ptr() + c * HW;
      const float* fr = right.ptr() + c * HW;
      std::copy(fl, fl + HW, outl);
      for (int y = 0; y < H; ++y) {
        const float* row = fr + static_cast<std::size_t>(y) * W;
        float* o = outr + static_cast<std::size_t>(y) * W;
        for (int x = sh.cells; x < W; ++x) o[x] = row[x - sh.cells];
        if (sh.frac != 0.0f) {
          const float a = 1.0f - sh.frac;
          for (int x = W - 1; x >= sh.cells; --x) {
            const float next = x - sh.cells - 1 >= 0 ? row[x - sh.cells - 1] : 0.0f;
            o[x] = a * o[x] + sh.frac * next;
          }
        }
      }
    }
  }
  return cv;
}

void cost_volume_backward(const Tensor& grad, const DisparityPlan& plan, ShiftMode mode, FeatureMap& grad_left,
                          FeatureMap& grad_right) {
  const int C = grad.dim(0) / 2, D = grad.dim(1), H = grad.dim(2), W = grad.dim(3);
  if (grad_left.shape != std::vector<int>{C, H, W}) grad_left = Tensor({C, H, W});
  if (grad_right.shape != std::vector<int>{C, H, W}) grad_right = Tensor({C, H, W});
  const std::size_t HW = static_cast<std::size_t>(H) * W;
  for (int d = 0; d < D; ++d) {
    const Shift sh = shift_of(plan.levels[static_cast<std::size_t>(d)], mode);
    const float a = 1.0f - sh.frac;
    for (int c = 0; c < C; ++c) {
      const float* gl = grad.ptr() + (static_cast<std::size_t>(2 * c) * D + d) * HW;
      const float* gr = grad.ptr() + (static_cast<std::size_t>(2 * c + 1) * D + d) * HW;
      float* fl = grad_left.ptr() + c * HW;
      float* fr = grad_right.ptr() + c * HW;
      for (std::size_t i = 0; i < HW; ++i) fl[i] += gl[i];
      for (int y = 0; y < H; ++y) {
        const float* g = gr + static_cast<std::size_t>(y) * W;
        float* row = fr + static_cast<std::size_t>(y) * W;
        for (int x = sh.cells; x < W; ++x) {
          row[x - sh.cells] += a * g[x];
          if (sh.frac != 0.0f && x - sh.cells - 1 >= 0) row[x - sh.cells - 1] += sh.frac * g[x];
        }
      }
    }
  }
}

Tensor image_tensor(const Image<float>& img) {
  Tensor t({1, img.height(), img.width()});
  for (std::size_t i = 0; i < img.size(); ++i) t.data[i] = img[i] - 0.5f;
  return t;
}

// ---------------------------------------------------------------------------
// MAC accounting

std::int64_t MacReport::decoder() const {
  return stem + std::accumulate(decoder_levels.begin(), decoder_levels.end(), std::int64_t{0});
}

std::int64_t MacReport::total() const { return features + cost_volume + match + encoder + decoder(); }

json to_json(const MacReport& r) {
  return {{"features", r.features}, {"cost_volume", r.cost_volume}, {"match", r.match},
          {"encoder", r.encoder},   {"stem", r.stem},               {"decoder_levels", r.decoder_levels},
          {"decoder", r.decoder()}, {"total", r.total()},           {"parameters", r.parameters}};
}

namespace {

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

struct Conv2dShape {
  int cin, cout, k, stride, pad;
};

std::vector<Conv2dShape> feature_shapes(const NetworkConfig& cfg) {
  const int h0 = cfg.feature_hidden[0], h1 = cfg.feature_hidden[1];
  return {{1, h0, 3, 2, 1}, {h0, h0, 3, 1, 1}, {h0, h1, 3, 2, 1}, {h1, cfg.feature_channels, 3, 1, 1}};
}

std::vector<Conv2dShape> encoder_shapes(const NetworkConfig& cfg) {
  std::vector<Conv2dShape> out;
  int cin = cfg.match_channels * static_cast<int>(cfg.plan.levels.size());
  for (int c : cfg.encoder_channels) {
    out.push_back({cin, c, 3, 2, 1});
    cin = c;
  }
  return out;
}

std::int64_t conv2d_params(const Conv2dShape& s) {
  return static_cast<std::int64_t>(s.k) * s.k * s.cin * s.cout + s.cout;
}

int encoder_flat_size(const NetworkConfig& cfg) {
  int h = cfg.feature_height(), w = cfg.feature_width();
  for (const auto& s : encoder_shapes(cfg)) {
    h = conv_out(h, s.k, s.stride, s.pad);
    w = conv_out(w, s.k, s.stride, s.pad);
  }
  return cfg.encoder_channels.back() * h * w;
}

}  // namespace

MacReport count_macs(const NetworkConfig& cfg, const std::vector<OccupancyGrid>* masks, int max_level) {
  cfg.validate();
  const auto& dec = cfg.decoder;
  if (max_level == -1) max_level = dec.levels;
  if (max_level < 1 || max_level > dec.levels) throw std::invalid_argument("count_macs: invalid max level");
  MacReport r;

  int h = cfg.camera.image_height, w = cfg.camera.image_width;
  for (const auto& s : feature_shapes(cfg)) {
    h = conv_out(h, s.k, s.stride, s.pad);
    w = conv_out(w, s.k, s.stride, s.pad);
    r.features += 2LL * s.k * s.k * s.cin * s.cout * h * w;
    r.parameters += conv2d_params(s);
  }

  const std::int64_t C = cfg.feature_channels, D = static_cast<std::int64_t>(cfg.plan.levels.size());
  const std::int64_t Hf = cfg.feature_height(), Wf = cfg.feature_width();
  for (double d : cfg.plan.levels)
    if (shift_of(d, cfg.shift).frac != 0.0f) r.cost_volume += 2 * C * Hf * Wf;

  r.match = 2 * C * cfg.match_channels * D * Hf * Wf;
  r.parameters += 2 * C * cfg.match_channels + cfg.match_channels;

  h = static_cast<int>(Hf);
  w = static_cast<int>(Wf);
  for (const auto& s : encoder_shapes(cfg)) {
    h = conv_out(h, s.k, s.stride, s.pad);
    w = conv_out(w, s.k, s.stride, s.pad);
    r.encoder += static_cast<std::int64_t>(s.k) * s.k * s.cin * s.cout * h * w;
    r.parameters += conv2d_params(s);
  }
  const std::int64_t flat = encoder_flat_size(cfg);
  r.encoder += flat * dec.n_latent;
  r.parameters += flat * dec.n_latent + dec.n_latent;

  const std::int64_t d3 = static_cast<std::int64_t>(dec.initial_resolution) * dec.initial_resolution *
                          dec.initial_resolution;
  r.stem = dec.n_latent * dec.channels[0] * d3;
  r.parameters += dec.n_latent * dec.channels[0] * d3 + dec.channels[0] * d3;

  const bool straight = dec.mode == DecodeMode::straight;
  for (int l = 1; l <= dec.levels; ++l) {
    const std::int64_t ci = dec.channels[static_cast<std::size_t>(l - 1)];
    const std::int64_t co = dec.channels[static_cast<std::size_t>(l)];
    r.parameters += ci * co * 8 + co + 27 * co * co + co;
    if (!straight || l == dec.levels) r.parameters += co + 1;
    if (l > max_level) continue;
    const std::int64_t res = dec.resolution(l);
    std::int64_t sites = res * res * res;
    if (masks && l > 1) {
      if (static_cast<int>(masks->size()) < l - 1) throw std::invalid_argument("count_macs: missing level mask");
      sites = 8 * static_cast<std::int64_t>(count_occupied((*masks)[static_cast<std::size_t>(l - 2)]));
    }
    std::int64_t m = ci * co * sites + 27 * co * co * sites;
    if (!straight || l == max_level) m += co * sites;
    r.decoder_levels.push_back(m);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Network

VoxelNet::VoxelNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto fs = feature_shapes(cfg_);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto& s = fs[i];
    features_.push_back({nn::Conv2d(params_, "features." + std::to_string(i), s.cin, s.cout, s.k, s.stride, s.pad),
                         i + 1 < fs.size()});
  }
  match_ = nn::Pointwise(params_, "match", 2 * cfg_.feature_channels, cfg_.match_channels);
  const auto es = encoder_shapes(cfg_);
  for (std::size_t i = 0; i < es.size(); ++i) {
    const auto& s = es[i];
    encoder_.emplace_back(params_, "encoder." + std::to_string(i), s.cin, s.cout, s.k, s.stride, s.pad);
  }
  encoder_out_size_ = encoder_flat_size(cfg_);
  const auto& dec = cfg_.decoder;
  to_latent_ = nn::Linear(params_, "latent", encoder_out_size_, dec.n_latent);
  const int d = dec.initial_resolution;
  stem_ = nn::Linear(params_, "stem", dec.n_latent, dec.channels[0] * d * d * d);
  const bool straight = dec.mode == DecodeMode::straight;
  for (int l = 1; l <= dec.levels; ++l) {
    const int ci = dec.channels[static_cast<std::size_t>(l - 1)], co = dec.channels[static_cast<std::size_t>(l)];
    const std::string p = "decoder." + std::to_string(l);
    Level lv;
    lv.deconv = nn::Deconv3d(params_, p + ".deconv", ci, co);
    lv.conv = nn::Conv3d(params_, p + ".conv", co, co);
    if (!straight || l == dec.levels) lv.head = nn::Pointwise(params_, p + ".head", co, 1);
    levels_.push_back(lv);
  }
}

void VoxelNet::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& f : features_) f.conv.init(rng);
  match_.init(rng);
  // Start the match layer as signed left-right differences so a correct
  // disparity reads as a low response.
  auto& w = match_.weight().value.data;
  const int ci = match_.cin();
  for (int o = 0; o < match_.cout(); ++o)
    for (int c = 0; c + 1 < ci; c += 2) w[static_cast<std::size_t>(o * ci + c + 1)] = -w[static_cast<std::size_t>(o * ci + c)];
  for (auto& e : encoder_) e.init(rng);
  to_latent_.init(rng, 1.0);
  stem_.init(rng, 2.0);
  for (auto& lv : levels_) {
    lv.deconv.init(rng);
    lv.conv.init(rng);
    if (lv.head.cout() > 0) lv.head.init(rng, -2.0f);
  }
}

Tensor VoxelNet::run_features(const Image<float>& image, std::vector<Tensor>* acts) const {
  if (image.width() != cfg_.camera.image_width || image.height() != cfg_.camera.image_height)
    throw std::invalid_argument("image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                                ", network expects " + std::to_string(cfg_.camera.image_width) + "x" +
                                std::to_string(cfg_.camera.image_height));
  Tensor x = image_tensor(image);
  if (acts) acts->push_back(x);
  for (const auto& f : features_) {
    x = f.conv.forward(x);
    if (f.relu) nn::relu_inplace(x.data);
    if (acts) acts->push_back(x);
  }
  return x;
}

FeatureMap VoxelNet::extract_features(const Image<float>& image) const {
  if (image.width() % kFeatureDownsample || image.height() % kFeatureDownsample)
    throw std::invalid_argument("image dimensions must be divisible by 4");
  return run_features(image, nullptr);
}

std::vector<float> VoxelNet::run_encoder(const CostVolume& cost, Tensor* match, std::vector<Tensor>* acts,
                                         float* inv_std) const {
  const int D = static_cast<int>(cfg_.plan.levels.size());
  const std::vector<int> expected{2 * cfg_.feature_channels, D, cfg_.feature_height(), cfg_.feature_width()};
  if (cost.data.shape != expected)
    throw std::invalid_argument("encoder: cost volume shape " + shape_string(cost.data.shape) + " expected " +
                                shape_string(expected));
  Tensor m = match_.forward(cost.data);
  nn::relu_inplace(m.data);
  // [M, D, H, W] is already laid out as [M*D, H, W].
  Tensor x = m;
  x.shape = {cfg_.match_channels * D, cfg_.feature_height(), cfg_.feature_width()};
  if (match) *match = m;
  if (acts) acts->push_back(x);
  for (const auto& e : encoder_) {
    x = e.forward(x);
    nn::relu_inplace(x.data);
    if (acts) acts->push_back(x);
  }
  auto latent = to_latent_.forward(x.data);
  const float inv = nn::standardize_inplace(latent);
  if (inv_std) *inv_std = inv;
  return latent;
}

std::vector<float> VoxelNet::encode(const CostVolume& cost) const { return run_encoder(cost, nullptr, nullptr, nullptr); }

DecodeOutput VoxelNet::decode(const std::vector<float>& latent, DecodeMode mode, const OccupancyPyramid* gt,
                              int max_level) const {
  return run_decoder(latent, mode, gt, max_level, nullptr);
}

DecodeOutput VoxelNet::run_decoder(const std::vector<float>& latent, DecodeMode mode, const OccupancyPyramid* gt,
                                   int max_level, Tape* tape) const {
  const auto& dec = cfg_.decoder;
  if (max_level == -1) max_level = dec.levels;
  if (max_level < 1 || max_level > dec.levels)
    throw std::invalid_argument("decode level " + std::to_string(max_level) + " outside [1, " +
                                std::to_string(dec.levels) + "]");
  const bool straight = mode == DecodeMode::straight;
  if (straight != (cfg_.decoder.mode == DecodeMode::straight))
    throw std::invalid_argument("straight decoding needs a network built in straight mode and vice versa");
  if (mode == DecodeMode::sparse_gt) {
    if (!gt) throw std::invalid_argument("sparse_gt decoding needs a ground-truth pyramid");
    for (int l = 1; l < max_level; ++l)
      if (!gt->has_level(l) || gt->level(l).nx() != dec.resolution(l) || gt->level(l).ny() != dec.resolution(l) ||
          gt->level(l).nz() != dec.resolution(l))
        throw std::invalid_argument("ground-truth pyramid does not match the decoder resolution at level " +
                                    std::to_string(l));
  }
  const bool sparse = mode == DecodeMode::sparse_gt || mode == DecodeMode::sparse_pred;
  const int d = dec.initial_resolution;

  Tensor h({dec.channels[0], d, d, d});
  {
    auto s = stem_.forward(latent);
    std::copy(s.begin(), s.end(), h.data.begin());
    nn::relu_inplace(h.data);
  }
  if (tape) {
    tape->stem = h;
    tape->levels.clear();
    tape->mode = mode;
  }

  DecodeOutput out;
  out.probabilities.first_level = straight ? max_level : 1;
  ActiveSet prev_mask;
  const float tau = static_cast<float>(dec.mask_threshold);
  for (int l = 1; l <= max_level; ++l) {
    const Level& lv = levels_[static_cast<std::size_t>(l - 1)];
    const int r = dec.resolution(l);
    const bool masked = !straight && l > 1;
    ActiveSet active = masked ? prev_mask.upsample() : ActiveSet::all(r);

    Tensor up = sparse ? lv.deconv.forward_sparse(h, active) : lv.deconv.forward(h);
    nn::relu_inplace(up.data);
    if (masked && !sparse) nn::apply_mask(up, active);
    Tensor body = sparse ? lv.conv.forward_sparse(up, active) : lv.conv.forward(up);
    nn::relu_inplace(body.data);
    if (masked && !sparse) nn::apply_mask(body, active);

    const bool has_head = !straight || l == max_level;
    Tensor prob;
    if (has_head) {
      if (lv.head.cout() == 0) throw std::logic_error("decoder level has no head");
      prob = sparse ? lv.head.forward_sparse(body, active) : lv.head.forward(body);
      for (std::size_t i = 0; i < prob.numel(); ++i)
        prob.data[i] = active.mask[i] ? nn::sigmoid(prob.data[i]) : 0.0f;
      ProbabilityGrid g(r);
      std::copy(prob.data.begin(), prob.data.end(), g.values().begin());
      out.probabilities.levels.push_back(std::move(g));
      if (!straight) {
        OccupancyGrid m(r);
        if (mode == DecodeMode::sparse_gt) {
          if (l < max_level) m = gt->level(l);
          else m = binarize(out.probabilities.levels.back(), tau);
        } else {
          m = binarize(out.probabilities.levels.back(), tau);
        }
        prev_mask = ActiveSet::from_mask(r, m.values());
        out.masks.push_back(std::move(m));
      }
    }
    if (tape) tape->levels.push_back({std::move(active), std::move(up), body, std::move(prob), has_head});
    h = std::move(body);
  }
  return out;
}

DecodeOutput VoxelNet::forward(const Image<float>& left, const Image<float>& right, DecodeMode mode,
                               const OccupancyPyramid* gt, Tape* tape) const {
  if (!tape) return decode(infer_latent(left, right), mode, gt);
  tape->feature_acts[0].clear();
  tape->feature_acts[1].clear();
  tape->encoder_acts.clear();
  const Tensor fl = run_features(left, &tape->feature_acts[0]);
  const Tensor fr = run_features(right, &tape->feature_acts[1]);
  tape->cost = build_cost_volume(fl, fr, cfg_.plan, cfg_.shift);
  tape->latent = run_encoder(tape->cost, &tape->match, &tape->encoder_acts, &tape->latent_inv_std);
  return run_decoder(tape->latent, mode, gt, -1, tape);
}

std::vector<float> VoxelNet::infer_latent(const Image<float>& left, const Image<float>& right) const {
  const Tensor fl = run_features(left, nullptr);
  const Tensor fr = run_features(right, nullptr);
  return encode(build_cost_volume(fl, fr, cfg_.plan, cfg_.shift));
}

void VoxelNet::features_backward(const std::vector<Tensor>& acts, Tensor grad) {
  for (int i = static_cast<int>(features_.size()) - 1; i >= 0; --i) {
    const auto& f = features_[static_cast<std::size_t>(i)];
    if (f.relu) nn::relu_backward(acts[static_cast<std::size_t>(i) + 1].data, grad.data);
    Tensor gin;
    f.conv.backward(acts[static_cast<std::size_t>(i)], grad, i > 0 ? &gin : nullptr);
    grad = std::move(gin);
  }
}

void VoxelNet::backward(const Tape& tape, const ProbabilityPyramid& grad_prob) {
  const bool sparse = tape.mode == DecodeMode::sparse_gt || tape.mode == DecodeMode::sparse_pred;
  const int L = static_cast<int>(tape.levels.size());
  Tensor carry;  // gradient w.r.t. the body of the level being processed
  for (int l = L; l >= 1; --l) {
    const auto& lv = tape.levels[static_cast<std::size_t>(l - 1)];
    const Level& layer = levels_[static_cast<std::size_t>(l - 1)];
    Tensor g_body = l == L ? Tensor(lv.body.shape) : std::move(carry);
    if (lv.has_head) {
      const auto& gp = grad_prob.level(l);
      Tensor dz(lv.prob.shape);
      for (std::size_t i = 0; i < dz.numel(); ++i) {
        const float p = lv.prob.data[i];
        dz.data[i] = lv.active.mask[i] ? gp[i] * p * (1.0f - p) : 0.0f;
      }
      Tensor gh;
      if (sparse) layer.head.backward_sparse(lv.body, dz, lv.active, &gh);
      else layer.head.backward(lv.body, dz, &gh);
      for (std::size_t i = 0; i < gh.numel(); ++i) g_body.data[i] += gh.data[i];
    }
    nn::relu_backward(lv.body.data, g_body.data);
    Tensor g_up;
    if (sparse) layer.conv.backward_sparse(lv.up, g_body, lv.active, &g_up);
    else layer.conv.backward(lv.up, g_body, &g_up);
    nn::relu_backward(lv.up.data, g_up.data);
    const Tensor& h_prev = l == 1 ? tape.stem : tape.levels[static_cast<std::size_t>(l - 2)].body;
    Tensor g_prev;
    if (sparse) layer.deconv.backward_sparse(h_prev, g_up, lv.active, &g_prev);
    else layer.deconv.backward(h_prev, g_up, &g_prev);
    carry = std::move(g_prev);
  }

  nn::relu_backward(tape.stem.data, carry.data);
  std::vector<float> g_latent;
  stem_.backward(tape.latent, carry.data, &g_latent);
  nn::standardize_backward(tape.latent, tape.latent_inv_std, g_latent);

  const Tensor& flat = tape.encoder_acts.back();
  std::vector<float> g_flat;
  to_latent_.backward(flat.data, g_latent, &g_flat);
  Tensor g(flat.shape);
  g.data = std::move(g_flat);
  for (int i = static_cast<int>(encoder_.size()) - 1; i >= 0; --i) {
    nn::relu_backward(tape.encoder_acts[static_cast<std::size_t>(i) + 1].data, g.data);
    Tensor gin;
    encoder_[static_cast<std::size_t>(i)].backward(tape.encoder_acts[static_cast<std::size_t>(i)], g, &gin);
    g = std::move(gin);
  }
  g.shape = tape.match.shape;
  nn::relu_backward(tape.match.data, g.data);
  Tensor g_cost;
  match_.backward(tape.cost.data, g, &g_cost);
  FeatureMap gl, gr;
  cost_volume_backward(g_cost, tape.cost.plan, cfg_.shift, gl, gr);
  features_backward(tape.feature_acts[0], std::move(gl));
  features_backward(tape.feature_acts[1], std::move(gr));
}

}  // namespace svx
