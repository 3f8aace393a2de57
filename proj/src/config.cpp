#include "stereovox/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "stereovox/io.hpp"

namespace svx {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw std::invalid_argument("config key '" + key + "': '" + value + "' is not " + what);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  try {
    std::size_t pos = 0;
    const double d = std::stod(s, &pos);
    if (pos != s.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  bad_value(key, v, "a boolean");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F&& parse_one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(parse_one(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string num(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

struct Entry {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SVX_INT(field, help)                                                                        \
  Entry {                                                                                           \
    {#field, help}, [](const RunConfig& c) { return std::to_string(c.field); },                     \
        [](RunConfig& c, const std::string& v) { c.field = parse_int(#field, v); }                  \
  }
#define SVX_DOUBLE(field, help)                                                                     \
  Entry {                                                                                           \
    {#field, help}, [](const RunConfig& c) { return num(c.field); },                                \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(#field, v); }               \
  }
#define SVX_STRING(field, help)                                                                     \
  Entry {                                                                                           \
    {#field, help}, [](const RunConfig& c) { return c.field; },                                     \
        [](RunConfig& c, const std::string& v) { c.field = trim(v); }                               \
  }
#define SVX_INTS(field, help)                                                                       \
  Entry {                                                                                           \
    {#field, help}, [](const RunConfig& c) { return join(c.field); },                               \
        [](RunConfig& c, const std::string& v) { c.field = parse_list<int>(#field, v, parse_int); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{{"seed", "master seed (mandatory for synth and train)"},
            [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string{}; },
            [](RunConfig& c, const std::string& v) {
              if (trim(v).empty()) c.seed.reset();
              else c.seed = parse_u64("seed", v);
            }},
      SVX_DOUBLE(focal_length_px, "focal length in pixels"),
      SVX_DOUBLE(baseline_m, "stereo baseline in meters"),
      SVX_INT(image_width, "image width in pixels"),
      SVX_INT(image_height, "image height in pixels"),
      SVX_DOUBLE(cx, "principal point column"),
      SVX_DOUBLE(cy, "principal point row"),
      SVX_DOUBLE(voxel_size_m, "finest voxel edge in meters"),
      SVX_INT(grid_resolution, "finest grid cells per axis"),
      SVX_STRING(plan_source, "cost volume sampling: voxel, full or even"),
      SVX_DOUBLE(step_scale, "voxel plan depth step in voxels"),
      SVX_INT(plan_count, "level count of full and even plans"),
      SVX_INT(plan_stride, "feature-cell stride of even plans"),
      SVX_STRING(shift, "fractional shift sampling: linear or nearest"),
      SVX_INT(feature_channels, "feature map channels"),
      SVX_INTS(feature_hidden, "hidden widths of the feature stages"),
      SVX_INT(match_channels, "per-plane match layer width"),
      SVX_INTS(encoder_channels, "widths of the strided encoder stages"),
      SVX_INT(n_latent, "latent vector length"),
      SVX_INT(initial_resolution, "decoder stem resolution"),
      SVX_INT(levels, "octree levels"),
      SVX_INTS(decoder_channels, "stem width then one width per level"),
      SVX_DOUBLE(mask_threshold, "probability threshold of the pruning mask"),
      SVX_INT(epochs, "training epochs"),
      SVX_INT(batch_size, "samples per optimizer step"),
      SVX_DOUBLE(learning_rate, "Adam learning rate"),
      SVX_DOUBLE(beta1, "Adam first moment decay"),
      SVX_DOUBLE(beta2, "Adam second moment decay"),
      SVX_STRING(train_mode, "decode mode while training"),
      SVX_STRING(eval_mode, "decode mode for validation and evaluation"),
      SVX_STRING(augment, "training augmentation: none or retexture"),
      Entry{{"loss_weights", "per-level loss weights, coarse to fine (empty: reference weights)"},
            [](const RunConfig& c) { return join(c.loss_weights); },
            [](RunConfig& c, const std::string& v) { c.loss_weights = parse_list<double>("loss_weights", v, parse_double); }},
      SVX_INT(train_limit, "use at most this many training samples (-1: all)"),
      SVX_STRING(dataset, "dataset root"),
      SVX_STRING(out_dir, "output directory"),
      SVX_INT(n_scenes, "scenes generated by synth"),
      SVX_INT(min_obstacles, "fewest obstacles per scene"),
      SVX_INT(max_obstacles, "most obstacles per scene"),
      SVX_DOUBLE(min_size_m, "smallest obstacle extent"),
      SVX_DOUBLE(max_size_m, "largest obstacle extent"),
      Entry{{"ground_plane", "render a ground plane"},
            [](const RunConfig& c) { return std::string(c.ground_plane ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) { c.ground_plane = parse_bool("ground_plane", v); }},
  };
  return table;
}

#undef SVX_INT
#undef SVX_DOUBLE
#undef SVX_STRING
#undef SVX_INTS

const Entry& entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key.name == key) return e;
  throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k{{"preset", "named defaults: desk or paper"}};
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.preset = "paper";
    c.focal_length_px = 400.0;
    c.baseline_m = 0.12;
    c.image_width = 880;
    c.image_height = 400;
    c.cx = 440.0;
    c.cy = 400.0;
    c.voxel_size_m = 0.5;
    c.grid_resolution = 64;
    c.step_scale = 5.0;
    c.plan_count = 48;
    c.levels = 4;
    c.decoder_channels = {64, 32, 16, 8, 4};
    c.encoder_channels = {32, 64, 128, 128};
    c.loss_weights = {0.30, 0.27, 0.23, 0.20};
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") {
    const auto seed = cfg.seed;
    cfg = preset_config(trim(value));
    cfg.seed = seed;
    return;
  }
  entry(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  if (key == "preset") return cfg.preset;
  return entry(key).get(cfg);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "preset = " << cfg.preset << '\n';
  for (const auto& e : entries()) os << e.key.name << " = " << e.get(cfg) << '\n';
  return os.str();
}

CameraModel camera_of(const RunConfig& c) {
  CameraModel cam{c.focal_length_px, c.baseline_m, c.image_width, c.image_height, c.cx, c.cy};
  cam.validate();
  return cam;
}

GridSpec grid_of(const RunConfig& c) {
  const auto g = GridSpec::cube(c.voxel_size_m, c.grid_resolution);
  g.validate();
  return g;
}

DisparityPlan plan_of(const RunConfig& c) {
  const auto src = plan_source_from_string(c.plan_source);
  if (src == PlanSource::voxel) return plan_disparity_levels(camera_of(c), grid_of(c), c.step_scale);
  if (src == PlanSource::full) return uniform_plan(c.plan_count, 1);
  return uniform_plan(c.plan_count, c.plan_stride);
}

NetworkConfig network_config_of(const RunConfig& c) {
  NetworkConfig n;
  n.camera = camera_of(c);
  n.grid = grid_of(c);
  n.plan = plan_of(c);
  n.shift = shift_mode_from_string(c.shift);
  n.feature_channels = c.feature_channels;
  n.feature_hidden = c.feature_hidden;
  n.match_channels = c.match_channels;
  n.encoder_channels = c.encoder_channels;
  n.decoder.n_latent = c.n_latent;
  n.decoder.initial_resolution = c.initial_resolution;
  n.decoder.levels = c.levels;
  n.decoder.channels = c.decoder_channels;
  n.decoder.mask_threshold = c.mask_threshold;
  n.decoder.mode = decode_mode_from_string(c.train_mode);
  n.validate();
  return n;
}

SceneDistribution scene_distribution_of(const RunConfig& c) {
  SceneDistribution d;
  d.camera = camera_of(c);
  d.grid = grid_of(c);
  d.pyramid_levels = c.levels;
  d.step_scale = c.step_scale;
  d.min_obstacles = c.min_obstacles;
  d.max_obstacles = c.max_obstacles;
  d.min_size_m = c.min_size_m;
  d.max_size_m = c.max_size_m;
  d.ground_plane = c.ground_plane;
  return d;
}

}  // namespace svx
