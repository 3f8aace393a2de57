#include <cstdio>
#include <stdexcept>

#include "stereovox/io.hpp"
#include "stereovox/scene.hpp"

namespace svx {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::array<int, 3> split_sizes(int n) {
  if (n < 0) throw std::invalid_argument("negative scene count");
  const int val = n / 10;
  const int test = n / 10;
  return {n - val - test, val, test};
}

namespace {

std::string scene_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

json entry_json(const ManifestEntry& e) {
  return {{"id", e.id},       {"split", to_string(e.split)}, {"seed", e.seed},     {"left", e.left},
          {"right", e.right}, {"depth", e.depth},            {"scene", e.scene}, {"pyramid", e.pyramid}};
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.split = split_from_string(j.at("split").get<std::string>());
  e.seed = j.value("seed", std::uint64_t{0});
  e.left = j.at("left").get<std::string>();
  e.right = j.at("right").get<std::string>();
  e.depth = j.at("depth").get<std::string>();
  e.scene = j.at("scene").get<std::string>();
  e.pyramid = j.at("pyramid").get<std::string>();
  return e;
}

}  // namespace

Manifest generate_dataset(int n_scenes, const SceneDistribution& dist, std::uint64_t master_seed,
                          const fs::path& out_dir) {
  if (n_scenes <= 0) throw std::invalid_argument("n_scenes must be positive");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir, "cannot create dataset root: " + ec.message());

  const auto sizes = split_sizes(n_scenes);
  Manifest m;
  m.master_seed = master_seed;
  m.config = to_json(dist);
  for (int i = 0; i < n_scenes; ++i) {
    const Split split = i < sizes[0] ? Split::train : (i < sizes[0] + sizes[1] ? Split::val : Split::test);
    ManifestEntry e;
    e.id = scene_id(i);
    e.split = split;
    e.seed = mix_seed(master_seed, static_cast<std::uint64_t>(i));
    const std::string dir = to_string(split) + "/" + e.id + "/";
    e.left = dir + "left.png";
    e.right = dir + "right.png";
    e.depth = dir + "depth.pfm";
    e.scene = dir + "scene.json";
    e.pyramid = dir + "pyramid.json";

    const StereoSample s = render_scene(sample_scene(dist, e.seed));
    write_png_gray(out_dir / e.left, s.left);
    write_png_gray(out_dir / e.right, s.right);
    write_pfm(out_dir / e.depth, s.gt_depth);
    write_json(out_dir / e.scene, to_json(s.scene));
    write_json(out_dir / e.pyramid, pyramid_to_json(s.gt_pyramid, s.scene.grid));
    m.entries.push_back(std::move(e));
  }

  json entries = json::array();
  for (const auto& e : m.entries) entries.push_back(entry_json(e));
  write_json(out_dir / "manifest.json", {{"master_seed", master_seed},
                                         {"config", m.config},
                                         {"n_scenes", n_scenes},
                                         {"splits", {{"train", sizes[0]}, {"val", sizes[1]}, {"test", sizes[2]}}},
                                         {"samples", entries}});
  return m;
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  if (!fs::exists(path)) throw IoError(path, "dataset manifest not found");
  const json j = read_json(path);
  Manifest m;
  try {
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    m.config = j.value("config", json::object());
    for (const auto& e : j.at("samples")) m.entries.push_back(entry_from_json(e));
  } catch (const json::exception& e) {
    throw IoError(path, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

StereoSample load_sample(const fs::path& root, const ManifestEntry& e) {
  StereoSample s;
  s.id = e.id;
  s.left = read_png_gray(root / e.left);
  s.right = read_png_gray(root / e.right);
  s.gt_depth = read_pfm(root / e.depth);
  s.scene = scene_from_json(read_json(root / e.scene));
  s.gt_pyramid = pyramid_from_json(read_json(root / e.pyramid));
  if (s.left.width() != s.right.width() || s.left.height() != s.right.height())
    throw IoError(root / e.right, "stereo pair size mismatch");
  return s;
}

std::vector<StereoSample> load_split(const fs::path& root, Split split) {
  const Manifest m = read_manifest(root);
  std::vector<StereoSample> out;
  for (const auto& e : m.entries)
    if (e.split == split) out.push_back(load_sample(root, e));
  return out;
}

}  // namespace svx
