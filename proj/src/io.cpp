#include "stereovox/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace svx {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "PFM and bitmask writers assume a little-endian host");

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path, std::string("cannot open (") + std::strerror(errno) + ")");
  return f;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path(), "cannot create directory: " + ec.message());
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

}  // namespace

void write_pfm(const fs::path& path, const Image<float>& img) {
  ensure_parent(path);
  auto f = open_file(path, "wb");
  const std::string header = "Pf\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n-1.0\n";
  bool ok = std::fwrite(header.data(), 1, header.size(), f.get()) == header.size();
  for (int v = img.height() - 1; v >= 0 && ok; --v)
    ok = std::fwrite(&img(0, v), sizeof(float), static_cast<std::size_t>(img.width()), f.get()) ==
         static_cast<std::size_t>(img.width());
  if (!ok) throw IoError(path, "write failed");
}

Image<float> read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf") throw IoError(path, "not a single-channel PFM (magic '" + magic + "')");
  if (w <= 0 || h <= 0) throw IoError(path, "bad PFM dimensions");
  if (scale >= 0.0) throw IoError(path, "big-endian PFM not supported");
  in.get();  // single whitespace after the scale line
  Image<float> img(w, h);
  for (int v = h - 1; v >= 0; --v) {
    in.read(reinterpret_cast<char*>(&img(0, v)), static_cast<std::streamsize>(sizeof(float) * w));
    if (!in) throw IoError(path, "truncated PFM data");
  }
  return img;
}

namespace {

void write_png(const fs::path& path, int width, int height, int color_type, int channels,
               const std::vector<std::uint8_t>& bytes) {
  ensure_parent(path);
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError(path, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path, "PNG encode failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int v = 0; v < height; ++v)
    png_write_row(png, bytes.data() + static_cast<std::size_t>(v) * width * channels);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const fs::path& path, const Image<float>& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f));
  write_png(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 1, bytes);
}

void write_png_rgb(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw IoError(path, "rgb buffer size mismatch");
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, 3, rgb);
}

Image<float> read_png_gray(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError(path, std::string("PNG decode failed: ") + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path, std::string("PNG decode failed: ") + image.message);
  }
  Image<float> img(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(buf[i]) / 255.0f;
  return img;
}

json grid_to_json(const OccupancyGrid& g, int level, double voxel_size_m) {
  json occ = json::array();
  for (const auto& c : occupied_cells(g)) occ.push_back({c.x, c.y, c.z});
  return {{"level", level}, {"resolution", g.resolution()}, {"voxel_size_m", voxel_size_m}, {"occupied", occ}};
}

OccupancyGrid grid_from_json(const json& j) {
  const int r = j.at("resolution").get<int>();
  if (r <= 0) throw std::invalid_argument("grid json: resolution must be positive");
  OccupancyGrid g(r, 0);
  for (const auto& c : j.at("occupied")) {
    const int x = c.at(0).get<int>(), y = c.at(1).get<int>(), z = c.at(2).get<int>();
    if (!g.contains(x, y, z)) throw std::invalid_argument("grid json: occupied index out of range");
    g(x, y, z) = 1;
  }
  return g;
}

json pyramid_to_json(const OccupancyPyramid& p, const GridSpec& grid) {
  json arr = json::array();
  for (int l = p.first_level; l <= p.last_level(); ++l) {
    const auto& g = p.level(l);
    arr.push_back(grid_to_json(g, l, grid.extents()[0] / g.resolution()));
  }
  return arr;
}

OccupancyPyramid pyramid_from_json(const json& j) {
  OccupancyPyramid p;
  if (!j.is_array() || j.empty()) throw std::invalid_argument("pyramid json must be a non-empty array");
  p.first_level = j.front().at("level").get<int>();
  for (const auto& lvl : j) p.levels.push_back(grid_from_json(lvl));
  return p;
}

std::vector<std::uint8_t> encode_bitmask(const OccupancyGrid& g, int level) {
  std::vector<std::uint8_t> out(kBitmaskMagic, kBitmaskMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(g.resolution()));
  put_u32(out, static_cast<std::uint32_t>(level));
  put_u32(out, 0u);
  const std::size_t nbytes = (g.size() + 7) / 8;
  const std::size_t base = out.size();
  out.resize(base + nbytes, 0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i]) out[base + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

OccupancyGrid decode_bitmask(const std::vector<std::uint8_t>& bytes, int* level) {
  if (bytes.size() < 16 || !std::equal(kBitmaskMagic, kBitmaskMagic + 4, bytes.begin()))
    throw std::invalid_argument("bitmask: bad header");
  const auto r = static_cast<int>(get_u32(bytes, 4));
  if (level) *level = static_cast<int>(get_u32(bytes, 8));
  OccupancyGrid g(r, 0);
  if (bytes.size() != 16 + (g.size() + 7) / 8) throw std::invalid_argument("bitmask: payload size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (bytes[16 + i / 8] >> (i % 8)) & 1u;
  return g;
}

void write_bitmask(const fs::path& path, const OccupancyGrid& g, int level) {
  ensure_parent(path);
  const auto bytes = encode_bitmask(g, level);
  auto f = open_file(path, "wb");
  if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) throw IoError(path, "write failed");
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

OccupancyGrid read_bitmask(const fs::path& path, int* level) {
  try {
    return decode_bitmask(read_bytes(path), level);
  } catch (const std::invalid_argument& e) {
    throw IoError(path, e.what());
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path, std::string("invalid JSON: ") + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << text;
  if (!out) throw IoError(path, "write failed");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json to_json(const CameraModel& c) {
  return {{"focal_length_px", c.focal_length_px}, {"baseline_m", c.baseline_m}, {"image_width", c.image_width},
          {"image_height", c.image_height},       {"cx", c.cx},                 {"cy", c.cy}};
}

CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.focal_length_px = j.at("focal_length_px").get<double>();
  c.baseline_m = j.at("baseline_m").get<double>();
  c.image_width = j.at("image_width").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  return c;
}

json to_json(const GridSpec& g) {
  return {{"voxel_size_m", g.voxel_size_m}, {"nx", g.nx}, {"ny", g.ny}, {"nz", g.nz}};
}

GridSpec grid_from_spec_json(const json& j) {
  return {j.at("voxel_size_m").get<double>(), j.at("nx").get<int>(), j.at("ny").get<int>(), j.at("nz").get<int>()};
}

json to_json(const DisparityPlan& p) {
  return {{"levels", p.levels}, {"step_scale", p.step_scale}, {"source", to_string(p.source)}, {"stride", p.stride}};
}

DisparityPlan plan_from_json(const json& j) {
  DisparityPlan p;
  p.levels = j.at("levels").get<std::vector<double>>();
  p.step_scale = j.at("step_scale").get<double>();
  p.source = plan_source_from_string(j.at("source").get<std::string>());
  p.stride = j.at("stride").get<int>();
  return p;
}

}  // namespace svx
