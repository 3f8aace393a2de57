#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stereovox/geometry.hpp"
#include "stereovox/grid.hpp"

namespace svx {

/// I/O failure carrying the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// PFM, single channel, little-endian; rows stored bottom to top.
void write_pfm(const std::filesystem::path& path, const Image<float>& img);
Image<float> read_pfm(const std::filesystem::path& path);

// 8-bit grayscale PNG; values clamped to [0, 1].
void write_png_gray(const std::filesystem::path& path, const Image<float>& img);
Image<float> read_png_gray(const std::filesystem::path& path);
// 8-bit RGB PNG, interleaved rgb bytes.
void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

/// {level, resolution, voxel_size_m, occupied: [[i,j,k],...]}
nlohmann::json grid_to_json(const OccupancyGrid& g, int level, double voxel_size_m);
OccupancyGrid grid_from_json(const nlohmann::json& j);

/// Array of per-level grid objects, coarse to fine.
nlohmann::json pyramid_to_json(const OccupancyPyramid& p, const GridSpec& grid);
OccupancyPyramid pyramid_from_json(const nlohmann::json& j);

inline constexpr char kBitmaskMagic[4] = {'S', 'V', 'X', 'B'};

/// 16-byte header (magic, resolution u32, level u32, reserved u32) followed by
/// the occupancy bits, x fastest, least significant bit first.
std::vector<std::uint8_t> encode_bitmask(const OccupancyGrid& g, int level);
OccupancyGrid decode_bitmask(const std::vector<std::uint8_t>& bytes, int* level = nullptr);
void write_bitmask(const std::filesystem::path& path, const OccupancyGrid& g, int level);
OccupancyGrid read_bitmask(const std::filesystem::path& path, int* level = nullptr);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with sorted keys, trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

nlohmann::json to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GridSpec& g);
GridSpec grid_from_spec_json(const nlohmann::json& j);
nlohmann::json to_json(const DisparityPlan& p);
DisparityPlan plan_from_json(const nlohmann::json& j);

}  // namespace svx
