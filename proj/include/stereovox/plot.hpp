#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stereovox/grid.hpp"

namespace svx {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line chart of one or more series against their index, as SVG.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label);

/// Reads a CSV with a header row into named numeric columns.
std::vector<Series> read_csv_columns(const std::filesystem::path& path);

/// Front (x-y), top (x-z) and side (z-y) projections of an occupancy grid,
/// side by side, `cell_px` pixels per voxel. Shading encodes distance along
/// the projection axis, nearer is brighter. Returns interleaved RGB bytes.
std::vector<std::uint8_t> projection_rgb(const OccupancyGrid& g, int cell_px, int& width, int& height);
void write_projection_png(const std::filesystem::path& path, const OccupancyGrid& g, int cell_px = 0);

}  // namespace svx
