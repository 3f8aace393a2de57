#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace svx {

/// Integer voxel coordinate (x, y, z).
struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3&, const Index3&) = default;
};

/// Dense 3D grid stored row-major with x fastest: idx = x + nx * (y + ny * z).
template <class T>
class Grid3 {
 public:
  Grid3() = default;
  Grid3(int nx, int ny, int nz, T fill = T{})
      : nx_(nx), ny_(ny), nz_(nz), data_(checked_size(nx, ny, nz), fill) {}
  explicit Grid3(int resolution, T fill = T{}) : Grid3(resolution, resolution, resolution, fill) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  /// Per-axis resolution of a cubic grid; throws when the grid is not cubic.
  int resolution() const {
    if (nx_ != ny_ || ny_ != nz_) throw std::logic_error("grid is not cubic");
    return nx_;
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx_) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny_) * static_cast<std::size_t>(z));
  }
  Index3 coord(std::size_t idx) const {
    const int x = static_cast<int>(idx % static_cast<std::size_t>(nx_));
    idx /= static_cast<std::size_t>(nx_);
    const int y = static_cast<int>(idx % static_cast<std::size_t>(ny_));
    return {x, y, static_cast<int>(idx / static_cast<std::size_t>(ny_))};
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx_ && y < ny_ && z < nz_;
  }

  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  template <class U>
  bool same_shape(const Grid3<U>& o) const {
    return nx_ == o.nx() && ny_ == o.ny() && nz_ == o.nz();
  }
  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  static std::size_t checked_size(int nx, int ny, int nz) {
    if (nx < 0 || ny < 0 || nz < 0) throw std::invalid_argument("negative grid dimension");
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }

  int nx_ = 0;
  int ny_ = 0;
  int nz_ = 0;
  std::vector<T> data_;
};

using OccupancyGrid = Grid3<std::uint8_t>;
using ProbabilityGrid = Grid3<float>;

/// Number of occupied cells.
inline std::size_t count_occupied(const OccupancyGrid& g) {
  std::size_t n = 0;
  for (auto v : g.values()) n += v != 0;
  return n;
}

/// Occupied cell coordinates in storage order.
inline std::vector<Index3> occupied_cells(const OccupancyGrid& g) {
  std::vector<Index3> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i]) out.push_back(g.coord(i));
  return out;
}

/// Binarize a probability grid: occupied iff p > threshold.
inline OccupancyGrid binarize(const ProbabilityGrid& p, float threshold = 0.5f) {
  OccupancyGrid out(p.nx(), p.ny(), p.nz());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > threshold ? 1 : 0;
  return out;
}

/// Level-indexed stack of cubic grids, coarse to fine. `first_level` is the
/// octree level (1-based) of `levels.front()`; a straight decode carries only
/// the finest grid.
template <class T>
struct Pyramid {
  std::vector<Grid3<T>> levels;
  int first_level = 1;

  int level_count() const { return static_cast<int>(levels.size()); }
  int last_level() const { return first_level + level_count() - 1; }
  bool has_level(int level) const { return level >= first_level && level <= last_level(); }
  const Grid3<T>& level(int level) const {
    if (!has_level(level)) throw std::out_of_range("pyramid level " + std::to_string(level) + " not present");
    return levels[static_cast<std::size_t>(level - first_level)];
  }
  Grid3<T>& level(int level) {
    if (!has_level(level)) throw std::out_of_range("pyramid level " + std::to_string(level) + " not present");
    return levels[static_cast<std::size_t>(level - first_level)];
  }
  friend bool operator==(const Pyramid&, const Pyramid&) = default;
};

using OccupancyPyramid = Pyramid<std::uint8_t>;
using ProbabilityPyramid = Pyramid<float>;

inline OccupancyPyramid binarize(const ProbabilityPyramid& p, float threshold = 0.5f) {
  OccupancyPyramid out;
  out.first_level = p.first_level;
  for (const auto& g : p.levels) out.levels.push_back(binarize(g, threshold));
  return out;
}

/// Row-major 2D image, row v, column u.
template <class T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image dimension");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  const T& operator()(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using DepthMap = Image<float>;
/// Disparities are kept in double so depth -> disparity -> depth is exact for float depths.
using DisparityMap = Image<double>;

}  // namespace svx
