#include "stereovox/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "stereovox/io.hpp"

namespace svx {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label) {
  constexpr double W = 720, H = 420, ml = 70, mr = 160, mt = 40, mb = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](std::size_t i) { return ml + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
  auto py = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    os << "<line x1=\"" << ml << "\" x2=\"" << ml + pw << "\" y1=\"" << py(v) << "\" y2=\"" << py(v)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  if (n > 0) {
    os << "<text x=\"" << ml << "\" y=\"" << H - mb + 18 << "\">1</text>\n";
    os << "<text x=\"" << ml + pw << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"end\">" << n << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i)
      if (std::isfinite(series[k].values[i])) os << px(i) << ',' << py(series[k].values[i]) << ' ';
    os << "\"/>\n";
    const double ly = mt + 16 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << W - mr + 12 << "\" x2=\"" << W - mr + 32 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - mr + 38 << "\" y=\"" << ly << "\">" << series[k].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<Series> read_csv_columns(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open CSV");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path, "empty CSV");
  std::vector<Series> cols;
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) cols.push_back({name, {}});
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (auto& c : cols) {
      if (!std::getline(ss, cell, ',')) cell.clear();
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      c.values.push_back(end != cell.c_str() ? v : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return cols;
}

std::vector<std::uint8_t> projection_rgb(const OccupancyGrid& g, int cell_px, int& width, int& height) {
  const int r = g.resolution();
  if (cell_px <= 0) cell_px = std::max(1, 256 / std::max(1, r));
  constexpr int gap = 4;
  const int side = r * cell_px;
  width = 3 * side + 2 * gap;
  height = side;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 40);

  // Depth of the first occupied cell along each view ray; r when none.
  auto paint = [&](int panel, auto&& first_hit) {
    for (int row = 0; row < r; ++row)
      for (int col = 0; col < r; ++col) {
        const int hit = first_hit(col, row);
        std::uint8_t c[3] = {235, 235, 235};
        if (hit < r) {
          const double t = 1.0 - 0.75 * hit / std::max(1, r - 1);
          c[0] = static_cast<std::uint8_t>(220 * t);
          c[1] = static_cast<std::uint8_t>(60 * t);
          c[2] = static_cast<std::uint8_t>(40 * t);
        }
        for (int dy = 0; dy < cell_px; ++dy)
          for (int dx = 0; dx < cell_px; ++dx) {
            const int x = panel * (side + gap) + col * cell_px + dx;
            const int y = (r - 1 - row) * cell_px + dy;  // up is up
            std::copy(c, c + 3, rgb.begin() + (static_cast<std::ptrdiff_t>(y) * width + x) * 3);
          }
      }
  };
  // front: looking along +z, columns x, rows y
  paint(0, [&](int x, int y) {
    for (int z = 0; z < r; ++z)
      if (g(x, y, z)) return z;
    return r;
  });
  // top: looking down -y, columns x, rows z
  paint(1, [&](int x, int z) {
    for (int y = r - 1; y >= 0; --y)
      if (g(x, y, z)) return r - 1 - y;
    return r;
  });
  // side: looking along +x, columns z, rows y
  paint(2, [&](int z, int y) {
    for (int x = 0; x < r; ++x)
      if (g(x, y, z)) return x;
    return r;
  });
  return rgb;
}

void write_projection_png(const std::filesystem::path& path, const OccupancyGrid& g, int cell_px) {
  int w = 0, h = 0;
  const auto rgb = projection_rgb(g, cell_px, w, h);
  write_png_rgb(path, w, h, rgb);
}

}  // namespace svx
