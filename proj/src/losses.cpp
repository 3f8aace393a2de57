#include "stereovox/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace svx {

using nlohmann::json;

LossWeights LossWeights::reference() { return {{0.30, 0.27, 0.23, 0.20}}; }

LossWeights LossWeights::for_levels(int levels) {
  if (levels < 1) throw std::invalid_argument("loss weights need at least one level");
  if (levels > 4) return {std::vector<double>(static_cast<std::size_t>(levels), 1.0 / levels)};
  auto ref = reference().w;
  ref.resize(static_cast<std::size_t>(levels));
  const double sum = std::accumulate(ref.begin(), ref.end(), 0.0);
  for (auto& w : ref) w /= sum;
  return {ref};
}

double eval_iou(const OccupancyGrid& pred, const OccupancyGrid& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("eval_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::int64_t> squared_distance_transform(const OccupancyGrid& g) {
  const int nx = g.nx(), ny = g.ny(), nz = g.nz();
  constexpr std::int64_t kFar = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> d(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] ? 0 : kFar;

  // One exact pass per axis: d'(i) = min_j d(j) + (i - j)^2 along the line.
  std::vector<std::int64_t> line, out;
  auto pass = [&](int n, auto&& index_of, int outer_a, int outer_b) {
    line.resize(static_cast<std::size_t>(n));
    out.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < outer_a; ++a)
      for (int b = 0; b < outer_b; ++b) {
        for (int i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = d[index_of(i, a, b)];
        for (int i = 0; i < n; ++i) {
          std::int64_t best = kFar;
          for (int j = 0; j < n; ++j) {
            const std::int64_t v = line[static_cast<std::size_t>(j)];
            if (v >= kFar) continue;
            const std::int64_t dd = static_cast<std::int64_t>(i - j) * (i - j) + v;
            best = std::min(best, dd);
          }
          out[static_cast<std::size_t>(i)] = best;
        }
        for (int i = 0; i < n; ++i) d[index_of(i, a, b)] = out[static_cast<std::size_t>(i)];
      }
  };
  pass(nx, [&](int i, int y, int z) { return g.index(i, y, z); }, ny, nz);
  pass(ny, [&](int i, int x, int z) { return g.index(x, i, z); }, nx, nz);
  pass(nz, [&](int i, int x, int y) { return g.index(x, y, i); }, nx, ny);
  return d;
}

double chamfer_distance(const OccupancyGrid& pred, const OccupancyGrid& gt, const GridSpec& grid) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("chamfer_distance: shape mismatch");
  if (pred.nx() == 0 || grid.nx % pred.nx() != 0)
    throw std::invalid_argument("chamfer_distance: grid resolution does not divide the ROI grid");
  const std::size_t na = count_occupied(pred), nb = count_occupied(gt);
  if (na == 0 && nb == 0) return 0.0;
  if (na == 0 || nb == 0) return grid.diagonal();
  const double voxel = grid.voxel_size_m * (grid.nx / pred.nx());

  auto directional = [&](const OccupancyGrid& from, const OccupancyGrid& to, std::size_t n) {
    const auto dt = squared_distance_transform(to);
    double sum = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i)
      if (from[i]) sum += voxel * std::sqrt(static_cast<double>(dt[i]));
    return sum / static_cast<double>(n);
  };
  return directional(pred, gt, na) + directional(gt, pred, nb);
}

json to_json(const MetricsReport& r) {
  json levels = json::array();
  for (const auto& l : r.per_level)
    levels.push_back({{"level", l.level}, {"resolution", l.resolution}, {"iou", l.iou}, {"cd", l.cd}});
  return {{"name", r.name},
          {"per_level", levels},
          {"macs", r.macs},
          {"decoder_macs", r.decoder_macs},
          {"parameters", r.parameters},
          {"samples", r.samples}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  r.name = j.value("name", std::string{});
  for (const auto& l : j.at("per_level"))
    r.per_level.push_back({l.at("level").get<int>(), l.at("resolution").get<int>(), l.at("iou").get<double>(),
                           l.at("cd").get<double>()});
  r.macs = j.at("macs").get<std::int64_t>();
  r.decoder_macs = j.value("decoder_macs", std::int64_t{0});
  r.parameters = j.at("parameters").get<std::int64_t>();
  r.samples = j.value("samples", 0);
  return r;
}

namespace {

int max_levels(const std::vector<MetricsReport>& reports) {
  int n = 0;
  for (const auto& r : reports)
    for (const auto& l : r.per_level) n = std::max(n, l.level);
  return n;
}

const LevelMetrics* find_level(const MetricsReport& r, int level) {
  for (const auto& l : r.per_level)
    if (l.level == level) return &l;
  return nullptr;
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  const int L = max_levels(reports);
  std::ostringstream os;
  os << "name,samples";
  for (int l = 1; l <= L; ++l) os << ",iou_l" << l;
  for (int l = 1; l <= L; ++l) os << ",cd_l" << l;
  os << ",macs,decoder_macs,parameters\n";
  for (const auto& r : reports) {
    os << r.name << ',' << r.samples;
    for (int l = 1; l <= L; ++l) {
      const auto* m = find_level(r, l);
      os << ',' << (m ? fmt(m->iou, 6) : "");
    }
    for (int l = 1; l <= L; ++l) {
      const auto* m = find_level(r, l);
      os << ',' << (m ? fmt(m->cd, 6) : "");
    }
    os << ',' << r.macs << ',' << r.decoder_macs << ',' << r.parameters << '\n';
  }
  return os.str();
}

std::string metrics_table(const std::vector<MetricsReport>& reports) {
  const int L = max_levels(reports);
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, r.name.size());
  std::ostringstream os;
  char buf[64];
  os << std::string(name_w, ' ');
  for (int l = 1; l <= L; ++l) {
    std::snprintf(buf, sizeof(buf), " %8s %8s", ("IoU" + std::to_string(l)).c_str(), ("CD" + std::to_string(l)).c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), " %10s %10s %9s\n", "MACs(M)", "DecMACs(M)", "Params");
  os << buf;
  for (const auto& r : reports) {
    os << r.name << std::string(name_w - r.name.size(), ' ');
    for (int l = 1; l <= L; ++l) {
      const auto* m = find_level(r, l);
      if (m) std::snprintf(buf, sizeof(buf), " %8.4f %8.4f", m->iou, m->cd);
      else std::snprintf(buf, sizeof(buf), " %8s %8s", "-", "-");
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), " %10.2f %10.2f %9lld\n", r.macs / 1e6, r.decoder_macs / 1e6,
                  static_cast<long long>(r.parameters));
    os << buf;
  }
  return os.str();
}

}  // namespace svx
