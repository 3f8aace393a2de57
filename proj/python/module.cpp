#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "stereovox/adaptive.hpp"
#include "stereovox/checkpoint.hpp"
#include "stereovox/config.hpp"
#include "stereovox/losses.hpp"
#include "stereovox/training.hpp"

namespace py = pybind11;
using namespace svx;

namespace {

// Grids cross the boundary as C-ordered [z, y, x] arrays.
template <class T>
py::array_t<T> to_numpy(const Grid3<T>& g) {
  py::array_t<T> a({g.nz(), g.ny(), g.nx()});
  std::memcpy(a.mutable_data(), g.data(), g.size() * sizeof(T));
  return a;
}

OccupancyGrid occupancy_from_numpy(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a 3-D occupancy array");
  OccupancyGrid g(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = a.data()[i] ? 1 : 0;
  return g;
}

py::array_t<float> image_to_numpy(const Image<float>& img) {
  py::array_t<float> a({img.height(), img.width()});
  std::memcpy(a.mutable_data(), img.data(), img.size() * sizeof(float));
  return a;
}

Image<float> image_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D image array");
  Image<float> img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.data(), a.data(), img.size() * sizeof(float));
  return img;
}

template <class T>
py::list pyramid_to_list(const Pyramid<T>& p) {
  py::list out;
  for (const auto& l : p.levels) out.append(to_numpy(l));
  return out;
}

RunConfig config_from(const std::string& preset, const py::dict& overrides) {
  auto cfg = preset_config(preset);
  for (const auto& [k, v] : overrides) set_config_value(cfg, py::str(k), py::str(v));
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_stereovox, m) {
  m.doc() = "Stereo to octree occupancy network";

  m.def(
      "config",
      [](const std::string& preset, const py::dict& overrides) {
        const auto cfg = config_from(preset, overrides);
        py::dict d;
        for (const auto& k : config_keys()) d[py::str(k.name)] = get_config_value(cfg, k.name);
        return d;
      },
      py::arg("preset") = "desk", py::arg("overrides") = py::dict());

  m.def(
      "disparity_plan",
      [](const std::string& preset, const py::dict& overrides) { return plan_of(config_from(preset, overrides)).levels; },
      py::arg("preset") = "desk", py::arg("overrides") = py::dict(), "Disparity levels of the configured cost volume.");

  m.def(
      "build_pyramid", [](const py::array_t<std::uint8_t>& finest, int levels) {
        return pyramid_to_list(build_pyramid(occupancy_from_numpy(finest), levels));
      },
      py::arg("finest"), py::arg("levels"), "OR-pyramid, coarse to fine.");

  m.def(
      "eval_iou", [](const py::array_t<std::uint8_t>& pred, const py::array_t<std::uint8_t>& gt) {
        return eval_iou(occupancy_from_numpy(pred), occupancy_from_numpy(gt));
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "chamfer_distance",
      [](const py::array_t<std::uint8_t>& pred, const py::array_t<std::uint8_t>& gt, double voxel_size_m,
         int grid_resolution) {
        return chamfer_distance(occupancy_from_numpy(pred), occupancy_from_numpy(gt),
                                GridSpec::cube(voxel_size_m, grid_resolution));
      },
      py::arg("pred"), py::arg("gt"), py::arg("voxel_size_m") = 0.5, py::arg("grid_resolution") = 32,
      "Symmetric Chamfer distance in meters.");

  m.def(
      "render_scene",
      [](std::uint64_t seed, const std::string& preset, const py::dict& overrides) {
        const auto cfg = config_from(preset, overrides);
        const auto s = render_scene(sample_scene(scene_distribution_of(cfg), seed));
        py::dict d;
        d["left"] = image_to_numpy(s.left);
        d["right"] = image_to_numpy(s.right);
        d["depth"] = image_to_numpy(s.gt_depth);
        d["pyramid"] = pyramid_to_list(s.gt_pyramid);
        return d;
      },
      py::arg("seed"), py::arg("preset") = "desk", py::arg("overrides") = py::dict(),
      "Samples and renders one synthetic stereo scene.");

  m.def("next_exit_level", py::overload_cast<int, int, std::size_t>(&next_exit_level), py::arg("level"),
        py::arg("levels"), py::arg("front_occupied"));

  py::class_<VoxelNet>(m, "VoxelNet")
      .def(py::init([](const std::string& preset, const py::dict& overrides, std::uint64_t seed) {
             auto net = std::make_unique<VoxelNet>(network_config_of(config_from(preset, overrides)));
             net->init(seed);
             return net;
           }),
           py::arg("preset") = "desk", py::arg("overrides") = py::dict(), py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return std::move(load_checkpoint(path).net); }, py::arg("path"))
      .def(
          "save", [](const VoxelNet& net, const std::string& path) { save_checkpoint(path, net); }, py::arg("path"))
      .def_property_readonly("levels", [](const VoxelNet& net) { return net.config().decoder.levels; })
      .def_property_readonly("parameter_count", [](const VoxelNet& net) { return net.params().count(); })
      .def(
          "latent",
          [](const VoxelNet& net, const py::array_t<float>& left, const py::array_t<float>& right) {
            return net.infer_latent(image_from_numpy(left), image_from_numpy(right));
          },
          py::arg("left"), py::arg("right"))
      .def(
          "infer",
          [](const VoxelNet& net, const py::array_t<float>& left, const py::array_t<float>& right,
             const std::string& mode, int max_level) {
            const auto latent = net.infer_latent(image_from_numpy(left), image_from_numpy(right));
            const auto dm = decode_mode_from_string(mode);
            const auto out = net.decode(latent, dm, nullptr, max_level);
            const auto macs = count_macs(net.config(), dm == DecodeMode::sparse_pred ? &out.masks : nullptr, max_level);
            py::dict d;
            d["probabilities"] = pyramid_to_list(out.probabilities);
            d["macs"] = macs.total();
            d["decoder_macs"] = macs.decoder();
            return d;
          },
          py::arg("left"), py::arg("right"), py::arg("mode") = "sparse_pred", py::arg("max_level") = -1,
          "Per-level occupancy probabilities and the MACs spent.");
}
