// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/analysis.hpp>
#include <pe3d/cli.hpp>
#include <pe3d/depth_bins.hpp>
#include <pe3d/detector.hpp>
#include <pe3d/encoders.hpp>
#include <pe3d/error.hpp>
#include <pe3d/gradcheck.hpp>
#include <pe3d/ray_model.hpp>
#include <pe3d/rig_config.hpp>
#include <pe3d/simulator.hpp>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

namespace py = pybind11;
using namespace pe3d;

namespace {

// Depth maps cross the boundary as float64 arrays with NaN for invalid cells.
Eigen::MatrixXd depth_to_array(const DepthMap& d) {
  Eigen::MatrixXd out(d.height, d.width);
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) out(r, c) = d.is_valid(r, c) ? d.at(r, c) : std::nan("");
  }
  return out;
}

DepthMap array_to_depth(const Eigen::MatrixXd& a) {
  DepthMap d(static_cast<int>(a.rows()), static_cast<int>(a.cols()));
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * d.width + c;
      d.valid[i] = std::isfinite(a(r, c));
      d.depth[i] = d.valid[i] ? a(r, c) : 0.0;
    }
  }
  return d;
}

py::dict pe_to_dict(const PEGrid& g) {
  py::dict out;
  out["variant"] = std::string(to_string(g.variant));
  out["height"] = g.height;
  out["width"] = g.width;
  out["values"] = g.values;
  out["mask"] = g.mask;
  return out;
}

}  // namespace

PYBIND11_MODULE(_pe3d, m) {
  m.doc() = "Geometry, positional encodings and the toy detector of pe3d";

  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<CameraParams>(m, "CameraParams")
      .def(py::init<const Mat3&, const Mat3&, const Vec3&, int, int, std::string>(), py::arg("K"), py::arg("R"),
           py::arg("T"), py::arg("width"), py::arg("height"), py::arg("name") = "")
      .def_property_readonly("K", &CameraParams::intrinsics)
      .def_property_readonly("R", &CameraParams::rotation)
      .def_property_readonly("T", &CameraParams::translation)
      .def_property_readonly("width", &CameraParams::width)
      .def_property_readonly("height", &CameraParams::height)
      .def_property_readonly("name", &CameraParams::name)
      .def_property_readonly("forward", &CameraParams::forward);

  py::class_<PerceptionRegion>(m, "PerceptionRegion")
      .def(py::init<>())
      .def_readwrite("x_min", &PerceptionRegion::x_min)
      .def_readwrite("x_max", &PerceptionRegion::x_max)
      .def_readwrite("y_min", &PerceptionRegion::y_min)
      .def_readwrite("y_max", &PerceptionRegion::y_max)
      .def_readwrite("z_min", &PerceptionRegion::z_min)
      .def_readwrite("z_max", &PerceptionRegion::z_max);

  m.def("default_rig", [] { return default_rig(); });
  m.def("load_rig", [](const std::string& path) { return load_rig(path).cameras; }, py::arg("path"));
  m.def("back_project", &back_project, py::arg("u"), py::arg("v"), py::arg("depth"), py::arg("camera"));
  m.def(
      "project",
      [](const Vec3& p, const CameraParams& cam) {
        const Projection pr = project(p, cam);
        return py::make_tuple(pr.u, pr.v, pr.depth);
      },
      py::arg("point"), py::arg("camera"), "Returns (u, v, depth).");
  m.def("normalize_point", &normalize_point, py::arg("point"), py::arg("region") = PerceptionRegion{});

  m.def(
      "make_bins",
      [](const std::string& method, double d_min, double d_max, int count) {
        return make_bins(parse_bin_method(method), d_min, d_max, count).centers;
      },
      py::arg("method"), py::arg("d_min"), py::arg("d_max"), py::arg("count"));
  m.def(
      "bracket",
      [](double d, const std::vector<double>& centers) {
        const DepthBins bins{BinMethod::kUD, centers.front(), centers.back(), centers};
        const Bracket b = bracket(d, bins);
        return py::make_tuple(b.lower, b.upper, b.weight);
      },
      py::arg("depth"), py::arg("centers"), "Returns (lower, upper, lower_weight).");

  m.def(
      "discrepancy",
      [](double alpha, double d, double d_lc, double delta) { return discrepancy({alpha, d, d_lc, delta}); },
      py::arg("alpha"), py::arg("d"), py::arg("d_lc"), py::arg("delta"));

  m.def(
      "sine_encode", [](double x, int half_dim) { return sine_encode(x, SineSpec{half_dim}); }, py::arg("x"),
      py::arg("half_dim") = 32);

  py::class_<Mlp>(m, "Mlp")
      .def_static("init", &Mlp::init, py::arg("inputs"), py::arg("hidden"), py::arg("outputs"), py::arg("seed"))
      .def_property_readonly("inputs", &Mlp::in)
      .def_property_readonly("outputs", &Mlp::out)
      .def("__call__", py::overload_cast<const VectorXd&>(&Mlp::forward, py::const_));

  m.def(
      "encode_point", [](const Vec3& p, const Mlp& mlp, int half_dim) { return encode_point(p, mlp, SineSpec{half_dim}); },
      py::arg("point"), py::arg("mlp"), py::arg("half_dim") = 32);

  m.def(
      "render_depth",
      [](const std::string& scene_json, const CameraParams& cam, int stride) {
        return depth_to_array(render(parse_scene(scene_json), cam, GridSpec::for_camera(cam, stride)).depth);
      },
      py::arg("scene_json"), py::arg("camera"), py::arg("stride") = 16,
      "Per-cell depth of a JSON scene; NaN where nothing is hit.");

  m.def(
      "pe_camera_ray",
      [](const CameraParams& cam, int stride, const std::string& bins, const Mlp& mlp, int half_dim) {
        return pe_to_dict(
            pe_camera_ray(cam, GridSpec::for_camera(cam, stride), parse_bins(bins), mlp, SineSpec{half_dim}, {}));
      },
      py::arg("camera"), py::arg("stride"), py::arg("bins"), py::arg("mlp"), py::arg("half_dim") = 32);
  m.def(
      "pe_camera_ray",
      [](const CameraParams& cam, int stride, const std::vector<double>& centers, const Mlp& mlp, int half_dim) {
        if (centers.empty()) throw Error(ErrorCode::kTooFewBins, "no bin centers");
        const DepthBins bins{BinMethod::kUD, centers.front(), centers.back(), centers};
        return pe_to_dict(pe_camera_ray(cam, GridSpec::for_camera(cam, stride), bins, mlp, SineSpec{half_dim}, {}));
      },
      py::arg("camera"), py::arg("stride"), py::arg("centers"), py::arg("mlp"), py::arg("half_dim") = 32,
      "Explicit ascending bin centers; a single center gives the fixed-depth encoding.");
  m.def(
      "pe_lidar_ray",
      [](const CameraParams& cam, int stride, double depth, const Mlp& mlp, int half_dim) {
        return pe_to_dict(pe_lidar_ray(cam, GridSpec::for_camera(cam, stride), depth, mlp, SineSpec{half_dim}, {}));
      },
      py::arg("camera"), py::arg("stride"), py::arg("depth"), py::arg("mlp"), py::arg("half_dim") = 32);
  m.def(
      "pe_oracle_point",
      [](const Eigen::MatrixXd& depth, const CameraParams& cam, int stride, const Mlp& mlp, int half_dim) {
        return pe_to_dict(pe_oracle_point(array_to_depth(depth), cam, stride, {}, mlp, SineSpec{half_dim}));
      },
      py::arg("depth"), py::arg("camera"), py::arg("stride"), py::arg("mlp"), py::arg("half_dim") = 32);

  m.def(
      "train_toy",
      [](const std::string& variant, std::uint64_t seed, int steps, int scenes) {
        TrainConfig cfg;
        cfg.variant = parse_pe_variant(variant);
        cfg.seed = seed;
        cfg.steps = steps;
        cfg.scenes = scenes;
        py::gil_scoped_release release;
        const TrainResult r = train_toy(make_scenes(cfg), cfg);
        return std::vector<double>{r.initial_error_m, r.final_error_m};
      },
      py::arg("variant"), py::arg("seed") = 0, py::arg("steps") = 2000, py::arg("scenes") = 16,
      "Returns [initial_error_m, final_error_m].");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int instances) {
        py::list out;
        for (const auto& r : run_gradchecks(seed, instances)) {
          py::dict d;
          d["op"] = r.op;
          d["max_rel_error"] = r.max_rel_error;
          d["tolerance"] = r.tolerance;
          d["pass"] = r.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("instances") = 100);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "pe3d");
        return cli::run(args);
      },
      py::arg("args"), "Runs a pe3d subcommand and returns its exit code.");
}
