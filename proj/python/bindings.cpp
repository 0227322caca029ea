#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "sonotrack/error.hpp"
#include "sonotrack/estimator.hpp"
#include "sonotrack/eval.hpp"
#include "sonotrack/geometry.hpp"
#include "sonotrack/imu.hpp"
#include "sonotrack/learn.hpp"
#include "sonotrack/scandata.hpp"
#include "sonotrack/simulator.hpp"

namespace py = pybind11;
using namespace sonotrack;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Poses cross the boundary as (N, 4, 4) homogeneous matrices.
py::array_t<double> poses_to_array(const std::vector<Pose>& poses) {
  py::array_t<double> out({static_cast<py::ssize_t>(poses.size()), py::ssize_t{4}, py::ssize_t{4}});
  auto a = out.mutable_unchecked<3>();
  for (std::size_t n = 0; n < poses.size(); ++n) {
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        double v = r == 3 ? (c == 3 ? 1.0 : 0.0) : (c == 3 ? poses[n].translation[r] : poses[n].rotation(r, c));
        a(n, r, c) = v;
      }
    }
  }
  return out;
}

std::vector<Pose> poses_from_array(const Array& arr) {
  if (arr.ndim() != 3 || arr.shape(1) != 4 || arr.shape(2) != 4) {
    throw Error(ErrorCode::kShapeMismatch, "poses must have shape (N, 4, 4)");
  }
  auto a = arr.unchecked<3>();
  std::vector<Pose> out(static_cast<std::size_t>(arr.shape(0)));
  for (py::ssize_t n = 0; n < arr.shape(0); ++n) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out[n].rotation(r, c) = a(n, r, c);
      out[n].translation[r] = a(n, r, 3);
    }
  }
  return out;
}

// Steps cross the boundary as (N-1, 6) rows of tx, ty, tz, phi_x, phi_y, phi_z.
py::array_t<double> steps_to_array(const std::vector<MotionParams>& steps) {
  const nn::Matrix m = to_matrix(steps);
  py::array_t<double> out({static_cast<py::ssize_t>(m.cols()), py::ssize_t{6}});
  auto a = out.mutable_unchecked<2>();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (int r = 0; r < 6; ++r) a(j, r) = m(r, j);
  }
  return out;
}

// (T, width) rows to a (width, T) matrix; width < 0 accepts any.
nn::Matrix rows_to_matrix(const Array& arr, int width) {
  if (arr.ndim() != 2 || (width >= 0 && arr.shape(1) != width)) {
    throw Error(ErrorCode::kShapeMismatch, "expected an array of shape (T, " + std::to_string(width) + ")");
  }
  auto a = arr.unchecked<2>();
  nn::Matrix m(arr.shape(1), arr.shape(0));
  for (py::ssize_t j = 0; j < arr.shape(0); ++j) {
    for (py::ssize_t r = 0; r < arr.shape(1); ++r) m(r, j) = a(j, r);
  }
  return m;
}

py::array_t<float> frames_to_array(const FrameStack& f) {
  py::array_t<float> out({py::ssize_t{f.count}, py::ssize_t{f.height}, py::ssize_t{f.width}});
  std::memcpy(out.mutable_data(), f.pixels.data(), f.pixels.size() * sizeof(float));
  return out;
}

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["total"] = r.total;
  d["mae"] = r.mae;
  d["pearson"] = r.pearson;
  d["accel_pearson"] = r.accel_pearson;
  d["euler_mae"] = r.euler_mae;
  return d;
}

py::dict metrics_dict(const MetricReport& m) {
  py::dict d;
  d["fdr"] = m.fdr;
  d["adr"] = m.adr;
  d["md"] = m.md;
  d["sd"] = m.sd;
  d["hd"] = m.hd;
  d["ea"] = m.ea;
  d["scan_length"] = m.scan_length;
  return d;
}

ScanStyle style_of(const std::string& name) {
  const auto s = parse_style(name);
  if (!s) throw Error(ErrorCode::kBadSpec, "unknown trajectory style '" + name + "'");
  return *s;
}

}  // namespace

PYBIND11_MODULE(_sonotrack, m) {
  m.doc() = "Trajectory estimation for freehand ultrasound sweeps with IMU fusion";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object code = py::str(std::string(to_string(e.code())));
      PyErr_SetObject(error.ptr(), py::make_tuple(code, e.what()).ptr());
    }
  });

  // geometry
  m.def("euler_to_matrix", [](const Vec3& deg) { return euler_to_matrix(EulerAngles(deg)); }, py::arg("degrees"));
  m.def("matrix_to_euler", [](const Mat3& r) {
    const EulerResult e = matrix_to_euler(r);
    return py::make_tuple(e.angles.degrees, e.gimbal_lock);
  }, py::arg("rotation"), "Returns (degrees, gimbal_lock).");
  m.def("rotation_angle_deg", &rotation_angle_deg, py::arg("rotation"));
  m.def("chain_trajectory", [](const Array& steps, std::optional<Array> start) {
    const Pose s = start ? poses_from_array(*start).at(0) : Pose::identity();
    return poses_to_array(chain_trajectory(s, from_matrix(rows_to_matrix(steps, 6))).poses);
  }, py::arg("steps"), py::arg("start") = py::none(), "Absolute (N, 4, 4) poses from (N-1, 6) steps.");
  m.def("relative_steps", [](const Array& poses) { return steps_to_array(relative_steps(poses_from_array(poses))); },
        py::arg("poses"));

  // simulator and scan data
  py::class_<ScanSequence>(m, "Scan")
      .def_property_readonly("frames", [](const ScanSequence& s) { return frames_to_array(s.frames); })
      .def_property_readonly("orientation", [](const ScanSequence& s) {
        nn::Matrix o(s.imu.size(), 3);
        for (std::size_t i = 0; i < s.imu.size(); ++i) o.row(i) = s.imu[i].orientation.degrees.transpose();
        return o;
      })
      .def_property_readonly("acceleration", [](const ScanSequence& s) {
        nn::Matrix a(s.imu.size(), 3);
        for (std::size_t i = 0; i < s.imu.size(); ++i) a.row(i) = s.imu[i].acceleration.transpose();
        return a;
      })
      .def_property_readonly("has_ground_truth", [](const ScanSequence& s) { return s.gt.has_value(); })
      .def_property_readonly("poses", [](const ScanSequence& s) -> py::object {
        if (!s.gt) return py::none();
        return poses_to_array(s.gt->poses);
      })
      .def_property_readonly("steps", [](const ScanSequence& s) -> py::object {
        if (!s.gt) return py::none();
        return steps_to_array(s.gt->relative());
      })
      .def_property_readonly("dt", [](const ScanSequence& s) { return s.meta.dt; })
      .def_property_readonly("pixel_spacing", [](const ScanSequence& s) { return s.meta.pixel_spacing; })
      .def_property_readonly("style", [](const ScanSequence& s) { return s.meta.style; })
      .def("without_ground_truth", [](const ScanSequence& s) {
        ScanSequence c = s;
        c.gt.reset();
        return c;
      })
      .def("__len__", &ScanSequence::size);

  m.def("simulate_dataset",
        [](int count, std::uint64_t seed, std::vector<std::string> styles, int frame_count, int image_size,
           double length_min, double length_max, double accel_sigma, double accel_bias,
           double orientation_sigma, int phantom_pool) {
          DatasetSpec d;
          d.styles.clear();
          for (const auto& s : styles) d.styles.push_back(style_of(s));
          d.scan.trajectory.frame_count = frame_count;
          d.scan.image_height = d.scan.image_width = image_size;
          d.length_min = length_min;
          d.length_max = length_max;
          d.scan.noise = NoiseSpec{accel_sigma, accel_bias, orientation_sigma};
          d.phantom_pool = phantom_pool;
          py::gil_scoped_release release;
          return generate_dataset(d, count, seed);
        },
        py::arg("count"), py::arg("seed") = 0,
        py::arg("styles") = std::vector<std::string>{"linear", "curved", "fast_and_slow", "loop"},
        py::arg("frame_count") = 32, py::arg("image_size") = 64, py::arg("length_min") = 15.0,
        py::arg("length_max") = 40.0, py::arg("accel_sigma") = 50.0, py::arg("accel_bias") = 20.0,
        py::arg("orientation_sigma") = 0.5, py::arg("phantom_pool") = 4);
  m.def("validate", &validate, py::arg("scan"));
  m.def("save_scan", &save_scan, py::arg("scan"), py::arg("directory"));
  m.def("load_scan", &load_scan, py::arg("directory"));

  // model
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("image_height", &ModelConfig::image_height)
      .def_readwrite("image_width", &ModelConfig::image_width)
      .def_readwrite("channels", &ModelConfig::channels)
      .def_readwrite("feature_height", &ModelConfig::feature_height)
      .def_readwrite("feature_width", &ModelConfig::feature_width)
      .def_readwrite("hidden", &ModelConfig::hidden)
      .def_readwrite("accel_widths", &ModelConfig::accel_widths)
      .def_readwrite("euler_widths", &ModelConfig::euler_widths)
      .def_readwrite("literal_velocity_sum", &ModelConfig::literal_velocity_sum)
      .def_readwrite("product_channel", &ModelConfig::product_channel)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<MotionEstimator>(m, "MotionEstimator")
      .def(py::init<const ModelConfig&>(), py::arg("config"))
      .def_property_readonly("parameter_count", [](const MotionEstimator& e) { return e.params().size(); })
      .def_property_readonly("parameters", [](const MotionEstimator& e) { return e.params().values; })
      .def("predict", [](const MotionEstimator& e, const ScanSequence& s, bool zero_accel, bool zero_euler) {
        ForwardOptions o;
        o.zero_accel_branch = zero_accel;
        o.zero_euler_input = zero_euler;
        return steps_to_array(e.predict(make_inputs(s), o));
      }, py::arg("scan"), py::arg("zero_accel_branch") = false, py::arg("zero_euler_input") = false,
         "Relative steps (N-1, 6); ground truth is never read.")
      .def("save", [](const MotionEstimator& e, const std::filesystem::path& p) { save_checkpoint(e, p); },
           py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("lr_halving_period", &TrainConfig::lr_halving_period)
      .def_readwrite("augmentations_per_scan", &TrainConfig::augmentations_per_scan)
      .def_readwrite("p_subsequence", &TrainConfig::p_subsequence)
      .def_readwrite("p_interval", &TrainConfig::p_interval)
      .def_readwrite("p_inversion", &TrainConfig::p_inversion)
      .def_readwrite("seed", &TrainConfig::seed);

  m.def("train", [](MotionEstimator& model, const std::vector<ScanSequence>& scans, const TrainConfig& cfg) {
    std::vector<EpochRecord> history;
    {
      py::gil_scoped_release release;
      history = train(model, scans, cfg);
    }
    py::list out;
    for (const auto& r : history) {
      py::dict d = report_dict(r.loss);
      d["epoch"] = r.epoch;
      d["learning_rate"] = r.learning_rate;
      out.append(d);
    }
    return out;
  }, py::arg("model"), py::arg("scans"), py::arg("config"), "Trains in place; returns per-epoch losses.");

  m.def("adapt_online", [](MotionEstimator& model, const ScanSequence& scan, int iterations, double learning_rate,
                           bool freeze_encoder) {
    OnlineConfig cfg;
    cfg.iterations = iterations;
    cfg.learning_rate = learning_rate;
    cfg.policy = freeze_encoder ? OnlineConfig::Policy::kFreezeEncoder : OnlineConfig::Policy::kAll;
    ScanSequence blind = scan;
    blind.gt.reset();
    std::vector<LossReport> history;
    {
      py::gil_scoped_release release;
      history = adapt_online(model, blind, cfg);
    }
    py::list out;
    for (const auto& r : history) out.append(report_dict(r));
    return out;
  }, py::arg("model"), py::arg("scan"), py::arg("iterations") = 60, py::arg("learning_rate") = 2e-6,
     py::arg("freeze_encoder") = false);

  // losses
  m.def("pearson_loss", [](const Array& x, const Array& y) {
    return pearson_loss(rows_to_matrix(x, -1), rows_to_matrix(y, -1));
  }, py::arg("x"), py::arg("y"), "Mean over channels of 1 - r for (T, d) arrays, correlating along axis 0.");
  m.def("offline_loss", [](const Array& est, const Array& gt) {
    return report_dict(offline_loss(rows_to_matrix(est, 6), rows_to_matrix(gt, 6)));
  }, py::arg("estimate"), py::arg("truth"));
  m.def("estimated_acceleration", [](const Array& steps) {
    return nn::Matrix(estimated_acceleration(rows_to_matrix(steps, 6)).transpose());
  }, py::arg("steps"));

  // evaluation
  m.def("compute_metrics", [](const Array& est, const Array& gt, int height, int width, double pixel_spacing) {
    return metrics_dict(compute_metrics(TrajectoryEstimate{poses_from_array(est)},
                                        TrajectoryEstimate{poses_from_array(gt)},
                                        FrameGeometry{height, width, pixel_spacing}));
  }, py::arg("estimate"), py::arg("truth"), py::arg("height") = 64, py::arg("width") = 64,
     py::arg("pixel_spacing") = 0.3);
  m.def("hausdorff_distance", [](const Array& a, const Array& b) {
    auto points = [](const Array& x) {
      if (x.ndim() != 2 || x.shape(1) != 3) throw Error(ErrorCode::kShapeMismatch, "points must have shape (N, 3)");
      auto v = x.unchecked<2>();
      std::vector<Vec3> out;
      for (py::ssize_t i = 0; i < x.shape(0); ++i) out.emplace_back(v(i, 0), v(i, 1), v(i, 2));
      return out;
    };
    return hausdorff_distance(points(a), points(b));
  }, py::arg("a"), py::arg("b"));
  m.def("compound_volume", [](const ScanSequence& scan, const Array& poses, double voxel_spacing) {
    const CompoundedVolume v = compound_volume(scan.frames, poses_from_array(poses), scan.meta.pixel_spacing,
                                               voxel_spacing);
    py::array_t<float> out({py::ssize_t{v.nz}, py::ssize_t{v.ny}, py::ssize_t{v.nx}});
    std::memcpy(out.mutable_data(), v.voxels.data(), v.voxels.size() * sizeof(float));
    return py::make_tuple(out, v.origin);
  }, py::arg("scan"), py::arg("poses"), py::arg("voxel_spacing") = 0.3,
     "Returns (volume indexed [z, y, x], origin in mm).");
}
