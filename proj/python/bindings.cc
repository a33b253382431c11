#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <vector>

#include "anglereloc/commands.h"
#include "anglereloc/dataset_io.h"
#include "anglereloc/error.h"
#include "anglereloc/geometry.h"
#include "anglereloc/gradcheck.h"
#include "anglereloc/losses.h"
#include "anglereloc/ransac_pnp.h"
#include "anglereloc/regressor.h"

namespace py = pybind11;
using namespace anglereloc;

namespace {

using RowsX2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using RowsX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

RunConfig ConfigFrom(const std::string& json_text) {
  return ParseRunConfig(json_text.empty() ? "{}" : json_text);
}

py::tuple LossTuple(const PointLossTerm& t) {
  return py::make_tuple(t.value, t.grad, DepthStatusName(t.status));
}

py::dict EstimateDict(const PoseEstimate& e) {
  py::dict d;
  d["pose"] = e.pose;
  d["inlier_count"] = e.inlier_count;
  d["inlier_ids"] = e.inlier_ids;
  d["status"] = PoseStatusName(e.status);
  return d;
}

PoseEstimate RunRansac(const CameraIntrinsics& intr, const RowsX2& pixels,
                       const RowsX3& worlds, const RansacConfig& cfg) {
  if (pixels.rows() != worlds.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "pixels and worlds differ in length");
  }
  std::vector<Correspondence2D3D> corr(pixels.rows());
  for (Eigen::Index i = 0; i < pixels.rows(); ++i) {
    corr[i].id = static_cast<PointId>(i);
    corr[i].pixel = pixels.row(i).transpose();
    corr[i].world = worlds.row(i).transpose();
  }
  return Ransac(corr, intr, cfg);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Scene-coordinate regression with angle-based reprojection losses";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double f, double cx, double cy) { return CameraIntrinsics{f, cx, cy}; }),
           py::arg("f"), py::arg("cx"), py::arg("cy"))
      .def_readwrite("f", &CameraIntrinsics::f)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def("matrix", &CameraIntrinsics::Matrix);

  py::class_<PoseSE3>(m, "PoseSE3")
      .def(py::init<>())
      .def(py::init<const Mat3&, const Vec3&>(), py::arg("rotation"), py::arg("translation"))
      .def_static("from_matrix", &PoseSE3::FromMatrix)
      .def_property_readonly("rotation", &PoseSE3::rotation)
      .def_property_readonly("translation", &PoseSE3::translation)
      .def("matrix", &PoseSE3::Matrix)
      .def("inverse", &PoseSE3::Inverse)
      .def("apply", &PoseSE3::Apply)
      .def("__mul__", &PoseSE3::operator*)
      .def("is_valid", &PoseSE3::IsValid, py::arg("tol") = 1e-9);

  m.def("axis_angle_to_rotation", &AxisAngleToRotation);
  m.def(
      "pose_error",
      [](const PoseSE3& est, const PoseSE3& gt) {
        const PoseError e = ComputePoseError(est, gt);
        return py::make_tuple(e.rotation_deg, e.translation);
      },
      py::arg("estimate"), py::arg("ground_truth"),
      "Rotation error in degrees and camera-centre distance.");

  m.def(
      "reproj_loss",
      [](const CameraIntrinsics& intr, const PoseSE3& pose, const Vec3& y, const Vec2& p) {
        return LossTuple(ReprojPoint(intr, pose, y, p));
      },
      py::arg("intr"), py::arg("pose"), py::arg("y"), py::arg("pixel"),
      "Returns (value, gradient wrt y, depth status).");
  m.def(
      "angle_loss",
      [](const CameraIntrinsics& intr, const PoseSE3& pose, const Vec3& y, const Vec2& p,
         double epsilon_norm) {
        LossConfig cfg;
        cfg.epsilon_norm = epsilon_norm;
        return LossTuple(AnglePoint(intr, pose, y, p, cfg));
      },
      py::arg("intr"), py::arg("pose"), py::arg("y"), py::arg("pixel"),
      py::arg("epsilon_norm") = 1e-8, "Returns (value, gradient wrt y, depth status).");

  m.def(
      "ransac_pnp",
      [](const CameraIntrinsics& intr, const RowsX2& pixels, const RowsX3& worlds,
         int hypothesis_count, double inlier_threshold, std::uint64_t seed, int min_inliers,
         int max_refinement_rounds) {
        RansacConfig cfg;
        cfg.hypothesis_count = hypothesis_count;
        cfg.inlier_threshold = inlier_threshold;
        cfg.seed = seed;
        cfg.min_inliers = min_inliers;
        cfg.max_refinement_rounds = max_refinement_rounds;
        return EstimateDict(RunRansac(intr, pixels, worlds, cfg));
      },
      py::arg("intr"), py::arg("pixels"), py::arg("worlds"), py::arg("hypothesis_count") = 256,
      py::arg("inlier_threshold") = 10.0, py::arg("seed") = 1, py::arg("min_inliers") = 10,
      py::arg("max_refinement_rounds") = 8);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("intr", &Dataset::intr)
      .def_readonly("width", &Dataset::width)
      .def_readonly("height", &Dataset::height)
      .def_property_readonly("frame_count", [](const Dataset& d) { return d.frames.size(); })
      .def("has_images", &Dataset::HasImages)
      .def(
          "frame_ids",
          [](const Dataset& d, const std::string& split) {
            std::vector<ImageId> ids;
            for (size_t i : d.FrameIndices(ParseSplit(split))) ids.push_back(d.frames[i].id);
            return ids;
          },
          py::arg("split") = "train")
      .def(
          "pose", [](const Dataset& d, ImageId id) { return d.FrameById(id).pose; },
          py::arg("image_id"))
      .def(
          "correspondences",
          [](const Dataset& d, ImageId id) {
            const DatasetFrame& f = d.FrameById(id);
            RowsX2 pixels(f.observations.size(), 2);
            RowsX3 worlds(f.observations.size(), 3);
            for (size_t k = 0; k < f.observations.size(); ++k) {
              pixels.row(k) = f.observations[k].pixel.transpose();
              worlds.row(k) = f.observations[k].gt_world.transpose();
            }
            return py::make_tuple(pixels, worlds);
          },
          py::arg("image_id"), "Observed pixels and ground-truth world points.");

  m.def(
      "make_dataset",
      [](const std::string& config_json) { return MakeDataset(ConfigFrom(config_json).scene); },
      py::arg("config_json") = "");
  m.def("save_dataset", &SaveDataset, py::arg("dataset"), py::arg("dir"));
  m.def("load_dataset", &LoadDataset, py::arg("dir"));

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("diverged", &TrainResult::diverged)
      .def_property_readonly("log_csv", [](const TrainResult& r) { return r.log.ToCsv(); })
      .def_property_readonly("final_loss",
                             [](const TrainResult& r) {
                               return r.log.records.empty() ? 0.0 : r.log.records.back().loss;
                             })
      .def(
          "coord_error",
          [](const TrainResult& r, const Dataset& d, const std::string& split) {
            return EvaluateCoords(r.model, d, ParseSplit(split)).median;
          },
          py::arg("dataset"), py::arg("split") = "train",
          "Median distance between predicted and ground-truth coordinates.")
      .def(
          "localize",
          [](const TrainResult& r, const Dataset& d, ImageId id) {
            const DatasetFrame& f = d.FrameById(id);
            const PredictionGrid pred = Predict(r.model, f);
            std::vector<Correspondence2D3D> corr(pred.ids.size());
            for (size_t k = 0; k < corr.size(); ++k) {
              corr[k] = {pred.ids[k], f.observations[k].pixel, pred.coords[k]};
            }
            return EstimateDict(Ransac(corr, d.intr, RansacConfig{}));
          },
          py::arg("dataset"), py::arg("image_id"))
      .def(
          "save",
          [](const TrainResult& r, const std::filesystem::path& path) {
            SaveCheckpoint(path, r.model, TrainConfig{});
          },
          py::arg("path"));

  m.def(
      "train",
      [](const Dataset& d, const std::string& config_json) {
        const TrainConfig cfg = ConfigFrom(config_json).train;
        py::gil_scoped_release release;
        return Train(d, cfg);
      },
      py::arg("dataset"), py::arg("config_json") = "");

  m.def(
      "gradcheck",
      [](const std::string& config_json) {
        const GradCheckReport report = RunGradCheck(ConfigFrom(config_json).gradcheck);
        py::list suites;
        for (const GradCheckSuite& s : report.suites) {
          py::dict d;
          d["loss"] = s.loss;
          d["checked"] = s.checked;
          d["excluded"] = s.excluded;
          d["max_rel_err"] = s.max_rel_err;
          d["pass"] = s.pass;
          suites.append(d);
        }
        return py::make_tuple(report.pass, suites);
      },
      py::arg("config_json") = "");

  m.def(
      "default_config",
      [] { return RunConfigToJson(RunConfig{}); },
      "Fully resolved default run configuration as JSON.");
}
