#include "anglereloc/json_io.h"

#include <algorithm>
#include <cstring>

#include "anglereloc/error.h"

namespace anglereloc {

namespace {

template <typename T>
void Read(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return;
  }
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError,
                std::string("bad value for '") + key + "': " + e.what());
  }
}

void RequireObject(const json& j, const std::string& context) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kConfigError, context + " must be a JSON object");
  }
}

}  // namespace

json Vec3ToJson(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 JsonToVec3(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kConfigError, "expected a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json PoseToJson(const PoseSE3& pose) {
  const Mat4 m = pose.Matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  }
  return rows;
}

PoseSE3 JsonToPose(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::kParseError, "pose must be a 4x4 array");
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) {
      throw Error(ErrorCode::kParseError, "pose must be a 4x4 array");
    }
    for (int c = 0; c < 4; ++c) {
      m(r, c) = j[r][c].get<double>();
    }
  }
  return PoseSE3::FromMatrix(m);
}

void CheckKeys(const json& j, std::initializer_list<const char*> allowed,
               const std::string& context) {
  RequireObject(j, context);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(),
                    [&](const char* k) { return it.key() == k; });
    if (!known) {
      throw Error(ErrorCode::kConfigError,
                  "unknown key '" + it.key() + "' in " + context);
    }
  }
}

void to_json(json& j, const DatasetConfig& c) {
  j = {{"seed", c.seed},
       {"point_count", c.point_count},
       {"plane_count", c.plane_count},
       {"bounds_min", Vec3ToJson(c.bounds.min)},
       {"bounds_max", Vec3ToJson(c.bounds.max)},
       {"n_train", c.n_train},
       {"n_test", c.n_test},
       {"width", c.width},
       {"height", c.height},
       {"focal", c.focal},
       {"pixel_noise_sigma", c.pixel_noise_sigma},
       {"descriptor_noise_sigma", c.descriptor_noise_sigma},
       {"descriptor_dim", c.descriptor_dim},
       {"covis_fraction", c.covis_fraction},
       {"render_images", c.render_images},
       {"image_width", c.image_width},
       {"image_height", c.image_height},
       {"dense", c.dense},
       {"min_visible", c.min_visible}};
}

void from_json(const json& j, DatasetConfig& c) {
  CheckKeys(j,
            {"seed", "point_count", "plane_count", "bounds_min", "bounds_max",
             "n_train", "n_test", "width", "height", "focal",
             "pixel_noise_sigma", "descriptor_noise_sigma", "descriptor_dim",
             "covis_fraction", "render_images", "image_width", "image_height",
             "dense", "min_visible"},
            "scene config");
  Read(j, "seed", c.seed);
  Read(j, "point_count", c.point_count);
  Read(j, "plane_count", c.plane_count);
  if (j.contains("bounds_min")) c.bounds.min = JsonToVec3(j["bounds_min"]);
  if (j.contains("bounds_max")) c.bounds.max = JsonToVec3(j["bounds_max"]);
  Read(j, "n_train", c.n_train);
  Read(j, "n_test", c.n_test);
  Read(j, "width", c.width);
  Read(j, "height", c.height);
  Read(j, "focal", c.focal);
  Read(j, "pixel_noise_sigma", c.pixel_noise_sigma);
  Read(j, "descriptor_noise_sigma", c.descriptor_noise_sigma);
  Read(j, "descriptor_dim", c.descriptor_dim);
  Read(j, "covis_fraction", c.covis_fraction);
  Read(j, "render_images", c.render_images);
  Read(j, "image_width", c.image_width);
  Read(j, "image_height", c.image_height);
  Read(j, "dense", c.dense);
  Read(j, "min_visible", c.min_visible);
}

void to_json(json& j, const LossConfig& c) {
  j = {{"lambda_multiview", c.lambda_multiview},
       {"lambda_photo", c.lambda_photo},
       {"alpha_ssim", c.alpha_ssim},
       {"epsilon_norm", c.epsilon_norm}};
}

void from_json(const json& j, LossConfig& c) {
  CheckKeys(j, {"lambda_multiview", "lambda_photo", "alpha_ssim", "epsilon_norm"},
            "loss config");
  Read(j, "lambda_multiview", c.lambda_multiview);
  Read(j, "lambda_photo", c.lambda_photo);
  Read(j, "alpha_ssim", c.alpha_ssim);
  Read(j, "epsilon_norm", c.epsilon_norm);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"mode", TrainModeName(c.mode)},
       {"model", ModelKindName(c.model)},
       {"iterations", c.iterations},
       {"base_lr", c.schedule.base_lr},
       {"halve_at", c.schedule.halve_at},
       {"loss", c.loss},
       {"const_depth", c.const_depth},
       {"init_fraction", c.init_fraction},
       {"seed", c.seed},
       {"jitter", c.jitter},
       {"jitter_px", c.jitter_px},
       {"checkpoint_every", c.checkpoint_every},
       {"hidden", c.hidden},
       {"output_scale", c.output_scale},
       {"photo_max_offset", c.photo_max_offset},
       {"record_wall_time", c.record_wall_time}};
}

void from_json(const json& j, TrainConfig& c) {
  CheckKeys(j,
            {"mode", "model", "iterations", "base_lr", "halve_at", "loss",
             "const_depth", "init_fraction", "seed", "jitter", "jitter_px",
             "checkpoint_every", "hidden", "output_scale", "photo_max_offset",
             "record_wall_time"},
            "train config");
  if (j.contains("mode")) c.mode = ParseTrainMode(j["mode"].get<std::string>());
  if (j.contains("model")) {
    c.model = ParseModelKind(j["model"].get<std::string>());
  }
  Read(j, "iterations", c.iterations);
  Read(j, "base_lr", c.schedule.base_lr);
  Read(j, "halve_at", c.schedule.halve_at);
  if (j.contains("loss")) from_json(j["loss"], c.loss);
  Read(j, "const_depth", c.const_depth);
  Read(j, "init_fraction", c.init_fraction);
  Read(j, "seed", c.seed);
  Read(j, "jitter", c.jitter);
  Read(j, "jitter_px", c.jitter_px);
  Read(j, "checkpoint_every", c.checkpoint_every);
  Read(j, "hidden", c.hidden);
  Read(j, "output_scale", c.output_scale);
  Read(j, "photo_max_offset", c.photo_max_offset);
  Read(j, "record_wall_time", c.record_wall_time);
}

void to_json(json& j, const RansacConfig& c) {
  j = {{"hypothesis_count", c.hypothesis_count},
       {"inlier_threshold", c.inlier_threshold},
       {"max_refinement_rounds", c.max_refinement_rounds},
       {"seed", c.seed},
       {"min_inliers", c.min_inliers}};
}

void from_json(const json& j, RansacConfig& c) {
  CheckKeys(j,
            {"hypothesis_count", "inlier_threshold", "max_refinement_rounds",
             "seed", "min_inliers"},
            "ransac config");
  Read(j, "hypothesis_count", c.hypothesis_count);
  Read(j, "inlier_threshold", c.inlier_threshold);
  Read(j, "max_refinement_rounds", c.max_refinement_rounds);
  Read(j, "seed", c.seed);
  Read(j, "min_inliers", c.min_inliers);
}

}  // namespace anglereloc
