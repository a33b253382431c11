#include "anglereloc/losses.h"

#include <cmath>
#include <limits>
#include <string>

#include "anglereloc/error.h"

namespace anglereloc {

namespace {

double RayAngle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

bool TermIsFinite(const PointLossTerm& term) {
  return std::isfinite(term.value) && term.grad.allFinite();
}

}  // namespace

void LossConfig::Validate() const {
  if (!(lambda_multiview >= 0.0) || !(lambda_photo >= 0.0) ||
      !(alpha_ssim >= 0.0) || !(alpha_ssim <= 1.0)) {
    throw Error(ErrorCode::kConfigError,
                "loss weights must be non-negative and alpha in [0, 1]");
  }
  if (!(epsilon_norm > 0.0)) {
    throw Error(ErrorCode::kConfigError, "epsilon_norm must be positive");
  }
}

PointLossTerm ReprojPoint(const CameraIntrinsics& intr, const PoseSE3& pose,
                          const Vec3& y, const Vec2& pixel) {
  const Vec3 cam = WorldToCamera(pose, y);
  const Projection proj = Project(intr, cam);
  const Vec2 residual = proj.pixel - pixel;

  PointLossTerm term;
  term.status = proj.status;
  term.theta = RayAngle(cam, RayVector(intr, pixel));
  term.value = residual.norm();
  if (term.value > 0.0) {
    const double inv_z = 1.0 / cam.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << intr.f * inv_z, 0.0, -intr.f * cam.x() * inv_z * inv_z,
           0.0, intr.f * inv_z, -intr.f * cam.y() * inv_z * inv_z;
    const Vec3 grad_cam = jac.transpose() * (residual / term.value);
    term.grad = pose.rotation() * grad_cam;
  } else if (!std::isfinite(term.value)) {
    term.grad.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return term;
}

PointLossTerm AnglePoint(const CameraIntrinsics& intr, const PoseSE3& pose,
                         const Vec3& y, const Vec2& pixel,
                         const LossConfig& cfg) {
  const Vec3 cam = WorldToCamera(pose, y);
  const Vec3 ray = RayVector(intr, pixel);
  const double ray_norm = ray.norm();
  const double cam_norm = cam.norm();
  const bool guarded = cam_norm < cfg.epsilon_norm;
  const double scale = ray_norm / (guarded ? cfg.epsilon_norm : cam_norm);
  const Vec3 chord = scale * cam - ray;

  PointLossTerm term;
  term.status = Project(intr, cam).status;
  term.theta = RayAngle(cam, ray);
  term.value = chord.norm();
  if (term.value > 0.0) {
    const Vec3 unit_chord = chord / term.value;
    Vec3 grad_cam;
    if (guarded) {
      grad_cam = scale * unit_chord;
    } else {
      // d(s D)/dD = (||d|| / ||D||) (I - u u^T), u = D / ||D||.
      const Vec3 u = cam / cam_norm;
      grad_cam = scale * (unit_chord - u * u.dot(unit_chord));
    }
    term.grad = pose.rotation() * grad_cam;
  }
  return term;
}

void CheckAligned(const PredictionGrid& predictions,
                  std::span<const Observation> observations) {
  if (predictions.ids.size() != predictions.coords.size()) {
    throw Error(ErrorCode::kIndexMismatch,
                "prediction ids and coords differ in length");
  }
  if (predictions.size() != observations.size()) {
    throw Error(ErrorCode::kIndexMismatch,
                "got " + std::to_string(predictions.size()) +
                    " predictions for " + std::to_string(observations.size()) +
                    " observations");
  }
  for (size_t i = 0; i < observations.size(); ++i) {
    if (predictions.ids[i] != observations[i].point) {
      throw Error(ErrorCode::kIndexMismatch,
                  "prediction " + std::to_string(i) + " has point id " +
                      std::to_string(predictions.ids[i]) + ", observation has " +
                      std::to_string(observations[i].point));
    }
  }
}

void FinalizeReport(LossReport& report) {
  report.total = 0.0;
  report.behind_count = 0;
  report.nonfinite = false;
  for (const PointLossTerm& term : report.terms) {
    if (std::isfinite(term.value)) {
      report.total += term.value;
    }
    if (!TermIsFinite(term)) {
      report.nonfinite = true;
    }
    if (term.status == DepthStatus::kBehind) {
      ++report.behind_count;
    }
  }
}

LossReport ImageLoss(ReprojectionKind kind, const CameraIntrinsics& intr,
                     const PoseSE3& pose, const PredictionGrid& predictions,
                     std::span<const Observation> observations,
                     const LossConfig& cfg) {
  CheckAligned(predictions, observations);
  LossReport report;
  report.terms.reserve(observations.size());
  for (size_t i = 0; i < observations.size(); ++i) {
    const Vec3& y = predictions.coords[i];
    const Vec2& p = observations[i].pixel;
    report.terms.push_back(kind == ReprojectionKind::kReproj
                               ? ReprojPoint(intr, pose, y, p)
                               : AnglePoint(intr, pose, y, p, cfg));
  }
  FinalizeReport(report);
  return report;
}

LossReport MultiViewImageLoss(const CameraIntrinsics& intr,
                              const std::map<ImageId, PoseSE3>& poses,
                              ImageId image, const PredictionGrid& predictions,
                              std::span<const Observation> observations,
                              const CoVisibilityGraph& covis,
                              const LossConfig& cfg, Rng& rng) {
  CheckAligned(predictions, observations);
  const auto self = poses.find(image);
  if (self == poses.end()) {
    throw Error(ErrorCode::kMissingPose,
                "no pose for image " + std::to_string(image));
  }
  LossReport report;
  report.terms.reserve(observations.size());
  for (size_t i = 0; i < observations.size(); ++i) {
    const Vec3& y = predictions.coords[i];
    const Observation& obs = observations[i];
    PointLossTerm term = AnglePoint(intr, self->second, y, obs.pixel, cfg);

    const std::vector<ImageId> others = covis.OtherImages(image, obs.point);
    if (!others.empty()) {
      std::uniform_int_distribution<size_t> pick(0, others.size() - 1);
      const ImageId other = others[pick(rng)];
      const auto other_pose = poses.find(other);
      if (other_pose == poses.end()) {
        throw Error(ErrorCode::kMissingPose,
                    "no pose for image " + std::to_string(other));
      }
      const PointLossTerm other_term =
          AnglePoint(intr, other_pose->second, y,
                     *covis.Pixel(other, obs.point), cfg);
      term.value = cfg.lambda_multiview * (term.value + other_term.value);
      term.grad = cfg.lambda_multiview * (term.grad + other_term.grad);
    }
    report.terms.push_back(term);
  }
  FinalizeReport(report);
  return report;
}

LossReport CombinedLoss(const LossReport& angle, const LossReport& photo,
                        const LossConfig& cfg) {
  if (angle.terms.size() != photo.terms.size()) {
    throw Error(ErrorCode::kIndexMismatch,
                "combined reports cover different point sets");
  }
  LossReport out = angle;
  for (size_t i = 0; i < out.terms.size(); ++i) {
    out.terms[i].value += cfg.lambda_photo * photo.terms[i].value;
    out.terms[i].grad += cfg.lambda_photo * photo.terms[i].grad;
  }
  FinalizeReport(out);
  out.valid_count = photo.valid_count;
  out.valid_fraction = photo.valid_fraction;
  return out;
}

}  // namespace anglereloc
