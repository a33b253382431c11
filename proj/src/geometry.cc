#include "anglereloc/geometry.h"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "anglereloc/error.h"

namespace anglereloc {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIndexMismatch: return "IndexMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMissingPose: return "MissingPose";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNonRigid: return "NonRigid";
    case ErrorCode::kDegenerate: return "Degenerate";
    case ErrorCode::kPrecondition: return "Precondition";
    case ErrorCode::kNoGeometry: return "NoGeometry";
    case ErrorCode::kInfeasibleViewpoint: return "InfeasibleViewpoint";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

const char* DepthStatusName(DepthStatus status) {
  switch (status) {
    case DepthStatus::kInFront: return "InFront";
    case DepthStatus::kBehind: return "Behind";
    case DepthStatus::kNearPlane: return "NearPlane";
  }
  return "Unknown";
}

Mat3 CameraIntrinsics::Matrix() const {
  Mat3 c;
  c << f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0;
  return c;
}

CameraIntrinsics CameraIntrinsics::Scaled(double factor) const {
  return {f * factor, (cx + 0.5) * factor - 0.5, (cy + 0.5) * factor - 0.5};
}

PoseSE3 PoseSE3::FromMatrix(const Mat4& m) {
  return PoseSE3(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Mat4 PoseSE3::Matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

PoseSE3 PoseSE3::Inverse() const {
  const Mat3 rt = rotation_.transpose();
  return PoseSE3(rt, -(rt * translation_));
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
  return PoseSE3(rotation_ * other.rotation_,
                 rotation_ * other.translation_ + translation_);
}

double PoseSE3::OrthonormalityError() const {
  const double ortho =
      (rotation_.transpose() * rotation_ - Mat3::Identity()).norm();
  const double det = std::abs(rotation_.determinant() - 1.0);
  return std::max(ortho, det);
}

bool PoseSE3::IsValid(double tol) const {
  return rotation_.allFinite() && translation_.allFinite() &&
         OrthonormalityError() < tol;
}

Vec3 WorldToCamera(const PoseSE3& pose, const Vec3& world) {
  return pose.rotation().transpose() * (world - pose.translation());
}

Projection Project(const CameraIntrinsics& intr, const Vec3& camera_point) {
  const double z = camera_point.z();
  DepthStatus status = DepthStatus::kInFront;
  if (std::abs(z) < kNearPlaneEpsilon) {
    status = DepthStatus::kNearPlane;
  } else if (z < 0.0) {
    status = DepthStatus::kBehind;
  }
  const Vec2 pixel(intr.f * camera_point.x() / z + intr.cx,
                   intr.f * camera_point.y() / z + intr.cy);
  return {pixel, status};
}

Vec3 RayVector(const CameraIntrinsics& intr, const Vec2& pixel) {
  return Vec3(pixel.x() - intr.cx, pixel.y() - intr.cy, intr.f);
}

PoseSE3 ComposeOrInverse(const PoseSE3& a, const PoseSE3* b) {
  return b == nullptr ? a.Inverse() : a * (*b);
}

PoseError ComputePoseError(const PoseSE3& estimate,
                           const PoseSE3& ground_truth) {
  const Mat3 relative = estimate.rotation().transpose() * ground_truth.rotation();
  // atan2 keeps precision near zero where acos of the trace flattens out.
  const Vec3 axis_sin(relative(2, 1) - relative(1, 2), relative(0, 2) - relative(2, 0),
                      relative(1, 0) - relative(0, 1));
  PoseError err;
  err.rotation_deg =
      std::atan2(0.5 * axis_sin.norm(), 0.5 * (relative.trace() - 1.0)) * 180.0 / M_PI;
  err.translation = (estimate.center() - ground_truth.center()).norm();
  return err;
}

Mat3 AxisAngleToRotation(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-300) {
    return Mat3::Identity();
  }
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vec3 RotationToAxisAngle(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.axis() * aa.angle();
}

Mat3 NearestRotation(const Mat3& m) {
  const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

PoseSE3 LookAt(const Vec3& eye, const Vec3& target, const Vec3& down) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = down.cross(z);
  if (x.norm() < 1e-9) {
    x = Vec3::UnitX().cross(z);
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return PoseSE3(r, eye);
}

}  // namespace anglereloc
