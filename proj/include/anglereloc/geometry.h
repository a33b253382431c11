#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace anglereloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Pinhole camera with a single focal length (f_x == f_y) and no distortion.
struct CameraIntrinsics {
  double f = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  // Upper-triangular calibration matrix with diagonal (f, f, 1).
  Mat3 Matrix() const;

  // Intrinsics for the same camera after resampling the image by `factor`
  // (e.g. 1/8 for 640x480 -> 80x60), with pixel centers at integer
  // coordinates.
  CameraIntrinsics Scaled(double factor) const;
};

// Rigid transform mapping camera-frame points to world-frame points.
// The inverse maps world points into the camera frame.
class PoseSE3 {
 public:
  PoseSE3() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  PoseSE3(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static PoseSE3 Identity() { return PoseSE3(); }
  static PoseSE3 FromMatrix(const Mat4& m);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  // Camera center in world coordinates.
  const Vec3& center() const { return translation_; }

  Mat4 Matrix() const;
  PoseSE3 Inverse() const;

  // (this * other)(x) == this(other(x)).
  PoseSE3 operator*(const PoseSE3& other) const;

  Vec3 Apply(const Vec3& x) const { return rotation_ * x + translation_; }

  // ||R^T R - I||_F and |det R - 1|, both below 1e-9 for a valid pose.
  double OrthonormalityError() const;
  bool IsValid(double tol = 1e-9) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

enum class DepthStatus { kInFront, kBehind, kNearPlane };

const char* DepthStatusName(DepthStatus status);

// Depths with |Z| below this are classified as near-plane. Classification
// only: projections are never clamped.
inline constexpr double kNearPlaneEpsilon = 1e-12;

struct Projection {
  Vec2 pixel;
  DepthStatus status;
};

struct PoseError {
  double rotation_deg = 0.0;
  double translation = 0.0;
};

// R^T (y - t) for the camera-to-world pose (R, t).
Vec3 WorldToCamera(const PoseSE3& pose, const Vec3& world);

// Raw pinhole projection (f X / Z + cx, f Y / Z + cy). Behind-camera and
// near-plane points still return the raw (possibly non-finite) pixel.
Projection Project(const CameraIntrinsics& intr, const Vec3& camera_point);

// d = f C^{-1} p = (x - cx, y - cy, f).
Vec3 RayVector(const CameraIntrinsics& intr, const Vec2& pixel);

// a * b, or a^{-1} when b is absent.
PoseSE3 ComposeOrInverse(const PoseSE3& a, const PoseSE3* b);

PoseError ComputePoseError(const PoseSE3& estimate, const PoseSE3& ground_truth);

Mat3 AxisAngleToRotation(const Vec3& axis_angle);
Vec3 RotationToAxisAngle(const Mat3& rotation);

// Nearest rotation in Frobenius norm (SVD projection with det fix).
Mat3 NearestRotation(const Mat3& m);

// Camera at `eye` looking at `target`, image y axis along `down`.
PoseSE3 LookAt(const Vec3& eye, const Vec3& target,
               const Vec3& down = Vec3(0.0, 1.0, 0.0));

}  // namespace anglereloc
