#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anglereloc/error.h"
#include "anglereloc/geometry.h"

namespace anglereloc {
namespace {

PoseSE3 RandomPose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return PoseSE3(q.normalized().toRotationMatrix(),
                 Vec3(n(rng), n(rng), n(rng)) * 3.0);
}

TEST(Pose, WorldToCameraMatchesHomogeneousInverse) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const Vec3 y = Vec3::Random() * 5.0;
    // Oracle: general 4x4 inverse of the homogeneous matrix.
    const Eigen::Vector4d h = pose.Matrix().inverse() * y.homogeneous();
    EXPECT_LT((WorldToCamera(pose, y) - h.head<3>()).norm(), 1e-12);
  }
}

TEST(Pose, CompositionAndInverse) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 a = RandomPose(rng);
    const PoseSE3 b = RandomPose(rng);
    EXPECT_LT(((a * b).Matrix() - a.Matrix() * b.Matrix()).norm(), 1e-12);
    EXPECT_LT((ComposeOrInverse(a, nullptr).Matrix() - a.Matrix().inverse()).norm(),
              1e-12);
    EXPECT_LT((ComposeOrInverse(a, &b).Matrix() - (a * b).Matrix()).norm(), 1e-15);
    EXPECT_TRUE((a * a.Inverse()).IsValid());
  }
}

TEST(Pose, FromMatrixRoundTrip) {
  std::mt19937_64 rng(7);
  const PoseSE3 p = RandomPose(rng);
  const PoseSE3 q = PoseSE3::FromMatrix(p.Matrix());
  EXPECT_EQ(q.rotation(), p.rotation());
  EXPECT_EQ(q.translation(), p.translation());
  EXPECT_EQ(q.center(), p.translation());
}

TEST(Pose, OrthonormalityDetectsShear) {
  Mat3 r = Mat3::Identity();
  EXPECT_TRUE(PoseSE3(r, Vec3::Zero()).IsValid());
  r(0, 1) = 1e-6;
  EXPECT_FALSE(PoseSE3(r, Vec3::Zero()).IsValid());
  EXPECT_GT(PoseSE3(r, Vec3::Zero()).OrthonormalityError(), 1e-7);
}

TEST(Projection, OnAxisAndStatus) {
  const CameraIntrinsics intr{500.0, 320.0, 240.0};
  const Projection a = Project(intr, Vec3(0, 0, 2));
  EXPECT_EQ(a.pixel, Vec2(320, 240));
  EXPECT_EQ(a.status, DepthStatus::kInFront);
  EXPECT_EQ(Project(intr, Vec3(1, 0, -2)).status, DepthStatus::kBehind);
  EXPECT_EQ(Project(intr, Vec3(1, 0, 1e-13)).status, DepthStatus::kNearPlane);
  EXPECT_EQ(Project(intr, Vec3(1, 0, -1e-13)).status, DepthStatus::kNearPlane);
  // Not clamped: a near-plane point keeps its raw, huge pixel.
  EXPECT_GT(Project(intr, Vec3(1, 0, 1e-13)).pixel.x(), 1e14);
  EXPECT_FALSE(std::isfinite(Project(intr, Vec3(1, 0, 0)).pixel.x()));
}

TEST(Projection, BehindPointSharesPixelWithAntipode) {
  const CameraIntrinsics intr{525.0, 319.5, 239.5};
  const Vec3 x(0.3, -0.7, 4.0);
  const Projection front = Project(intr, x);
  const Projection back = Project(intr, -2.5 * x);
  EXPECT_LT((front.pixel - back.pixel).norm(), 1e-12);
  EXPECT_EQ(back.status, DepthStatus::kBehind);
}

TEST(Projection, RayVectorInvertsProjection) {
  const CameraIntrinsics intr{525.0, 319.5, 239.5};
  const Vec2 p(100.25, 400.5);
  const Vec3 d = RayVector(intr, p);
  EXPECT_EQ(d.z(), 525.0);
  EXPECT_LT((Project(intr, 3.0 * d).pixel - p).norm(), 1e-12);
  EXPECT_LT((intr.Matrix().inverse() * p.homogeneous() * intr.f - d).norm(), 1e-12);
}

TEST(Intrinsics, ScaledKeepsPixelCentres) {
  const CameraIntrinsics intr{525.0, 319.5, 239.5};
  const CameraIntrinsics s = intr.Scaled(0.125);
  EXPECT_DOUBLE_EQ(s.f, 65.625);
  EXPECT_DOUBLE_EQ(s.cx, 39.5);
  EXPECT_DOUBLE_EQ(s.cy, 29.5);
  // The same camera ray lands on corresponding pixels in both images.
  const Vec3 x(0.4, -0.2, 3.0);
  const Vec2 big = Project(intr, x).pixel;
  const Vec2 small = Project(s, x).pixel;
  EXPECT_LT(((big.array() + 0.5) * 0.125 - 0.5 - small.array()).abs().maxCoeff(),
            1e-12);
}

TEST(PoseError, MatchesQuaternionAngle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 a = RandomPose(rng);
    const PoseSE3 b = RandomPose(rng);
    const Eigen::Quaterniond qa(a.rotation());
    const Eigen::Quaterniond qb(b.rotation());
    const double oracle =
        2.0 * std::acos(std::min(1.0, std::abs(qa.dot(qb)))) * 180.0 / M_PI;
    const PoseError e = ComputePoseError(a, b);
    EXPECT_NEAR(e.rotation_deg, oracle, 1e-6);
    EXPECT_NEAR(e.translation, (a.center() - b.center()).norm(), 1e-12);
  }
  const PoseError zero = ComputePoseError(PoseSE3(), PoseSE3());
  EXPECT_EQ(zero.rotation_deg, 0.0);
  EXPECT_EQ(zero.translation, 0.0);
}

TEST(Rotation, AxisAngleRoundTrip) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 w = Vec3(u(rng), u(rng), u(rng)) * 1.5;
    const Mat3 r = AxisAngleToRotation(w);
    const Eigen::AngleAxisd oracle(w.norm(), w.normalized());
    EXPECT_LT((r - oracle.toRotationMatrix()).norm(), 1e-12);
    EXPECT_LT((RotationToAxisAngle(r) - w).norm(), 1e-9);
  }
  EXPECT_EQ(AxisAngleToRotation(Vec3::Zero()), Mat3::Identity());
}

TEST(Rotation, NearestRotationProjects) {
  std::mt19937_64 rng(17);
  const PoseSE3 p = RandomPose(rng);
  Mat3 noisy = p.rotation();
  noisy(0, 0) += 1e-3;
  noisy(2, 1) -= 2e-3;
  const Mat3 r = NearestRotation(noisy);
  EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  EXPECT_LT((r - p.rotation()).norm(), 5e-3);
  // A reflection is mapped to a proper rotation.
  Mat3 flip = Mat3::Identity();
  flip(2, 2) = -1.0;
  EXPECT_NEAR(NearestRotation(flip).determinant(), 1.0, 1e-12);
}

TEST(LookAt, TargetProjectsToPrincipalPoint) {
  const CameraIntrinsics intr{525.0, 319.5, 239.5};
  const Vec3 eye(4.0, -1.0, -2.0);
  const Vec3 target(0.5, 0.2, 6.0);
  const PoseSE3 pose = LookAt(eye, target);
  EXPECT_TRUE(pose.IsValid());
  EXPECT_EQ(pose.center(), eye);
  const Projection p = Project(intr, WorldToCamera(pose, target));
  EXPECT_EQ(p.status, DepthStatus::kInFront);
  EXPECT_LT((p.pixel - Vec2(319.5, 239.5)).norm(), 1e-9);
}

TEST(Errors, CodeNames) {
  const Error e(ErrorCode::kNonRigid, "x");
  EXPECT_EQ(e.code(), ErrorCode::kNonRigid);
  EXPECT_NE(std::string(e.what()).find("NonRigid"), std::string::npos);
}

}  // namespace
}  // namespace anglereloc
