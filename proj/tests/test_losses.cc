#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "anglereloc/error.h"
#include "anglereloc/losses.h"

namespace anglereloc {
namespace {

const CameraIntrinsics kIntr{525.0, 319.5, 239.5};

PoseSE3 RandomPose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return PoseSE3(q.normalized().toRotationMatrix(), Vec3(n(rng), n(rng), n(rng)));
}

Vec2 RandomPixel(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Vec2(640.0 * u(rng), 480.0 * u(rng));
}

Vec3 CentralDiff(const std::function<double(const Vec3&)>& f, const Vec3& y) {
  const double h = 1e-6;
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 a = y, b = y;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

TEST(Reproj, HandValue) {
  // Identity pose, point (1, 2, 5): pixel (525/5 + 319.5, 1050/5 + 239.5).
  const PointLossTerm t =
      ReprojPoint(kIntr, PoseSE3(), Vec3(1, 2, 5), Vec2(424.5 - 3.0, 449.5 + 4.0));
  EXPECT_NEAR(t.value, 5.0, 1e-12);
  EXPECT_EQ(t.status, DepthStatus::kInFront);
}

TEST(Reproj, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const Vec2 p = RandomPixel(rng);
    const Vec3 y = pose.Apply(Vec3::Random() + Vec3(0, 0, 4));
    const Vec3 fd = CentralDiff(
        [&](const Vec3& v) { return ReprojPoint(kIntr, pose, v, p).value; }, y);
    const Vec3 g = ReprojPoint(kIntr, pose, y, p).grad;
    EXPECT_LT((g - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST(Reproj, AntipodalPredictionHasZeroLoss) {
  std::mt19937_64 rng(2);
  const PoseSE3 pose = RandomPose(rng);
  const Vec2 p = RandomPixel(rng);
  const Vec3 d = RayVector(kIntr, p);
  const PointLossTerm t = ReprojPoint(kIntr, pose, pose.Apply(-0.01 * d), p);
  EXPECT_NEAR(t.value, 0.0, 1e-9);
  EXPECT_EQ(t.status, DepthStatus::kBehind);
}

TEST(Reproj, NearPlaneIsReportedNotRepaired) {
  const PointLossTerm t = ReprojPoint(kIntr, PoseSE3(), Vec3(1, 1, 0), Vec2(0, 0));
  EXPECT_FALSE(std::isfinite(t.value));
  EXPECT_FALSE(t.grad.allFinite());
  EXPECT_EQ(t.status, DepthStatus::kNearPlane);
  LossReport r;
  r.terms.push_back(t);
  FinalizeReport(r);
  EXPECT_TRUE(r.nonfinite);
  EXPECT_EQ(r.total, 0.0);
}

TEST(Angle, EqualsChordOfRayAngle) {
  std::mt19937_64 rng(3);
  const LossConfig cfg;
  for (int i = 0; i < 500; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const Vec2 p = RandomPixel(rng);
    const Vec3 xc = Vec3::Random() * 6.0;
    const Vec3 d = RayVector(kIntr, p);
    // Oracle: law of cosines on the sphere of radius ||d||.
    const double cos_t = xc.normalized().dot(d.normalized());
    const double oracle = d.norm() * std::sqrt(std::max(0.0, 2.0 - 2.0 * cos_t));
    const PointLossTerm t = AnglePoint(kIntr, pose, pose.Apply(xc), p, cfg);
    EXPECT_NEAR(t.value, oracle, 1e-9 * d.norm());
    EXPECT_NEAR(t.value, 2.0 * d.norm() * std::sin(t.theta / 2.0), 1e-9 * d.norm());
    EXPECT_LE(t.value, 2.0 * d.norm() * (1.0 + 1e-12));
  }
}

TEST(Angle, AntipodalIsMaximal) {
  const LossConfig cfg;
  const Vec2 p(100.0, 50.0);
  const Vec3 d = RayVector(kIntr, p);
  const PointLossTerm front = AnglePoint(kIntr, PoseSE3(), 0.01 * d, p, cfg);
  const PointLossTerm back = AnglePoint(kIntr, PoseSE3(), -0.01 * d, p, cfg);
  EXPECT_NEAR(front.value, 0.0, 1e-9);
  EXPECT_NEAR(back.value, 2.0 * d.norm(), 1e-9 * d.norm());
}

TEST(Angle, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const LossConfig cfg;
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const Vec2 p = RandomPixel(rng);
    const Vec3 y = pose.Apply(Vec3::Random() * 5.0);
    const Vec3 fd = CentralDiff(
        [&](const Vec3& v) { return AnglePoint(kIntr, pose, v, p, cfg).value; }, y);
    const Vec3 g = AnglePoint(kIntr, pose, y, p, cfg).grad;
    EXPECT_LT((g - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST(Angle, GuardBelowEpsilon) {
  const LossConfig cfg;
  const Vec2 p(319.5, 239.5);
  const Vec3 tiny(1e-10, 0.0, 0.0);
  const PointLossTerm t = AnglePoint(kIntr, PoseSE3(), tiny, p, cfg);
  // ||(||d|| / eps) D - d|| with ||D|| = 1e-10: the scaled vector has
  // length 0.01 ||d|| and is orthogonal to d.
  EXPECT_NEAR(t.value, std::hypot(525.0, 5.25), 1e-9);
  EXPECT_TRUE(t.grad.allFinite());
  const PointLossTerm zero = AnglePoint(kIntr, PoseSE3(), Vec3::Zero(), p, cfg);
  EXPECT_NEAR(zero.value, 525.0, 1e-12);
  EXPECT_TRUE(zero.grad.allFinite());
}

TEST(Angle, ApproximatesReprojectionOnAxis) {
  // On the optical axis the ray-length factor equals f / Z, so the gap is
  // second order in the perturbation.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const LossConfig cfg;
  const Vec2 p(kIntr.cx, kIntr.cy);
  for (int i = 0; i < 50; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const Vec3 on_ray(0.0, 0.0, 1.0 + 0.2 * i);
    const Vec3 u = Vec3(n(rng), n(rng), n(rng)).normalized();
    const auto gap = [&](double eps) {
      const Vec3 y = pose.Apply(on_ray + eps * on_ray.norm() * u);
      const double rep = ReprojPoint(kIntr, pose, y, p).value;
      return std::abs(AnglePoint(kIntr, pose, y, p, cfg).value - rep) / rep;
    };
    EXPECT_LT(gap(1e-3), 1e-2);
    EXPECT_GT(gap(1e-3) / gap(1e-4), 5.0);
  }
}

TEST(Angle, OffAxisRadialErrorsScaleByCosine) {
  // Off axis the chord measures angle while the image plane stretches radial
  // offsets by 1 / cos(phi): the small-error ratio tends to cos(phi).
  const LossConfig cfg;
  const Vec2 p(kIntr.cx + 300.0, kIntr.cy);
  const Vec3 d = RayVector(kIntr, p);
  const double cos_phi = kIntr.f / d.norm();
  const Vec3 radial = Vec3(d.z(), 0.0, -d.x()).normalized();
  const Vec3 tangential = Vec3::UnitY();
  const Vec3 truth = d * (4.0 / d.z());
  const PoseSE3 pose;
  const auto ratio = [&](const Vec3& dir) {
    const Vec3 y = truth + 1e-6 * dir;
    return AnglePoint(kIntr, pose, y, p, cfg).value / ReprojPoint(kIntr, pose, y, p).value;
  };
  EXPECT_NEAR(ratio(radial), cos_phi, 1e-5);
  EXPECT_NEAR(ratio(tangential), 1.0, 1e-5);
}

TEST(ImageLossTest, MismatchedIdsThrow) {
  std::vector<Observation> obs(2);
  obs[0].point = 1;
  obs[1].point = 2;
  PredictionGrid pred{{1, 3}, {Vec3(0, 0, 1), Vec3(0, 0, 1)}};
  try {
    ImageLoss(ReprojectionKind::kAngle, kIntr, PoseSE3(), pred, obs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIndexMismatch);
  }
  pred.ids.pop_back();
  pred.coords.pop_back();
  EXPECT_THROW(ImageLoss(ReprojectionKind::kAngle, kIntr, PoseSE3(), pred, obs),
               Error);
}

TEST(ImageLossTest, SumsTermsAndCountsBehind) {
  std::vector<Observation> obs(3);
  PredictionGrid pred;
  for (int i = 0; i < 3; ++i) {
    obs[i].point = i;
    obs[i].pixel = Vec2(100.0 * i, 50.0);
    pred.ids.push_back(i);
    pred.coords.push_back(Vec3(0.1 * i, 0.0, i == 1 ? -2.0 : 2.0));
  }
  const LossReport r = ImageLoss(ReprojectionKind::kAngle, kIntr, PoseSE3(), pred, obs);
  double sum = 0.0;
  for (const auto& t : r.terms) sum += t.value;
  EXPECT_DOUBLE_EQ(r.total, sum);
  EXPECT_EQ(r.behind_count, 1);
  EXPECT_FALSE(r.nonfinite);
}

TEST(MultiView, SingleViewPointsMatchAngleAndKeepRng) {
  std::map<ImageId, PoseSE3> poses{{0, PoseSE3()}, {1, PoseSE3()}};
  std::vector<Observation> obs(2);
  obs[0].point = 10;
  obs[0].pixel = Vec2(10, 20);
  obs[1].point = 11;
  obs[1].pixel = Vec2(300, 200);
  const PredictionGrid pred{{10, 11}, {Vec3(0.1, 0.2, 3), Vec3(-1, 0.5, 4)}};
  CoVisibilityGraph covis;
  covis.Add(10, 0, obs[0].pixel);  // seen only here: single-view
  Rng rng(9);
  const Rng before = rng;
  const LossConfig cfg;
  const LossReport mv = MultiViewImageLoss(kIntr, poses, 0, pred, obs, covis, cfg, rng);
  const LossReport single = ImageLoss(ReprojectionKind::kAngle, kIntr, poses[0], pred, obs);
  EXPECT_EQ(rng, before);
  ASSERT_EQ(mv.terms.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(mv.terms[i].value, single.terms[i].value);
  }
}

TEST(MultiView, WeightsBothViews) {
  std::mt19937_64 g(6);
  std::map<ImageId, PoseSE3> poses{{0, RandomPose(g)}, {5, RandomPose(g)}};
  std::vector<Observation> obs(1);
  obs[0].point = 7;
  obs[0].pixel = Vec2(120, 80);
  const Vec2 other_pixel(400, 300);
  CoVisibilityGraph covis;
  covis.Add(7, 0, obs[0].pixel);
  covis.Add(7, 5, other_pixel);
  const PredictionGrid pred{{7}, {Vec3(0.3, -0.2, 2.0)}};
  LossConfig cfg;
  cfg.lambda_multiview = 60.0;
  Rng rng(1);
  const LossReport r = MultiViewImageLoss(kIntr, poses, 0, pred, obs, covis, cfg, rng);
  const PointLossTerm a = AnglePoint(kIntr, poses[0], pred.coords[0], obs[0].pixel, cfg);
  const PointLossTerm b = AnglePoint(kIntr, poses[5], pred.coords[0], other_pixel, cfg);
  EXPECT_NEAR(r.terms[0].value, 60.0 * (a.value + b.value), 1e-9);
  EXPECT_LT((r.terms[0].grad - 60.0 * (a.grad + b.grad)).norm(), 1e-9);
}

TEST(MultiView, MissingPoseThrows) {
  std::map<ImageId, PoseSE3> poses{{0, PoseSE3()}};
  std::vector<Observation> obs(1);
  obs[0].point = 7;
  CoVisibilityGraph covis;
  covis.Add(7, 0, Vec2(0, 0));
  covis.Add(7, 3, Vec2(1, 1));
  const PredictionGrid pred{{7}, {Vec3(0, 0, 2)}};
  Rng rng(1);
  try {
    MultiViewImageLoss(kIntr, poses, 0, pred, obs, covis, {}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPose);
  }
  try {
    MultiViewImageLoss(kIntr, poses, 4, pred, obs, covis, {}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPose);
  }
}

TEST(Combined, AddsWeightedPhotometricTerms) {
  LossReport angle, photo;
  PointLossTerm a;
  a.value = 2.0;
  a.grad = Vec3(1, 0, 0);
  PointLossTerm p;
  p.value = 0.1;
  p.grad = Vec3(0, 1, 0);
  angle.terms = {a};
  photo.terms = {p};
  LossConfig cfg;
  cfg.lambda_photo = 20.0;
  const LossReport c = CombinedLoss(angle, photo, cfg);
  EXPECT_DOUBLE_EQ(c.total, 4.0);
  EXPECT_EQ(c.terms[0].grad, Vec3(1, 20, 0));
  photo.terms.push_back(p);
  EXPECT_THROW(CombinedLoss(angle, photo, cfg), Error);
}

TEST(Config, Validation) {
  LossConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.alpha_ssim = 1.5;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = {};
  cfg.epsilon_norm = 0.0;
  EXPECT_THROW(cfg.Validate(), Error);
}

}  // namespace
}  // namespace anglereloc
