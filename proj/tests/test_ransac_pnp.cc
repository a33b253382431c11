#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "anglereloc/error.h"
#include "anglereloc/ransac_pnp.h"
#include "pnp_fixture.h"

namespace anglereloc {
namespace {

using testing::kPnpIntr;
using testing::MakePnpProblem;

TEST(P3P, RecoversPoseAmongCandidates) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = MakePnpProblem(seed, 4, 0.0, 0.0);
    const auto cands = P3PSolve(p.corr[0], p.corr[1], p.corr[2], kPnpIntr);
    ASSERT_FALSE(cands.empty());
    ASSERT_LE(cands.size(), 4u);
    double best = 1e9;
    for (const PoseSE3& c : cands) {
      EXPECT_LT(c.OrthonormalityError(), 1e-9);
      for (int k = 0; k < 3; ++k) {
        EXPECT_LT(ReprojectionError(c, kPnpIntr, p.corr[k]), 1e-6);
      }
      best = std::min(best, ComputePoseError(c, p.pose).rotation_deg);
    }
    EXPECT_LT(best, 1e-6);
  }
}

TEST(P3P, DegenerateInputsThrow) {
  auto p = MakePnpProblem(1, 4, 0.0, 0.0);
  auto collinear = p.corr;
  collinear[2].world = 0.5 * (collinear[0].world + collinear[1].world);
  try {
    P3PSolve(collinear[0], collinear[1], collinear[2], kPnpIntr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
  EXPECT_THROW(P3PSolve(p.corr[0], p.corr[0], p.corr[1], kPnpIntr), Error);
}

TEST(PnPMinimal, ExactFourPoints) {
  const auto p = MakePnpProblem(3, 4, 0.0, 0.0);
  const PoseSE3 est = PnPMinimal(std::span<const Correspondence2D3D, 4>(p.corr.data(), 4),
                                 kPnpIntr);
  const PoseError e = ComputePoseError(est, p.pose);
  EXPECT_LT(e.rotation_deg, 1e-6);
  EXPECT_LT(e.translation, 1e-9 * p.diameter + 1e-9);
}

TEST(Score, MatchesBruteForceAndFrontGate) {
  const auto p = MakePnpProblem(4, 60, 0.3, 2.0);
  for (double tau : {0.5, 2.0, 10.0}) {
    const ScoreResult s = Score(p.pose, p.corr, kPnpIntr, tau);
    std::vector<size_t> oracle;
    for (size_t k = 0; k < p.corr.size(); ++k) {
      const Vec3 xc = WorldToCamera(p.pose, p.corr[k].world);
      const double err = (Project(kPnpIntr, xc).pixel - p.corr[k].pixel).norm();
      if (xc.z() > 0 && err < tau) oracle.push_back(k);
    }
    EXPECT_EQ(s.inlier_indices, oracle);
    EXPECT_EQ(s.inlier_count, static_cast<int>(oracle.size()));
  }
  // Monotone in tau.
  const auto small = Score(p.pose, p.corr, kPnpIntr, 1.0).inlier_indices;
  const auto large = Score(p.pose, p.corr, kPnpIntr, 3.0).inlier_indices;
  EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));

  // Antipodal predictions reproject perfectly but sit behind the camera.
  auto behind = MakePnpProblem(5, 20, 0.0, 0.0);
  for (auto& c : behind.corr) {
    const Vec3 xc = WorldToCamera(behind.pose, c.world);
    c.world = behind.pose.Apply(-xc);
  }
  EXPECT_EQ(Score(behind.pose, behind.corr, kPnpIntr, 10.0).inlier_count, 0);
}

TEST(Ransac, ExactData) {
  const auto p = MakePnpProblem(6, 50, 0.0, 0.0);
  const PoseEstimate est = Ransac(p.corr, kPnpIntr, RansacConfig{});
  EXPECT_EQ(est.status, PoseStatus::kOk);
  EXPECT_EQ(est.inlier_count, 50);
  const PoseError e = ComputePoseError(est.pose, p.pose);
  EXPECT_LT(e.rotation_deg, 1e-6);
  EXPECT_LT(e.translation, 1e-9);
}

TEST(Ransac, OutliersAndNoise) {
  int good = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto p = MakePnpProblem(seed, 50, 0.3, 1.0);
    RansacConfig cfg;
    cfg.seed = seed;
    const PoseEstimate est = Ransac(p.corr, kPnpIntr, cfg);
    const PoseError e = ComputePoseError(est.pose, p.pose);
    if (est.status == PoseStatus::kOk && e.rotation_deg < 0.5 &&
        e.translation < 0.01 * p.diameter) {
      ++good;
    }
  }
  EXPECT_GE(good, 19);
}

TEST(Ransac, BitIdenticalUnderFixedSeed) {
  const auto p = MakePnpProblem(7, 50, 0.3, 1.0);
  RansacConfig cfg;
  cfg.seed = 42;
  const PoseEstimate a = Ransac(p.corr, kPnpIntr, cfg);
  const PoseEstimate b = Ransac(p.corr, kPnpIntr, cfg);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.pose.rotation(), b.pose.rotation());
}

TEST(Ransac, PreconditionsAndFailureStatuses) {
  const auto p = MakePnpProblem(8, 50, 0.0, 0.0);
  try {
    Ransac(std::span(p.corr.data(), 3), kPnpIntr, RansacConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
  }
  RansacConfig bad;
  bad.hypothesis_count = 0;
  EXPECT_THROW(Ransac(p.corr, kPnpIntr, bad), Error);

  // Every prediction at one world point: no hypothesis survives.
  auto same = p.corr;
  for (auto& c : same) c.world = p.corr[0].world;
  EXPECT_EQ(Ransac(same, kPnpIntr, RansacConfig{}).status, PoseStatus::kTooFewInliers);

  // Fewer consistent points than min_inliers.
  RansacConfig strict;
  strict.min_inliers = 60;
  EXPECT_EQ(Ransac(p.corr, kPnpIntr, strict).status, PoseStatus::kTooFewInliers);
}

TEST(Refine, FixedPointOnExactInliers) {
  const auto p = MakePnpProblem(9, 30, 0.0, 0.0);
  std::vector<size_t> all(p.corr.size());
  for (size_t k = 0; k < all.size(); ++k) all[k] = k;
  const PoseEstimate est = Refine(p.pose, p.corr, all, kPnpIntr, RansacConfig{});
  EXPECT_EQ(est.status, PoseStatus::kOk);
  EXPECT_LT((est.pose.Matrix() - p.pose.Matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Refine, ConvergesFromPerturbedPose) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = MakePnpProblem(200 + seed, 40, 0.0, 0.0);
    const Vec3 axis = Vec3(1.0, -0.5 + 0.05 * seed, 0.3).normalized();
    const Mat3 dr = AxisAngleToRotation(axis * (2.0 * M_PI / 180.0));
    const Vec3 center = p.pose.center() + 0.02 * p.diameter * axis;
    const PoseSE3 start(dr * p.pose.rotation(), center);
    std::vector<size_t> all(p.corr.size());
    for (size_t k = 0; k < all.size(); ++k) all[k] = k;
    RansacConfig cfg;
    cfg.inlier_threshold = 1e6;
    const PoseEstimate est = Refine(start, p.corr, all, kPnpIntr, cfg);
    EXPECT_LE(est.refinement_trace.size(), 8u);
    EXPECT_LT(ComputePoseError(est.pose, p.pose).rotation_deg, 1e-4);

    const auto trace = GaussNewtonTrace(start, p.corr, all, kPnpIntr);
    ASSERT_GE(trace.size(), 2u);
    for (size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
  }
}

TEST(Refine, RankDeficientSystemIsDegenerate) {
  const auto p = MakePnpProblem(10, 4, 0.0, 0.0);
  std::vector<Correspondence2D3D> same(6, p.corr[0]);
  const std::vector<size_t> all = {0, 1, 2, 3, 4, 5};
  const PoseSE3 start(p.pose.rotation(), p.pose.center() + Vec3(0.1, 0, 0));
  const PoseEstimate est = Refine(start, same, all, kPnpIntr, RansacConfig{});
  EXPECT_EQ(est.status, PoseStatus::kDegenerate);
  EXPECT_EQ(est.pose.Matrix(), start.Matrix());
}

}  // namespace
}  // namespace anglereloc
