#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "anglereloc/geometry.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

struct RansacConfig {
  int hypothesis_count = 256;
  // Inlier threshold on reprojection error, pixels.
  double inlier_threshold = 10.0;
  int max_refinement_rounds = 8;
  std::uint64_t seed = 1;
  int min_inliers = 10;

  void Validate() const;
};

enum class PoseStatus { kOk, kDegenerate, kTooFewInliers };

const char* PoseStatusName(PoseStatus status);

struct PoseEstimate {
  PoseSE3 pose;
  int inlier_count = 0;
  std::vector<PointId> inlier_ids;
  // Inlier count after each refinement round; diagnostic only.
  std::vector<int> refinement_trace;
  PoseStatus status = PoseStatus::kOk;

  bool operator==(const PoseEstimate& other) const;
};

// Up to four camera-to-world poses mapping the three world points onto
// their pixels. Grunert's law-of-cosines system reduced to a quartic in the
// distance ratio; each real root is polished by Newton steps and turned into
// a pose by absolute orientation. Throws Degenerate for collinear world
// points or coincident pixels.
std::vector<PoseSE3> P3PSolve(const Correspondence2D3D& c1,
                              const Correspondence2D3D& c2,
                              const Correspondence2D3D& c3,
                              const CameraIntrinsics& intr);

// P3P on the first three correspondences; the candidate with the smallest
// reprojection error on the fourth wins.
PoseSE3 PnPMinimal(std::span<const Correspondence2D3D, 4> correspondences,
                   const CameraIntrinsics& intr);

// Reprojection error in pixels; infinite for points not in front.
double ReprojectionError(const PoseSE3& pose, const CameraIntrinsics& intr,
                         const Correspondence2D3D& c);

struct ScoreResult {
  int inlier_count = 0;
  std::vector<PointId> inlier_ids;
  // Indices into the correspondence list, ascending.
  std::vector<size_t> inlier_indices;
  double mean_inlier_error = 0.0;
};

// Inlier iff the point is in front of the camera and its reprojection error
// is below tau.
ScoreResult Score(const PoseSE3& pose,
                  std::span<const Correspondence2D3D> correspondences,
                  const CameraIntrinsics& intr, double tau);

// Draws cfg.hypothesis_count random 4-subsets, keeps the hypothesis with
// the most inliers (ties: lower mean inlier error, then lower index) and
// refines it. Throws Precondition for fewer than four correspondences.
PoseEstimate Ransac(std::span<const Correspondence2D3D> correspondences,
                    const CameraIntrinsics& intr, const RansacConfig& cfg);

// Gauss-Newton on the summed squared reprojection residual of the inliers
// (local axis-angle rotation update, step halving on increase), alternated
// with inlier re-estimation until the set stops changing or
// cfg.max_refinement_rounds is reached. Rank-deficient normal equations
// return the input pose with status Degenerate.
PoseEstimate Refine(const PoseSE3& pose,
                    std::span<const Correspondence2D3D> correspondences,
                    const std::vector<size_t>& inlier_indices,
                    const CameraIntrinsics& intr, const RansacConfig& cfg);

// Sum of squared reprojection residuals over the given correspondences.
double SquaredResidual(const PoseSE3& pose,
                       std::span<const Correspondence2D3D> correspondences,
                       const std::vector<size_t>& indices,
                       const CameraIntrinsics& intr);

// Residual after every accepted Gauss-Newton step of one refinement solve,
// starting with the initial residual. Exposed for monotonicity checks.
std::vector<double> GaussNewtonTrace(const PoseSE3& pose,
                                     std::span<const Correspondence2D3D> correspondences,
                                     const std::vector<size_t>& indices,
                                     const CameraIntrinsics& intr);

}  // namespace anglereloc
