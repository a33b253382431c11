#pragma once

#include <map>
#include <random>
#include <span>
#include <vector>

#include "anglereloc/geometry.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

// Loss value for one predicted scene coordinate, with its gradient with
// respect to the world-frame prediction y_k.
struct PointLossTerm {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
  DepthStatus status = DepthStatus::kInFront;
  // Angle between the predicted ray D and the observed ray d, radians.
  double theta = 0.0;
};

struct LossReport {
  // Sum of the finite term values.
  double total = 0.0;
  std::vector<PointLossTerm> terms;
  int behind_count = 0;
  // Set iff some term value or gradient is non-finite.
  bool nonfinite = false;
  // Photometric reports only: points that produced a valid sample.
  int valid_count = 0;
  double valid_fraction = 0.0;
};

struct LossConfig {
  double lambda_multiview = 60.0;
  double lambda_photo = 20.0;
  double alpha_ssim = 0.85;
  // Lower bound on ||D|| in the angle loss.
  double epsilon_norm = 1e-8;

  void Validate() const;
};

enum class ReprojectionKind { kReproj, kAngle };

using Rng = std::mt19937_64;

// || C h^{-1} y - p ||. No guard at Z = 0: a near-plane prediction yields
// huge or non-finite values and gradients, which the caller sees verbatim.
PointLossTerm ReprojPoint(const CameraIntrinsics& intr, const PoseSE3& pose,
                          const Vec3& y, const Vec2& pixel);

// || (||d|| / max(||D||, eps)) D - d || with D = h^{-1} y, d = f C^{-1} p.
// Equals the chord 2 ||d|| sin(theta / 2) whenever ||D|| >= eps, so the value
// is bounded by 2 ||d|| and vanishes only for predictions in front of the
// camera on the observed ray.
PointLossTerm AnglePoint(const CameraIntrinsics& intr, const PoseSE3& pose,
                         const Vec3& y, const Vec2& pixel,
                         const LossConfig& cfg);

// Throws IndexMismatch unless predictions.ids equals the observations'
// point ids in order.
void CheckAligned(const PredictionGrid& predictions,
                  std::span<const Observation> observations);

// Sum of per-point terms over all points of one image.
LossReport ImageLoss(ReprojectionKind kind, const CameraIntrinsics& intr,
                     const PoseSE3& pose, const PredictionGrid& predictions,
                     std::span<const Observation> observations,
                     const LossConfig& cfg = {});

// Angle loss over single-view points plus, for each point with
// correspondences, lambda-weighted angle terms in this image and in one
// image drawn uniformly from the point's other images. Gradients from both
// views accumulate into the same prediction. The rng is only consumed for
// multi-view points.
LossReport MultiViewImageLoss(const CameraIntrinsics& intr,
                              const std::map<ImageId, PoseSE3>& poses,
                              ImageId image, const PredictionGrid& predictions,
                              std::span<const Observation> observations,
                              const CoVisibilityGraph& covis,
                              const LossConfig& cfg, Rng& rng);

// L_ang + lambda_photo * L_pr, term by term.
LossReport CombinedLoss(const LossReport& angle, const LossReport& photo,
                        const LossConfig& cfg);

// Recomputes total / behind_count / nonfinite from the terms.
void FinalizeReport(LossReport& report);

}  // namespace anglereloc
