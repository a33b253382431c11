#pragma once

#include <span>

#include "anglereloc/geometry.h"
#include "anglereloc/image.h"
#include "anglereloc/losses.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct BilinearSample {
  double value = 0.0;
  // d value / d q.
  Vec2 grad = Vec2::Zero();
  bool valid = false;
};

// Weighted sum of the four pixels around q. Invalid outside
// [0, W-1] x [0, H-1]; pixel centers sit at integer coordinates.
BilinearSample SampleBilinear(const Image& image, const Vec2& q,
                              int channel = 0);

struct SsimResult {
  // Per pixel and channel, same layout as Image::data, values in [-1, 1].
  Image map;
  // d (sum_p weight_p * SSIM_p) / d a, same layout as `a`.
  Image grad;
};

// SSIM between a and b with means, variances and covariance taken over a
// 3x3 box window (replicated borders). `weights`, when given, must match
// the shape of a and weights the gradient; it defaults to all ones.
SsimResult Ssim3x3(const Image& a, const Image& b,
                   const Image* weights = nullptr);

// Photometric reconstruction loss for a grid-aligned image: each
// prediction of image i is projected into neighbour j with pose_j,
// img_j is bilinearly sampled there to form the reconstruction, and each
// valid point contributes (1 - alpha) |rec - img_i| + alpha (1 - SSIM) / 2.
// Points that land behind camera j or outside img_j are masked out. Term
// gradients are d total / d y_k, including SSIM window coupling.
//
// Observation pixels must sit on integer coordinates of img_i's grid.
LossReport PhotometricImageLoss(const CameraIntrinsics& intr,
                                const PoseSE3& pose_j,
                                const PredictionGrid& predictions,
                                std::span<const Observation> observations,
                                const Image& img_i, const Image& img_j,
                                const LossConfig& cfg);

}  // namespace anglereloc
