#include "anglereloc/ransac_pnp.h"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include "anglereloc/error.h"
#include "anglereloc/parallel.h"

namespace anglereloc {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

double EvalPoly(const std::array<double, 5>& c, double x) {
  return (((c[0] * x + c[1]) * x + c[2]) * x + c[3]) * x + c[4];
}

double EvalPolyDeriv(const std::array<double, 5>& c, double x) {
  return ((4.0 * c[0] * x + 3.0 * c[1]) * x + 2.0 * c[2]) * x + c[3];
}

// Real roots of c[0] x^4 + ... + c[4] via companion-matrix eigenvalues,
// polished with Newton steps.
std::vector<double> QuarticRealRoots(std::array<double, 5> c) {
  std::vector<double> roots;
  int degree = 4;
  int lead = 0;
  const double scale =
      std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]),
                std::abs(c[3]), std::abs(c[4])});
  if (scale == 0.0) {
    return roots;
  }
  while (degree > 0 && std::abs(c[lead]) < 1e-14 * scale) {
    ++lead;
    --degree;
  }
  if (degree == 0) {
    return roots;
  }
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) {
    companion(0, i) = -c[lead + 1 + i] / c[lead];
  }
  for (int i = 1; i < degree; ++i) {
    companion(i, i - 1) = 1.0;
  }
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  for (const std::complex<double>& z : solver.eigenvalues()) {
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) {
      continue;
    }
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = EvalPolyDeriv(c, x);
      if (d == 0.0) break;
      const double step = EvalPoly(c, x) / d;
      x -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Camera-to-world pose aligning camera-frame points onto world points.
PoseSE3 AbsoluteOrientation(const std::array<Vec3, 3>& cam,
                            const std::array<Vec3, 3>& world) {
  Vec3 cc = Vec3::Zero();
  Vec3 wc = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    cc += cam[i] / 3.0;
    wc += world[i] / 3.0;
  }
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    h += (cam[i] - cc) * (world[i] - wc).transpose();
  }
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return PoseSE3(r, wc - r * cc);
}

struct Hypothesis {
  bool valid = false;
  PoseSE3 pose;
  ScoreResult score;
};

// World-to-camera parameters used inside Gauss-Newton.
struct CameraFromWorld {
  Mat3 rotation;
  Vec3 translation;

  static CameraFromWorld From(const PoseSE3& pose) {
    const PoseSE3 inv = pose.Inverse();
    return {inv.rotation(), inv.translation()};
  }
  PoseSE3 ToPose() const { return PoseSE3(rotation, translation).Inverse(); }
};

double Cost(const CameraFromWorld& t,
            std::span<const Correspondence2D3D> corr,
            const std::vector<size_t>& indices, const CameraIntrinsics& intr) {
  double cost = 0.0;
  for (size_t i : indices) {
    const Vec3 xc = t.rotation * corr[i].world + t.translation;
    const Vec2 proj(intr.f * xc.x() / xc.z() + intr.cx,
                    intr.f * xc.y() / xc.z() + intr.cy);
    cost += (proj - corr[i].pixel).squaredNorm();
  }
  return cost;
}

struct GaussNewtonResult {
  bool singular = false;
  CameraFromWorld transform;
  std::vector<double> costs;
};

GaussNewtonResult RunGaussNewton(const PoseSE3& pose,
                                 std::span<const Correspondence2D3D> corr,
                                 const std::vector<size_t>& indices,
                                 const CameraIntrinsics& intr) {
  GaussNewtonResult out;
  out.transform = CameraFromWorld::From(pose);
  double cost = Cost(out.transform, corr, indices, intr);
  out.costs.push_back(cost);
  for (int iter = 0; iter < 50; ++iter) {
    Mat6 jtj = Mat6::Zero();
    Vec6 jtr = Vec6::Zero();
    for (size_t i : indices) {
      const Vec3 xc = out.transform.rotation * corr[i].world +
                      out.transform.translation;
      const double inv_z = 1.0 / xc.z();
      const Vec2 r(intr.f * xc.x() * inv_z + intr.cx - corr[i].pixel.x(),
                   intr.f * xc.y() * inv_z + intr.cy - corr[i].pixel.y());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << intr.f * inv_z, 0.0, -intr.f * xc.x() * inv_z * inv_z,
          0.0, intr.f * inv_z, -intr.f * xc.y() * inv_z * inv_z;
      Eigen::Matrix<double, 3, 6> dxc;
      dxc.leftCols<3>() << 0.0, xc.z(), -xc.y(),
                           -xc.z(), 0.0, xc.x(),
                           xc.y(), -xc.x(), 0.0;
      dxc.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = dproj * dxc;
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(jtj);
    const double max_eig = eig.eigenvalues().maxCoeff();
    const double min_eig = eig.eigenvalues().minCoeff();
    if (!(max_eig > 0.0) || min_eig <= 1e-10 * max_eig) {
      out.singular = true;
      return out;
    }
    const Vec6 delta = -jtj.ldlt().solve(jtr);
    if (!delta.allFinite()) {
      out.singular = true;
      return out;
    }

    bool accepted = false;
    double step = 1.0;
    for (int halving = 0; halving < 20 && !accepted; ++halving, step *= 0.5) {
      const Vec6 d = step * delta;
      const Mat3 dr = AxisAngleToRotation(d.head<3>());
      CameraFromWorld candidate{dr * out.transform.rotation,
                                dr * out.transform.translation + d.tail<3>()};
      const double new_cost = Cost(candidate, corr, indices, intr);
      if (new_cost < cost) {
        out.transform = candidate;
        accepted = true;
        const double decrease = cost - new_cost;
        cost = new_cost;
        out.costs.push_back(cost);
        if (decrease <= 1e-15 * (1.0 + cost)) {
          return out;
        }
      }
    }
    if (!accepted || delta.norm() < 1e-14) {
      return out;
    }
  }
  return out;
}

}  // namespace

void RansacConfig::Validate() const {
  if (hypothesis_count <= 0 || max_refinement_rounds <= 0 || min_inliers <= 0) {
    throw Error(ErrorCode::kConfigError, "RANSAC counts must be positive");
  }
  if (!(inlier_threshold > 0.0)) {
    throw Error(ErrorCode::kConfigError, "inlier threshold must be positive");
  }
}

const char* PoseStatusName(PoseStatus status) {
  switch (status) {
    case PoseStatus::kOk: return "Ok";
    case PoseStatus::kDegenerate: return "Degenerate";
    case PoseStatus::kTooFewInliers: return "TooFewInliers";
  }
  return "Unknown";
}

bool PoseEstimate::operator==(const PoseEstimate& other) const {
  return pose.rotation() == other.pose.rotation() &&
         pose.translation() == other.pose.translation() &&
         inlier_count == other.inlier_count && inlier_ids == other.inlier_ids &&
         refinement_trace == other.refinement_trace && status == other.status;
}

std::vector<PoseSE3> P3PSolve(const Correspondence2D3D& m1,
                              const Correspondence2D3D& m2,
                              const Correspondence2D3D& m3,
                              const CameraIntrinsics& intr) {
  const Vec3& p1 = m1.world;
  const Vec3& p2 = m2.world;
  const Vec3& p3 = m3.world;
  const double extent = std::max({(p2 - p1).norm(), (p3 - p1).norm(),
                                  (p3 - p2).norm()});
  if (!(extent > 0.0) ||
      (p2 - p1).cross(p3 - p1).norm() < 1e-10 * extent * extent) {
    throw Error(ErrorCode::kDegenerate, "P3P world points are collinear");
  }
  const Vec3 j1 = RayVector(intr, m1.pixel).normalized();
  const Vec3 j2 = RayVector(intr, m2.pixel).normalized();
  const Vec3 j3 = RayVector(intr, m3.pixel).normalized();
  if (j1.cross(j2).norm() < 1e-12 || j1.cross(j3).norm() < 1e-12 ||
      j2.cross(j3).norm() < 1e-12) {
    throw Error(ErrorCode::kDegenerate, "P3P pixels coincide");
  }

  // Distances s_i along the bearings; s2 = u s1, s3 = v s1.
  const double ca = j2.dot(j3);
  const double cb = j1.dot(j3);
  const double cg = j1.dot(j2);
  const double a2 = (p2 - p3).squaredNorm();
  const double b2 = (p1 - p3).squaredNorm();
  const double c2 = (p1 - p2).squaredNorm();

  std::array<double, 5> coeffs;
  coeffs[0] = -a2 * a2 + 2 * a2 * b2 + 2 * a2 * c2 - b2 * b2 +
              4 * b2 * c2 * ca * ca - 2 * b2 * c2 - c2 * c2;
  coeffs[1] = 4 * (a2 * a2 * cb - a2 * b2 * ca * cg - a2 * b2 * cb -
                   2 * a2 * c2 * cb + b2 * b2 * ca * cg -
                   2 * b2 * c2 * ca * ca * cb - b2 * c2 * ca * cg +
                   b2 * c2 * cb + c2 * c2 * cb);
  coeffs[2] = -2 * (2 * a2 * a2 * cb * cb + a2 * a2 - 4 * a2 * b2 * ca * cb * cg -
                    2 * a2 * b2 * cg * cg - 4 * a2 * c2 * cb * cb - 2 * a2 * c2 +
                    2 * b2 * b2 * ca * ca + 2 * b2 * b2 * cg * cg - b2 * b2 -
                    2 * b2 * c2 * ca * ca - 4 * b2 * c2 * ca * cb * cg +
                    2 * c2 * c2 * cb * cb + c2 * c2);
  coeffs[3] = 4 * (a2 * a2 * cb - a2 * b2 * ca * cg - 2 * a2 * b2 * cb * cg * cg +
                   a2 * b2 * cb - 2 * a2 * c2 * cb + b2 * b2 * ca * cg -
                   b2 * c2 * ca * cg - b2 * c2 * cb + c2 * c2 * cb);
  coeffs[4] = -a2 * a2 + 4 * a2 * b2 * cg * cg - 2 * a2 * b2 + 2 * a2 * c2 -
              b2 * b2 + 2 * b2 * c2 - c2 * c2;

  std::vector<PoseSE3> poses;
  for (const double v : QuarticRealRoots(coeffs)) {
    if (!(v > 0.0)) {
      continue;
    }
    const double denom = 2.0 * b2 * (ca * v - cg);
    if (std::abs(denom) < 1e-14 * b2) {
      continue;
    }
    const double u = (2 * a2 * cb * v - a2 * v * v - a2 + b2 * v * v - b2 -
                      2 * c2 * cb * v + c2 * v * v + c2) /
                     denom;
    if (!(u > 0.0)) {
      continue;
    }
    const double s1_sq = b2 / (1.0 + v * v - 2.0 * v * cb);
    if (!(s1_sq > 0.0)) {
      continue;
    }
    const double s1 = std::sqrt(s1_sq);
    const std::array<Vec3, 3> cam = {s1 * j1, u * s1 * j2, v * s1 * j3};
    const PoseSE3 pose = AbsoluteOrientation(cam, {p1, p2, p3});
    if (pose.IsValid()) {
      poses.push_back(pose);
    }
  }
  return poses;
}

double ReprojectionError(const PoseSE3& pose, const CameraIntrinsics& intr,
                         const Correspondence2D3D& c) {
  const Projection proj = Project(intr, WorldToCamera(pose, c.world));
  if (proj.status != DepthStatus::kInFront) {
    return std::numeric_limits<double>::infinity();
  }
  return (proj.pixel - c.pixel).norm();
}

PoseSE3 PnPMinimal(std::span<const Correspondence2D3D, 4> corr,
                   const CameraIntrinsics& intr) {
  const std::vector<PoseSE3> candidates =
      P3PSolve(corr[0], corr[1], corr[2], intr);
  if (candidates.empty()) {
    throw Error(ErrorCode::kDegenerate, "P3P produced no real solution");
  }
  size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double err = ReprojectionError(candidates[i], intr, corr[3]);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  return candidates[best];
}

ScoreResult Score(const PoseSE3& pose,
                  std::span<const Correspondence2D3D> correspondences,
                  const CameraIntrinsics& intr, double tau) {
  ScoreResult out;
  double sum = 0.0;
  for (size_t i = 0; i < correspondences.size(); ++i) {
    const double err = ReprojectionError(pose, intr, correspondences[i]);
    if (err < tau) {
      out.inlier_ids.push_back(correspondences[i].id);
      out.inlier_indices.push_back(i);
      sum += err;
    }
  }
  out.inlier_count = static_cast<int>(out.inlier_indices.size());
  out.mean_inlier_error = out.inlier_count > 0 ? sum / out.inlier_count : 0.0;
  return out;
}

double SquaredResidual(const PoseSE3& pose,
                       std::span<const Correspondence2D3D> correspondences,
                       const std::vector<size_t>& indices,
                       const CameraIntrinsics& intr) {
  return Cost(CameraFromWorld::From(pose), correspondences, indices, intr);
}

std::vector<double> GaussNewtonTrace(
    const PoseSE3& pose, std::span<const Correspondence2D3D> correspondences,
    const std::vector<size_t>& indices, const CameraIntrinsics& intr) {
  return RunGaussNewton(pose, correspondences, indices, intr).costs;
}

PoseEstimate Refine(const PoseSE3& pose,
                    std::span<const Correspondence2D3D> correspondences,
                    const std::vector<size_t>& inlier_indices,
                    const CameraIntrinsics& intr, const RansacConfig& cfg) {
  if (inlier_indices.size() < 4) {
    throw Error(ErrorCode::kPrecondition, "refinement needs at least 4 inliers");
  }
  PoseEstimate est;
  std::vector<size_t> inliers = inlier_indices;
  PoseSE3 current = pose;
  for (int round = 0; round < cfg.max_refinement_rounds; ++round) {
    const GaussNewtonResult gn =
        RunGaussNewton(current, correspondences, inliers, intr);
    if (gn.singular) {
      est.pose = pose;
      est.status = PoseStatus::kDegenerate;
      for (size_t i : inlier_indices) {
        est.inlier_ids.push_back(correspondences[i].id);
      }
      est.inlier_count = static_cast<int>(est.inlier_ids.size());
      return est;
    }
    current = gn.transform.ToPose();
    const ScoreResult score =
        Score(current, correspondences, intr, cfg.inlier_threshold);
    est.refinement_trace.push_back(score.inlier_count);
    if (score.inlier_indices == inliers || score.inlier_count < 4) {
      break;
    }
    inliers = score.inlier_indices;
  }
  const ScoreResult final_score =
      Score(current, correspondences, intr, cfg.inlier_threshold);
  est.pose = current;
  est.inlier_ids = final_score.inlier_ids;
  est.inlier_count = final_score.inlier_count;
  est.status = est.inlier_count >= cfg.min_inliers ? PoseStatus::kOk
                                                   : PoseStatus::kTooFewInliers;
  return est;
}

PoseEstimate Ransac(std::span<const Correspondence2D3D> correspondences,
                    const CameraIntrinsics& intr, const RansacConfig& cfg) {
  cfg.Validate();
  const size_t n = correspondences.size();
  if (n < 4) {
    throw Error(ErrorCode::kPrecondition,
                "RANSAC needs at least 4 correspondences, got " +
                    std::to_string(n));
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  std::vector<std::array<size_t, 4>> samples(cfg.hypothesis_count);
  for (auto& s : samples) {
    for (int k = 0; k < 4; ++k) {
      size_t idx;
      do {
        idx = pick(rng);
      } while (std::find(s.begin(), s.begin() + k, idx) != s.begin() + k);
      s[k] = idx;
    }
  }

  std::vector<Hypothesis> hyps(samples.size());
  ParallelFor(samples.size(), [&](size_t h) {
    std::array<Correspondence2D3D, 4> minimal;
    for (int k = 0; k < 4; ++k) {
      minimal[k] = correspondences[samples[h][k]];
    }
    try {
      hyps[h].pose = PnPMinimal(minimal, intr);
    } catch (const Error&) {
      return;
    }
    hyps[h].valid = true;
    hyps[h].score =
        Score(hyps[h].pose, correspondences, intr, cfg.inlier_threshold);
  });

  std::optional<size_t> best;
  for (size_t h = 0; h < hyps.size(); ++h) {
    if (!hyps[h].valid) {
      continue;
    }
    if (!best) {
      best = h;
      continue;
    }
    const ScoreResult& a = hyps[h].score;
    const ScoreResult& b = hyps[*best].score;
    if (a.inlier_count > b.inlier_count ||
        (a.inlier_count == b.inlier_count &&
         a.mean_inlier_error < b.mean_inlier_error)) {
      best = h;
    }
  }

  PoseEstimate est;
  if (!best) {
    // No minimal sample produced a pose, so nothing can be an inlier.
    est.status = PoseStatus::kTooFewInliers;
    return est;
  }
  const Hypothesis& winner = hyps[*best];
  if (winner.score.inlier_count < cfg.min_inliers ||
      winner.score.inlier_count < 4) {
    est.pose = winner.pose;
    est.inlier_ids = winner.score.inlier_ids;
    est.inlier_count = winner.score.inlier_count;
    est.status = PoseStatus::kTooFewInliers;
    return est;
  }
  return Refine(winner.pose, correspondences, winner.score.inlier_indices, intr,
                cfg);
}

}  // namespace anglereloc
