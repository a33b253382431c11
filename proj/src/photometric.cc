#include "anglereloc/photometric.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "anglereloc/error.h"

namespace anglereloc {

namespace {

// 3x3 box mean with replicated borders, per channel.
Image BoxMean(const Image& in) {
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) {
        double sum = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, in.height - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            sum += in.at(std::clamp(x + dx, 0, in.width - 1), yy, c);
          }
        }
        out.at(x, y, c) = sum / 9.0;
      }
    }
  }
  return out;
}

// Adjoint of BoxMean.
Image BoxMeanTranspose(const Image& in) {
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) {
        const double share = in.at(x, y, c) / 9.0;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, in.height - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            out.at(std::clamp(x + dx, 0, in.width - 1), yy, c) += share;
          }
        }
      }
    }
  }
  return out;
}

Image Product(const Image& a, const Image& b) {
  Image out = a;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] *= b.data[i];
  }
  return out;
}

}  // namespace

BilinearSample SampleBilinear(const Image& image, const Vec2& q,
                              int channel) {
  BilinearSample s;
  if (!q.allFinite() || q.x() < 0.0 || q.y() < 0.0 ||
      q.x() > image.width - 1 || q.y() > image.height - 1) {
    return s;
  }
  const int x0 = std::min(static_cast<int>(std::floor(q.x())),
                          std::max(image.width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(q.y())),
                          std::max(image.height - 2, 0));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double tx = q.x() - x0;
  const double ty = q.y() - y0;

  const double i00 = image.at(x0, y0, channel);
  const double i10 = image.at(x1, y0, channel);
  const double i01 = image.at(x0, y1, channel);
  const double i11 = image.at(x1, y1, channel);

  s.value = (1.0 - ty) * ((1.0 - tx) * i00 + tx * i10) +
            ty * ((1.0 - tx) * i01 + tx * i11);
  s.grad.x() = (1.0 - ty) * (i10 - i00) + ty * (i11 - i01);
  s.grad.y() = (1.0 - tx) * (i01 - i00) + tx * (i11 - i10);
  s.valid = true;
  return s;
}

SsimResult Ssim3x3(const Image& a, const Image& b, const Image* weights) {
  if (!a.SameShape(b)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "SSIM inputs differ in shape");
  }
  if (weights != nullptr && !weights->SameShape(a)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "SSIM weights differ in shape");
  }
  const Image mu_a = BoxMean(a);
  const Image mu_b = BoxMean(b);
  const Image e_aa = BoxMean(Product(a, a));
  const Image e_bb = BoxMean(Product(b, b));
  const Image e_ab = BoxMean(Product(a, b));

  SsimResult out;
  out.map = Image(a.width, a.height, a.channels);
  Image g_mu(a.width, a.height, a.channels);
  Image g_aa(a.width, a.height, a.channels);
  Image g_ab(a.width, a.height, a.channels);

  for (size_t i = 0; i < a.data.size(); ++i) {
    const double ma = mu_a.data[i];
    const double mb = mu_b.data[i];
    const double var_a = e_aa.data[i] - ma * ma;
    const double var_b = e_bb.data[i] - mb * mb;
    const double cov = e_ab.data[i] - ma * mb;
    const double num1 = 2.0 * ma * mb + kSsimC1;
    const double num2 = 2.0 * cov + kSsimC2;
    const double den1 = ma * ma + mb * mb + kSsimC1;
    const double den2 = var_a + var_b + kSsimC2;
    const double ssim = num1 * num2 / (den1 * den2);
    out.map.data[i] = ssim;

    // Partials with mu_a, E[a^2], E[ab] as the independent window stats.
    const double w = weights == nullptr ? 1.0 : weights->data[i];
    const double den = den1 * den2;
    g_mu.data[i] = w * (2.0 * mb * (num2 - num1) / den -
                        ssim * 2.0 * ma * (den2 - den1) / den);
    g_aa.data[i] = w * (-ssim / den2);
    g_ab.data[i] = w * (2.0 * num1 / den);
  }

  const Image t_mu = BoxMeanTranspose(g_mu);
  const Image t_aa = BoxMeanTranspose(g_aa);
  const Image t_ab = BoxMeanTranspose(g_ab);
  out.grad = Image(a.width, a.height, a.channels);
  for (size_t i = 0; i < a.data.size(); ++i) {
    out.grad.data[i] =
        t_mu.data[i] + 2.0 * a.data[i] * t_aa.data[i] + b.data[i] * t_ab.data[i];
  }
  return out;
}

LossReport PhotometricImageLoss(const CameraIntrinsics& intr,
                                const PoseSE3& pose_j,
                                const PredictionGrid& predictions,
                                std::span<const Observation> observations,
                                const Image& img_i, const Image& img_j,
                                const LossConfig& cfg) {
  CheckAligned(predictions, observations);
  if (!img_i.SameShape(img_j)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "photometric pair differs in shape");
  }
  const int channels = img_i.channels;
  const double alpha = cfg.alpha_ssim;
  const size_t n = observations.size();

  // Reconstruction starts as a copy of img_i so masked pixels are neutral
  // inside SSIM windows.
  Image recon = img_i;
  Image weights(img_i.width, img_i.height, channels, 0.0);
  std::vector<int> grid_index(n, -1);
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> sample_grads(n);
  std::vector<Eigen::Matrix<double, 2, 3>> proj_jacs(n);

  LossReport report;
  report.terms.resize(n);
  for (size_t k = 0; k < n; ++k) {
    const Vec2& p = observations[k].pixel;
    const long gx = std::lround(p.x());
    const long gy = std::lround(p.y());
    if (std::abs(p.x() - gx) > 1e-9 || std::abs(p.y() - gy) > 1e-9 ||
        gx < 0 || gy < 0 || gx >= img_i.width || gy >= img_i.height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "observation " + std::to_string(k) +
                      " is not on the image grid");
    }
    const Vec3 cam = WorldToCamera(pose_j, predictions.coords[k]);
    const Projection proj = Project(intr, cam);
    report.terms[k].status = proj.status;
    if (proj.status != DepthStatus::kInFront) {
      continue;
    }
    Eigen::Matrix<double, Eigen::Dynamic, 2> grads(channels, 2);
    bool valid = true;
    for (int c = 0; c < channels && valid; ++c) {
      const BilinearSample s = SampleBilinear(img_j, proj.pixel, c);
      valid = s.valid;
      recon.at(gx, gy, c) = s.value;
      grads.row(c) = s.grad.transpose();
    }
    if (!valid) {
      for (int c = 0; c < channels; ++c) {
        recon.at(gx, gy, c) = img_i.at(gx, gy, c);
      }
      continue;
    }
    const int idx = static_cast<int>(gy * img_i.width + gx);
    grid_index[k] = idx;
    sample_grads[k] = grads;
    const double inv_z = 1.0 / cam.z();
    proj_jacs[k] << intr.f * inv_z, 0.0, -intr.f * cam.x() * inv_z * inv_z,
        0.0, intr.f * inv_z, -intr.f * cam.y() * inv_z * inv_z;
    for (int c = 0; c < channels; ++c) {
      weights.at(gx, gy, c) = -0.5 * alpha / channels;
    }
    ++report.valid_count;
  }

  const SsimResult ssim = Ssim3x3(recon, img_i, &weights);
  for (size_t k = 0; k < n; ++k) {
    if (grid_index[k] < 0) {
      continue;
    }
    const size_t base = static_cast<size_t>(grid_index[k]) * channels;
    PointLossTerm& term = report.terms[k];
    Vec2 grad_q = Vec2::Zero();
    for (int c = 0; c < channels; ++c) {
      const double diff = recon.data[base + c] - img_i.data[base + c];
      term.value += ((1.0 - alpha) * std::abs(diff) +
                     alpha * (1.0 - ssim.map.data[base + c]) / 2.0) /
                    channels;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      const double d_recon = (1.0 - alpha) * sign / channels + ssim.grad.data[base + c];
      grad_q += d_recon * sample_grads[k].row(c).transpose();
    }
    term.grad = pose_j.rotation() * (proj_jacs[k].transpose() * grad_q);
  }
  FinalizeReport(report);
  report.valid_fraction =
      n == 0 ? 0.0 : static_cast<double>(report.valid_count) / n;
  return report;
}

}  // namespace anglereloc
