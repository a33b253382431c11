#include "anglereloc/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "anglereloc/dataset_io.h"
#include "anglereloc/error.h"
#include "anglereloc/geometry.h"
#include "anglereloc/image.h"
#include "anglereloc/losses.h"
#include "anglereloc/photometric.h"

namespace anglereloc {

namespace {

using Rng64 = std::mt19937_64;

double Uniform(Rng64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

PoseSE3 RandomPose(Rng64& rng, double max_angle, double max_shift) {
  Vec3 axis(Uniform(rng, -1, 1), Uniform(rng, -1, 1), Uniform(rng, -1, 1));
  axis.normalize();
  const Mat3 r = AxisAngleToRotation(axis * Uniform(rng, 0.0, max_angle));
  const Vec3 t(Uniform(rng, -max_shift, max_shift),
               Uniform(rng, -max_shift, max_shift),
               Uniform(rng, -max_shift, max_shift));
  return PoseSE3(r, t);
}

double RelErr(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max({analytic.lpNorm<Eigen::Infinity>(),
                                 numeric.lpNorm<Eigen::Infinity>(), 1e-12});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

// Central differences of f over every entry of x.
Eigen::VectorXd NumericGrad(const std::function<double(const Eigen::VectorXd&)>& f,
                            Eigen::VectorXd x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = f(x);
    x[i] = saved - h;
    const double minus = f(x);
    x[i] = saved;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return g;
}

const CameraIntrinsics kIntr{525.0, 319.5, 239.5};

Vec2 RandomPixel(Rng64& rng) {
  return Vec2(Uniform(rng, 0.0, 640.0), Uniform(rng, 0.0, 480.0));
}

struct Case {
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
  bool excluded = false;
};

Case ReprojCase(Rng64& rng, int attempt, const GradCheckConfig& cfg) {
  const PoseSE3 pose = RandomPose(rng, M_PI, 3.0);
  const Vec2 pixel = RandomPixel(rng);
  // Every tenth draw lands inside the excluded depth band on purpose.
  const double z = attempt % 10 == 9 ? Uniform(rng, -cfg.z_band, cfg.z_band)
                                     : Uniform(rng, -10.0, 10.0);
  const Vec3 xc(Uniform(rng, -3, 3), Uniform(rng, -3, 3), z);
  const Vec3 y = pose.Apply(xc);
  Case c;
  c.excluded = std::abs(z) < cfg.z_band;
  c.analytic = ReprojPoint(kIntr, pose, y, pixel).grad;
  c.numeric = NumericGrad(
      [&](const Eigen::VectorXd& v) {
        return ReprojPoint(kIntr, pose, v, pixel).value;
      },
      y, cfg.step);
  return c;
}

Case AngleCase(Rng64& rng, const GradCheckConfig& cfg) {
  const PoseSE3 pose = RandomPose(rng, M_PI, 3.0);
  const Vec2 pixel = RandomPixel(rng);
  const Vec3 xc(Uniform(rng, -5, 5), Uniform(rng, -5, 5), Uniform(rng, -10, 10));
  const Vec3 y = pose.Apply(xc);
  const LossConfig loss;
  Case c;
  c.analytic = AnglePoint(kIntr, pose, y, pixel, loss).grad;
  c.numeric = NumericGrad(
      [&](const Eigen::VectorXd& v) {
        return AnglePoint(kIntr, pose, v, pixel, loss).value;
      },
      y, cfg.step);
  return c;
}

Eigen::VectorXd Flatten(const std::vector<Vec3>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(3 * v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    out.segment<3>(static_cast<Eigen::Index>(3 * i)) = v[i];
  }
  return out;
}

PredictionGrid Unflatten(const std::vector<PointId>& ids, const Eigen::VectorXd& x) {
  PredictionGrid grid;
  grid.ids = ids;
  for (size_t i = 0; i < ids.size(); ++i) {
    grid.coords.push_back(x.segment<3>(static_cast<Eigen::Index>(3 * i)));
  }
  return grid;
}

Eigen::VectorXd TermGrads(const LossReport& report) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(3 * report.terms.size()));
  for (size_t i = 0; i < report.terms.size(); ++i) {
    g.segment<3>(static_cast<Eigen::Index>(3 * i)) = report.terms[i].grad;
  }
  return g;
}

Case MultiViewCase(Rng64& rng, const GradCheckConfig& cfg) {
  std::map<ImageId, PoseSE3> poses;
  for (ImageId id = 0; id < 3; ++id) {
    poses[id] = RandomPose(rng, 0.5, 1.0);
  }
  constexpr int kPoints = 6;
  std::vector<Observation> obs(kPoints);
  std::vector<PointId> ids;
  std::vector<Vec3> coords;
  CoVisibilityGraph covis;
  for (int k = 0; k < kPoints; ++k) {
    obs[k].point = k;
    obs[k].pixel = RandomPixel(rng);
    ids.push_back(k);
    coords.push_back(poses[0].Apply(
        Vec3(Uniform(rng, -2, 2), Uniform(rng, -2, 2), Uniform(rng, 1, 8))));
    if (k < 4) {
      for (ImageId id = 0; id < 3; ++id) {
        covis.Add(k, id, id == 0 ? obs[k].pixel : RandomPixel(rng));
      }
    }
  }
  const std::uint64_t pick_seed = rng();
  const LossConfig loss;
  const auto eval = [&](const PredictionGrid& pred) {
    Rng pick(pick_seed);
    return MultiViewImageLoss(kIntr, poses, 0, pred, obs, covis, loss, pick);
  };
  Case c;
  c.analytic = TermGrads(eval(Unflatten(ids, Flatten(coords))));
  c.numeric = NumericGrad(
      [&](const Eigen::VectorXd& x) { return eval(Unflatten(ids, x)).total; },
      Flatten(coords), cfg.step);
  return c;
}

// Smooth random texture on a small grid.
Image RandomTexture(Rng64& rng, int w, int h) {
  Image img(w, h, 1);
  const double a = Uniform(rng, 0.2, 0.9);
  const double b = Uniform(rng, 0.2, 0.9);
  const double p = Uniform(rng, 0.0, 6.3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = 0.5 + 0.25 * std::sin(a * x + p) * std::cos(b * y - p) +
                     0.05 * Uniform(rng, -1, 1);
    }
  }
  return img;
}

bool NearCellBoundary(const Vec2& q) {
  constexpr double kMargin = 1e-4;
  for (int a = 0; a < 2; ++a) {
    if (std::abs(q[a] - std::round(q[a])) < kMargin) {
      return true;
    }
  }
  return false;
}

Case PhotometricCase(Rng64& rng, const GradCheckConfig& cfg, bool combined) {
  constexpr int kW = 10;
  constexpr int kH = 8;
  const CameraIntrinsics intr{8.0, 4.5, 3.5};
  const PoseSE3 pose_i = RandomPose(rng, 0.2, 0.5);
  const PoseSE3 pose_j = pose_i * RandomPose(rng, 0.05, 0.1);
  const Image img_i = RandomTexture(rng, kW, kH);
  const Image img_j = RandomTexture(rng, kW, kH);
  std::vector<Observation> obs;
  std::vector<PointId> ids;
  std::vector<Vec3> coords;
  for (int y = 0; y < kH; ++y) {
    for (int x = 0; x < kW; ++x) {
      Observation o;
      o.point = y * kW + x;
      o.pixel = Vec2(x, y);
      const Vec3 ray = RayVector(intr, o.pixel);
      // Bilinear sampling has kinks on integer coordinates; redraw points
      // whose projection into j lies within a few steps of one.
      Vec3 y;
      do {
        const Vec3 xc = ray * (Uniform(rng, 3.0, 6.0) / ray.z()) +
                        Vec3(Uniform(rng, -0.05, 0.05), Uniform(rng, -0.05, 0.05), 0.0);
        y = pose_i.Apply(xc);
      } while (NearCellBoundary(Project(intr, WorldToCamera(pose_j, y)).pixel));
      ids.push_back(o.point);
      coords.push_back(y);
      obs.push_back(o);
    }
  }
  const LossConfig loss;
  const auto eval = [&](const PredictionGrid& pred) {
    const LossReport photo =
        PhotometricImageLoss(intr, pose_j, pred, obs, img_i, img_j, loss);
    if (!combined) {
      return photo;
    }
    const LossReport angle =
        ImageLoss(ReprojectionKind::kAngle, intr, pose_i, pred, obs, loss);
    return CombinedLoss(angle, photo, loss);
  };
  Case c;
  c.analytic = TermGrads(eval(Unflatten(ids, Flatten(coords))));
  c.numeric = NumericGrad(
      [&](const Eigen::VectorXd& x) { return eval(Unflatten(ids, x)).total; },
      Flatten(coords), cfg.step);
  return c;
}

}  // namespace

const std::vector<std::string>& GradCheckLosses() {
  static const std::vector<std::string> names = {"reproj", "angle", "multiview",
                                                 "photometric", "combined"};
  return names;
}

GradCheckReport RunGradCheck(const GradCheckConfig& cfg) {
  if (cfg.configs <= 0 || !(cfg.step > 0.0) || !(cfg.tolerance > 0.0)) {
    throw Error(ErrorCode::kConfigError,
                "gradcheck needs positive configs, step and tolerance");
  }
  if (!cfg.corrupt.empty()) {
    const auto& names = GradCheckLosses();
    if (std::find(names.begin(), names.end(), cfg.corrupt) == names.end()) {
      throw Error(ErrorCode::kConfigError, "unknown loss '" + cfg.corrupt + "'");
    }
  }
  GradCheckReport report;
  for (size_t li = 0; li < GradCheckLosses().size(); ++li) {
    const std::string& name = GradCheckLosses()[li];
    Rng64 rng(cfg.seed * 1000 + li);
    GradCheckSuite suite;
    suite.loss = name;
    for (int attempt = 0; suite.checked < cfg.configs; ++attempt) {
      Case c;
      if (name == "reproj") {
        c = ReprojCase(rng, attempt, cfg);
      } else if (name == "angle") {
        c = AngleCase(rng, cfg);
      } else if (name == "multiview") {
        c = MultiViewCase(rng, cfg);
      } else {
        c = PhotometricCase(rng, cfg, name == "combined");
      }
      if (name == cfg.corrupt) {
        c.analytic *= 1.01;
      }
      GradCheckRow row;
      row.loss = name;
      row.config = attempt;
      row.max_rel_err = RelErr(c.analytic, c.numeric);
      row.excluded = c.excluded;
      row.pass = c.excluded || row.max_rel_err < cfg.tolerance;
      if (c.excluded) {
        ++suite.excluded;
      } else {
        ++suite.checked;
        suite.max_rel_err = std::max(suite.max_rel_err, row.max_rel_err);
        suite.pass = suite.pass && row.pass;
      }
      report.rows.push_back(row);
    }
    report.pass = report.pass && suite.pass;
    report.suites.push_back(suite);
  }
  return report;
}

std::string GradCheckReport::RowsCsv() const {
  std::string out = "loss,config,max_rel_err,excluded,pass\n";
  for (const GradCheckRow& r : rows) {
    out += r.loss + ',' + std::to_string(r.config) + ',' +
           FormatDouble(r.max_rel_err) + ',' + (r.excluded ? "1" : "0") + ',' +
           (r.pass ? "1" : "0") + '\n';
  }
  return out;
}

std::string GradCheckReport::SuitesCsv() const {
  std::string out = "loss,checked,excluded,max_rel_err,pass\n";
  for (const GradCheckSuite& s : suites) {
    out += s.loss + ',' + std::to_string(s.checked) + ',' +
           std::to_string(s.excluded) + ',' + FormatDouble(s.max_rel_err) + ',' +
           (s.pass ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace anglereloc
