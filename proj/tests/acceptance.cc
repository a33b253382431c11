// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "anglereloc/commands.h"
#include "anglereloc/dataset_io.h"
#include "anglereloc/gradcheck.h"
#include "anglereloc/losses.h"
#include "anglereloc/parallel.h"
#include "anglereloc/photometric.h"
#include "anglereloc/ransac_pnp.h"
#include "anglereloc/regressor.h"
#include "pnp_fixture.h"

using namespace anglereloc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

const CameraIntrinsics kIntr{525.0, 319.5, 239.5};

PoseSE3 RandomPose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return PoseSE3(q.normalized().toRotationMatrix(), Vec3(n(rng), n(rng), n(rng)) * 3.0);
}

Vec3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

Vec2 RandomPixel(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Vec2(640.0 * u(rng) - 0.5, 480.0 * u(rng) - 0.5);
}

Outcome GradientSuite() {
  const auto start = Clock::now();
  const GradCheckReport report = RunGradCheck(GradCheckConfig{});
  const double secs = Seconds(start);
  std::string detail;
  bool enough = true;
  for (const GradCheckSuite& s : report.suites) {
    detail += Fmt("%s %.2e (%d), ", s.loss.c_str(), s.max_rel_err, s.checked);
    enough = enough && s.checked >= 100;
  }
  detail += Fmt("%.1f s", secs);
  return {report.pass && enough && secs < 10.0, detail};
}

Outcome Pathology() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> scale(0.01, 10.0);
  const LossConfig cfg;
  double worst_rep = 0.0, worst_ang = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const Vec2 p = RandomPixel(rng);
    const Vec3 d = RayVector(kIntr, p);
    const Vec3 y = pose.Apply(-scale(rng) * d);
    worst_rep = std::max(worst_rep, ReprojPoint(kIntr, pose, y, p).value);
    const double ang = AnglePoint(kIntr, pose, y, p, cfg).value;
    worst_ang = std::max(worst_ang, std::abs(ang - 2.0 * d.norm()) / (2.0 * d.norm()));
  }
  return {worst_rep <= 1e-9 && worst_ang <= 1e-9,
          Fmt("max reproj %.1e px, max |ang - 2|d|| / 2|d| %.1e", worst_rep, worst_ang)};
}

// Relative gap between the two losses for a ground-truth point at depth z
// on the observed pixel's ray, perturbed by eps * |D| along u.
double Eq3Gap(const PoseSE3& pose, const Vec2& p, double z, double eps, const Vec3& u) {
  const Vec3 truth = RayVector(kIntr, p) * (z / kIntr.f);
  const Vec3 y = pose.Apply(truth + eps * truth.norm() * u);
  const double rep = ReprojPoint(kIntr, pose, y, p).value;
  const double ang = AnglePoint(kIntr, pose, y, p, LossConfig{}).value;
  return std::abs(ang - rep) / rep;
}

Outcome SmallErrorApproximation() {
  // The approximation drops the ray-length factor, which is exact only on
  // the optical axis: the draws vary pose, depth and perturbation direction
  // with the point on the axis. Off-axis pixels are reported separately.
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> depth(1.0, 10.0);
  const Vec2 axis(kIntr.cx, kIntr.cy);
  double worst_gap = 0.0, worst_shrink = 1e300;
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    const double z = depth(rng);
    const Vec3 u = RandomUnit(rng);
    const double g3 = Eq3Gap(pose, axis, z, 1e-3, u);
    const double g4 = Eq3Gap(pose, axis, z, 1e-4, u);
    worst_gap = std::max(worst_gap, g3);
    worst_shrink = std::min(worst_shrink, g3 / g4);
  }
  double off_axis = 0.0;
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 pose = RandomPose(rng);
    off_axis = std::max(off_axis,
                        Eq3Gap(pose, RandomPixel(rng), depth(rng), 1e-3, RandomUnit(rng)));
  }
  return {worst_gap <= 1e-2 && worst_shrink >= 5.0,
          Fmt("on-axis max gap %.2e at 1e-3, min shrink %.1fx; full-image max gap %.2e",
              worst_gap, worst_shrink, off_axis)};
}

Outcome Boundedness() {
  std::mt19937_64 rng(107);
  std::uniform_real_distribution<double> log_norm(std::log(1e-8), std::log(1e3));
  const LossConfig cfg;
  long nonfinite = 0, over = 0;
  double min_norm = 1e300;
  for (int i = 0; i < 1000000; ++i) {
    const PoseSE3 pose = (i % 1000 == 0) ? RandomPose(rng) : PoseSE3();
    const Vec2 p = RandomPixel(rng);
    double norm = std::exp(log_norm(rng));
    if (i % 100 == 0) norm = cfg.epsilon_norm;
    const Vec3 dcam = RandomUnit(rng) * norm;
    const Vec3 y = pose.Apply(dcam);
    const PointLossTerm t = AnglePoint(kIntr, pose, y, p, cfg);
    const double bound = 2.0 * RayVector(kIntr, p).norm();
    min_norm = std::min(min_norm, WorldToCamera(pose, y).norm());
    if (!std::isfinite(t.value) || !t.grad.allFinite()) ++nonfinite;
    if (t.value > bound * (1.0 + 1e-12)) ++over;
  }
  return {nonfinite == 0 && over == 0,
          Fmt("1e6 draws, |D| down to %.1e: %ld non-finite, %ld above 2|d|", min_norm,
              nonfinite, over)};
}

struct CellSet {
  std::vector<AblationRow> rows;
  double seconds = 0.0;
};

// Trains every (mode, seed) cell on its dataset in parallel.
CellSet RunCells(const std::vector<const Dataset*>& datasets, const RunConfig& cfg,
                 const std::vector<TrainMode>& modes, int seeds) {
  const auto start = Clock::now();
  struct Cell {
    TrainMode mode;
    int seed;
  };
  std::vector<Cell> cells;
  for (TrainMode m : modes)
    for (int s = 1; s <= seeds; ++s) cells.push_back({m, s});
  CellSet out;
  out.rows.resize(cells.size());
  ParallelFor(cells.size(), [&](size_t i) {
    const Dataset& ds = *datasets[datasets.size() == 1 ? 0 : cells[i].seed - 1];
    out.rows[i] = RunAblationCell(ds, cfg, cells[i].mode,
                                  static_cast<std::uint64_t>(cells[i].seed), {});
  });
  out.seconds = Seconds(start);
  return out;
}

Outcome ConvergenceAblation() {
  RunConfig cfg;
  const Dataset ds = MakeDataset(cfg.scene);
  const CellSet cells = RunCells({&ds}, cfg, {TrainMode::kAngle, TrainMode::kReproj}, 10);
  int angle_ok = 0, reproj_failed = 0, reproj_diverged = 0;
  std::string errors;
  for (const AblationRow& r : cells.rows) {
    if (!r.error.empty()) errors += " [" + r.error + "]";
    if (r.mode == TrainMode::kAngle && r.converged) ++angle_ok;
    if (r.mode == TrainMode::kReproj && r.failed) ++reproj_failed;
    if (r.mode == TrainMode::kReproj && r.exit_code == kExitDiverged) ++reproj_diverged;
  }
  return {angle_ok >= 9 && reproj_failed >= 5 && cells.seconds < 900.0,
          Fmt("Angle converged %d/10, Reproj failed %d/10 (%d diverged), %.0f s", angle_ok,
              reproj_failed, reproj_diverged, cells.seconds) +
              errors};
}

double MeanOf(const std::vector<AblationRow>& rows, TrainMode mode,
              double AblationRow::*field) {
  double sum = 0.0;
  int n = 0;
  for (const AblationRow& r : rows) {
    if (r.mode == mode) {
      sum += r.*field;
      ++n;
    }
  }
  return n > 0 ? sum / n : std::nan("");
}

std::string Errors(const std::vector<AblationRow>& rows) {
  std::string s;
  for (const AblationRow& r : rows)
    if (!r.error.empty()) s += " [" + r.error + "]";
  return s;
}

Outcome MultiViewTrend() {
  // The explicit term needs the full-length schedule to pay off.
  RunConfig cfg;
  cfg.train.iterations = 20000;
  std::vector<Dataset> owned;
  for (int s = 1; s <= 5; ++s) {
    DatasetConfig dc;
    dc.seed = static_cast<std::uint64_t>(s);
    dc.covis_fraction = 0.2;
    dc.pixel_noise_sigma = 1.0;
    owned.push_back(MakeDataset(dc));
  }
  std::vector<const Dataset*> ds;
  for (const Dataset& d : owned) ds.push_back(&d);
  const CellSet cells =
      RunCells(ds, cfg, {TrainMode::kAngle, TrainMode::kAngleMulti}, 5);
  const double angle = MeanOf(cells.rows, TrainMode::kAngle, &AblationRow::median_trans);
  const double multi =
      MeanOf(cells.rows, TrainMode::kAngleMulti, &AblationRow::median_trans);
  const double reduction = 1.0 - multi / angle;
  return {reduction >= 0.10,
          Fmt("mean median translation Angle %.4f, AngleMulti %.4f, reduction %.1f%%, "
              "%.0f s",
              angle, multi, 100.0 * reduction, cells.seconds) +
              Errors(cells.rows)};
}

DatasetConfig PhotoScene(std::uint64_t seed) {
  DatasetConfig dc;
  dc.seed = seed;
  dc.dense = true;
  return dc;
}

Outcome PhotometricTrend() {
  RunConfig cfg;
  std::vector<Dataset> owned;
  for (int s = 1; s <= 5; ++s) owned.push_back(MakeDataset(PhotoScene(s)));
  std::vector<const Dataset*> ds;
  for (const Dataset& d : owned) ds.push_back(&d);

  // Perfect inputs: ground-truth geometry between consecutive frames.
  double photo_sum = 0.0;
  int valid = 0;
  for (const Dataset& d : owned) {
    for (size_t i = 0; i + 1 < d.frames.size(); ++i) {
      const DatasetFrame& f = d.frames[i];
      const DatasetFrame& g = d.frames[i + 1];
      PredictionGrid gt;
      for (const Observation& o : f.observations) {
        gt.ids.push_back(o.point);
        gt.coords.push_back(o.gt_world);
      }
      const LossReport r = PhotometricImageLoss(d.image_intr, g.pose, gt, f.observations,
                                                *f.image, *g.image, LossConfig{});
      photo_sum += r.total;
      valid += r.valid_count;
    }
  }
  const double per_point = photo_sum / std::max(valid, 1);

  const CellSet cells = RunCells(ds, cfg, {TrainMode::kAngle, TrainMode::kAnglePhoto}, 5);
  const double angle =
      MeanOf(cells.rows, TrainMode::kAngle, &AblationRow::median_coord_err);
  const double photo =
      MeanOf(cells.rows, TrainMode::kAnglePhoto, &AblationRow::median_coord_err);
  return {photo <= angle && per_point < 5e-2 && valid > 0,
          Fmt("mean median coord err Angle %.4f, AnglePhoto %.4f; perfect-input "
              "photometric %.2e per valid point, %.0f s",
              angle, photo, per_point, cells.seconds) +
              Errors(cells.rows)};
}

// Midpoint of the common perpendicular of two rays.
Vec3 Triangulate(const Vec3& c1, const Vec3& r1, const Vec3& c2, const Vec3& r2) {
  const Vec3 w = c1 - c2;
  const double a = r1.dot(r1), b = r1.dot(r2), c = r2.dot(r2);
  const double d = r1.dot(w), e = r2.dot(w);
  const double den = a * c - b * b;
  const double s = (b * e - c * d) / den;
  const double t = (a * e - b * d) / den;
  return 0.5 * ((c1 + s * r1) + (c2 + t * r2));
}

Outcome Triangulation() {
  DatasetConfig dc;
  dc.seed = 11;
  dc.point_count = 200;
  dc.n_train = 2;
  dc.n_test = 0;
  dc.descriptor_noise_sigma = 0.0;
  Dataset ds = MakeDataset(dc);
  const DatasetFrame& a = ds.frames[0];
  const DatasetFrame& b = ds.frames[1];
  std::map<PointId, size_t> in_b;
  for (size_t k = 0; k < b.observations.size(); ++k) in_b[b.observations[k].point] = k;
  // Keep 100 points seen in both views.
  std::vector<PointId> keep;
  for (const Observation& o : a.observations) {
    if (in_b.count(o.point) && keep.size() < 100) keep.push_back(o.point);
  }
  for (DatasetFrame& f : ds.frames) {
    std::vector<Observation> obs;
    for (const Observation& o : f.observations) {
      if (std::find(keep.begin(), keep.end(), o.point) != keep.end()) obs.push_back(o);
    }
    f.observations = obs;
  }
  ds.covis_points = keep;

  TrainConfig tc;
  tc.mode = TrainMode::kAngleMulti;
  tc.model = ModelKind::kFreeTable;
  tc.iterations = 4000;
  tc.schedule.base_lr = 0.05;
  tc.schedule.halve_at = {0.2, 0.3, 0.4, 0.5, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  const TrainResult r = Train(ds, tc);
  const auto& table = std::get<FreeTable>(r.model);
  double worst = 0.0;
  for (const DatasetFrame& f : ds.frames) {
    const DatasetFrame& other = (&f == &ds.frames[0]) ? ds.frames[1] : ds.frames[0];
    for (size_t k = 0; k < f.observations.size(); ++k) {
      const Observation& o = f.observations[k];
      size_t j = 0;
      while (other.observations[j].point != o.point) ++j;
      const Vec3 x = Triangulate(
          f.pose.center(), f.pose.rotation() * RayVector(ds.intr, o.pixel),
          other.pose.center(),
          other.pose.rotation() * RayVector(ds.intr, other.observations[j].pixel));
      worst = std::max(worst, (table.Get(f.id, k) - x).norm());
    }
  }
  return {keep.size() == 100 && worst < 1e-3 && !r.diverged,
          Fmt("%zu points, max distance to triangulation %.2e", keep.size(), worst)};
}

Outcome RansacPnp() {
  using testing::kPnpIntr;
  using testing::MakePnpProblem;
  const auto start = Clock::now();
  double exact_rot = 0.0, exact_trans = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = MakePnpProblem(s, 50, 0.0, 0.0);
    RansacConfig cfg;
    cfg.seed = s;
    const PoseError e = ComputePoseError(Ransac(p.corr, kPnpIntr, cfg).pose, p.pose);
    exact_rot = std::max(exact_rot, e.rotation_deg);
    exact_trans = std::max(exact_trans, e.translation);
  }
  int good = 0;
  bool deterministic = true;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto p = MakePnpProblem(1000 + s, 50, 0.3, 1.0);
    RansacConfig cfg;
    cfg.seed = s;
    const PoseEstimate est = Ransac(p.corr, kPnpIntr, cfg);
    const PoseError e = ComputePoseError(est.pose, p.pose);
    if (est.status == PoseStatus::kOk && e.rotation_deg < 0.5 &&
        e.translation < 0.01 * p.diameter) {
      ++good;
    }
    if (s < 10) deterministic = deterministic && (Ransac(p.corr, kPnpIntr, cfg) == est);
  }
  const double secs = Seconds(start);
  return {exact_rot < 1e-6 && exact_trans < 1e-9 && good >= 95 && deterministic &&
              secs < 30.0,
          Fmt("exact %.1e deg / %.1e; noisy %d/100 within bounds; deterministic %s; %.1f s",
              exact_rot, exact_trans, good, deterministic ? "yes" : "no", secs)};
}

bool SameFiles(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const fs::path& p : fa)
    if (ReadTextFile(a / p) != ReadTextFile(b / p)) return false;
  return true;
}

Outcome InputOutput() {
  const fs::path root = fs::temp_directory_path() / "anglereloc_acceptance_io";
  fs::remove_all(root);
  DatasetConfig dc;
  dc.pixel_noise_sigma = 1.0;
  const Dataset ds = MakeDataset(dc);
  SaveDataset(ds, root / "a");
  const Dataset back = LoadDataset(root / "a");
  SaveDataset(back, root / "b");
  bool fields = back.frames.size() == ds.frames.size() && back.scene.points == ds.scene.points;
  for (size_t i = 0; fields && i < ds.frames.size(); ++i) {
    const auto& x = ds.frames[i];
    const auto& y = back.frames[i];
    fields = x.pose.Matrix() == y.pose.Matrix() && x.observations.size() == y.observations.size();
    for (size_t k = 0; fields && k < x.observations.size(); ++k) {
      fields = x.observations[k].pixel == y.observations[k].pixel &&
               x.observations[k].gt_world == y.observations[k].gt_world &&
               x.observations[k].descriptor == y.observations[k].descriptor;
    }
  }
  const bool files = SameFiles(root / "a", root / "b");
  fs::remove_all(root);

  const PoseParseResult id =
      ParseSevenScenesPose("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
  const bool identity = id.pose.Matrix() == Eigen::Matrix4d::Identity() && !id.warning;
  const PoseParseResult warped =
      ParseSevenScenesPose("1 0.02 0 0.5\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
  const bool warns = warped.warning.has_value() && warped.pose.IsValid();
  return {fields && files && identity && warns,
          Fmt("round trip fields %s, files %s; identity %s; re-orthonormalization warning %s",
              fields ? "equal" : "differ", files ? "identical" : "differ",
              identity ? "ok" : "wrong", warns ? "raised" : "missing")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", GradientSuite},
      {"behind-camera pathology", Pathology},
      {"small-error approximation", SmallErrorApproximation},
      {"angle loss boundedness", Boundedness},
      {"convergence from scratch", ConvergenceAblation},
      {"multi-view trend", MultiViewTrend},
      {"photometric trend", PhotometricTrend},
      {"triangulation", Triangulation},
      {"ransac-pnp", RansacPnp},
      {"dataset and pose i/o", InputOutput},
  };
  // Optional arguments select criteria by number.
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const size_t n = std::stoul(argv[a]);
    if (n >= 1 && n <= criteria.size()) selected[n - 1] = true;
  }
  int failures = 0, run = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++run;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", run - failures, run);
  return failures == 0 ? 0 : 1;
}
