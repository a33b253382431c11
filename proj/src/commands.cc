#include "anglereloc/commands.h"

#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>

#include "anglereloc/dataset_io.h"
#include "anglereloc/error.h"
#include "anglereloc/json_io.h"
#include "anglereloc/parallel.h"

namespace anglereloc {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRunConfigFile = "run_config.json";

int Guard(const CommandIo& io, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

fs::path PrepareOut(const RunConfig& cfg, bool required) {
  if (cfg.out.empty()) {
    if (required) {
      throw Error(ErrorCode::kConfigError, "an output directory is required (--out)");
    }
    return {};
  }
  const fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw Error(ErrorCode::kIo, "cannot create output directory '" + cfg.out +
                                    "': " + (ec ? ec.message() : "not a directory"));
  }
  WriteTextFile(out / kRunConfigFile, RunConfigToJson(cfg));
  return out;
}

Split SplitOf(const RunConfig& cfg) { return ParseSplit(cfg.split); }

std::map<ImageId, PoseSE3> AllPoses(const Dataset& ds) {
  std::map<ImageId, PoseSE3> poses;
  for (const DatasetFrame& f : ds.frames) {
    poses[f.id] = f.pose;
  }
  return poses;
}

json MetricsConfigToJson(const MetricsConfig& m) {
  json j = {{"rot_thresh_deg", m.rot_thresh_deg},
            {"trans_thresh_fraction", m.trans_thresh_fraction}};
  j["trans_thresh"] = m.trans_thresh ? json(*m.trans_thresh) : json(nullptr);
  return j;
}

void MetricsConfigFromJson(const json& j, MetricsConfig& m) {
  CheckKeys(j, {"rot_thresh_deg", "trans_thresh", "trans_thresh_fraction"},
            "metrics config");
  if (j.contains("rot_thresh_deg")) m.rot_thresh_deg = j["rot_thresh_deg"].get<double>();
  if (j.contains("trans_thresh")) {
    if (j["trans_thresh"].is_null()) {
      m.trans_thresh.reset();
    } else {
      m.trans_thresh = j["trans_thresh"].get<double>();
    }
  }
  if (j.contains("trans_thresh_fraction")) {
    m.trans_thresh_fraction = j["trans_thresh_fraction"].get<double>();
  }
}

json AblateConfigToJson(const AblateConfig& a) {
  json modes = json::array();
  for (TrainMode m : a.modes) {
    modes.push_back(TrainModeName(m));
  }
  return {{"seeds", a.seeds},
          {"modes", modes},
          {"converged_fraction", a.converged_fraction},
          {"min_accuracy", a.min_accuracy},
          {"failed_fraction", a.failed_fraction}};
}

void AblateConfigFromJson(const json& j, AblateConfig& a) {
  CheckKeys(j, {"seeds", "modes", "converged_fraction", "min_accuracy",
                "failed_fraction"},
            "ablate config");
  if (j.contains("seeds")) a.seeds = j["seeds"].get<int>();
  if (j.contains("modes")) {
    a.modes.clear();
    for (const json& m : j["modes"]) {
      a.modes.push_back(ParseTrainMode(m.get<std::string>()));
    }
  }
  if (j.contains("converged_fraction")) {
    a.converged_fraction = j["converged_fraction"].get<double>();
  }
  if (j.contains("min_accuracy")) a.min_accuracy = j["min_accuracy"].get<double>();
  if (j.contains("failed_fraction")) {
    a.failed_fraction = j["failed_fraction"].get<double>();
  }
}

json GradCheckConfigToJson(const GradCheckConfig& g) {
  return {{"configs", g.configs},     {"step", g.step},
          {"tolerance", g.tolerance}, {"z_band", g.z_band},
          {"seed", g.seed},           {"corrupt", g.corrupt}};
}

void GradCheckConfigFromJson(const json& j, GradCheckConfig& g) {
  CheckKeys(j, {"configs", "step", "tolerance", "z_band", "seed", "corrupt"},
            "gradcheck config");
  if (j.contains("configs")) g.configs = j["configs"].get<int>();
  if (j.contains("step")) g.step = j["step"].get<double>();
  if (j.contains("tolerance")) g.tolerance = j["tolerance"].get<double>();
  if (j.contains("z_band")) g.z_band = j["z_band"].get<double>();
  if (j.contains("seed")) g.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("corrupt")) g.corrupt = j["corrupt"].get<std::string>();
}

json CoordStatsJson(const CoordErrorStats& s) {
  return {{"median", s.median}, {"mean", s.mean}, {"count", s.count}};
}

}  // namespace

void ApplySeed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.scene.seed = seed;
  cfg.train.seed = seed;
  cfg.ransac.seed = seed;
  cfg.gradcheck.seed = seed;
}

RunConfig ParseRunConfig(const std::string& json_text) {
  RunConfig cfg;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("config is not JSON: ") + e.what());
  }
  try {
    CheckKeys(j, {"seed", "out", "scene", "train", "ransac", "metrics", "ablate",
                  "gradcheck", "split"},
              "run config");
    if (j.contains("seed")) ApplySeed(cfg, j["seed"].get<std::uint64_t>());
    if (j.contains("out")) cfg.out = j["out"].get<std::string>();
    if (j.contains("scene")) from_json(j["scene"], cfg.scene);
    if (j.contains("train")) from_json(j["train"], cfg.train);
    if (j.contains("ransac")) from_json(j["ransac"], cfg.ransac);
    if (j.contains("metrics")) MetricsConfigFromJson(j["metrics"], cfg.metrics);
    if (j.contains("ablate")) AblateConfigFromJson(j["ablate"], cfg.ablate);
    if (j.contains("gradcheck")) GradCheckConfigFromJson(j["gradcheck"], cfg.gradcheck);
    if (j.contains("split")) cfg.split = j["split"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("bad config: ") + e.what());
  }
  ParseSplit(cfg.split);
  return cfg;
}

std::string RunConfigToJson(const RunConfig& cfg) {
  const json j = {{"seed", cfg.seed},
                  {"out", cfg.out},
                  {"split", cfg.split},
                  {"scene", cfg.scene},
                  {"train", cfg.train},
                  {"ransac", cfg.ransac},
                  {"metrics", MetricsConfigToJson(cfg.metrics)},
                  {"ablate", AblateConfigToJson(cfg.ablate)},
                  {"gradcheck", GradCheckConfigToJson(cfg.gradcheck)}};
  return j.dump(2) + "\n";
}

std::vector<EstimateRecord> LocalizeSplit(const SceneCoordModel& model,
                                          const Dataset& dataset, Split split,
                                          const RansacConfig& cfg) {
  std::vector<EstimateRecord> out;
  for (size_t idx : dataset.FrameIndices(split)) {
    const DatasetFrame& f = dataset.frames[idx];
    const PredictionGrid pred = Predict(model, f);
    std::vector<Correspondence2D3D> corrs;
    corrs.reserve(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
      corrs.push_back({pred.ids[i], f.observations[i].pixel, pred.coords[i]});
    }
    EstimateRecord rec;
    rec.image = f.id;
    if (corrs.size() < 4) {
      rec.status = PoseStatus::kTooFewInliers;
    } else {
      RansacConfig frame_cfg = cfg;
      frame_cfg.seed = cfg.seed + static_cast<std::uint64_t>(f.id);
      const PoseEstimate est = Ransac(corrs, dataset.intr, frame_cfg);
      rec.pose = est.pose;
      rec.inlier_count = est.inlier_count;
      rec.status = est.status;
    }
    out.push_back(rec);
  }
  return out;
}

int CmdGenScene(const RunConfig& cfg, const CommandIo& io) {
  return Guard(io, [&] {
    const fs::path out = PrepareOut(cfg, true);
    const Dataset ds = MakeDataset(cfg.scene);
    SaveDataset(ds, out);
    io.out << "wrote " << ds.frames.size() << " frames ("
           << ds.FrameIndices(Split::kTrain).size() << " train) to " << out.string()
           << "\n";
    return kExitOk;
  });
}

int CmdTrain(const RunConfig& cfg, const fs::path& data, const CommandIo& io) {
  return Guard(io, [&] {
    cfg.train.Validate();
    const fs::path out = PrepareOut(cfg, true);
    const Dataset ds = LoadDataset(data);
    const TrainResult result = Train(ds, cfg.train);
    WriteTextFile(out / "train_log.csv", result.log.ToCsv());
    const TrainLogRecord& last = result.log.records.back();
    json summary = {{"mode", TrainModeName(cfg.train.mode)},
                    {"model", ModelKindName(cfg.train.model)},
                    {"iterations", last.iteration},
                    {"diverged", result.diverged},
                    {"nonfinite_events", last.nonfinite_events},
                    {"behind_frac", last.behind_frac},
                    {"scene_diameter", ds.scene.diameter}};
    if (result.diverged) {
      summary["final_loss"] = nullptr;
      summary["median_coord_err"] = nullptr;
    } else {
      SaveCheckpoint(out / "model.json", result.model, cfg.train);
      summary["final_loss"] = last.loss;
      summary["median_coord_err"] = last.median_err;
      summary["train_coord_err"] = CoordStatsJson(EvaluateCoords(result.model, ds));
      if (KindOf(result.model) != ModelKind::kFreeTable) {
        summary["test_coord_err"] =
            CoordStatsJson(EvaluateCoords(result.model, ds, Split::kTest));
      }
    }
    WriteTextFile(out / "summary.json", summary.dump(2) + "\n");
    if (result.diverged) {
      io.out << "training diverged after " << last.iteration << " iterations ("
             << last.nonfinite_events << " non-finite events)\n";
      return kExitDiverged;
    }
    io.out << "final median coordinate error " << FormatDouble(last.median_err)
           << " (" << last.nonfinite_events << " non-finite events)\n";
    return kExitOk;
  });
}

int CmdLocalize(const RunConfig& cfg, const fs::path& data,
                const fs::path& checkpoint, const CommandIo& io) {
  return Guard(io, [&] {
    cfg.ransac.Validate();
    const Split split = SplitOf(cfg);
    const fs::path out = PrepareOut(cfg, true);
    const SceneCoordModel model = LoadCheckpoint(checkpoint);
    const Dataset ds = LoadDataset(data);
    const std::vector<EstimateRecord> estimates =
        LocalizeSplit(model, ds, split, cfg.ransac);
    WriteTextFile(out / "estimates.jsonl", FormatEstimates(estimates));

    std::map<std::string, int> status_counts;
    for (const EstimateRecord& e : estimates) {
      ++status_counts[PoseStatusName(e.status)];
    }
    json summary = {{"split", SplitName(split)},
                    {"images", estimates.size()},
                    {"status_counts", status_counts}};
    if (!estimates.empty()) {
      const MetricsReport m =
          ComputeMetrics(estimates, AllPoses(ds), cfg.metrics.rot_thresh_deg,
                         cfg.metrics.TransThresh(ds.scene.diameter));
      summary["accuracy"] = m.accuracy;
      summary["median_rotation_deg"] = m.median_rotation_deg;
      summary["median_translation"] = m.median_translation;
      io.out << "localized " << estimates.size() << " images, accuracy "
             << FormatDouble(m.accuracy) << "\n";
    }
    WriteTextFile(out / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
  });
}

int CmdEvaluate(const RunConfig& cfg, const fs::path& data,
                const fs::path& estimates_path, const CommandIo& io) {
  return Guard(io, [&] {
    const Dataset ds = LoadDataset(data);
    const std::vector<EstimateRecord> estimates = ParseEstimates(
        ReadTextFile(estimates_path), estimates_path.string());
    const MetricsReport report =
        ComputeMetrics(estimates, AllPoses(ds), cfg.metrics.rot_thresh_deg,
                       cfg.metrics.TransThresh(ds.scene.diameter));
    const fs::path out = PrepareOut(cfg, false);
    const std::string text = MetricsToJson(report);
    if (!out.empty()) {
      WriteTextFile(out / "metrics.json", text);
      WriteTextFile(out / "metrics.csv", MetricsToCsv(report));
    }
    io.out << "median rotation " << FormatDouble(report.median_rotation_deg)
           << " deg, median translation " << FormatDouble(report.median_translation)
           << ", accuracy " << FormatDouble(report.accuracy) << "\n";
    return kExitOk;
  });
}

int CmdGradcheck(const RunConfig& cfg, const CommandIo& io) {
  return Guard(io, [&] {
    const fs::path out = PrepareOut(cfg, false);
    const GradCheckReport report = RunGradCheck(cfg.gradcheck);
    for (const GradCheckSuite& s : report.suites) {
      io.out << (s.pass ? "PASS " : "FAIL ") << s.loss << ": " << s.checked
             << " configs, max rel err " << FormatDouble(s.max_rel_err);
      if (s.excluded > 0) {
        io.out << ", " << s.excluded << " excluded (|Z| < "
               << FormatDouble(cfg.gradcheck.z_band) << ")";
      }
      io.out << "\n";
    }
    if (!out.empty()) {
      WriteTextFile(out / "gradcheck.csv", report.SuitesCsv());
      WriteTextFile(out / "gradcheck_rows.csv", report.RowsCsv());
    }
    return report.pass ? kExitOk : kExitFailure;
  });
}

AblationRow RunAblationCell(const Dataset& dataset, const RunConfig& cfg,
                            TrainMode mode, std::uint64_t seed,
                            const fs::path& cell_dir) {
  AblationRow row;
  row.mode = mode;
  row.seed = seed;
  try {
    TrainConfig tc = cfg.train;
    tc.mode = mode;
    tc.seed = seed;
    const TrainResult result = Train(dataset, tc);
    const TrainLogRecord& last = result.log.records.back();
    row.behind_frac = last.behind_frac;
    row.nonfinite_events = last.nonfinite_events;
    row.median_coord_err = last.median_err;
    if (!cell_dir.empty()) {
      fs::create_directories(cell_dir);
      WriteTextFile(cell_dir / "train_log.csv", result.log.ToCsv());
    }
    if (result.diverged) {
      row.exit_code = kExitDiverged;
      row.failed = true;
      row.median_coord_err = std::numeric_limits<double>::quiet_NaN();
      return row;
    }
    RansacConfig rc = cfg.ransac;
    rc.seed = seed;
    const std::vector<EstimateRecord> estimates =
        LocalizeSplit(result.model, dataset, Split::kTest, rc);
    if (!cell_dir.empty()) {
      WriteTextFile(cell_dir / "estimates.jsonl", FormatEstimates(estimates));
    }
    const double diameter = dataset.scene.diameter;
    if (!estimates.empty()) {
      std::map<ImageId, PoseSE3> gt;
      for (const DatasetFrame& f : dataset.frames) {
        gt[f.id] = f.pose;
      }
      const MetricsReport m =
          ComputeMetrics(estimates, gt, cfg.metrics.rot_thresh_deg,
                         cfg.metrics.TransThresh(diameter));
      row.median_rot_deg = m.median_rotation_deg;
      row.median_trans = m.median_translation;
      row.accuracy = m.accuracy;
    }
    row.converged = row.median_coord_err < cfg.ablate.converged_fraction * diameter &&
                    row.accuracy >= cfg.ablate.min_accuracy;
    row.failed = !(row.median_coord_err <= cfg.ablate.failed_fraction * diameter);
  } catch (const std::exception& e) {
    row.exit_code = kExitConfig;
    row.failed = true;
    row.error = e.what();
  }
  return row;
}

std::string AblationCsv(const std::vector<AblationRow>& rows) {
  std::string out =
      "mode,seed,exit_code,converged,failed,behind_frac,nonfinite_events,"
      "median_coord_err,median_rot_deg,median_trans,accuracy,error\n";
  for (const AblationRow& r : rows) {
    std::string error = r.error;
    for (char& c : error) {
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    }
    out += std::string(TrainModeName(r.mode)) + ',' + std::to_string(r.seed) + ',' +
           std::to_string(r.exit_code) + ',' + (r.converged ? "1" : "0") + ',' +
           (r.failed ? "1" : "0") + ',' + FormatDouble(r.behind_frac) + ',' +
           std::to_string(r.nonfinite_events) + ',' +
           FormatDouble(r.median_coord_err) + ',' + FormatDouble(r.median_rot_deg) +
           ',' + FormatDouble(r.median_trans) + ',' + FormatDouble(r.accuracy) +
           ',' + error + '\n';
  }
  return out;
}

std::string AblationSummaryJson(const std::vector<AblationRow>& rows) {
  struct Agg {
    int rows = 0, converged = 0, failed = 0, diverged = 0, errors = 0, ok = 0;
    double coord = 0.0, rot = 0.0, trans = 0.0, accuracy = 0.0;
  };
  std::map<std::string, Agg> by_mode;
  for (const AblationRow& r : rows) {
    Agg& a = by_mode[TrainModeName(r.mode)];
    ++a.rows;
    a.converged += r.converged ? 1 : 0;
    a.failed += r.failed ? 1 : 0;
    a.diverged += r.exit_code == kExitDiverged ? 1 : 0;
    a.errors += r.exit_code == kExitConfig ? 1 : 0;
    if (r.exit_code == kExitOk) {
      ++a.ok;
      a.coord += r.median_coord_err;
      a.rot += r.median_rot_deg;
      a.trans += r.median_trans;
      a.accuracy += r.accuracy;
    }
  }
  json modes = json::object();
  for (auto& [name, a] : by_mode) {
    const double n = a.ok > 0 ? a.ok : 1;
    json m = {{"rows", a.rows},           {"converged", a.converged},
              {"failed", a.failed},       {"diverged", a.diverged},
              {"errors", a.errors},       {"completed", a.ok}};
    if (a.ok > 0) {
      m["mean_median_coord_err"] = a.coord / n;
      m["mean_median_rot_deg"] = a.rot / n;
      m["mean_median_trans"] = a.trans / n;
      m["mean_accuracy"] = a.accuracy / n;
    }
    modes[name] = m;
  }
  json summary = {{"modes", modes}};
  const auto mean_of = [&](const char* mode, const char* key) -> std::optional<double> {
    if (!modes.contains(mode) || !modes[mode].contains(key)) return std::nullopt;
    return modes[mode][key].get<double>();
  };
  const auto angle_trans = mean_of("Angle", "mean_median_trans");
  const auto multi_trans = mean_of("AngleMulti", "mean_median_trans");
  if (angle_trans && multi_trans && *angle_trans > 0.0) {
    summary["multiview_trans_reduction"] = 1.0 - *multi_trans / *angle_trans;
  }
  const auto angle_coord = mean_of("Angle", "mean_median_coord_err");
  const auto photo_coord = mean_of("AnglePhoto", "mean_median_coord_err");
  if (angle_coord && photo_coord && *angle_coord > 0.0) {
    summary["photometric_coord_ratio"] = *photo_coord / *angle_coord;
  }
  return summary.dump(2) + "\n";
}

int CmdAblate(const RunConfig& cfg, const fs::path& data, const CommandIo& io) {
  return Guard(io, [&] {
    if (cfg.ablate.seeds <= 0) {
      throw Error(ErrorCode::kConfigError, "ablation needs at least one seed");
    }
    const fs::path out = PrepareOut(cfg, true);
    const Dataset ds = data.empty() ? MakeDataset(cfg.scene) : LoadDataset(data);
    struct Cell {
      TrainMode mode;
      std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (TrainMode mode : cfg.ablate.modes) {
      for (int s = 0; s < cfg.ablate.seeds; ++s) {
        cells.push_back({mode, cfg.train.seed + static_cast<std::uint64_t>(s)});
      }
    }
    std::vector<AblationRow> rows(cells.size());
    ParallelFor(cells.size(), [&](size_t i) {
      const fs::path dir = out / TrainModeName(cells[i].mode) /
                           ("seed-" + std::to_string(cells[i].seed));
      rows[i] = RunAblationCell(ds, cfg, cells[i].mode, cells[i].seed, dir);
    });
    WriteTextFile(out / "ablation.csv", AblationCsv(rows));
    WriteTextFile(out / "summary.json", AblationSummaryJson(rows));
    for (const AblationRow& r : rows) {
      io.out << TrainModeName(r.mode) << " seed " << r.seed << ": "
             << (r.exit_code == kExitConfig
                     ? "error"
                     : r.exit_code == kExitDiverged ? "diverged"
                                                    : r.converged ? "converged"
                                                                  : "not converged")
             << "\n";
    }
    return kExitOk;
  });
}

}  // namespace anglereloc
