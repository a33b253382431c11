#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "anglereloc/dataset.h"
#include "anglereloc/gradcheck.h"
#include "anglereloc/metrics.h"
#include "anglereloc/ransac_pnp.h"
#include "anglereloc/regressor.h"

namespace anglereloc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

struct MetricsConfig {
  double rot_thresh_deg = 5.0;
  // Absolute translation threshold; when unset, trans_thresh_fraction times
  // the scene diameter.
  std::optional<double> trans_thresh;
  double trans_thresh_fraction = 0.05;

  double TransThresh(double diameter) const {
    return trans_thresh ? *trans_thresh : trans_thresh_fraction * diameter;
  }
};

struct AblateConfig {
  int seeds = 10;
  std::vector<TrainMode> modes = {TrainMode::kReproj,
                                  TrainMode::kConstDepthInitThenReproj,
                                  TrainMode::kAngle, TrainMode::kAngleMulti,
                                  TrainMode::kAnglePhoto};
  // Converged: median coordinate error below this share of the diameter
  // and test accuracy at least min_accuracy.
  double converged_fraction = 0.05;
  double min_accuracy = 0.8;
  // Failed: diverged, or median coordinate error above this share.
  double failed_fraction = 0.25;
};

// Every block has defaults; a JSON file overlays them and command-line
// flags overlay the file.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out;
  DatasetConfig scene;
  TrainConfig train;
  RansacConfig ransac;
  MetricsConfig metrics;
  AblateConfig ablate;
  GradCheckConfig gradcheck;
  std::string split = "test";
};

// Top-level "seed" is applied to the scene, train, ransac and gradcheck
// blocks before their own keys are read.
RunConfig ParseRunConfig(const std::string& json_text);
void ApplySeed(RunConfig& cfg, std::uint64_t seed);
std::string RunConfigToJson(const RunConfig& cfg);

struct CommandIo {
  std::ostream& out;
  std::ostream& err;
};

// Each command returns a process exit code and never throws.
int CmdGenScene(const RunConfig& cfg, const CommandIo& io);
int CmdTrain(const RunConfig& cfg, const std::filesystem::path& data,
             const CommandIo& io);
int CmdLocalize(const RunConfig& cfg, const std::filesystem::path& data,
                const std::filesystem::path& checkpoint, const CommandIo& io);
int CmdEvaluate(const RunConfig& cfg, const std::filesystem::path& data,
                const std::filesystem::path& estimates, const CommandIo& io);
int CmdGradcheck(const RunConfig& cfg, const CommandIo& io);
// Generates the dataset from cfg.scene when `data` is empty.
int CmdAblate(const RunConfig& cfg, const std::filesystem::path& data,
              const CommandIo& io);

// Library-level pieces of the commands, reused by tests.
std::vector<EstimateRecord> LocalizeSplit(const SceneCoordModel& model,
                                          const Dataset& dataset, Split split,
                                          const RansacConfig& cfg);

struct AblationRow {
  TrainMode mode = TrainMode::kAngle;
  std::uint64_t seed = 0;
  int exit_code = 0;
  bool converged = false;
  bool failed = false;
  double behind_frac = 0.0;
  std::int64_t nonfinite_events = 0;
  double median_coord_err = 0.0;
  double median_rot_deg = 0.0;
  double median_trans = 0.0;
  double accuracy = 0.0;
  std::string error;
};

// Trains, localizes the test split and evaluates one (mode, seed) cell.
// Failures are recorded in the row, never thrown.
AblationRow RunAblationCell(const Dataset& dataset, const RunConfig& cfg,
                            TrainMode mode, std::uint64_t seed,
                            const std::filesystem::path& cell_dir);

// mode,seed,exit_code,converged,failed,behind_frac,nonfinite_events,
// median_coord_err,median_rot_deg,median_trans,accuracy,error
std::string AblationCsv(const std::vector<AblationRow>& rows);
std::string AblationSummaryJson(const std::vector<AblationRow>& rows);

}  // namespace anglereloc
