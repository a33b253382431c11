#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "anglereloc/commands.h"
#include "anglereloc/dataset_io.h"
#include "anglereloc/error.h"

using namespace anglereloc;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::optional<int> iters;
  std::optional<double> lambda_multi;
  std::optional<double> lambda_photo;
  std::optional<double> rot_thresh;
  std::optional<double> trans_thresh;
  std::string data;
  std::string checkpoint;
  std::string estimates;
  std::string split;
  std::optional<int> seeds;
  std::string corrupt;
};

void AddCommon(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output directory");
}

void AddTraining(CLI::App* cmd, Flags& f) {
  cmd->add_option("--mode", f.mode,
                  "Reproj, Angle, AngleMulti, AnglePhoto or ConstDepthInitThenReproj");
  cmd->add_option("--iters", f.iters, "training iterations");
  cmd->add_option("--lambda-multi", f.lambda_multi, "multi-view weight");
  cmd->add_option("--lambda-photo", f.lambda_photo, "photometric weight");
}

void AddThresholds(CLI::App* cmd, Flags& f) {
  cmd->add_option("--rot-thresh-deg", f.rot_thresh, "accuracy rotation threshold");
  cmd->add_option("--trans-thresh", f.trans_thresh,
                  "accuracy translation threshold (scene units)");
}

RunConfig Resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) {
    cfg = ParseRunConfig(ReadTextFile(f.config));
  }
  if (f.seed) ApplySeed(cfg, *f.seed);
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.mode.empty()) cfg.train.mode = ParseTrainMode(f.mode);
  if (f.iters) cfg.train.iterations = *f.iters;
  if (f.lambda_multi) cfg.train.loss.lambda_multiview = *f.lambda_multi;
  if (f.lambda_photo) cfg.train.loss.lambda_photo = *f.lambda_photo;
  if (f.rot_thresh) cfg.metrics.rot_thresh_deg = *f.rot_thresh;
  if (f.trans_thresh) cfg.metrics.trans_thresh = *f.trans_thresh;
  if (!f.split.empty()) {
    ParseSplit(f.split);
    cfg.split = f.split;
  }
  if (f.seeds) cfg.ablate.seeds = *f.seeds;
  if (!f.corrupt.empty()) cfg.gradcheck.corrupt = f.corrupt;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-coordinate relocalization with angle-based reprojection losses"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic dataset");
  AddCommon(gen, f);

  auto* train = app.add_subcommand("train", "train a scene-coordinate model");
  AddCommon(train, f);
  AddTraining(train, f);
  train->add_option("--data", f.data, "dataset directory")->required();

  auto* localize = app.add_subcommand("localize", "estimate poses with RANSAC-PnP");
  AddCommon(localize, f);
  AddThresholds(localize, f);
  localize->add_option("--data", f.data, "dataset directory")->required();
  localize->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
  localize->add_option("--split", f.split, "train or test");

  auto* evaluate = app.add_subcommand("evaluate", "pose errors and accuracy");
  AddCommon(evaluate, f);
  AddThresholds(evaluate, f);
  evaluate->add_option("--data", f.data, "dataset directory with GT poses")->required();
  evaluate->add_option("--estimates", f.estimates, "JSON-lines estimates")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  AddCommon(gradcheck, f);
  gradcheck->add_option("--corrupt", f.corrupt,
                        "test hook: perturb the analytic gradient of one loss");

  auto* ablate = app.add_subcommand("ablate", "loss-mode ablation over seeds");
  AddCommon(ablate, f);
  AddTraining(ablate, f);
  AddThresholds(ablate, f);
  ablate->add_option("--data", f.data, "dataset directory (generated when absent)");
  ablate->add_option("--seeds", f.seeds, "seeds per mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  RunConfig cfg;
  try {
    cfg = Resolve(f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const CommandIo io{std::cout, std::cerr};
  if (*gen) return CmdGenScene(cfg, io);
  if (*train) return CmdTrain(cfg, f.data, io);
  if (*localize) return CmdLocalize(cfg, f.data, f.checkpoint, io);
  if (*evaluate) return CmdEvaluate(cfg, f.data, f.estimates, io);
  if (*gradcheck) return CmdGradcheck(cfg, io);
  return CmdAblate(cfg, f.data, io);
}
