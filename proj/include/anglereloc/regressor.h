#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "anglereloc/dataset.h"
#include "anglereloc/geometry.h"
#include "anglereloc/losses.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

enum class Activation { kTanh, kIdentity };

// Fully connected network, tanh on hidden layers and identity on the
// output. All weights and biases live in one flat parameter vector; layer
// l's weight is a column-major (out x in) block followed by its bias.
class PatchMLP {
 public:
  PatchMLP() = default;
  // Zero-initialized network with the given layer sizes, e.g. {16, 64, 64, 3}.
  explicit PatchMLP(std::vector<int> sizes, double output_scale = 1.0);

  // Weights uniform in [-0.5, 0.5] / sqrt(fan_in), zero biases.
  static PatchMLP Random(std::vector<int> sizes, std::uint64_t seed,
                         double output_scale = 1.0);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  double output_scale() const { return output_scale_; }

  Eigen::Map<const Eigen::MatrixXd> Weight(size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> Weight(size_t layer);
  Eigen::Map<const Eigen::VectorXd> Bias(size_t layer) const;
  Eigen::Map<Eigen::VectorXd> Bias(size_t layer);
  size_t num_layers() const { return sizes_.size() - 1; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  // Throws DimensionMismatch when the descriptor length differs from the
  // input layer.
  Vec3 Forward(const Descriptor& descriptor) const;

  // Column per sample: (input_dim x N) -> (3 x N). Keeps the activations of
  // the last call for BackwardBatch.
  Eigen::Matrix3Xd ForwardBatch(const Eigen::MatrixXd& inputs,
                                std::vector<Eigen::MatrixXd>* tape) const;

  // Adds d(sum_n upstream_n . output_n)/d params into `grad`.
  void BackwardBatch(const std::vector<Eigen::MatrixXd>& tape,
                     const Eigen::Matrix3Xd& upstream,
                     Eigen::VectorXd& grad) const;

  // Gradient of upstream . Forward(descriptor) with respect to params().
  Eigen::VectorXd Backward(const Descriptor& descriptor,
                           const Vec3& upstream) const;

 private:
  size_t WeightOffset(size_t layer) const { return offsets_[layer]; }
  size_t BiasOffset(size_t layer) const {
    return offsets_[layer] + static_cast<size_t>(sizes_[layer + 1]) * sizes_[layer];
  }

  std::vector<int> sizes_;
  std::vector<size_t> offsets_;
  double output_scale_ = 1.0;
  Eigen::VectorXd params_;
};

// One free 3-vector per (frame, observation) pair.
class FreeTable {
 public:
  FreeTable() = default;
  // Entries uniform in the scene bounding box expanded 2x about its center.
  static FreeTable Random(const Dataset& dataset, std::uint64_t seed);

  bool HasFrame(ImageId frame) const { return offsets_.count(frame) > 0; }
  size_t FrameSize(ImageId frame) const;
  Vec3 Get(ImageId frame, size_t obs) const;
  void Set(ImageId frame, size_t obs, const Vec3& value);
  // Flat index of the first coordinate for (frame, obs).
  size_t Index(ImageId frame, size_t obs) const;

  void AddFrame(ImageId frame, size_t count);

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  const std::map<ImageId, std::pair<size_t, size_t>>& frames() const {
    return offsets_;
  }

 private:
  // frame -> (offset into params, observation count)
  std::map<ImageId, std::pair<size_t, size_t>> offsets_;
  Eigen::VectorXd params_;
};

// Oracle model returning the ground-truth coordinate of each observation.
struct GtLookupModel {};

// Degenerate model predicting one fixed point for everything.
struct ConstantModel {
  Vec3 value = Vec3::Zero();
};

using SceneCoordModel =
    std::variant<PatchMLP, FreeTable, GtLookupModel, ConstantModel>;

enum class ModelKind { kPatchMlp, kFreeTable, kGtLookup, kConstant };

const char* ModelKindName(ModelKind kind);
ModelKind ParseModelKind(const std::string& name);
ModelKind KindOf(const SceneCoordModel& model);

// Predictions for every observation of a frame, in observation order.
// FreeTable models throw ConfigError for frames they do not cover.
PredictionGrid Predict(const SceneCoordModel& model, const DatasetFrame& frame);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
};

// One Adam update of `params` in place. Moments are lazily sized on the
// first call. Non-finite gradients are applied as they are.
void AdamStep(AdamState& state, Eigen::VectorXd& params,
              const Eigen::VectorXd& grads);

struct LearningSchedule {
  double base_lr = 3e-3;
  // Halve the rate at these fractions of the run.
  std::vector<double> halve_at = {0.6, 0.8, 0.9};

  double At(int iteration, int total_iterations) const;
};

enum class TrainMode {
  kReproj,
  kAngle,
  kAngleMulti,
  kAnglePhoto,
  kConstDepthInitThenReproj,
};

const char* TrainModeName(TrainMode mode);
TrainMode ParseTrainMode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kAngle;
  ModelKind model = ModelKind::kPatchMlp;
  int iterations = 6000;
  LearningSchedule schedule;
  LossConfig loss;
  // Camera-frame depth of the dummy targets in the initialization stage.
  double const_depth = 5.0;
  // Share of iterations spent fitting the dummy targets.
  double init_fraction = 0.3;
  std::uint64_t seed = 1;
  bool jitter = false;
  // Maximum pixel-coordinate jitter when enabled.
  double jitter_px = 1.0;
  int checkpoint_every = 500;
  std::vector<int> hidden = {64, 64};
  double output_scale = 1.0;
  // Photometric neighbours are drawn within this many sequence steps.
  int photo_max_offset = 10;
  bool record_wall_time = false;

  void Validate() const;
};

struct TrainLogRecord {
  int iteration = 0;
  double loss = 0.0;
  double behind_frac = 0.0;
  std::int64_t nonfinite_events = 0;
  double median_err = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRecord> records;

  // iter,loss,behind_frac,nonfinite_events,median_err,seconds
  std::string ToCsv() const;
};

struct TrainResult {
  SceneCoordModel model;
  TrainLog log;
  // Parameters or the final loss became non-finite.
  bool diverged = false;
};

// For each observation, the world point at camera depth d on its viewing
// ray.
std::vector<Vec3> ConstantDepthTargets(const CameraIntrinsics& intr,
                                       const PoseSE3& pose,
                                       std::span<const Observation> observations,
                                       double depth);

SceneCoordModel InitModel(const Dataset& dataset, const TrainConfig& cfg);

// Batch-size-one training over the training frames. Deterministic for a
// given dataset and config. Throws ConfigError when the mode needs data the
// dataset lacks.
TrainResult Train(const Dataset& dataset, const TrainConfig& cfg);
TrainResult Train(const Dataset& dataset, const TrainConfig& cfg,
                  SceneCoordModel initial);

struct CoordErrorStats {
  double median = 0.0;
  double mean = 0.0;
  size_t count = 0;
};

// 3D error against the ground-truth coordinates over all observations of
// the frames in `split`.
CoordErrorStats EvaluateCoords(const SceneCoordModel& model,
                               const Dataset& dataset,
                               Split split = Split::kTrain);

// Midpoint rule for even counts; 0 for an empty list.
double Median(std::vector<double> values);

// Versioned JSON checkpoint with the training config embedded.
void SaveCheckpoint(const std::filesystem::path& path,
                    const SceneCoordModel& model, const TrainConfig& cfg);
SceneCoordModel LoadCheckpoint(const std::filesystem::path& path,
                               TrainConfig* cfg = nullptr);

}  // namespace anglereloc
