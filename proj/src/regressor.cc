#include "anglereloc/regressor.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "anglereloc/dataset_io.h"
#include "anglereloc/error.h"
#include "anglereloc/json_io.h"
#include "anglereloc/photometric.h"

namespace anglereloc {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "anglereloc-checkpoint";

bool AllFinite(const Eigen::VectorXd& v) { return v.allFinite(); }

Eigen::MatrixXd StackDescriptors(std::span<const Observation> observations,
                                 int dim) {
  Eigen::MatrixXd inputs(dim, static_cast<Eigen::Index>(observations.size()));
  for (size_t i = 0; i < observations.size(); ++i) {
    if (observations[i].descriptor.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "descriptor length " +
                      std::to_string(observations[i].descriptor.size()) +
                      " does not match input layer " + std::to_string(dim));
    }
    inputs.col(static_cast<Eigen::Index>(i)) = observations[i].descriptor;
  }
  return inputs;
}

}  // namespace

PatchMLP::PatchMLP(std::vector<int> sizes, double output_scale)
    : sizes_(std::move(sizes)), output_scale_(output_scale) {
  if (sizes_.size() < 2 || sizes_.back() != 3) {
    throw Error(ErrorCode::kConfigError,
                "network needs at least an input layer and a 3-vector output");
  }
  size_t offset = 0;
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) {
      throw Error(ErrorCode::kConfigError, "layer sizes must be positive");
    }
    offsets_.push_back(offset);
    offset += static_cast<size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

PatchMLP PatchMLP::Random(std::vector<int> sizes, std::uint64_t seed,
                          double output_scale) {
  PatchMLP net(std::move(sizes), output_scale);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (size_t l = 0; l < net.num_layers(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    auto w = net.Weight(l);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        w(r, c) = unit(rng) * scale;
      }
    }
  }
  return net;
}

Eigen::Map<const Eigen::MatrixXd> PatchMLP::Weight(size_t layer) const {
  return {params_.data() + WeightOffset(layer), sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<Eigen::MatrixXd> PatchMLP::Weight(size_t layer) {
  return {params_.data() + WeightOffset(layer), sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Eigen::VectorXd> PatchMLP::Bias(size_t layer) const {
  return {params_.data() + BiasOffset(layer), sizes_[layer + 1]};
}

Eigen::Map<Eigen::VectorXd> PatchMLP::Bias(size_t layer) {
  return {params_.data() + BiasOffset(layer), sizes_[layer + 1]};
}

Vec3 PatchMLP::Forward(const Descriptor& descriptor) const {
  if (descriptor.size() != input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "descriptor length " + std::to_string(descriptor.size()) +
                    " does not match input layer " + std::to_string(input_dim()));
  }
  return ForwardBatch(descriptor, nullptr).col(0);
}

Eigen::Matrix3Xd PatchMLP::ForwardBatch(const Eigen::MatrixXd& inputs,
                                        std::vector<Eigen::MatrixXd>* tape) const {
  if (inputs.rows() != input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input rows " + std::to_string(inputs.rows()) +
                    " do not match input layer " + std::to_string(input_dim()));
  }
  if (tape) {
    tape->clear();
    tape->push_back(inputs);
  }
  Eigen::MatrixXd h = inputs;
  for (size_t l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = Weight(l) * h;
    z.colwise() += Bias(l);
    if (l + 1 < num_layers()) {
      h = z.array().tanh().matrix();
      if (tape) {
        tape->push_back(h);
      }
    } else {
      h = std::move(z);
    }
  }
  return output_scale_ * h;
}

void PatchMLP::BackwardBatch(const std::vector<Eigen::MatrixXd>& tape,
                             const Eigen::Matrix3Xd& upstream,
                             Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) {
    grad = Eigen::VectorXd::Zero(params_.size());
  }
  Eigen::MatrixXd delta = output_scale_ * upstream;
  for (size_t l = num_layers(); l-- > 0;) {
    const Eigen::MatrixXd& input = tape[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + WeightOffset(l),
                                   sizes_[l + 1], sizes_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + BiasOffset(l), sizes_[l + 1]);
    gw.noalias() += delta * input.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = Weight(l).transpose() * delta;
      delta = back.array() * (1.0 - input.array().square());
    }
  }
}

Eigen::VectorXd PatchMLP::Backward(const Descriptor& descriptor,
                                   const Vec3& upstream) const {
  std::vector<Eigen::MatrixXd> tape;
  ForwardBatch(descriptor, &tape);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  BackwardBatch(tape, upstream, grad);
  return grad;
}

FreeTable FreeTable::Random(const Dataset& dataset, std::uint64_t seed) {
  FreeTable table;
  const Vec3 center = dataset.scene.bounds.Center();
  const Vec3 half = dataset.scene.bounds.max - dataset.scene.bounds.min;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (size_t idx : dataset.FrameIndices(Split::kTrain)) {
    const DatasetFrame& f = dataset.frames[idx];
    table.AddFrame(f.id, f.observations.size());
    for (size_t k = 0; k < f.observations.size(); ++k) {
      Vec3 v;
      for (int a = 0; a < 3; ++a) {
        v[a] = center[a] + half[a] * unit(rng);
      }
      table.Set(f.id, k, v);
    }
  }
  return table;
}

size_t FreeTable::FrameSize(ImageId frame) const {
  const auto it = offsets_.find(frame);
  return it == offsets_.end() ? 0 : it->second.second;
}

size_t FreeTable::Index(ImageId frame, size_t obs) const {
  const auto it = offsets_.find(frame);
  if (it == offsets_.end() || obs >= it->second.second) {
    throw Error(ErrorCode::kIndexMismatch,
                "free table has no entry for frame " + std::to_string(frame) +
                    " observation " + std::to_string(obs));
  }
  return it->second.first + 3 * obs;
}

Vec3 FreeTable::Get(ImageId frame, size_t obs) const {
  return params_.segment<3>(static_cast<Eigen::Index>(Index(frame, obs)));
}

void FreeTable::Set(ImageId frame, size_t obs, const Vec3& value) {
  params_.segment<3>(static_cast<Eigen::Index>(Index(frame, obs))) = value;
}

void FreeTable::AddFrame(ImageId frame, size_t count) {
  if (HasFrame(frame)) {
    throw Error(ErrorCode::kConfigError,
                "free table already holds frame " + std::to_string(frame));
  }
  const size_t offset = static_cast<size_t>(params_.size());
  offsets_[frame] = {offset, count};
  params_.conservativeResize(static_cast<Eigen::Index>(offset + 3 * count));
  params_.tail(static_cast<Eigen::Index>(3 * count)).setZero();
}

const char* ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kPatchMlp: return "PatchMLP";
    case ModelKind::kFreeTable: return "FreeTable";
    case ModelKind::kGtLookup: return "GtLookup";
    case ModelKind::kConstant: return "Constant";
  }
  return "Unknown";
}

ModelKind ParseModelKind(const std::string& name) {
  for (ModelKind k : {ModelKind::kPatchMlp, ModelKind::kFreeTable,
                      ModelKind::kGtLookup, ModelKind::kConstant}) {
    if (name == ModelKindName(k)) {
      return k;
    }
  }
  throw Error(ErrorCode::kConfigError, "unknown model kind '" + name + "'");
}

ModelKind KindOf(const SceneCoordModel& model) {
  return static_cast<ModelKind>(model.index());
}

PredictionGrid Predict(const SceneCoordModel& model, const DatasetFrame& frame) {
  PredictionGrid grid;
  const size_t n = frame.observations.size();
  grid.ids.reserve(n);
  for (const Observation& o : frame.observations) {
    grid.ids.push_back(o.point);
  }
  grid.coords.resize(n);
  if (const auto* mlp = std::get_if<PatchMLP>(&model)) {
    if (n == 0) {
      return grid;
    }
    const Eigen::Matrix3Xd out = mlp->ForwardBatch(
        StackDescriptors(frame.observations, mlp->input_dim()), nullptr);
    for (size_t i = 0; i < n; ++i) {
      grid.coords[i] = out.col(static_cast<Eigen::Index>(i));
    }
  } else if (const auto* table = std::get_if<FreeTable>(&model)) {
    if (!table->HasFrame(frame.id) || table->FrameSize(frame.id) != n) {
      throw Error(ErrorCode::kConfigError,
                  "free table does not cover frame " + std::to_string(frame.id));
    }
    for (size_t i = 0; i < n; ++i) {
      grid.coords[i] = table->Get(frame.id, i);
    }
  } else if (std::holds_alternative<GtLookupModel>(model)) {
    for (size_t i = 0; i < n; ++i) {
      grid.coords[i] = frame.observations[i].gt_world;
    }
  } else {
    const Vec3 value = std::get<ConstantModel>(model).value;
    std::fill(grid.coords.begin(), grid.coords.end(), value);
  }
  return grid;
}

void AdamStep(AdamState& state, Eigen::VectorXd& params,
              const Eigen::VectorXd& grads) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "gradient and parameter sizes differ");
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 / (1.0 - std::pow(state.beta1, t));
  const double c2 = 1.0 / (1.0 - std::pow(state.beta2, t));
  params.array() -= state.learning_rate * (state.m.array() * c1) /
                    ((state.v.array() * c2).sqrt() + state.epsilon);
}

double LearningSchedule::At(int iteration, int total_iterations) const {
  double lr = base_lr;
  for (double f : halve_at) {
    if (iteration >= f * total_iterations) {
      lr *= 0.5;
    }
  }
  return lr;
}

const char* TrainModeName(TrainMode mode) {
  switch (mode) {
    case TrainMode::kReproj: return "Reproj";
    case TrainMode::kAngle: return "Angle";
    case TrainMode::kAngleMulti: return "AngleMulti";
    case TrainMode::kAnglePhoto: return "AnglePhoto";
    case TrainMode::kConstDepthInitThenReproj: return "ConstDepthInitThenReproj";
  }
  return "Unknown";
}

TrainMode ParseTrainMode(const std::string& name) {
  for (TrainMode m : {TrainMode::kReproj, TrainMode::kAngle, TrainMode::kAngleMulti,
                      TrainMode::kAnglePhoto, TrainMode::kConstDepthInitThenReproj}) {
    if (name == TrainModeName(m)) {
      return m;
    }
  }
  throw Error(ErrorCode::kConfigError, "unknown loss mode '" + name + "'");
}

void TrainConfig::Validate() const {
  if (iterations < 0) {
    throw Error(ErrorCode::kConfigError, "iterations must be non-negative");
  }
  if (!(schedule.base_lr > 0.0)) {
    throw Error(ErrorCode::kConfigError, "learning rate must be positive");
  }
  if (mode == TrainMode::kConstDepthInitThenReproj) {
    if (!(const_depth > 0.0)) {
      throw Error(ErrorCode::kConfigError, "constant depth must be positive");
    }
    if (!(init_fraction >= 0.0 && init_fraction <= 1.0)) {
      throw Error(ErrorCode::kConfigError, "init fraction must lie in [0, 1]");
    }
  }
  if (checkpoint_every <= 0) {
    throw Error(ErrorCode::kConfigError, "checkpoint interval must be positive");
  }
  if (jitter && !(jitter_px >= 0.0)) {
    throw Error(ErrorCode::kConfigError, "jitter must be non-negative");
  }
  if (photo_max_offset < 1) {
    throw Error(ErrorCode::kConfigError, "photometric offset must be at least 1");
  }
  loss.Validate();
}

std::string TrainLog::ToCsv() const {
  std::string out = "iter,loss,behind_frac,nonfinite_events,median_err,seconds\n";
  for (const TrainLogRecord& r : records) {
    out += std::to_string(r.iteration) + ',' + FormatDouble(r.loss) + ',' +
           FormatDouble(r.behind_frac) + ',' + std::to_string(r.nonfinite_events) +
           ',' + FormatDouble(r.median_err) + ',' + FormatDouble(r.seconds) + '\n';
  }
  return out;
}

std::vector<Vec3> ConstantDepthTargets(const CameraIntrinsics& intr,
                                       const PoseSE3& pose,
                                       std::span<const Observation> observations,
                                       double depth) {
  std::vector<Vec3> out;
  out.reserve(observations.size());
  for (const Observation& o : observations) {
    const Vec3 ray = RayVector(intr, o.pixel);
    out.push_back(pose.Apply(ray * (depth / ray.z())));
  }
  return out;
}

SceneCoordModel InitModel(const Dataset& dataset, const TrainConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::kPatchMlp: {
      std::vector<int> sizes = {dataset.config.descriptor_dim};
      sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
      sizes.push_back(3);
      return PatchMLP::Random(sizes, cfg.seed, cfg.output_scale);
    }
    case ModelKind::kFreeTable:
      return FreeTable::Random(dataset, cfg.seed);
    case ModelKind::kGtLookup:
      return GtLookupModel{};
    case ModelKind::kConstant:
      return ConstantModel{};
  }
  throw Error(ErrorCode::kConfigError, "unknown model kind");
}

TrainResult Train(const Dataset& dataset, const TrainConfig& cfg) {
  return Train(dataset, cfg, InitModel(dataset, cfg));
}

namespace {

struct Trainer {
  const Dataset& ds;
  const TrainConfig& cfg;
  SceneCoordModel& model;

  std::vector<size_t> train;
  std::map<ImageId, PoseSE3> poses;
  CoVisibilityGraph covis;
  std::vector<Eigen::MatrixXd> inputs;
  int init_iterations = 0;

  // Per-frame loss of the objective active at `iteration`.
  LossReport FrameLoss(size_t t, int iteration,
                       std::span<const Observation> observations,
                       const PredictionGrid& pred, std::mt19937_64* photo_rng,
                       bool photometric) const {
    const DatasetFrame& f = ds.frames[train[t]];
    switch (cfg.mode) {
      case TrainMode::kReproj:
        return ImageLoss(ReprojectionKind::kReproj, ds.intr, f.pose, pred,
                         observations, cfg.loss);
      case TrainMode::kConstDepthInitThenReproj:
        if (iteration < init_iterations) {
          return InitLoss(f, observations, pred);
        }
        return ImageLoss(ReprojectionKind::kReproj, ds.intr, f.pose, pred,
                         observations, cfg.loss);
      case TrainMode::kAngle:
        return ImageLoss(ReprojectionKind::kAngle, ds.intr, f.pose, pred,
                         observations, cfg.loss);
      case TrainMode::kAngleMulti: {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                          static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(iteration),
                          static_cast<std::uint32_t>(f.id)};
        Rng rng(seq);
        return MultiViewImageLoss(ds.intr, poses, f.id, pred, observations,
                                  covis, cfg.loss, rng);
      }
      case TrainMode::kAnglePhoto: {
        LossReport angle = ImageLoss(ReprojectionKind::kAngle, ds.intr, f.pose,
                                     pred, observations, cfg.loss);
        if (!photometric) {
          return angle;
        }
        const std::optional<size_t> j = PickNeighbour(t, *photo_rng);
        if (!j) {
          return angle;
        }
        const DatasetFrame& g = ds.frames[*j];
        const LossReport photo =
            PhotometricImageLoss(ds.image_intr, g.pose, pred, f.observations,
                                 *f.image, *g.image, cfg.loss);
        return CombinedLoss(angle, photo, cfg.loss);
      }
    }
    throw Error(ErrorCode::kConfigError, "unknown loss mode");
  }

  LossReport InitLoss(const DatasetFrame& f,
                      std::span<const Observation> observations,
                      const PredictionGrid& pred) const {
    const std::vector<Vec3> targets =
        ConstantDepthTargets(ds.intr, f.pose, observations, cfg.const_depth);
    LossReport report;
    report.terms.resize(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
      const Vec3 diff = pred.coords[i] - targets[i];
      report.terms[i].value = diff.squaredNorm();
      report.terms[i].grad = 2.0 * diff;
      report.terms[i].status =
          Project(ds.intr, WorldToCamera(f.pose, pred.coords[i])).status;
    }
    FinalizeReport(report);
    return report;
  }

  // A training frame within photo_max_offset sequence steps, uniformly.
  std::optional<size_t> PickNeighbour(size_t t, std::mt19937_64& rng) const {
    const DatasetFrame& f = ds.frames[train[t]];
    std::vector<size_t> candidates;
    for (size_t idx : train) {
      const int offset = ds.frames[idx].sequence_index - f.sequence_index;
      if (offset != 0 && std::abs(offset) <= cfg.photo_max_offset) {
        candidates.push_back(idx);
      }
    }
    if (candidates.empty()) {
      return std::nullopt;
    }
    std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
    return candidates[pick(rng)];
  }

  PredictionGrid PredictTrain(size_t t, std::vector<Eigen::MatrixXd>* tape) const {
    const DatasetFrame& f = ds.frames[train[t]];
    if (const auto* mlp = std::get_if<PatchMLP>(&model)) {
      PredictionGrid grid;
      const Eigen::Matrix3Xd out = mlp->ForwardBatch(inputs[t], tape);
      grid.ids.reserve(f.observations.size());
      grid.coords.reserve(f.observations.size());
      for (size_t i = 0; i < f.observations.size(); ++i) {
        grid.ids.push_back(f.observations[i].point);
        grid.coords.push_back(out.col(static_cast<Eigen::Index>(i)));
      }
      return grid;
    }
    return Predict(model, f);
  }

  TrainLogRecord Checkpoint(int iteration, std::int64_t nonfinite) const {
    TrainLogRecord rec;
    rec.iteration = iteration;
    rec.nonfinite_events = nonfinite;
    double loss = 0.0;
    size_t points = 0;
    size_t behind = 0;
    std::vector<double> errors;
    for (size_t t = 0; t < train.size(); ++t) {
      const DatasetFrame& f = ds.frames[train[t]];
      const PredictionGrid pred = PredictTrain(t, nullptr);
      const LossReport report =
          FrameLoss(t, iteration, f.observations, pred, nullptr, false);
      for (const PointLossTerm& term : report.terms) {
        loss += term.value;
      }
      for (size_t i = 0; i < pred.size(); ++i) {
        if (WorldToCamera(f.pose, pred.coords[i]).z() < 0.0) {
          ++behind;
        }
        errors.push_back((pred.coords[i] - f.observations[i].gt_world).norm());
      }
      points += pred.size();
    }
    rec.loss = points > 0 ? loss / static_cast<double>(points) : 0.0;
    rec.behind_frac =
        points > 0 ? static_cast<double>(behind) / static_cast<double>(points) : 0.0;
    rec.median_err = Median(std::move(errors));
    return rec;
  }
};

bool HasParams(const SceneCoordModel& model) {
  return std::holds_alternative<PatchMLP>(model) ||
         std::holds_alternative<FreeTable>(model);
}

Eigen::VectorXd& Params(SceneCoordModel& model) {
  if (auto* mlp = std::get_if<PatchMLP>(&model)) {
    return mlp->params();
  }
  return std::get<FreeTable>(model).params();
}

}  // namespace

TrainResult Train(const Dataset& dataset, const TrainConfig& cfg,
                  SceneCoordModel initial) {
  cfg.Validate();
  TrainResult result;
  result.model = std::move(initial);

  Trainer tr{dataset, cfg, result.model, {}, {}, {}, {}, 0};
  tr.train = dataset.FrameIndices(Split::kTrain);
  if (tr.train.empty()) {
    throw Error(ErrorCode::kConfigError, "dataset has no training frames");
  }
  tr.poses = dataset.Poses(Split::kTrain);
  if (cfg.mode == TrainMode::kAngleMulti) {
    tr.covis = dataset.TrainCovis();
  }
  if (cfg.mode == TrainMode::kAnglePhoto &&
      !(dataset.HasImages() && dataset.grid_aligned)) {
    throw Error(ErrorCode::kConfigError,
                "AnglePhoto needs a dense dataset with rendered images");
  }
  if (const auto* table = std::get_if<FreeTable>(&result.model)) {
    for (size_t idx : tr.train) {
      const DatasetFrame& f = dataset.frames[idx];
      if (table->FrameSize(f.id) != f.observations.size()) {
        throw Error(ErrorCode::kConfigError,
                    "free table does not cover frame " + std::to_string(f.id));
      }
    }
  }
  if (const auto* mlp = std::get_if<PatchMLP>(&result.model)) {
    for (size_t idx : tr.train) {
      tr.inputs.push_back(
          StackDescriptors(dataset.frames[idx].observations, mlp->input_dim()));
    }
  }
  if (cfg.mode == TrainMode::kConstDepthInitThenReproj) {
    tr.init_iterations =
        static_cast<int>(std::floor(cfg.init_fraction * cfg.iterations));
  }

  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    if (!cfg.record_wall_time) {
      return 0.0;
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };

  std::int64_t nonfinite = 0;
  result.log.records.push_back(tr.Checkpoint(0, nonfinite));
  result.log.records.back().seconds = elapsed();

  if (!HasParams(result.model) || cfg.iterations == 0) {
    if (cfg.iterations > 0) {
      result.log.records.push_back(tr.Checkpoint(cfg.iterations, nonfinite));
      result.log.records.back().seconds = elapsed();
    }
    return result;
  }

  AdamState adam;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick_frame(0, tr.train.size() - 1);
  std::uniform_real_distribution<double> jitter(-cfg.jitter_px, cfg.jitter_px);
  std::vector<Eigen::MatrixXd> tape;
  Eigen::VectorXd grad;
  std::vector<Observation> jittered;

  for (int it = 0; it < cfg.iterations; ++it) {
    if (it == tr.init_iterations && it > 0) {
      adam = AdamState{};
    }
    adam.learning_rate = cfg.schedule.At(it, cfg.iterations);

    const size_t t = pick_frame(rng);
    const DatasetFrame& f = dataset.frames[tr.train[t]];
    std::span<const Observation> observations = f.observations;
    if (cfg.jitter) {
      jittered = f.observations;
      for (Observation& o : jittered) {
        o.pixel += Vec2(jitter(rng), jitter(rng));
      }
      observations = jittered;
    }

    const PredictionGrid pred = tr.PredictTrain(t, &tape);
    const LossReport report =
        tr.FrameLoss(t, it, observations, pred, &rng, true);

    Eigen::VectorXd& params = Params(result.model);
    grad = Eigen::VectorXd::Zero(params.size());
    if (auto* mlp = std::get_if<PatchMLP>(&result.model)) {
      Eigen::Matrix3Xd upstream(3, static_cast<Eigen::Index>(pred.size()));
      for (size_t i = 0; i < pred.size(); ++i) {
        upstream.col(static_cast<Eigen::Index>(i)) = report.terms[i].grad;
      }
      mlp->BackwardBatch(tape, upstream, grad);
    } else {
      const FreeTable& table = std::get<FreeTable>(result.model);
      for (size_t i = 0; i < pred.size(); ++i) {
        grad.segment<3>(static_cast<Eigen::Index>(table.Index(f.id, i))) =
            report.terms[i].grad;
      }
    }

    if (report.nonfinite || !AllFinite(grad)) {
      ++nonfinite;
    }
    AdamStep(adam, params, grad);

    const int done = it + 1;
    const bool broken = !AllFinite(params);
    if (broken || done % cfg.checkpoint_every == 0 || done == cfg.iterations) {
      result.log.records.push_back(tr.Checkpoint(done, nonfinite));
      result.log.records.back().seconds = elapsed();
    }
    if (broken) {
      result.diverged = true;
      break;
    }
  }
  if (!std::isfinite(result.log.records.back().loss)) {
    result.diverged = true;
  }
  return result;
}

double Median(std::vector<double> values) {
  if (values.empty()) {
    return 0.0;
  }
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

CoordErrorStats EvaluateCoords(const SceneCoordModel& model,
                               const Dataset& dataset, Split split) {
  std::vector<double> errors;
  double sum = 0.0;
  for (size_t idx : dataset.FrameIndices(split)) {
    const DatasetFrame& f = dataset.frames[idx];
    const PredictionGrid pred = Predict(model, f);
    for (size_t i = 0; i < pred.size(); ++i) {
      const double e = (pred.coords[i] - f.observations[i].gt_world).norm();
      errors.push_back(e);
      sum += e;
    }
  }
  CoordErrorStats stats;
  stats.count = errors.size();
  stats.mean = errors.empty() ? 0.0 : sum / static_cast<double>(errors.size());
  stats.median = Median(std::move(errors));
  return stats;
}

void SaveCheckpoint(const std::filesystem::path& path,
                    const SceneCoordModel& model, const TrainConfig& cfg) {
  json jm = {{"kind", ModelKindName(KindOf(model))}};
  if (const auto* mlp = std::get_if<PatchMLP>(&model)) {
    jm["sizes"] = mlp->sizes();
    jm["output_scale"] = mlp->output_scale();
    jm["params"] = std::vector<double>(mlp->params().begin(), mlp->params().end());
  } else if (const auto* table = std::get_if<FreeTable>(&model)) {
    json frames = json::array();
    for (const auto& [id, entry] : table->frames()) {
      frames.push_back({{"id", id}, {"count", entry.second}});
    }
    jm["frames"] = frames;
    jm["params"] =
        std::vector<double>(table->params().begin(), table->params().end());
  } else if (const auto* c = std::get_if<ConstantModel>(&model)) {
    jm["value"] = Vec3ToJson(c->value);
  }
  const json j = {{"format", kCheckpointFormat},
                  {"version", kCheckpointVersion},
                  {"train_config", cfg},
                  {"model", jm}};
  WriteTextFile(path, j.dump() + "\n");
}

SceneCoordModel LoadCheckpoint(const std::filesystem::path& path,
                               TrainConfig* cfg) {
  json j;
  try {
    j = json::parse(ReadTextFile(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  try {
    if (j.value("format", std::string()) != kCheckpointFormat) {
      throw Error(ErrorCode::kParseError, path.string() + ": not a checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ": unsupported checkpoint version");
    }
    if (cfg) {
      *cfg = j.at("train_config").get<TrainConfig>();
    }
    const json& jm = j.at("model");
    const ModelKind kind = ParseModelKind(jm.at("kind").get<std::string>());
    switch (kind) {
      case ModelKind::kPatchMlp: {
        PatchMLP net(jm.at("sizes").get<std::vector<int>>(),
                     jm.at("output_scale").get<double>());
        const auto params = jm.at("params").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(params.size()) != net.params().size()) {
          throw Error(ErrorCode::kParseError,
                      path.string() + ": parameter count does not match sizes");
        }
        net.params() = Eigen::Map<const Eigen::VectorXd>(
            params.data(), static_cast<Eigen::Index>(params.size()));
        return net;
      }
      case ModelKind::kFreeTable: {
        FreeTable table;
        for (const json& jf : jm.at("frames")) {
          table.AddFrame(jf.at("id").get<ImageId>(), jf.at("count").get<size_t>());
        }
        const auto params = jm.at("params").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(params.size()) != table.params().size()) {
          throw Error(ErrorCode::kParseError,
                      path.string() + ": parameter count does not match frames");
        }
        table.params() = Eigen::Map<const Eigen::VectorXd>(
            params.data(), static_cast<Eigen::Index>(params.size()));
        return table;
      }
      case ModelKind::kGtLookup:
        return GtLookupModel{};
      case ModelKind::kConstant:
        return ConstantModel{JsonToVec3(jm.at("value"))};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  throw Error(ErrorCode::kParseError, path.string() + ": unknown model kind");
}

}  // namespace anglereloc
