#include "anglereloc/dataset.h"

#include <algorithm>
#include <random>
#include <string>

#include "anglereloc/error.h"

namespace anglereloc {

const char* SplitName(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kConfigError, "unknown split '" + name + "'");
}

std::vector<size_t> Dataset::FrameIndices(Split split) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].split == split) {
      out.push_back(i);
    }
  }
  return out;
}

const DatasetFrame& Dataset::FrameById(ImageId id) const {
  for (const DatasetFrame& f : frames) {
    if (f.id == id) {
      return f;
    }
  }
  throw Error(ErrorCode::kMissingPose, "no frame with id " + std::to_string(id));
}

std::map<ImageId, PoseSE3> Dataset::Poses(Split split) const {
  std::map<ImageId, PoseSE3> out;
  for (const DatasetFrame& f : frames) {
    if (f.split == split) {
      out.emplace(f.id, f.pose);
    }
  }
  return out;
}

CoVisibilityGraph Dataset::TrainCovis() const {
  std::vector<ImageObservations> views;
  for (const DatasetFrame& f : frames) {
    if (f.split == Split::kTrain) {
      views.push_back({f.id, f.observations});
    }
  }
  return BuildCovis(views, &covis_points);
}

bool Dataset::HasImages() const {
  return !frames.empty() &&
         std::all_of(frames.begin(), frames.end(),
                     [](const DatasetFrame& f) { return f.image.has_value(); });
}

Dataset MakeDataset(const DatasetConfig& config) {
  if (config.n_train <= 0 || config.n_test < 0) {
    throw Error(ErrorCode::kConfigError, "need at least one training frame");
  }
  Dataset ds;
  ds.config = config;
  const CameraIntrinsics obs_intr{config.focal, 0.5 * config.width - 0.5,
                                  0.5 * config.height - 0.5};
  ds.image_intr =
      obs_intr.Scaled(static_cast<double>(config.image_width) / config.width);
  ds.image_width = config.image_width;
  ds.image_height = config.image_height;
  if (config.dense) {
    ds.intr = ds.image_intr;
    ds.width = config.image_width;
    ds.height = config.image_height;
    ds.grid_aligned = true;
  } else {
    ds.intr = obs_intr;
    ds.width = config.width;
    ds.height = config.height;
  }

  SceneOptions scene_opts;
  scene_opts.descriptor_dim = config.descriptor_dim;
  ds.scene = GenScene(config.seed, config.point_count, config.plane_count,
                      config.bounds, scene_opts);

  const int n = config.n_train + config.n_test;
  TrajectoryOptions traj_opts;
  traj_opts.width = config.width;
  traj_opts.height = config.height;
  traj_opts.min_visible = config.min_visible;
  const Trajectory traj =
      GenTrajectory(ds.scene, config.seed + 1, n, obs_intr, traj_opts);

  std::vector<Split> splits(n, Split::kTrain);
  int tests = 0;
  for (int i = 3; i < n && tests < config.n_test; i += 4, ++tests) {
    splits[i] = Split::kTest;
  }
  for (int i = n - 1; i >= 0 && tests < config.n_test; --i) {
    if (splits[i] == Split::kTrain) {
      splits[i] = Split::kTest;
      ++tests;
    }
  }

  ObserveOptions obs_opts;
  obs_opts.width = ds.width;
  obs_opts.height = ds.height;
  obs_opts.pixel_noise_sigma = config.pixel_noise_sigma;
  obs_opts.descriptor_noise_sigma = config.descriptor_noise_sigma;
  for (int i = 0; i < n; ++i) {
    DatasetFrame frame;
    frame.id = traj.frames[i].id;
    frame.sequence_index = i;
    frame.split = splits[i];
    frame.pose = traj.frames[i].pose;
    if (config.dense) {
      frame.observations =
          ObserveDense(ds.scene, frame.pose, frame.id, ds.intr, ds.width,
                       ds.height, config.descriptor_dim);
    } else {
      frame.observations = Observe(ds.scene, frame.pose, ds.intr, obs_opts,
                                   config.seed * 1000003ULL + 7919ULL * i + 2);
    }
    if (config.render_images || config.dense) {
      Image img = RenderImage(ds.scene, frame.pose, ds.image_intr,
                              ds.image_width, ds.image_height);
      QuantizeTo16Bit(img);
      frame.image = std::move(img);
    }
    ds.frames.push_back(std::move(frame));
  }

  if (!config.dense) {
    std::mt19937_64 rng(config.seed + 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (PointId id : ds.scene.ids) {
      if (config.covis_fraction >= 1.0 || unit(rng) < config.covis_fraction) {
        ds.covis_points.push_back(id);
      }
    }
  }
  return ds;
}

}  // namespace anglereloc
