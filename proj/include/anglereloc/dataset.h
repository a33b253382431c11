#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "anglereloc/geometry.h"
#include "anglereloc/image.h"
#include "anglereloc/scene_types.h"
#include "anglereloc/scenegen.h"

namespace anglereloc {

enum class Split { kTrain, kTest };

const char* SplitName(Split split);
Split ParseSplit(const std::string& name);

struct DatasetFrame {
  ImageId id = 0;
  // Position within the capture sequence.
  int sequence_index = 0;
  Split split = Split::kTrain;
  PoseSE3 pose;
  std::vector<Observation> observations;
  std::optional<Image> image;
};

struct DatasetConfig {
  std::uint64_t seed = 1;
  int point_count = 500;
  int plane_count = 6;
  BoundingBox bounds;
  int n_train = 30;
  int n_test = 10;
  // Observation camera.
  int width = 640;
  int height = 480;
  double focal = 525.0;
  double pixel_noise_sigma = 0.0;
  double descriptor_noise_sigma = 0.01;
  int descriptor_dim = 16;
  // Share of scene points registered as multi-view correspondences.
  double covis_fraction = 1.0;
  bool render_images = false;
  int image_width = 80;
  int image_height = 60;
  // Dense datasets observe every rendered pixel that hits a plane, at the
  // render resolution, instead of the sparse scene points.
  bool dense = false;
  int min_visible = 50;
};

struct Dataset {
  static constexpr int kSchemaVersion = 1;

  DatasetConfig config;
  CameraIntrinsics intr;
  int width = 0;
  int height = 0;
  // Intrinsics of the rendered images (equals intr for dense datasets).
  CameraIntrinsics image_intr;
  int image_width = 0;
  int image_height = 0;
  // Observations sit on the integer pixel grid of the rendered images.
  bool grid_aligned = false;
  SyntheticScene scene;
  std::vector<DatasetFrame> frames;
  // Point ids registered for the co-visibility graph.
  std::vector<PointId> covis_points;

  std::vector<size_t> FrameIndices(Split split) const;
  const DatasetFrame& FrameById(ImageId id) const;
  std::map<ImageId, PoseSE3> Poses(Split split) const;
  // Co-visibility over training frames restricted to covis_points.
  CoVisibilityGraph TrainCovis() const;
  bool HasImages() const;
};

// Scene, sweep trajectory, train/test split (every fourth frame is a test
// frame until n_test are taken), observations and optional renders.
Dataset MakeDataset(const DatasetConfig& config);

}  // namespace anglereloc
