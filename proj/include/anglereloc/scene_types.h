#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "anglereloc/geometry.h"

namespace anglereloc {

using PointId = std::int64_t;
using ImageId = int;
using Descriptor = Eigen::VectorXd;

// One observed scene point in one image. The ground-truth fields exist
// because the scenes are synthetic; gt_depth is always positive.
struct Observation {
  PointId point = 0;
  Vec2 pixel = Vec2::Zero();
  Vec3 gt_world = Vec3::Zero();
  double gt_depth = 0.0;
  Descriptor descriptor;
};

// A 2D-3D match fed to pose estimation: observed pixel and predicted (or
// ground-truth) world coordinate of the same point.
struct Correspondence2D3D {
  PointId id = 0;
  Vec2 pixel = Vec2::Zero();
  Vec3 world = Vec3::Zero();
};

// Per-point scene coordinate predictions for one image, aligned with the
// image's observation list by point id.
struct PredictionGrid {
  std::vector<PointId> ids;
  std::vector<Vec3> coords;

  size_t size() const { return ids.size(); }
};

// Tracks of points registered as multi-view correspondences. A point
// registered here with more than one image belongs to P_i^* of each of its
// images; all other points are single-view (P_i^-).
class CoVisibilityGraph {
 public:
  struct TrackEntry {
    ImageId image;
    Vec2 pixel;
  };

  void Add(PointId point, ImageId image, const Vec2& pixel);

  // Images other than `image` observing `point`, ascending by id.
  std::vector<ImageId> OtherImages(ImageId image, PointId point) const;
  bool IsMultiView(ImageId image, PointId point) const;
  std::optional<Vec2> Pixel(ImageId image, PointId point) const;

  const std::map<PointId, std::vector<TrackEntry>>& tracks() const {
    return tracks_;
  }
  bool empty() const { return tracks_.empty(); }

 private:
  // Track entries are kept sorted by image id.
  std::map<PointId, std::vector<TrackEntry>> tracks_;
};

}  // namespace anglereloc
