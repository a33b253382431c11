#include "anglereloc/scene_types.h"

#include <algorithm>

namespace anglereloc {

void CoVisibilityGraph::Add(PointId point, ImageId image, const Vec2& pixel) {
  auto& track = tracks_[point];
  const auto pos = std::lower_bound(
      track.begin(), track.end(), image,
      [](const TrackEntry& e, ImageId id) { return e.image < id; });
  if (pos != track.end() && pos->image == image) {
    pos->pixel = pixel;
    return;
  }
  track.insert(pos, TrackEntry{image, pixel});
}

std::vector<ImageId> CoVisibilityGraph::OtherImages(ImageId image,
                                                    PointId point) const {
  std::vector<ImageId> out;
  const auto it = tracks_.find(point);
  if (it == tracks_.end()) {
    return out;
  }
  bool contains_self = false;
  for (const TrackEntry& e : it->second) {
    if (e.image == image) {
      contains_self = true;
    } else {
      out.push_back(e.image);
    }
  }
  if (!contains_self) {
    out.clear();
  }
  return out;
}

bool CoVisibilityGraph::IsMultiView(ImageId image, PointId point) const {
  return !OtherImages(image, point).empty();
}

std::optional<Vec2> CoVisibilityGraph::Pixel(ImageId image,
                                             PointId point) const {
  const auto it = tracks_.find(point);
  if (it == tracks_.end()) {
    return std::nullopt;
  }
  for (const TrackEntry& e : it->second) {
    if (e.image == image) {
      return e.pixel;
    }
  }
  return std::nullopt;
}

}  // namespace anglereloc
