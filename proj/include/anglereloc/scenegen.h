#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "anglereloc/geometry.h"
#include "anglereloc/image.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

// Rectangle origin + s * edge_u + t * edge_v, s, t in [0, 1], edges
// orthogonal. Texture coordinates are metric (s * |edge_u|, t * |edge_v|).
struct TexturedPlane {
  Vec3 origin = Vec3::Zero();
  Vec3 edge_u = Vec3::UnitX();
  Vec3 edge_v = Vec3::UnitY();
  std::uint64_t texture_seed = 0;

  Vec3 Normal() const { return edge_u.cross(edge_v).normalized(); }
};

struct BoundingBox {
  Vec3 min = Vec3(-3.25, -2.0, 3.0);
  Vec3 max = Vec3(3.25, 2.0, 9.5);

  Vec3 Center() const { return 0.5 * (min + max); }
  double Diagonal() const { return (max - min).norm(); }
  bool Contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct SyntheticScene {
  std::vector<PointId> ids;
  std::vector<Vec3> points;
  // Unit-norm appearance vector per scene point, shared by every view.
  std::vector<Descriptor> descriptors;
  std::vector<TexturedPlane> planes;
  BoundingBox bounds;
  double diameter = 0.0;
};

struct SceneOptions {
  int descriptor_dim = 16;
  // Share of points placed on plane surfaces; the rest fill free space.
  double plane_point_fraction = 0.7;
};

SyntheticScene GenScene(std::uint64_t seed, int point_count, int plane_count,
                        const BoundingBox& bounds,
                        const SceneOptions& options = {});

struct Frame {
  ImageId id = 0;
  PoseSE3 pose;
};

struct Trajectory {
  int sequence = 0;
  std::vector<Frame> frames;
};

struct TrajectoryOptions {
  int width = 640;
  int height = 480;
  // Sweep of the orbit around the scene center, degrees.
  double arc_deg = 100.0;
  // Orbit radius as a multiple of the scene diameter.
  double radius_factor = 0.625;
  double radius_jitter = 0.5;
  double height_jitter = 0.5;
  double target_jitter = 0.3;
  int min_visible = 50;
  int max_attempts = 100;
};

// Look-at poses sweeping an arc around the scene center. Throws
// InfeasibleViewpoint when a pose with min_visible points in view cannot be
// found within max_attempts draws.
Trajectory GenTrajectory(const SyntheticScene& scene, std::uint64_t seed,
                         int n_images, const CameraIntrinsics& intr,
                         const TrajectoryOptions& options = {});

// Number of scene points in front of the camera and inside the image.
int CountVisible(const SyntheticScene& scene, const PoseSE3& pose,
                 const CameraIntrinsics& intr, int width, int height);

struct ObserveOptions {
  int width = 640;
  int height = 480;
  double pixel_noise_sigma = 0.0;
  double descriptor_noise_sigma = 0.01;
};

// Projects every scene point, keeps those in front of the camera and inside
// the image, adds Gaussian pixel noise (clamped to the image) and
// descriptor noise.
std::vector<Observation> Observe(const SyntheticScene& scene,
                                 const PoseSE3& pose,
                                 const CameraIntrinsics& intr,
                                 const ObserveOptions& options,
                                 std::uint64_t seed);

// Multi-octave value noise in [0, 1] at plane parameters s, t in [0, 1];
// the noise lattice is metric, so features keep their physical size.
double PlaneTexture(const TexturedPlane& plane, double s, double t);

struct RayHit {
  int plane = -1;
  double distance = 0.0;
  Vec3 point = Vec3::Zero();
  double s = 0.0;
  double t = 0.0;
};

// Nearest plane hit along origin + lambda * direction, lambda > 0.
std::optional<RayHit> IntersectPlanes(const SyntheticScene& scene,
                                      const Vec3& origin,
                                      const Vec3& direction);

// Lambertian render: each pixel shows the texture of the nearest plane hit
// by its viewing ray, or 0.5 where no plane is hit. Throws NoGeometry for a
// scene without planes.
Image RenderImage(const SyntheticScene& scene, const PoseSE3& pose,
                  const CameraIntrinsics& intr, int width, int height);

inline constexpr double kBackgroundIntensity = 0.5;

// Intensity seen along the viewing ray through a continuous pixel.
double RenderPixel(const SyntheticScene& scene, const PoseSE3& pose,
                   const CameraIntrinsics& intr, const Vec2& pixel);

// View-invariant appearance vector for a point on a textured plane, used
// by dense observations.
Descriptor SurfaceDescriptor(const TexturedPlane& plane, int plane_index,
                             double s, double t, int dim);

// One observation per pixel whose ray hits a plane, at integer pixel
// coordinates. Point ids are unique per (image, pixel).
std::vector<Observation> ObserveDense(const SyntheticScene& scene,
                                      const PoseSE3& pose, ImageId image,
                                      const CameraIntrinsics& intr, int width,
                                      int height, int descriptor_dim);

struct ImageObservations {
  ImageId image;
  std::span<const Observation> observations;
};

// Tracks over all given images. When `registered` is non-null only those
// point ids enter the graph.
CoVisibilityGraph BuildCovis(std::span<const ImageObservations> images,
                             const std::vector<PointId>* registered = nullptr);

}  // namespace anglereloc
