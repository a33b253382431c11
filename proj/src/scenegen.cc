#include "anglereloc/scenegen.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "anglereloc/error.h"

namespace anglereloc {

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t HashCombine(std::uint64_t seed, std::int64_t a, std::int64_t b,
                          std::int64_t c) {
  std::uint64_t h = SplitMix64(seed);
  h = SplitMix64(h ^ static_cast<std::uint64_t>(a));
  h = SplitMix64(h ^ static_cast<std::uint64_t>(b));
  return SplitMix64(h ^ static_cast<std::uint64_t>(c));
}

double HashToUnit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double Smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise with one random value per integer lattice node.
double ValueNoise(std::uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = Smoothstep(x - fx);
  const double ty = Smoothstep(y - fy);
  const std::uint64_t s = seed + static_cast<std::uint64_t>(octave);
  const double v00 = HashToUnit(HashCombine(s, ix, iy, 0));
  const double v10 = HashToUnit(HashCombine(s, ix + 1, iy, 0));
  const double v01 = HashToUnit(HashCombine(s, ix, iy + 1, 0));
  const double v11 = HashToUnit(HashCombine(s, ix + 1, iy + 1, 0));
  return (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) +
         ty * ((1.0 - tx) * v01 + tx * v11);
}

constexpr int kTextureOctaves = 3;
// Cycles per scene unit for the coarsest octave.
constexpr double kTextureBaseFrequency = 0.5;

Vec3 UniformInBox(const BoundingBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 p;
  for (int i = 0; i < 3; ++i) {
    p[i] = box.min[i] + u(rng) * (box.max[i] - box.min[i]);
  }
  return p;
}

}  // namespace

SyntheticScene GenScene(std::uint64_t seed, int point_count, int plane_count,
                        const BoundingBox& bounds,
                        const SceneOptions& options) {
  if (point_count <= 0 || plane_count < 0) {
    throw Error(ErrorCode::kPrecondition, "scene counts must be positive");
  }
  if (!((bounds.max.array() > bounds.min.array()).all())) {
    throw Error(ErrorCode::kPrecondition, "empty bounding box");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticScene scene;
  scene.bounds = bounds;
  scene.diameter = bounds.Diagonal();

  const Vec3 center = bounds.Center();
  const Vec3 half = 0.5 * (bounds.max - bounds.min);
  for (int p = 0; p < plane_count; ++p) {
    Vec3 c;
    for (int i = 0; i < 3; ++i) {
      c[i] = center[i] + 0.8 * half[i] * sym(rng);
    }
    // Normals face the camera sweep, which sits on the -z side.
    const Vec3 n = Vec3(sym(rng), 0.5 * sym(rng), -1.5).normalized();
    const Vec3 a = Vec3::UnitY().cross(n).normalized();
    const Vec3 b = n.cross(a);
    const double w = 2.0 + 2.0 * unit(rng);
    const double h = 1.5 + 1.5 * unit(rng);
    TexturedPlane plane;
    plane.edge_u = w * a;
    plane.edge_v = h * b;
    plane.origin = c - 0.5 * plane.edge_u - 0.5 * plane.edge_v;
    plane.texture_seed = rng();
    scene.planes.push_back(plane);
  }

  for (int i = 0; i < point_count; ++i) {
    Vec3 p;
    bool placed = false;
    if (!scene.planes.empty() && unit(rng) < options.plane_point_fraction) {
      for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        const auto& plane = scene.planes[rng() % scene.planes.size()];
        const double s = unit(rng);
        const double t = unit(rng);
        p = plane.origin + s * plane.edge_u + t * plane.edge_v;
        placed = bounds.Contains(p);
      }
    }
    if (!placed) {
      p = UniformInBox(bounds, rng);
    }
    Descriptor desc(options.descriptor_dim);
    for (int k = 0; k < options.descriptor_dim; ++k) {
      desc[k] = gauss(rng);
    }
    desc.normalize();
    scene.ids.push_back(i);
    scene.points.push_back(p);
    scene.descriptors.push_back(std::move(desc));
  }
  return scene;
}

int CountVisible(const SyntheticScene& scene, const PoseSE3& pose,
                 const CameraIntrinsics& intr, int width, int height) {
  int count = 0;
  for (const Vec3& p : scene.points) {
    const Projection proj = Project(intr, WorldToCamera(pose, p));
    if (proj.status == DepthStatus::kInFront && proj.pixel.x() >= 0.0 &&
        proj.pixel.y() >= 0.0 && proj.pixel.x() <= width - 1 &&
        proj.pixel.y() <= height - 1) {
      ++count;
    }
  }
  return count;
}

Trajectory GenTrajectory(const SyntheticScene& scene, std::uint64_t seed,
                         int n_images, const CameraIntrinsics& intr,
                         const TrajectoryOptions& options) {
  if (n_images <= 0) {
    throw Error(ErrorCode::kPrecondition, "n_images must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const Vec3 center = scene.bounds.Center();
  const double radius = options.radius_factor * scene.diameter;
  const double arc = options.arc_deg * M_PI / 180.0;

  Trajectory traj;
  for (int i = 0; i < n_images; ++i) {
    const double phi =
        n_images > 1 ? -0.5 * arc + arc * i / (n_images - 1) : 0.0;
    bool found = false;
    for (int attempt = 0; attempt < options.max_attempts && !found; ++attempt) {
      const double r = radius + options.radius_jitter * sym(rng);
      const double h = options.height_jitter * sym(rng);
      const Vec3 eye = center + Vec3(r * std::sin(phi), h, -r * std::cos(phi));
      const Vec3 target =
          center + options.target_jitter * Vec3(sym(rng), sym(rng), sym(rng));
      const PoseSE3 pose = LookAt(eye, target);
      if (CountVisible(scene, pose, intr, options.width, options.height) >=
          options.min_visible) {
        traj.frames.push_back({i, pose});
        found = true;
      }
    }
    if (!found) {
      throw Error(ErrorCode::kInfeasibleViewpoint,
                  "no viewpoint for image " + std::to_string(i) + " sees " +
                      std::to_string(options.min_visible) + " points");
    }
  }
  return traj;
}

std::vector<Observation> Observe(const SyntheticScene& scene,
                                 const PoseSE3& pose,
                                 const CameraIntrinsics& intr,
                                 const ObserveOptions& options,
                                 std::uint64_t seed) {
  if (options.pixel_noise_sigma < 0.0 || options.descriptor_noise_sigma < 0.0) {
    throw Error(ErrorCode::kPrecondition, "noise sigma must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Observation> out;
  for (size_t i = 0; i < scene.points.size(); ++i) {
    const Vec3 cam = WorldToCamera(pose, scene.points[i]);
    const Projection proj = Project(intr, cam);
    if (proj.status != DepthStatus::kInFront || proj.pixel.x() < 0.0 ||
        proj.pixel.y() < 0.0 || proj.pixel.x() > options.width - 1 ||
        proj.pixel.y() > options.height - 1) {
      continue;
    }
    Observation obs;
    obs.point = scene.ids[i];
    obs.pixel = proj.pixel;
    if (options.pixel_noise_sigma > 0.0) {
      obs.pixel.x() += options.pixel_noise_sigma * gauss(rng);
      obs.pixel.y() += options.pixel_noise_sigma * gauss(rng);
      obs.pixel.x() = std::clamp(obs.pixel.x(), 0.0, options.width - 1.0);
      obs.pixel.y() = std::clamp(obs.pixel.y(), 0.0, options.height - 1.0);
    }
    obs.gt_world = scene.points[i];
    obs.gt_depth = cam.z();
    obs.descriptor = scene.descriptors.empty() ? Descriptor()
                                               : scene.descriptors[i];
    if (options.descriptor_noise_sigma > 0.0) {
      for (Eigen::Index k = 0; k < obs.descriptor.size(); ++k) {
        obs.descriptor[k] += options.descriptor_noise_sigma * gauss(rng);
      }
    }
    out.push_back(std::move(obs));
  }
  return out;
}

double PlaneTexture(const TexturedPlane& plane, double s, double t) {
  const double x = s * plane.edge_u.norm();
  const double y = t * plane.edge_v.norm();
  double sum = 0.0;
  double norm = 0.0;
  double amplitude = 1.0;
  double freq = kTextureBaseFrequency;
  for (int o = 0; o < kTextureOctaves; ++o) {
    sum += amplitude * ValueNoise(plane.texture_seed, o, x * freq, y * freq);
    norm += amplitude;
    amplitude *= 0.5;
    freq *= 2.0;
  }
  // Sums of lattice values cluster around 0.5; stretch the contrast.
  return std::clamp(0.5 + 1.8 * (sum / norm - 0.5), 0.0, 1.0);
}

std::optional<RayHit> IntersectPlanes(const SyntheticScene& scene,
                                      const Vec3& origin,
                                      const Vec3& direction) {
  std::optional<RayHit> best;
  for (size_t i = 0; i < scene.planes.size(); ++i) {
    const TexturedPlane& plane = scene.planes[i];
    const Vec3 n = plane.edge_u.cross(plane.edge_v);
    const double denom = n.dot(direction);
    if (std::abs(denom) < 1e-15) {
      continue;
    }
    const double lambda = n.dot(plane.origin - origin) / denom;
    if (!(lambda > 0.0) || (best && lambda >= best->distance)) {
      continue;
    }
    const Vec3 hit = origin + lambda * direction;
    const Vec3 rel = hit - plane.origin;
    const double s = rel.dot(plane.edge_u) / plane.edge_u.squaredNorm();
    const double t = rel.dot(plane.edge_v) / plane.edge_v.squaredNorm();
    if (s < 0.0 || s > 1.0 || t < 0.0 || t > 1.0) {
      continue;
    }
    best = RayHit{static_cast<int>(i), lambda, hit, s, t};
  }
  return best;
}

double RenderPixel(const SyntheticScene& scene, const PoseSE3& pose,
                   const CameraIntrinsics& intr, const Vec2& pixel) {
  const Vec3 dir = pose.rotation() * RayVector(intr, pixel);
  const auto hit = IntersectPlanes(scene, pose.center(), dir);
  if (!hit) {
    return kBackgroundIntensity;
  }
  return PlaneTexture(scene.planes[hit->plane], hit->s, hit->t);
}

Image RenderImage(const SyntheticScene& scene, const PoseSE3& pose,
                  const CameraIntrinsics& intr, int width, int height) {
  if (scene.planes.empty()) {
    throw Error(ErrorCode::kNoGeometry, "scene has no textured planes");
  }
  Image image(width, height, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      image.at(x, y) = RenderPixel(scene, pose, intr, Vec2(x, y));
    }
  }
  return image;
}

Descriptor SurfaceDescriptor(const TexturedPlane& plane, int plane_index,
                             double s, double t, int dim) {
  const double x = s * plane.edge_u.norm();
  const double y = t * plane.edge_v.norm();
  Descriptor d(dim);
  for (int k = 0; k < dim; ++k) {
    const std::uint64_t h = HashCombine(plane.texture_seed, plane_index, k, 1);
    const double angle = 2.0 * M_PI * HashToUnit(h);
    const double freq = 0.4 + 0.8 * HashToUnit(SplitMix64(h));
    const double phase = 2.0 * M_PI * HashToUnit(SplitMix64(h + 1));
    d[k] = std::cos(freq * (std::cos(angle) * x + std::sin(angle) * y) + phase);
  }
  return d;
}

std::vector<Observation> ObserveDense(const SyntheticScene& scene,
                                      const PoseSE3& pose, ImageId image,
                                      const CameraIntrinsics& intr, int width,
                                      int height, int descriptor_dim) {
  std::vector<Observation> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec2 pixel(x, y);
      const Vec3 dir = pose.rotation() * RayVector(intr, pixel);
      const auto hit = IntersectPlanes(scene, pose.center(), dir);
      if (!hit) {
        continue;
      }
      Observation obs;
      obs.point = static_cast<PointId>(image) * 1000000 +
                  static_cast<PointId>(y) * width + x;
      obs.pixel = pixel;
      obs.gt_world = hit->point;
      obs.gt_depth = WorldToCamera(pose, hit->point).z();
      obs.descriptor = SurfaceDescriptor(scene.planes[hit->plane], hit->plane,
                                         hit->s, hit->t, descriptor_dim);
      out.push_back(std::move(obs));
    }
  }
  return out;
}

CoVisibilityGraph BuildCovis(std::span<const ImageObservations> images,
                             const std::vector<PointId>* registered) {
  std::set<PointId> allowed;
  if (registered != nullptr) {
    allowed.insert(registered->begin(), registered->end());
  }
  CoVisibilityGraph graph;
  for (const ImageObservations& img : images) {
    for (const Observation& obs : img.observations) {
      if (registered == nullptr || allowed.count(obs.point) > 0) {
        graph.Add(obs.point, img.image, obs.pixel);
      }
    }
  }
  return graph;
}

}  // namespace anglereloc
