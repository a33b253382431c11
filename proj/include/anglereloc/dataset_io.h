#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "anglereloc/dataset.h"
#include "anglereloc/geometry.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

// Shortest decimal form that parses back to the same double.
std::string FormatDouble(double v);

struct PoseParseOptions {
  // The file stores world-to-camera instead of camera-to-world.
  bool invert = false;
  // Throw NonRigid instead of re-orthonormalizing with a warning.
  bool strict = false;
};

struct PoseParseResult {
  PoseSE3 pose;
  // Set when the rotation block deviated from orthonormality by more than
  // kNonRigidTolerance and was projected onto the nearest rotation.
  std::optional<std::string> warning;
};

inline constexpr double kNonRigidTolerance = 1e-3;

// 4x4 row-major homogeneous matrix, whitespace separated (7-Scenes
// frame-XXXXXX.pose.txt). Read as camera-to-world unless options.invert.
PoseParseResult ParseSevenScenesPose(const std::string& text,
                                     const PoseParseOptions& options = {},
                                     const std::string& source = "<text>");
PoseParseResult ReadSevenScenesPose(const std::filesystem::path& path,
                                    const PoseParseOptions& options = {});
std::string FormatSevenScenesPose(const PoseSE3& pose);

// One correspondence per line: `k x y X Y Z`; '#' starts a comment.
std::vector<Correspondence2D3D> ParseCorrespondences(
    const std::string& text, const std::string& source = "<text>");
std::vector<Correspondence2D3D> ReadCorrespondences(
    const std::filesystem::path& path);
std::string FormatCorrespondences(
    const std::vector<Correspondence2D3D>& correspondences);
void WriteCorrespondences(const std::filesystem::path& path,
                          const std::vector<Correspondence2D3D>& correspondences);

// Directory layout: manifest.json, scene_points.txt, covis_points.txt and
// per frame poses/, observations/, descriptors/ and (optional) images/.
void SaveDataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset LoadDataset(const std::filesystem::path& dir);

std::string ReadTextFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace anglereloc
