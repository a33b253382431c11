#pragma once

#include <map>
#include <string>
#include <vector>

#include "anglereloc/geometry.h"
#include "anglereloc/ransac_pnp.h"
#include "anglereloc/scene_types.h"

namespace anglereloc {

struct ImageMetrics {
  ImageId image = 0;
  double rotation_deg = 0.0;
  double translation = 0.0;
  PoseStatus status = PoseStatus::kOk;
  bool accurate = false;
};

struct MetricsReport {
  std::vector<ImageMetrics> images;
  double median_rotation_deg = 0.0;
  double median_translation = 0.0;
  // Share of images with status Ok and both errors below the thresholds.
  double accuracy = 0.0;
  double rot_thresh_deg = 5.0;
  double trans_thresh = 0.0;
};

struct EstimateRecord {
  ImageId image = 0;
  PoseSE3 pose;
  int inlier_count = 0;
  PoseStatus status = PoseStatus::kOk;
};

// Throws IndexMismatch when an estimate has no ground truth, an image id
// repeats, or the list is empty.
MetricsReport ComputeMetrics(const std::vector<EstimateRecord>& estimates,
                             const std::map<ImageId, PoseSE3>& ground_truth,
                             double rot_thresh_deg, double trans_thresh);

std::string MetricsToJson(const MetricsReport& report);
// image,rotation_deg,translation,status,accurate
std::string MetricsToCsv(const MetricsReport& report);

PoseStatus ParsePoseStatus(const std::string& name);

// One JSON object per line: image, pose (row-major 4x4), inlier_count, status.
std::string FormatEstimates(const std::vector<EstimateRecord>& estimates);
std::vector<EstimateRecord> ParseEstimates(const std::string& text,
                                           const std::string& source = "<text>");

}  // namespace anglereloc
