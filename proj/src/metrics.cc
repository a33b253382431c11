#include "anglereloc/metrics.h"

#include <set>
#include <sstream>

#include "anglereloc/dataset_io.h"
#include "anglereloc/error.h"
#include "anglereloc/json_io.h"
#include "anglereloc/regressor.h"

namespace anglereloc {

MetricsReport ComputeMetrics(const std::vector<EstimateRecord>& estimates,
                             const std::map<ImageId, PoseSE3>& ground_truth,
                             double rot_thresh_deg, double trans_thresh) {
  if (estimates.empty()) {
    throw Error(ErrorCode::kIndexMismatch, "no estimates to evaluate");
  }
  MetricsReport report;
  report.rot_thresh_deg = rot_thresh_deg;
  report.trans_thresh = trans_thresh;
  std::set<ImageId> seen;
  std::vector<double> rot;
  std::vector<double> trans;
  int accurate = 0;
  for (const EstimateRecord& e : estimates) {
    const auto gt = ground_truth.find(e.image);
    if (gt == ground_truth.end()) {
      throw Error(ErrorCode::kIndexMismatch,
                  "no ground-truth pose for image " + std::to_string(e.image));
    }
    if (!seen.insert(e.image).second) {
      throw Error(ErrorCode::kIndexMismatch,
                  "image " + std::to_string(e.image) + " estimated twice");
    }
    const PoseError err = ComputePoseError(e.pose, gt->second);
    ImageMetrics m;
    m.image = e.image;
    m.rotation_deg = err.rotation_deg;
    m.translation = err.translation;
    m.status = e.status;
    m.accurate = e.status == PoseStatus::kOk && err.rotation_deg < rot_thresh_deg &&
                 err.translation < trans_thresh;
    accurate += m.accurate ? 1 : 0;
    rot.push_back(m.rotation_deg);
    trans.push_back(m.translation);
    report.images.push_back(m);
  }
  report.median_rotation_deg = Median(rot);
  report.median_translation = Median(trans);
  report.accuracy = static_cast<double>(accurate) / static_cast<double>(estimates.size());
  return report;
}

std::string MetricsToJson(const MetricsReport& report) {
  json images = json::array();
  for (const ImageMetrics& m : report.images) {
    images.push_back({{"image", m.image},
                      {"rotation_deg", m.rotation_deg},
                      {"translation", m.translation},
                      {"status", PoseStatusName(m.status)},
                      {"accurate", m.accurate}});
  }
  const json j = {{"count", report.images.size()},
                  {"median_rotation_deg", report.median_rotation_deg},
                  {"median_translation", report.median_translation},
                  {"accuracy", report.accuracy},
                  {"rot_thresh_deg", report.rot_thresh_deg},
                  {"trans_thresh", report.trans_thresh},
                  {"images", images}};
  return j.dump(2) + "\n";
}

std::string MetricsToCsv(const MetricsReport& report) {
  std::string out = "image,rotation_deg,translation,status,accurate\n";
  for (const ImageMetrics& m : report.images) {
    out += std::to_string(m.image) + ',' + FormatDouble(m.rotation_deg) + ',' +
           FormatDouble(m.translation) + ',' + PoseStatusName(m.status) + ',' +
           (m.accurate ? "1" : "0") + '\n';
  }
  return out;
}

PoseStatus ParsePoseStatus(const std::string& name) {
  for (PoseStatus s :
       {PoseStatus::kOk, PoseStatus::kDegenerate, PoseStatus::kTooFewInliers}) {
    if (name == PoseStatusName(s)) {
      return s;
    }
  }
  throw Error(ErrorCode::kParseError, "unknown pose status '" + name + "'");
}

std::string FormatEstimates(const std::vector<EstimateRecord>& estimates) {
  std::string out;
  for (const EstimateRecord& e : estimates) {
    const json j = {{"image", e.image},
                    {"pose", PoseToJson(e.pose)},
                    {"inlier_count", e.inlier_count},
                    {"status", PoseStatusName(e.status)}};
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<EstimateRecord> ParseEstimates(const std::string& text,
                                           const std::string& source) {
  std::vector<EstimateRecord> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const json j = json::parse(line);
      EstimateRecord e;
      e.image = j.at("image").get<ImageId>();
      e.pose = JsonToPose(j.at("pose"));
      e.inlier_count = j.at("inlier_count").get<int>();
      e.status = ParsePoseStatus(j.at("status").get<std::string>());
      out.push_back(e);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kParseError,
                  source + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ErrorCode::kParseError,
                  source + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace anglereloc
