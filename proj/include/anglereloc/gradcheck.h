#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace anglereloc {

struct GradCheckConfig {
  // Checked (non-excluded) configurations per loss.
  int configs = 100;
  double step = 1e-6;
  double tolerance = 1e-4;
  // Reprojection configurations with |Z| below this are excluded.
  double z_band = 1e-3;
  std::uint64_t seed = 1;
  // Fault injection: the named loss gets its analytic gradient scaled by
  // 1.01 so the suite must report a failure.
  std::string corrupt;
};

struct GradCheckRow {
  std::string loss;
  int config = 0;
  double max_rel_err = 0.0;
  bool excluded = false;
  bool pass = true;
};

struct GradCheckSuite {
  std::string loss;
  int checked = 0;
  int excluded = 0;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  std::vector<GradCheckSuite> suites;
  bool pass = true;

  // loss,config,max_rel_err,excluded,pass
  std::string RowsCsv() const;
  // loss,checked,excluded,max_rel_err,pass
  std::string SuitesCsv() const;
};

// Loss names: reproj, angle, multiview, photometric, combined.
const std::vector<std::string>& GradCheckLosses();

// Central finite differences against every analytic gradient. The error of
// one configuration is ||g_analytic - g_fd||_inf / max(||g_analytic||_inf,
// ||g_fd||_inf, 1e-12).
GradCheckReport RunGradCheck(const GradCheckConfig& cfg);

}  // namespace anglereloc
