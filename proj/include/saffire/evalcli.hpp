#pragma once

#include "saffire/anchor_model.hpp"
#include "saffire/detection.hpp"
#include "saffire/manifest.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace saffire {

/// Quartiles use linear interpolation at (n - 1) p on the sorted sample.
/// Whiskers reach the most extreme values still inside the 1.5 IQR fences
/// (fences inclusive); everything beyond is an outlier.
struct BoxPlotStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<std::pair<std::string, double>> outliers; // (id, value) in input order
};

/// ids default to the decimal input index. Throws EmptyInput.
BoxPlotStats compute_boxplot(std::span<const double> values, std::span<const std::string> ids = {});

struct EvalRecord {
  std::string image;
  OrientedRect truth;
  std::optional<DetectionCandidate> detection;
  double oiou = 0.0; // 0 without a detection
  StageTimings timings;
};

struct EvalReport {
  FeatureFamily family = FeatureFamily::Corner;
  BoxPlotStats stats;
  std::vector<EvalRecord> records; // manifest order
};

/// Detects every manifest image and scores it against its annotation.
/// Throws ModelManifestFamilyMismatch when the manifest names another family.
EvalReport run_eval(const AnchorModel &model, const Manifest &manifest, const DetectionParams &params = {});

/// Structured report; timings sit in their own "timings" section.
std::string eval_report_json(const EvalReport &report);

/// Exit codes: 0 success, 1 no detection / eval below threshold, 2 usage
/// error, 3 data error.
int cli_main(int argc, const char *const *argv);

} // namespace saffire
