#pragma once

#include "saffire/features.hpp"

#include <opencv2/core.hpp>

#include <algorithm>
#include <cmath>

namespace saffire::detail {

struct CornerParams {
  double base_sigma = 1.0;         // pre-smoothing per octave
  double integration_sigma = 2.0;  // structure tensor window
  double harris_k = 0.04;
  double rel_threshold = 0.01;     // of the octave's strongest response
  double abs_threshold = 100.0;    // (gray/px)^4
  int nms_radius = 3;
  int border = 8;
  int octaves = 2;
  std::size_t max_features_per_octave = 400;
  double orientation_radius = 9.0; // octave pixels
  double patch_radius = 15.0;      // octave pixels; also the feature size at octave 0
  double min_coherence = 0.15;     // |sum g| / sum |g| for a usable direction
};

class CornerExtractor final : public FeatureExtractor {
public:
  explicit CornerExtractor(CornerParams params = {}) : params_(params) {}
  FeatureFamily family() const override { return FeatureFamily::Corner; }
  FeatureSet extract(const cv::Mat &gray) const override;

private:
  CornerParams params_;
};

struct SegmentParams {
  double blur_sigma = 1.0;
  double min_gradient = 6.0;       // gray levels per pixel
  double angle_tolerance = 22.5;   // degrees
  double min_length = 10.0;        // pixels
  double min_density = 0.4;
  double min_junction_angle = 15.0;  // degrees
  double max_junction_angle = 165.0; // degrees
  double endpoint_slack = 3.0;       // pixels
  double endpoint_rel_slack = 0.3;   // fraction of the shorter segment
  double context_radius = 2.0;       // in units of feature size
};

std::vector<LineSegment> find_segments(const cv::Mat &gray, const SegmentParams &params);

class SegmentExtractor final : public FeatureExtractor {
public:
  explicit SegmentExtractor(SegmentParams params = {}) : params_(params) {}
  FeatureFamily family() const override { return FeatureFamily::Segment; }
  FeatureSet extract(const cv::Mat &gray) const override;

private:
  SegmentParams params_;
};

/// Bilinear lookup on a CV_32F image with edge clamping.
inline float sample_bilinear(const cv::Mat &img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.cols - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.rows - 1));
  const int x0 = std::min(static_cast<int>(x), img.cols - 2 < 0 ? 0 : img.cols - 2);
  const int y0 = std::min(static_cast<int>(y), img.rows - 2 < 0 ? 0 : img.rows - 2);
  const int x1 = std::min(x0 + 1, img.cols - 1);
  const int y1 = std::min(y0 + 1, img.rows - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const float *r0 = img.ptr<float>(y0);
  const float *r1 = img.ptr<float>(y1);
  const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
  const double bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
  return static_cast<float>(top + fy * (bottom - top));
}

/// In-place l2 normalization. Returns false for an all-zero vector.
inline bool l2_normalize(Descriptor &d) {
  double s = 0.0;
  for (float v : d)
    s += static_cast<double>(v) * v;
  if (!(s > 1e-20))
    return false;
  const double inv = 1.0 / std::sqrt(s);
  for (float &v : d)
    v = static_cast<float>(v * inv);
  return true;
}

} // namespace saffire::detail
