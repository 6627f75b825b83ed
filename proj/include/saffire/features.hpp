#pragma once

#include "saffire/geometry.hpp"

#include <opencv2/core.hpp>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saffire {

/// Interchangeable extraction + descriptor scheme. CORNER suits textured
/// content, SEGMENT suits texture-less line-art content.
enum class FeatureFamily { Corner, Segment };

std::string_view to_string(FeatureFamily family);
/// Accepts the exact tags "corner" and "segment"; throws UnsupportedFamily otherwise.
FeatureFamily parse_family(std::string_view tag);

struct Feature {
  Point2 position;
  double direction = 0.0; // radians, (-pi, pi]
  double size = 1.0;      // pixels, > 0

  friend bool operator==(const Feature &, const Feature &) = default;
};

using Descriptor = std::vector<float>;

struct FeatureSet {
  FeatureFamily family = FeatureFamily::Corner;
  std::vector<Feature> features;
  std::vector<Descriptor> descriptors;
  cv::Size source_size;

  std::size_t size() const { return features.size(); }
  bool empty() const { return features.empty(); }
};

struct FeatureMatch {
  std::size_t ref_index = 0;
  std::size_t tgt_index = 0;
  double distance = 0.0;

  friend bool operator==(const FeatureMatch &, const FeatureMatch &) = default;
};

class FeatureExtractor {
public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureFamily family() const = 0;
  /// gray is CV_8UC1. May return an empty set; the free function extract()
  /// turns that into EmptyFeatureSet.
  virtual FeatureSet extract(const cv::Mat &gray) const = 0;
};

std::unique_ptr<FeatureExtractor> make_extractor(FeatureFamily family);

/// Converts color input by luma, validates the 16x16 minimum and throws
/// EmptyFeatureSet when nothing is found.
cv::Mat to_gray(const cv::Mat &image);
FeatureSet extract(const cv::Mat &image, FeatureFamily family);
FeatureSet extract(const cv::Mat &image, const FeatureExtractor &extractor);

double descriptor_distance(const Descriptor &a, const Descriptor &b);

/// For every reference feature, its k nearest target descriptors (l2), ordered
/// by distance with ties going to the lower target index. Output is grouped by
/// ascending ref_index. k is clamped to the target size.
std::vector<FeatureMatch> knn_match(const FeatureSet &ref, const FeatureSet &tgt, std::size_t k = 3);

/// Lowe's ratio test over consecutive same-ref_index groups: keeps the group's
/// best match iff best < ratio * second; single-candidate groups pass.
std::vector<FeatureMatch> ratio_filter(std::span<const FeatureMatch> matches, double ratio = 0.8);

/// The unique similarity taking ref onto tgt (throws DegenerateFeature).
SimilarityTransform match_to_transform(const Feature &ref, const Feature &tgt);

struct GeometricFilterParams {
  double scale_low = 0.85;
  double scale_high = 1.15;
  double min_roi_iou = 0.2;

  friend bool operator==(const GeometricFilterParams &, const GeometricFilterParams &) = default;
};

/// Drops matches whose scale ref.size / tgt.size leaves the window and those
/// whose implied transform superimposes ref_roi onto tgt_roi with IoU below
/// min_roi_iou.
std::vector<FeatureMatch> geometric_filter(std::span<const FeatureMatch> matches,
                                           const FeatureSet &ref, const FeatureSet &tgt,
                                           const OrientedRect &ref_roi,
                                           const OrientedRect &tgt_roi,
                                           const GeometricFilterParams &params = {});

/// A detected straight edge; exposed for inspection and tests.
struct LineSegment {
  Point2 p1;
  Point2 p2;
  double gradient_angle = 0.0; // direction toward the brighter side
  double length() const { return distance(p1, p2); }
};

std::vector<LineSegment> detect_segments(const cv::Mat &gray);

inline constexpr std::size_t kCornerDescriptorSize = 64;
inline constexpr std::size_t kSegmentDescriptorSize = 32;

} // namespace saffire
