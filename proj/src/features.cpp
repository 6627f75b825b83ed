#include "saffire/features.hpp"
#include "saffire/error.hpp"

#include "feature_families.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace saffire {

std::string_view to_string(FeatureFamily family) {
  switch (family) {
  case FeatureFamily::Corner:
    return "corner";
  case FeatureFamily::Segment:
    return "segment";
  }
  return "unknown";
}

FeatureFamily parse_family(std::string_view tag) {
  if (tag == "corner")
    return FeatureFamily::Corner;
  if (tag == "segment")
    return FeatureFamily::Segment;
  throw Error(ErrorCode::UnsupportedFamily, "unknown feature family '" + std::string(tag) + "'");
}

std::unique_ptr<FeatureExtractor> make_extractor(FeatureFamily family) {
  switch (family) {
  case FeatureFamily::Corner:
    return std::make_unique<detail::CornerExtractor>();
  case FeatureFamily::Segment:
    return std::make_unique<detail::SegmentExtractor>();
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown feature family");
}

cv::Mat to_gray(const cv::Mat &image) {
  if (image.empty())
    throw Error(ErrorCode::InvalidArgument, "empty image");
  cv::Mat gray;
  switch (image.channels()) {
  case 1:
    gray = image;
    break;
  case 3:
    cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
    break;
  case 4:
    cv::cvtColor(image, gray, cv::COLOR_BGRA2GRAY);
    break;
  default:
    throw Error(ErrorCode::InvalidArgument, "unsupported channel count");
  }
  if (gray.depth() != CV_8U) {
    cv::Mat converted;
    gray.convertTo(converted, CV_8U);
    gray = converted;
  }
  return gray;
}

FeatureSet extract(const cv::Mat &image, const FeatureExtractor &extractor) {
  const cv::Mat gray = to_gray(image);
  if (gray.cols < 16 || gray.rows < 16)
    throw Error(ErrorCode::InvalidArgument, "image smaller than 16x16");
  FeatureSet set = extractor.extract(gray);
  set.family = extractor.family();
  set.source_size = gray.size();
  if (set.empty())
    throw Error(ErrorCode::EmptyFeatureSet,
                "no " + std::string(to_string(extractor.family())) + " features found");
  return set;
}

FeatureSet extract(const cv::Mat &image, FeatureFamily family) {
  return extract(image, *make_extractor(family));
}

double descriptor_distance(const Descriptor &a, const Descriptor &b) {
  const std::size_t n = std::min(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<FeatureMatch> knn_match(const FeatureSet &ref, const FeatureSet &tgt, std::size_t k) {
  if (ref.family != tgt.family)
    throw Error(ErrorCode::FamilyMismatch, "cannot match " + std::string(to_string(ref.family)) +
                                               " against " + std::string(to_string(tgt.family)));
  if (k == 0)
    throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  k = std::min(k, tgt.size());
  std::vector<FeatureMatch> out;
  if (k == 0)
    return out;
  out.reserve(ref.size() * k);

  std::vector<FeatureMatch> row(tgt.size());
  for (std::size_t r = 0; r < ref.size(); ++r) {
    for (std::size_t t = 0; t < tgt.size(); ++t)
      row[t] = {r, t, descriptor_distance(ref.descriptors[r], tgt.descriptors[t])};
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(),
                      [](const FeatureMatch &a, const FeatureMatch &b) {
                        return a.distance < b.distance ||
                               (a.distance == b.distance && a.tgt_index < b.tgt_index);
                      });
    out.insert(out.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

std::vector<FeatureMatch> ratio_filter(std::span<const FeatureMatch> matches, double ratio) {
  std::vector<FeatureMatch> out;
  std::size_t i = 0;
  while (i < matches.size()) {
    std::size_t j = i + 1;
    while (j < matches.size() && matches[j].ref_index == matches[i].ref_index)
      ++j;
    if (j - i == 1 || matches[i].distance < ratio * matches[i + 1].distance)
      out.push_back(matches[i]);
    i = j;
  }
  return out;
}

SimilarityTransform match_to_transform(const Feature &ref, const Feature &tgt) {
  if (!(ref.size > 0.0) || !(tgt.size > 0.0))
    throw Error(ErrorCode::DegenerateFeature, "feature size must be positive");
  SimilarityTransform t{tgt.size / ref.size, normalize_angle(tgt.direction - ref.direction), 0.0,
                        0.0};
  const Point2 mapped = apply(t, ref.position);
  t.tx = tgt.position.x - mapped.x;
  t.ty = tgt.position.y - mapped.y;
  return t;
}

std::vector<FeatureMatch> geometric_filter(std::span<const FeatureMatch> matches,
                                           const FeatureSet &ref, const FeatureSet &tgt,
                                           const OrientedRect &ref_roi,
                                           const OrientedRect &tgt_roi,
                                           const GeometricFilterParams &params) {
  std::vector<FeatureMatch> out;
  out.reserve(matches.size());
  for (const FeatureMatch &m : matches) {
    const Feature &f0 = ref.features[m.ref_index];
    const Feature &fi = tgt.features[m.tgt_index];
    const double s = f0.size / fi.size;
    if (s < params.scale_low || s > params.scale_high)
      continue;
    if (params.min_roi_iou > 0.0) {
      const SimilarityTransform t = match_to_transform(f0, fi);
      if (iou(transform_rect(t, ref_roi), tgt_roi) < params.min_roi_iou)
        continue;
    }
    out.push_back(m);
  }
  return out;
}

} // namespace saffire
