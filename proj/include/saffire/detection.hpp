#pragma once

#include "saffire/anchor_model.hpp"
#include "saffire/features.hpp"
#include "saffire/geometry.hpp"

#include <opencv2/core.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace saffire {

struct DetectionParams {
  std::size_t knn = 3;
  double ratio = 0.8;
  double translation_bin = 0.25; // fraction of the model ROI diagonal
  double rotation_bin_deg = 30.0;
  double scale_low = 0.85;       // central scale bin
  double scale_high = 1.15;
  std::size_t min_peak = 4;
  double rel_threshold = 0.3;
  double refit_tol = 5.0;        // pixels, residual gate of the robust refit
  double duplicate_oiou = 0.7;   // candidates overlapping a stronger one this much are merged
};

/// One accumulator cell. votes holds every match cast into the cell,
/// including smeared copies; primary_votes counts matches whose own pose
/// falls in the cell.
struct PoseBin {
  int tx_bin = 0;
  int ty_bin = 0;
  int rot_bin = 0;
  int scale_bin = 0;
  std::vector<FeatureMatch> votes;
  std::size_t primary_votes = 0;
};

/// A candidate placement. In the match list ref_index is a model feature
/// and tgt_index a scene feature.
struct DetectionCandidate {
  SimilarityTransform transform;
  OrientedRect roi;
  std::size_t vote_count = 0;
  double content_distance = 0.0;
  std::size_t bin_index = 0; // position in the pruned peak list
};

struct StageTimings {
  double extraction_us = 0.0;
  double matching_us = 0.0;
  double ght_us = 0.0;
  double ranking_us = 0.0;
};

struct DetectionResult {
  std::optional<DetectionCandidate> best;
  std::vector<DetectionCandidate> candidates; // ascending content distance
  StageTimings timings;
  std::string diagnostic;
};

/// Scene-to-model 3-NN with the ratio test on the model side, returned with
/// ref_index = model feature and tgt_index = scene feature. A feature of one
/// model can thus be matched by several scene instances.
std::vector<FeatureMatch> match_to_model(const AnchorModel &model, const FeatureSet &scene,
                                         const DetectionParams &params = {});

/// Generalized Hough voting over (tx, ty, rotation, scale). Translation is
/// the image of the model feature centroid, so it stays stable under small
/// rotation errors. Each vote also goes to the nearer neighbour cell in each
/// of tx, ty and rotation. Bins come back in ascending key order.
std::vector<PoseBin> ght_vote(const AnchorModel &model, const FeatureSet &scene,
                              std::span<const FeatureMatch> matches, const DetectionParams &params = {});
std::vector<PoseBin> ght_vote(const AnchorModel &model, const FeatureSet &scene,
                              const DetectionParams &params = {});

/// Keeps bins with at least max(min_peak, rel_threshold * max votes) that are
/// local maxima among their 3x3x3x3 neighbours (rotation wraps after
/// rotation_bins cells). Ties between neighbours go to the lower key.
std::vector<PoseBin> prune_peaks(std::span<const PoseBin> bins, std::size_t min_peak = 4,
                                 double rel_threshold = 0.3, int rotation_bins = 12);

/// Least-squares similarity over the bin's votes with residual-gated refits.
/// Falls back to the lowest-distance vote's own transform when the fit is
/// degenerate.
DetectionCandidate refine_and_place(const PoseBin &bin, const AnchorModel &model, const FeatureSet &scene,
                                    const DetectionParams &params = {});

/// Scores each candidate with the weighted content distance and sorts
/// ascending (ties: more votes, then lower bin index). Candidates whose ROI
/// leaves the image are dropped.
DetectionResult rank_by_content(std::vector<DetectionCandidate> candidates, const cv::Mat &image,
                                const AnchorModel &model);

DetectionResult detect(const AnchorModel &model, const cv::Mat &image, const DetectionParams &params = {});
/// Same, with the scene features already extracted.
DetectionResult detect(const AnchorModel &model, const cv::Mat &image, const FeatureSet &scene,
                       const DetectionParams &params = {});

} // namespace saffire
