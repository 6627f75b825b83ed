#pragma once

#include "saffire/features.hpp"
#include "saffire/geometry.hpp"

#include <opencv2/core.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace saffire {

struct RansacParams {
  double pos_tol = 5.0;     // pixels
  double ang_tol_deg = 10.0;
  double scale_tol = 0.10;  // relative
  std::size_t min_cluster = 4;
  int refine_rounds = 3;    // re-score / refit passes after the first fit

  friend bool operator==(const RansacParams &, const RansacParams &) = default;
};

struct CostWeights {
  double w_feat = 0.5;
  double w_roi = 0.5;

  friend bool operator==(const CostWeights &, const CostWeights &) = default;
};

struct TrainingParams {
  std::size_t knn = 3;
  double ratio = 0.8;
  GeometricFilterParams geometric;
  RansacParams ransac;
  CostWeights weights;

  friend bool operator==(const TrainingParams &, const TrainingParams &) = default;
};

struct TrainingSample {
  cv::Mat image;
  OrientedRect roi;
};

/// One candidate transform from the reference image into image `layer`.
/// ref_indices[k] and tgt_indices[k] are the k-th paired inlier; pairs are
/// sorted by ref index.
struct GraphNode {
  std::size_t layer = 0;
  SimilarityTransform transform;
  std::vector<std::size_t> ref_indices;
  std::vector<std::size_t> tgt_indices;
};

struct TrainingGraph {
  FeatureFamily family = FeatureFamily::Corner;
  std::vector<FeatureSet> feature_sets; // one per training image, [0] is the reference
  std::vector<OrientedRect> rois;
  std::vector<std::vector<GraphNode>> layers;
};

struct PathCandidate {
  std::vector<std::size_t> node_indices; // one per layer
  std::vector<GraphNode> nodes;
  std::vector<std::size_t> surviving_features; // sorted reference indices
  double cost = 0.0;
};

/// Iterative RANSAC over single-match hypotheses. Every remaining match is
/// tried as a hypothesis; the one with most inliers is refined by a
/// least-squares fit and emitted when it has at least min_cluster inliers.
std::vector<GraphNode> cluster_matches(std::span<const FeatureMatch> matches, const FeatureSet &ref_set,
                                       const FeatureSet &tgt_set, const RansacParams &params = {},
                                       std::size_t layer = 0);

/// Root node (identity, all reference features) followed by one layer per
/// further feature set. Throws InsufficientTrainData / UntrainableImage.
TrainingGraph build_graph(std::vector<FeatureSet> feature_sets, std::vector<OrientedRect> rois,
                          const TrainingParams &params = {});
TrainingGraph build_graph(std::span<const TrainingSample> samples, const FeatureExtractor &extractor,
                          const TrainingParams &params = {});
TrainingGraph build_graph(std::span<const TrainingSample> samples, FeatureFamily family,
                          const TrainingParams &params = {});

/// Sorted intersection of ref_indices along the nodes.
std::vector<std::size_t> surviving_features(std::span<const GraphNode> nodes);

/// w_feat * (1 - |surviving| / |root|) + w_roi * (1 - mean oIoU of the
/// pulled-back ROIs against rois[0]). nodes[0] must be the root.
double path_cost(std::span<const GraphNode> nodes, std::span<const OrientedRect> rois,
                 const CostWeights &weights = {});
double path_cost(const PathCandidate &path, std::span<const OrientedRect> rois,
                 const CostWeights &weights = {});

/// Exact minimum-cost root-to-leaf path by depth-first branch and bound.
/// Ties: lower cost, then more surviving features, then lexicographic node
/// indices. Throws NoViablePath.
PathCandidate find_best_path(const TrainingGraph &graph, const CostWeights &weights = {});

struct FamilyReport {
  FeatureFamily family = FeatureFamily::Corner;
  bool viable = false;
  double mean_oiou = 0.0;    // leave-one-image-out
  double seconds = 0.0;      // extraction + matching wall time
  std::string failure;       // set when not viable
};

struct FamilySelection {
  FeatureFamily family = FeatureFamily::Corner;
  std::vector<FamilyReport> reports;
};

/// Fastest viable family whose accuracy is within slack of the best one.
/// Throws AllFamiliesFailed.
FeatureFamily choose_family(std::span<const FamilyReport> reports, double accuracy_slack = 0.05);

FamilySelection select_feature_family(std::span<const TrainingSample> samples,
                                      std::span<const FeatureExtractor *const> extractors,
                                      double accuracy_slack = 0.05, const TrainingParams &params = {});
FamilySelection select_feature_family(std::span<const TrainingSample> samples,
                                      std::span<const FeatureFamily> families,
                                      double accuracy_slack = 0.05, const TrainingParams &params = {});

} // namespace saffire
