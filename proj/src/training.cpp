#include "saffire/training.hpp"
#include "saffire/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace saffire {

namespace {

struct MatchPose {
  Point2 src;
  Point2 dst;
  double rotation;
  double scale;
};

struct Hypothesis {
  SimilarityTransform transform;
  std::vector<std::size_t> inliers; // positions into the remaining-match list
  double residual = 0.0;
};

bool is_inlier(const SimilarityTransform &h, const MatchPose &m, const RansacParams &p, double &err) {
  err = distance(apply(h, m.src), m.dst);
  if (err > p.pos_tol)
    return false;
  if (std::abs(normalize_angle(m.rotation - h.rotation)) > deg_to_rad(p.ang_tol_deg))
    return false;
  return std::abs(m.scale / h.scale - 1.0) <= p.scale_tol;
}

// Inliers of h among the remaining matches, one-to-one on both sides. A
// feature claimed twice keeps its lower-distance match.
Hypothesis score(const SimilarityTransform &h, std::span<const FeatureMatch> matches,
                 std::span<const MatchPose> poses, std::span<const std::size_t> remaining,
                 const RansacParams &p) {
  struct Cand {
    std::size_t slot;
    double err;
  };
  std::vector<Cand> cands;
  for (std::size_t s = 0; s < remaining.size(); ++s) {
    double err = 0.0;
    if (is_inlier(h, poses[remaining[s]], p, err))
      cands.push_back({s, err});
  }
  std::stable_sort(cands.begin(), cands.end(), [&](const Cand &a, const Cand &b) {
    const FeatureMatch &ma = matches[remaining[a.slot]];
    const FeatureMatch &mb = matches[remaining[b.slot]];
    if (ma.distance != mb.distance)
      return ma.distance < mb.distance;
    return a.err < b.err;
  });
  Hypothesis out{h, {}, 0.0};
  std::vector<std::size_t> used_ref, used_tgt;
  for (const Cand &c : cands) {
    const FeatureMatch &m = matches[remaining[c.slot]];
    if (std::find(used_ref.begin(), used_ref.end(), m.ref_index) != used_ref.end() ||
        std::find(used_tgt.begin(), used_tgt.end(), m.tgt_index) != used_tgt.end())
      continue;
    used_ref.push_back(m.ref_index);
    used_tgt.push_back(m.tgt_index);
    out.inliers.push_back(c.slot);
    out.residual += c.err;
  }
  std::sort(out.inliers.begin(), out.inliers.end());
  return out;
}

bool better(const Hypothesis &a, const Hypothesis &b) {
  if (a.inliers.size() != b.inliers.size())
    return a.inliers.size() > b.inliers.size();
  return a.residual < b.residual;
}

bool refit(const Hypothesis &h, std::span<const MatchPose> poses, std::span<const std::size_t> remaining,
           SimilarityTransform &out) {
  std::vector<Point2> src, dst;
  for (std::size_t slot : h.inliers) {
    src.push_back(poses[remaining[slot]].src);
    dst.push_back(poses[remaining[slot]].dst);
  }
  return fit_similarity(src, dst, out);
}

} // namespace

std::vector<GraphNode> cluster_matches(std::span<const FeatureMatch> matches, const FeatureSet &ref_set,
                                       const FeatureSet &tgt_set, const RansacParams &params,
                                       std::size_t layer) {
  std::vector<MatchPose> poses;
  poses.reserve(matches.size());
  for (const FeatureMatch &m : matches) {
    const Feature &a = ref_set.features.at(m.ref_index);
    const Feature &b = tgt_set.features.at(m.tgt_index);
    const SimilarityTransform t = match_to_transform(a, b);
    poses.push_back({a.position, b.position, t.rotation, t.scale});
  }

  std::vector<std::size_t> remaining(matches.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  const std::size_t min_cluster = std::max<std::size_t>(1, params.min_cluster);

  std::vector<GraphNode> nodes;
  while (remaining.size() >= min_cluster) {
    Hypothesis best;
    bool have = false;
    for (std::size_t s = 0; s < remaining.size(); ++s) {
      const FeatureMatch &m = matches[remaining[s]];
      const SimilarityTransform h =
          match_to_transform(ref_set.features[m.ref_index], tgt_set.features[m.tgt_index]);
      Hypothesis cand = score(h, matches, poses, remaining, params);
      if (!have || better(cand, best)) {
        best = std::move(cand);
        have = true;
      }
    }
    if (!have || best.inliers.size() < min_cluster)
      break;

    // Local optimization: refit on the inliers and re-score while that does
    // not lose support.
    for (int round = 0; round < params.refine_rounds; ++round) {
      SimilarityTransform fitted;
      if (!refit(best, poses, remaining, fitted))
        break;
      Hypothesis next = score(fitted, matches, poses, remaining, params);
      if (next.inliers.size() < best.inliers.size())
        break;
      const bool same = next.inliers == best.inliers;
      best = std::move(next);
      if (same)
        break;
    }
    SimilarityTransform final_t = best.transform;
    SimilarityTransform fitted;
    if (refit(best, poses, remaining, fitted))
      final_t = fitted;

    GraphNode node;
    node.layer = layer;
    node.transform = final_t;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t slot : best.inliers)
      pairs.emplace_back(matches[remaining[slot]].ref_index, matches[remaining[slot]].tgt_index);
    std::sort(pairs.begin(), pairs.end());
    for (const auto &[r, t] : pairs) {
      node.ref_indices.push_back(r);
      node.tgt_indices.push_back(t);
    }

    // Drop the inliers and anything else pointing at a claimed target feature,
    // so target sets of different nodes stay disjoint.
    std::vector<std::size_t> next;
    for (std::size_t s = 0; s < remaining.size(); ++s) {
      if (std::binary_search(best.inliers.begin(), best.inliers.end(), s))
        continue;
      const std::size_t t = matches[remaining[s]].tgt_index;
      if (std::find(node.tgt_indices.begin(), node.tgt_indices.end(), t) != node.tgt_indices.end())
        continue;
      next.push_back(remaining[s]);
    }
    remaining = std::move(next);
    nodes.push_back(std::move(node));
  }
  return nodes;
}

TrainingGraph build_graph(std::vector<FeatureSet> feature_sets, std::vector<OrientedRect> rois,
                          const TrainingParams &params) {
  if (feature_sets.size() < 2)
    throw Error(ErrorCode::InsufficientTrainData,
                "need at least 2 training images, got " + std::to_string(feature_sets.size()));
  if (rois.size() != feature_sets.size())
    throw Error(ErrorCode::InvalidArgument, "one ROI per training image required");
  for (const FeatureSet &fs : feature_sets)
    if (fs.family != feature_sets[0].family)
      throw Error(ErrorCode::FamilyMismatch, "training feature sets mix families");

  TrainingGraph g;
  g.family = feature_sets[0].family;
  g.feature_sets = std::move(feature_sets);
  g.rois = std::move(rois);
  const FeatureSet &ref = g.feature_sets[0];

  GraphNode root;
  root.layer = 0;
  root.ref_indices.resize(ref.size());
  std::iota(root.ref_indices.begin(), root.ref_indices.end(), std::size_t{0});
  root.tgt_indices = root.ref_indices;
  g.layers.push_back({std::move(root)});

  for (std::size_t i = 1; i < g.feature_sets.size(); ++i) {
    const FeatureSet &tgt = g.feature_sets[i];
    const auto knn = knn_match(ref, tgt, params.knn);
    const auto ratio = ratio_filter(knn, params.ratio);
    const auto filtered = geometric_filter(ratio, ref, tgt, g.rois[0], g.rois[i], params.geometric);
    auto nodes = cluster_matches(filtered, ref, tgt, params.ransac, i);
    if (nodes.empty())
      throw UntrainableImageError(i, "training image " + std::to_string(i) + " produced no consistent match cluster (" +
                                         std::to_string(filtered.size()) + " filtered matches)");
    g.layers.push_back(std::move(nodes));
  }
  return g;
}

TrainingGraph build_graph(std::span<const TrainingSample> samples, const FeatureExtractor &extractor,
                          const TrainingParams &params) {
  if (samples.size() < 2)
    throw Error(ErrorCode::InsufficientTrainData,
                "need at least 2 training images, got " + std::to_string(samples.size()));
  std::vector<FeatureSet> sets;
  std::vector<OrientedRect> rois;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      sets.push_back(extract(samples[i].image, extractor));
    } catch (const Error &e) {
      if (e.code() != ErrorCode::EmptyFeatureSet)
        throw;
      if (i == 0)
        throw;
      throw UntrainableImageError(i, "training image " + std::to_string(i) + " has no features");
    }
    rois.push_back(samples[i].roi);
  }
  return build_graph(std::move(sets), std::move(rois), params);
}

TrainingGraph build_graph(std::span<const TrainingSample> samples, FeatureFamily family,
                          const TrainingParams &params) {
  return build_graph(samples, *make_extractor(family), params);
}

std::vector<std::size_t> surviving_features(std::span<const GraphNode> nodes) {
  if (nodes.empty())
    return {};
  std::vector<std::size_t> acc = nodes[0].ref_indices;
  std::sort(acc.begin(), acc.end());
  std::vector<std::size_t> tmp, cur;
  for (std::size_t i = 1; i < nodes.size() && !acc.empty(); ++i) {
    cur = nodes[i].ref_indices;
    std::sort(cur.begin(), cur.end());
    tmp.clear();
    std::set_intersection(acc.begin(), acc.end(), cur.begin(), cur.end(), std::back_inserter(tmp));
    acc.swap(tmp);
  }
  return acc;
}

namespace {

void check_weights(const CostWeights &w) {
  if (!(w.w_feat >= 0.0) || !(w.w_roi >= 0.0) || !(w.w_feat + w.w_roi > 0.0))
    throw Error(ErrorCode::InvalidArgument, "cost weights must be non-negative with a positive sum");
}

double roi_deficit(const GraphNode &node, const OrientedRect &roi, const OrientedRect &ref_roi) {
  return 1.0 - oriented_iou(transform_rect(invert(node.transform), roi), ref_roi);
}

// Shared by path_cost and the search so both produce bit-identical values.
double combine(double w_feat, double w_roi, std::size_t surviving, std::size_t root,
               double deficit_sum, std::size_t layers) {
  const double feat = root == 0 ? 1.0 : 1.0 - static_cast<double>(surviving) / static_cast<double>(root);
  const double roi = layers <= 1 ? 0.0 : deficit_sum / static_cast<double>(layers - 1);
  return w_feat * feat + w_roi * roi;
}

} // namespace

double path_cost(std::span<const GraphNode> nodes, std::span<const OrientedRect> rois,
                 const CostWeights &weights) {
  if (nodes.empty())
    throw Error(ErrorCode::EmptyPath, "path has no nodes");
  check_weights(weights);
  if (rois.size() < nodes.size())
    throw Error(ErrorCode::InvalidArgument, "path longer than the ROI list");
  double deficit = 0.0;
  for (std::size_t i = 1; i < nodes.size(); ++i)
    deficit += roi_deficit(nodes[i], rois[i], rois[0]);
  return combine(weights.w_feat, weights.w_roi, surviving_features(nodes).size(),
                 nodes[0].ref_indices.size(), deficit, nodes.size());
}

double path_cost(const PathCandidate &path, std::span<const OrientedRect> rois, const CostWeights &weights) {
  return path_cost(std::span<const GraphNode>(path.nodes), rois, weights);
}

namespace {

struct Search {
  const TrainingGraph &g;
  CostWeights w;
  std::size_t layers;
  std::size_t root_count;
  std::vector<std::vector<double>> deficit = {};   // per layer, per node
  std::vector<std::vector<std::vector<std::size_t>>> sorted_refs = {};
  std::vector<double> min_rest = {};               // sum of the cheapest deficit over layers > l

  std::vector<std::size_t> choice = {};
  std::vector<std::vector<std::size_t>> survivors = {}; // per depth

  bool found = false;
  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t best_survivors = 0;
  std::vector<std::size_t> best_choice = {};

  void run(std::size_t depth, double deficit_sum) {
    if (depth == layers) {
      const std::size_t n = survivors[depth - 1].size();
      const double cost = combine(w.w_feat, w.w_roi, n, root_count, deficit_sum, layers);
      // DFS visits paths in lexicographic order, so an equal candidate never
      // displaces the incumbent.
      if (!found || cost < best_cost || (cost == best_cost && n > best_survivors)) {
        found = true;
        best_cost = cost;
        best_survivors = n;
        best_choice = choice;
      }
      return;
    }
    const auto &prev = survivors[depth - 1];
    for (std::size_t k = 0; k < g.layers[depth].size(); ++k) {
      auto &cur = survivors[depth];
      cur.clear();
      const auto &refs = sorted_refs[depth][k];
      std::set_intersection(prev.begin(), prev.end(), refs.begin(), refs.end(), std::back_inserter(cur));
      if (cur.empty())
        continue;
      const double partial = deficit_sum + deficit[depth][k];
      // The feature term can only grow and the remaining ROI deficits are at
      // least their per-layer minimum.
      const double bound = combine(w.w_feat, w.w_roi, cur.size(), root_count,
                                   partial + min_rest[depth], layers);
      if (found && bound > best_cost + 1e-12)
        continue;
      choice[depth] = k;
      run(depth + 1, partial);
    }
  }
};

} // namespace

PathCandidate find_best_path(const TrainingGraph &graph, const CostWeights &weights) {
  check_weights(weights);
  if (graph.layers.empty() || graph.layers[0].size() != 1)
    throw Error(ErrorCode::InvalidArgument, "graph must start with a single root node");
  if (graph.rois.size() < graph.layers.size())
    throw Error(ErrorCode::InvalidArgument, "graph has fewer ROIs than layers");
  for (std::size_t l = 0; l < graph.layers.size(); ++l)
    if (graph.layers[l].empty())
      throw Error(ErrorCode::NoViablePath, "layer " + std::to_string(l) + " has no nodes");

  Search s{graph, weights, graph.layers.size(), graph.layers[0][0].ref_indices.size()};
  s.deficit.resize(s.layers);
  s.sorted_refs.resize(s.layers);
  for (std::size_t l = 0; l < s.layers; ++l) {
    for (const GraphNode &n : graph.layers[l]) {
      s.deficit[l].push_back(l == 0 ? 0.0 : roi_deficit(n, graph.rois[l], graph.rois[0]));
      auto refs = n.ref_indices;
      std::sort(refs.begin(), refs.end());
      s.sorted_refs[l].push_back(std::move(refs));
    }
  }
  s.min_rest.assign(s.layers, 0.0);
  for (std::size_t l = s.layers; l-- > 1;) {
    const double m = *std::min_element(s.deficit[l].begin(), s.deficit[l].end());
    s.min_rest[l - 1] = s.min_rest[l] + m;
  }
  s.choice.assign(s.layers, 0);
  s.survivors.resize(s.layers);
  s.survivors[0] = s.sorted_refs[0][0];

  if (!s.survivors[0].empty()) {
    if (s.layers == 1) {
      s.found = true;
      s.best_choice = s.choice;
    } else {
      s.run(1, 0.0);
    }
  }
  if (!s.found)
    throw Error(ErrorCode::NoViablePath, "every root-to-leaf path loses all features");

  PathCandidate out;
  out.node_indices = s.best_choice;
  for (std::size_t l = 0; l < s.layers; ++l)
    out.nodes.push_back(graph.layers[l][s.best_choice[l]]);
  out.surviving_features = surviving_features(out.nodes);
  double deficit = 0.0;
  for (std::size_t l = 1; l < s.layers; ++l)
    deficit += s.deficit[l][s.best_choice[l]];
  out.cost = combine(weights.w_feat, weights.w_roi, out.surviving_features.size(), s.root_count, deficit,
                     s.layers);
  return out;
}

} // namespace saffire
