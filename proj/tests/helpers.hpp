#pragma once

#include "saffire/anchor_model.hpp"
#include "saffire/training.hpp"
#include "saffire/synthgen.hpp"

#include <opencv2/core.hpp>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

using namespace saffire;

inline std::vector<TrainingSample> as_training(const std::vector<GeneratedSample> &samples) {
  std::vector<TrainingSample> out;
  for (const GeneratedSample &s : samples)
    out.push_back({s.image, s.roi});
  return out;
}

// Training draws stay inside the +/-5% scale band so that every pair of
// training images is within the matcher's relative-scale window.
inline SceneSpec training_spec(SceneSpec spec) {
  spec.pose_jitter.scale_low = 0.95;
  spec.pose_jitter.scale_high = 1.05;
  return spec;
}

inline constexpr std::size_t kTrainIndexBase = 1000;

inline bool near_mask(const cv::Mat &mask, Point2 p, int radius = 3) {
  const int x = static_cast<int>(std::lround(p.x)), y = static_cast<int>(std::lround(p.y));
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const int xx = x + dx, yy = y + dy;
      if (xx >= 0 && yy >= 0 && xx < mask.cols && yy < mask.rows && mask.at<unsigned char>(yy, xx))
        return true;
    }
  return false;
}

inline const cv::Mat &mask_of(const GeneratedSample &s, ShapeTag tag) {
  for (const ShapeMask &m : s.shape_masks)
    if (m.shape == tag)
      return m.mask;
  static const cv::Mat none;
  return none;
}

// Fraction of model features (reference frame = sample 0) lying on a shape.
inline double fraction_on(const AnchorModel &model, const GeneratedSample &reference, ShapeTag tag) {
  if (model.features.empty())
    return 0.0;
  const cv::Mat &mask = mask_of(reference, tag);
  std::size_t on = 0;
  for (const Feature &f : model.features)
    on += near_mask(mask, f.position);
  return static_cast<double>(on) / static_cast<double>(model.features.size());
}

inline SimilarityTransform random_similarity(std::mt19937_64 &rng, double max_shift = 100.0) {
  std::uniform_real_distribution<double> s(0.5, 2.0), r(-kPi, kPi), t(-max_shift, max_shift);
  return {s(rng), r(rng), t(rng), t(rng)};
}

inline OrientedRect random_rect(std::mt19937_64 &rng, double extent = 20.0) {
  std::uniform_real_distribution<double> c(-extent, extent), d(0.5, extent), o(-kPi, kPi);
  return {{c(rng), c(rng)}, d(rng), d(rng), o(rng)};
}

// Small layered graph with random feature subsets, near-identity
// transforms and occasional duplicate nodes to exercise tie-breaking.
inline TrainingGraph random_graph(std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> layers_d(1, 4), nodes_d(1, 5), root_d(3, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0), jitter(-0.15, 0.15);
  TrainingGraph g;
  const int layers = layers_d(rng);
  const std::size_t root = static_cast<std::size_t>(root_d(rng));
  const OrientedRect roi0{{50, 40}, 30, 20, -kPi / 2};
  g.rois.push_back(roi0);
  GraphNode r;
  for (std::size_t k = 0; k < root; ++k) {
    r.ref_indices.push_back(k);
    r.tgt_indices.push_back(k);
  }
  g.layers.push_back({r});
  for (int l = 1; l < layers; ++l) {
    const SimilarityTransform truth{1.0 + 0.1 * jitter(rng), jitter(rng), 40 * jitter(rng), 40 * jitter(rng)};
    g.rois.push_back(transform_rect(truth, roi0));
    std::vector<GraphNode> nodes;
    const int n = nodes_d(rng);
    for (int k = 0; k < n; ++k) {
      if (!nodes.empty() && u(rng) < 0.25) {
        nodes.push_back(nodes[static_cast<std::size_t>(u(rng) * double(nodes.size()))]);
        continue;
      }
      GraphNode node;
      node.layer = static_cast<std::size_t>(l);
      // A few nodes carry the exact ROI transform so that ROI terms tie too.
      node.transform = u(rng) < 0.3 ? truth
                                    : compose(truth, SimilarityTransform{1.0 + 0.2 * jitter(rng), 3 * jitter(rng),
                                                                         30 * jitter(rng), 30 * jitter(rng)});
      const double keep = 0.4 + 0.5 * u(rng);
      for (std::size_t f = 0; f < root; ++f)
        if (u(rng) < keep) {
          node.ref_indices.push_back(f);
          node.tgt_indices.push_back(f);
        }
      nodes.push_back(node);
    }
    g.layers.push_back(nodes);
  }
  return g;
}

struct PlantedMatches {
  FeatureSet ref;
  FeatureSet tgt;
  std::vector<FeatureMatch> matches;
};

// ref features 0..inliers-1 map onto tgt through `truth`; the remaining
// matches point at unrelated random target features. Inliers get up to
// `noise` px of position error, `noise` degrees of direction error and
// `noise` percent of size error.
inline PlantedMatches planted_matches(std::mt19937_64 &rng, const SimilarityTransform &truth, std::size_t inliers,
                                      std::size_t outliers, double noise = 0.0) {
  std::uniform_real_distribution<double> pos(0.0, 600.0), dir(-kPi, kPi), size(8.0, 40.0), dist(0.0, 1.0),
      e(-1.0, 1.0);
  PlantedMatches p;
  for (std::size_t i = 0; i < inliers + outliers; ++i) {
    const Feature f{{pos(rng), pos(rng)}, dir(rng), size(rng)};
    p.ref.features.push_back(f);
    p.ref.descriptors.push_back({1.0f});
    Feature g;
    if (i < inliers) {
      const Point2 at = apply(truth, f.position);
      g = {{at.x + noise * e(rng), at.y + noise * e(rng)},
           normalize_angle(f.direction + truth.rotation + deg_to_rad(noise * e(rng))),
           f.size * truth.scale * (1.0 + 0.01 * noise * e(rng))};
    }
    else
      g = {{pos(rng), pos(rng)}, dir(rng), size(rng)};
    p.tgt.features.push_back(g);
    p.tgt.descriptors.push_back({1.0f});
    p.matches.push_back({i, i, dist(rng)});
  }
  p.ref.source_size = p.tgt.source_size = {640, 640};
  return p;
}

// Trained once per process and shared between test cases.
inline const TrainResult &textured_model() {
  static const TrainResult r =
      train(as_training(generate(training_spec(textured_preset()), 3, kTrainIndexBase)), FeatureFamily::Corner);
  return r;
}

// The dual-instance anchor trained without its content-free copy.
inline SceneSpec decoy_free(SceneSpec spec) {
  spec.distractors.erase(spec.distractors.begin());
  return spec;
}

inline const TrainResult &dual_model() {
  static const TrainResult r = train(
      as_training(generate(training_spec(decoy_free(dual_instance_preset())), 3, kTrainIndexBase)),
      FeatureFamily::Corner);
  return r;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string &name) {
    path = std::filesystem::temp_directory_path() / ("saffire_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

} // namespace testing_support
