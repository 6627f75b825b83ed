#include "saffire/detection.hpp"
#include "saffire/error.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

namespace saffire {

namespace {

using Key = std::array<int, 4>; // tx, ty, rot, scale

Key key_of(const PoseBin &b) { return {b.tx_bin, b.ty_bin, b.rot_bin, b.scale_bin}; }

int rotation_bin_count(const DetectionParams &p) {
  return std::max(1, static_cast<int>(std::lround(360.0 / p.rotation_bin_deg)));
}

FeatureSet model_feature_set(const AnchorModel &model) {
  FeatureSet fs;
  fs.family = model.family;
  fs.features = model.features;
  fs.descriptors = model.descriptors;
  return fs;
}

Point2 feature_centroid(const AnchorModel &model) {
  Point2 c;
  for (const Feature &f : model.features)
    c = c + f.position;
  return (1.0 / static_cast<double>(std::max<std::size_t>(1, model.features.size()))) * c;
}

// Primary cell and the nearer neighbour along one axis.
std::array<int, 2> cell_pair(double v) {
  const double b = std::floor(v);
  const int i = static_cast<int>(b);
  return {i, v - b < 0.5 ? i - 1 : i + 1};
}

double elapsed_us(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - since).count();
}

} // namespace

std::vector<FeatureMatch> match_to_model(const AnchorModel &model, const FeatureSet &scene,
                                         const DetectionParams &params) {
  if (scene.family != model.family)
    throw Error(ErrorCode::FamilyMismatch, std::string("scene family ") + std::string(to_string(scene.family)) +
                                               ", model family " + std::string(to_string(model.family)));
  const FeatureSet model_set = model_feature_set(model);
  if (model_set.empty() || scene.empty())
    return {};
  const auto knn = knn_match(scene, model_set, params.knn);
  const auto kept = ratio_filter(knn, params.ratio);
  std::vector<FeatureMatch> out;
  out.reserve(kept.size());
  for (const FeatureMatch &m : kept)
    out.push_back({m.tgt_index, m.ref_index, m.distance});
  return out;
}

std::vector<PoseBin> ght_vote(const AnchorModel &model, const FeatureSet &scene,
                              std::span<const FeatureMatch> matches, const DetectionParams &params) {
  if (scene.family != model.family)
    throw Error(ErrorCode::FamilyMismatch, "scene and model feature families differ");
  const double t_bin = params.translation_bin * std::hypot(model.roi_model.width, model.roi_model.height);
  const double r_bin = deg_to_rad(params.rotation_bin_deg);
  const int n_rot = rotation_bin_count(params);
  const double s_lo = std::log(params.scale_low);
  const double s_hi = std::log(params.scale_high);
  const double s_w = s_hi - s_lo;
  const Point2 centroid = feature_centroid(model);

  std::map<Key, PoseBin> acc;
  for (const FeatureMatch &m : matches) {
    const Feature &mf = model.features.at(m.ref_index);
    const Feature &sf = scene.features.at(m.tgt_index);
    const SimilarityTransform t = match_to_transform(mf, sf);

    const double ls = std::log(t.scale);
    int s_bin;
    if (ls >= s_lo && ls <= s_hi)
      s_bin = 0;
    else if (ls < s_lo && ls >= s_lo - s_w)
      s_bin = -1;
    else if (ls > s_hi && ls <= s_hi + s_w)
      s_bin = 1;
    else
      continue;

    const Point2 ref = apply(t, centroid);
    const auto xs = cell_pair(ref.x / t_bin);
    const auto ys = cell_pair(ref.y / t_bin);
    auto rs = cell_pair((t.rotation + kPi) / r_bin);
    for (int &r : rs)
      r = ((r % n_rot) + n_rot) % n_rot;

    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 2; ++c) {
          const Key k{xs[a], ys[b], rs[c], s_bin};
          auto [it, inserted] = acc.try_emplace(k);
          PoseBin &bin = it->second;
          if (inserted) {
            bin.tx_bin = k[0];
            bin.ty_bin = k[1];
            bin.rot_bin = k[2];
            bin.scale_bin = k[3];
          }
          bin.votes.push_back(m);
          if (a == 0 && b == 0 && c == 0)
            ++bin.primary_votes;
        }
      }
    }
  }
  std::vector<PoseBin> out;
  out.reserve(acc.size());
  for (auto &[k, bin] : acc)
    out.push_back(std::move(bin));
  return out;
}

std::vector<PoseBin> ght_vote(const AnchorModel &model, const FeatureSet &scene, const DetectionParams &params) {
  const auto matches = match_to_model(model, scene, params);
  return ght_vote(model, scene, matches, params);
}

std::vector<PoseBin> prune_peaks(std::span<const PoseBin> bins, std::size_t min_peak, double rel_threshold,
                                 int rotation_bins) {
  if (!(rel_threshold > 0.0) || rel_threshold > 1.0)
    throw Error(ErrorCode::InvalidArgument, "rel_threshold must lie in (0, 1]");
  std::size_t max_votes = 0;
  std::map<Key, std::size_t> index;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    max_votes = std::max(max_votes, bins[i].votes.size());
    index.emplace(key_of(bins[i]), i);
  }
  const double threshold =
      std::max(static_cast<double>(min_peak), rel_threshold * static_cast<double>(max_votes));

  std::vector<PoseBin> out;
  for (const PoseBin &b : bins) {
    const double v = static_cast<double>(b.votes.size());
    if (v < threshold || b.votes.empty())
      continue;
    const Key kb = key_of(b);
    bool is_max = true;
    for (int dx = -1; dx <= 1 && is_max; ++dx) {
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dr = -1; dr <= 1 && is_max; ++dr) {
          for (int ds = -1; ds <= 1 && is_max; ++ds) {
            if (dx == 0 && dy == 0 && dr == 0 && ds == 0)
              continue;
            int r = kb[2] + dr;
            if (rotation_bins > 0)
              r = ((r % rotation_bins) + rotation_bins) % rotation_bins;
            const Key kn{kb[0] + dx, kb[1] + dy, r, kb[3] + ds};
            if (kn == kb)
              continue;
            const auto it = index.find(kn);
            if (it == index.end())
              continue;
            const std::size_t nv = bins[it->second].votes.size();
            if (nv > b.votes.size() || (nv == b.votes.size() && kn < kb))
              is_max = false;
          }
        }
      }
    }
    if (is_max)
      out.push_back(b);
  }
  return out;
}

DetectionCandidate refine_and_place(const PoseBin &bin, const AnchorModel &model, const FeatureSet &scene,
                                    const DetectionParams &params) {
  if (bin.votes.empty())
    throw Error(ErrorCode::InvalidArgument, "empty pose bin");
  const std::size_t n = bin.votes.size();
  std::vector<Point2> src(n), dst(n);
  std::vector<SimilarityTransform> single(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Feature &mf = model.features.at(bin.votes[i].ref_index);
    const Feature &sf = scene.features.at(bin.votes[i].tgt_index);
    src[i] = mf.position;
    dst[i] = sf.position;
    single[i] = match_to_transform(mf, sf);
  }

  // Lowest-distance vote; earlier votes win ties.
  std::size_t best_vote = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (bin.votes[i].distance < bin.votes[best_vote].distance)
      best_vote = i;

  const auto inliers_of = [&](const SimilarityTransform &t, double tol) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < n; ++i)
      if (distance(apply(t, src[i]), dst[i]) <= tol)
        in.push_back(i);
    return in;
  };
  const auto fit = [&](const std::vector<std::size_t> &in, SimilarityTransform &out) {
    std::vector<Point2> a, b;
    for (std::size_t i : in) {
      a.push_back(src[i]);
      b.push_back(dst[i]);
    }
    return fit_similarity(a, b, out);
  };

  // Consensus seed among the single-vote transforms, then residual-gated refits.
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i) {
    auto in = inliers_of(single[i], 2.0 * params.refit_tol);
    if (in.size() > support.size())
      support = std::move(in);
  }
  SimilarityTransform t = single[best_vote];
  bool fitted = false;
  for (int round = 0; round < 4; ++round) {
    SimilarityTransform next;
    if (!fit(support, next))
      break;
    t = next;
    fitted = true;
    auto in = inliers_of(t, params.refit_tol);
    if (in.size() < 2 || in == support)
      break;
    support = std::move(in);
  }
  if (!fitted)
    t = single[best_vote];

  DetectionCandidate c;
  c.transform = t;
  c.roi = transform_rect(t, model.roi_model);
  c.vote_count = n;
  return c;
}

DetectionResult rank_by_content(std::vector<DetectionCandidate> candidates, const cv::Mat &image,
                                const AnchorModel &model) {
  DetectionResult r;
  for (DetectionCandidate &c : candidates) {
    try {
      const auto d = roi_content_descriptor(image, c.roi);
      c.content_distance = weighted_distance(d, model.roi_descriptor, model.roi_weights);
      r.candidates.push_back(c);
    } catch (const Error &e) {
      if (e.code() != ErrorCode::RoiOutsideImage)
        throw;
    }
  }
  std::stable_sort(r.candidates.begin(), r.candidates.end(),
                   [](const DetectionCandidate &a, const DetectionCandidate &b) {
                     if (a.content_distance != b.content_distance)
                       return a.content_distance < b.content_distance;
                     if (a.vote_count != b.vote_count)
                       return a.vote_count > b.vote_count;
                     return a.bin_index < b.bin_index;
                   });
  if (!r.candidates.empty())
    r.best = r.candidates.front();
  return r;
}

DetectionResult detect(const AnchorModel &model, const cv::Mat &image, const FeatureSet &scene,
                       const DetectionParams &params) {
  using clock = std::chrono::steady_clock;
  if (model.features.empty())
    throw Error(ErrorCode::EmptyModel, "model has no features");
  StageTimings timings;

  auto t0 = clock::now();
  const auto matches = match_to_model(model, scene, params);
  timings.matching_us = elapsed_us(t0);

  t0 = clock::now();
  const auto bins = ght_vote(model, scene, matches, params);
  const auto peaks = prune_peaks(bins, params.min_peak, params.rel_threshold, rotation_bin_count(params));
  std::vector<DetectionCandidate> placed;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    DetectionCandidate c = refine_and_place(peaks[i], model, scene, params);
    c.bin_index = i;
    placed.push_back(c);
  }
  // Neighbouring peaks of one instance refine to the same pose; keep the
  // better-supported one.
  std::vector<std::size_t> order(placed.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return placed[a].vote_count > placed[b].vote_count; });
  std::vector<DetectionCandidate> unique;
  for (std::size_t i : order) {
    bool dup = false;
    for (const DetectionCandidate &u : unique)
      if (oriented_iou(u.roi, placed[i].roi) > params.duplicate_oiou) {
        dup = true;
        break;
      }
    if (!dup)
      unique.push_back(placed[i]);
  }
  std::sort(unique.begin(), unique.end(),
            [](const DetectionCandidate &a, const DetectionCandidate &b) { return a.bin_index < b.bin_index; });
  timings.ght_us = elapsed_us(t0);

  t0 = clock::now();
  DetectionResult result = rank_by_content(std::move(unique), image, model);
  timings.ranking_us = elapsed_us(t0);
  result.timings = timings;
  if (!result.best)
    result.diagnostic = peaks.empty() ? "no accumulator peak" : "every candidate ROI left the image";
  return result;
}

DetectionResult detect(const AnchorModel &model, const cv::Mat &image, const DetectionParams &params) {
  const auto t0 = std::chrono::steady_clock::now();
  FeatureSet scene;
  try {
    scene = extract(image, model.family);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::EmptyFeatureSet)
      throw;
    DetectionResult r;
    r.timings.extraction_us = elapsed_us(t0);
    r.diagnostic = e.what();
    return r;
  }
  const double extraction = elapsed_us(t0);
  DetectionResult r = detect(model, image, scene, params);
  r.timings.extraction_us = extraction;
  return r;
}

} // namespace saffire
