#include "saffire/anchor_model.hpp"
#include "saffire/detection.hpp"
#include "saffire/error.hpp"
#include "saffire/training.hpp"

#include <chrono>
#include <limits>

namespace saffire {

FeatureFamily choose_family(std::span<const FamilyReport> reports, double accuracy_slack) {
  double best = -std::numeric_limits<double>::infinity();
  for (const FamilyReport &r : reports)
    if (r.viable)
      best = std::max(best, r.mean_oiou);
  const FamilyReport *pick = nullptr;
  for (const FamilyReport &r : reports) {
    if (!r.viable || r.mean_oiou < best - accuracy_slack)
      continue;
    if (!pick || r.seconds < pick->seconds)
      pick = &r;
  }
  if (!pick)
    throw Error(ErrorCode::AllFamiliesFailed, "no feature family produced a viable model");
  return pick->family;
}

namespace {

FamilyReport evaluate_family(std::span<const TrainingSample> samples, const FeatureExtractor &extractor,
                             const TrainingParams &params) {
  using clock = std::chrono::steady_clock;
  FamilyReport rep;
  rep.family = extractor.family();

  std::vector<FeatureSet> sets;
  const auto t0 = clock::now();
  try {
    for (const TrainingSample &s : samples)
      sets.push_back(extract(s.image, extractor));
  } catch (const Error &e) {
    rep.failure = e.what();
    return rep;
  }
  for (std::size_t i = 1; i < sets.size(); ++i)
    (void)knn_match(sets[0], sets[i], params.knn);
  rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();

  try {
    (void)train(samples, sets, params);
  } catch (const Error &e) {
    rep.failure = e.what();
    return rep;
  }
  rep.viable = true;

  const std::size_t n = samples.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<TrainingSample> fold_samples;
    std::vector<FeatureSet> fold_sets;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j && n > 2)
        continue;
      fold_samples.push_back(samples[i]);
      fold_sets.push_back(sets[i]);
    }
    try {
      const TrainResult fold = train(fold_samples, std::move(fold_sets), params);
      const DetectionResult det = detect(fold.model, samples[j].image, sets[j]);
      if (det.best)
        sum += oriented_iou(det.best->roi, samples[j].roi);
    } catch (const Error &) {
      // A fold that cannot train scores zero.
    }
  }
  rep.mean_oiou = n ? sum / static_cast<double>(n) : 0.0;
  return rep;
}

} // namespace

FamilySelection select_feature_family(std::span<const TrainingSample> samples,
                                      std::span<const FeatureExtractor *const> extractors, double accuracy_slack,
                                      const TrainingParams &params) {
  if (extractors.empty())
    throw Error(ErrorCode::InvalidArgument, "no candidate feature families");
  if (samples.size() < 2)
    throw Error(ErrorCode::InsufficientTrainData,
                "need at least 2 training images, got " + std::to_string(samples.size()));
  FamilySelection out;
  for (const FeatureExtractor *e : extractors)
    out.reports.push_back(evaluate_family(samples, *e, params));
  out.family = choose_family(out.reports, accuracy_slack);
  return out;
}

FamilySelection select_feature_family(std::span<const TrainingSample> samples,
                                      std::span<const FeatureFamily> families, double accuracy_slack,
                                      const TrainingParams &params) {
  std::vector<std::unique_ptr<FeatureExtractor>> owned;
  std::vector<const FeatureExtractor *> ptrs;
  for (FeatureFamily f : families) {
    owned.push_back(make_extractor(f));
    ptrs.push_back(owned.back().get());
  }
  return select_feature_family(samples, ptrs, accuracy_slack, params);
}

} // namespace saffire
