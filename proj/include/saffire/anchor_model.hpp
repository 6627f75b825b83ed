#pragma once

#include "saffire/features.hpp"
#include "saffire/geometry.hpp"
#include "saffire/training.hpp"

#include <opencv2/core.hpp>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace saffire {

inline constexpr std::size_t kRoiDescriptorSize = 48;
inline constexpr std::size_t kRoiHistogramBins = 16;
inline constexpr int kRoiGrid = 64;
/// Gradient magnitudes (gray levels per pixel) above this land in the last bin.
inline constexpr double kRoiGradientClamp = 64.0;
inline constexpr double kRoiDilation = 1.05;
/// Gaussian pre-smoothing of the raster before ROI sampling, pixels.
inline constexpr double kRoiSmoothingSigma = 1.5;
inline constexpr int kModelFormatVersion = 1;

struct ModelProvenance {
  TrainingParams params;
  std::size_t train_images = 0;
  std::string dataset_digest; // SHA-256 over the training rasters and ROIs
  double path_cost = 0.0;

  friend bool operator==(const ModelProvenance &, const ModelProvenance &) = default;
};

struct AnchorModel {
  FeatureFamily family = FeatureFamily::Corner;
  std::vector<Feature> features;          // reference frame
  std::vector<Descriptor> descriptors;    // mean over the path, re-normalized
  std::vector<Descriptor> descriptor_variance;
  OrientedRect roi_model;
  std::vector<double> roi_descriptor;     // kRoiDescriptorSize
  std::vector<double> roi_weights;        // kRoiDescriptorSize, in [0, 1]
  ModelProvenance provenance;

  friend bool operator==(const AnchorModel &, const AnchorModel &) = default;
};

/// Intensity, gradient magnitude and ROI-relative gradient orientation
/// histograms (16 bins each, each summing to 1) over a 64x64 grid spanning
/// the ROI from its origin corner. Throws RoiOutsideImage.
std::vector<double> roi_content_descriptor(const cv::Mat &image, const OrientedRect &roi);

struct RoiStats {
  std::vector<double> mean;
  std::vector<double> weights;
};

/// Per-bin mean and weights 1 - (var - min) / (max - min + 1e-12).
RoiStats roi_descriptor_stats(std::span<const std::vector<double>> descriptors);

/// sqrt(sum w_i (a_i - b_i)^2). Throws LengthMismatch.
double weighted_distance(std::span<const double> d_test, std::span<const double> d_model,
                         std::span<const double> w);

/// images[i] is the raster behind graph layer i.
AnchorModel build_model(const TrainingGraph &graph, const PathCandidate &path,
                        std::span<const cv::Mat> images, ModelProvenance provenance = {});

/// SHA-256 hex over the rasters and ROI encodings, used as dataset provenance.
std::string dataset_digest(std::span<const TrainingSample> samples);

struct TrainResult {
  AnchorModel model;
  TrainingGraph graph;
  PathCandidate path;
};

/// build_graph + find_best_path + build_model.
TrainResult train(std::span<const TrainingSample> samples, const FeatureExtractor &extractor,
                  const TrainingParams &params = {});
TrainResult train(std::span<const TrainingSample> samples, FeatureFamily family,
                  const TrainingParams &params = {});
/// Same, starting from already extracted feature sets (sets[i] from samples[i]).
TrainResult train(std::span<const TrainingSample> samples, std::vector<FeatureSet> sets,
                  const TrainingParams &params = {});

std::string serialize_model(const AnchorModel &model);
AnchorModel deserialize_model(const std::string &text);
void save_model(const AnchorModel &model, const std::filesystem::path &path);
AnchorModel load_model(const std::filesystem::path &path);

} // namespace saffire
