#include "saffire/anchor_model.hpp"
#include "saffire/error.hpp"

#include "feature_families.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace saffire {

namespace {

constexpr int kHist = static_cast<int>(kRoiHistogramBins);

// Linear split between the two nearest bin centres; mass past the ends stays
// in the edge bin.
void soft_bin(double *hist, double value, double range, double weight) {
  const double pos = value / range * kHist - 0.5;
  const double b0 = std::floor(pos);
  const double f = pos - b0;
  const int i0 = std::clamp(static_cast<int>(b0), 0, kHist - 1);
  const int i1 = std::clamp(static_cast<int>(b0) + 1, 0, kHist - 1);
  hist[i0] += weight * (1.0 - f);
  hist[i1] += weight * f;
}

void soft_bin_circular(double *hist, double angle, double weight) {
  const double pos = (angle + kPi) / (2.0 * kPi) * kHist - 0.5;
  const double b0 = std::floor(pos);
  const double f = pos - b0;
  const int i0 = ((static_cast<int>(b0) % kHist) + kHist) % kHist;
  const int i1 = (i0 + 1) % kHist;
  hist[i0] += weight * (1.0 - f);
  hist[i1] += weight * f;
}

void l1_normalize(double *hist) {
  double s = 0.0;
  for (int i = 0; i < kHist; ++i)
    s += hist[i];
  if (s > 0.0) {
    for (int i = 0; i < kHist; ++i)
      hist[i] /= s;
  } else {
    for (int i = 0; i < kHist; ++i)
      hist[i] = 1.0 / kHist;
  }
}

std::string to_hex(const unsigned char *data, unsigned int len) {
  static const char *digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xf]);
  }
  return out;
}

class Sha256 {
public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw Error(ErrorCode::IoError, "SHA-256 unavailable");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256 &) = delete;
  Sha256 &operator=(const Sha256 &) = delete;

  void update(const void *data, std::size_t len) { EVP_DigestUpdate(ctx_, data, len); }
  void update(const std::string &s) { update(s.data(), s.size()); }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return to_hex(md, len);
  }

private:
  EVP_MD_CTX *ctx_;
};

std::string sha256_hex(const std::string &text) {
  Sha256 h;
  h.update(text);
  return h.hex();
}

} // namespace

std::vector<double> roi_content_descriptor(const cv::Mat &image, const OrientedRect &roi) {
  cv::Mat gray = to_gray(image);

  const Quad c = corners(roi);
  const Point2 ax = c[1] - c[0];
  const Point2 ay = c[3] - c[0];
  const double lx = std::hypot(ax.x, ax.y);
  const double ly = std::hypot(ay.x, ay.y);
  const Point2 ex = (1.0 / lx) * ax;
  const Point2 ey = (1.0 / ly) * ay;
  const double max_x = gray.cols - 1.0;
  const double max_y = gray.rows - 1.0;

  // Smooth only the window the samples can reach, with room for the kernel.
  const int margin = static_cast<int>(std::ceil(4.0 * kRoiSmoothingSigma)) + 4;
  double bx0 = c[0].x, by0 = c[0].y, bx1 = c[0].x, by1 = c[0].y;
  for (const Point2 &q : c) {
    bx0 = std::min(bx0, q.x);
    by0 = std::min(by0, q.y);
    bx1 = std::max(bx1, q.x);
    by1 = std::max(by1, q.y);
  }
  const int x0 = std::clamp(static_cast<int>(std::floor(bx0)) - margin, 0, gray.cols);
  const int y0 = std::clamp(static_cast<int>(std::floor(by0)) - margin, 0, gray.rows);
  const int x1 = std::clamp(static_cast<int>(std::ceil(bx1)) + margin + 1, 0, gray.cols);
  const int y1 = std::clamp(static_cast<int>(std::ceil(by1)) + margin + 1, 0, gray.rows);
  if (x1 - x0 < 2 || y1 - y0 < 2)
    throw Error(ErrorCode::RoiOutsideImage, "ROI does not overlap the image");
  cv::Mat img;
  gray(cv::Rect(x0, y0, x1 - x0, y1 - y0)).convertTo(img, CV_32F);
  cv::GaussianBlur(img, img, cv::Size(), kRoiSmoothingSigma);
  const double ox = x0, oy = y0;

  std::vector<double> d(kRoiDescriptorSize, 0.0);
  double *intensity = d.data();
  double *magnitude = d.data() + kHist;
  double *orientation = d.data() + 2 * kHist;

  std::size_t inside = 0;
  for (int j = 0; j < kRoiGrid; ++j) {
    for (int i = 0; i < kRoiGrid; ++i) {
      const double u = (i + 0.5) / kRoiGrid;
      const double v = (j + 0.5) / kRoiGrid;
      const Point2 p = c[0] + u * ax + v * ay;
      if (p.x < 0.0 || p.y < 0.0 || p.x > max_x || p.y > max_y)
        continue;
      ++inside;
      const double px = p.x - ox, py = p.y - oy;
      const double value = detail::sample_bilinear(img, px, py);
      const double gx = 0.5 * (detail::sample_bilinear(img, px + ex.x, py + ex.y) -
                               detail::sample_bilinear(img, px - ex.x, py - ex.y));
      const double gy = 0.5 * (detail::sample_bilinear(img, px + ey.x, py + ey.y) -
                               detail::sample_bilinear(img, px - ey.x, py - ey.y));
      const double mag = std::hypot(gx, gy);
      soft_bin(intensity, value, 256.0, 1.0);
      soft_bin(magnitude, std::min(mag, kRoiGradientClamp), kRoiGradientClamp, 1.0);
      if (mag > 0.0)
        soft_bin_circular(orientation, std::atan2(gy, gx), mag);
    }
  }
  if (4 * inside < static_cast<std::size_t>(kRoiGrid * kRoiGrid))
    throw Error(ErrorCode::RoiOutsideImage, "fewer than 25% of ROI samples fall inside the image");
  l1_normalize(intensity);
  l1_normalize(magnitude);
  l1_normalize(orientation);
  return d;
}

RoiStats roi_descriptor_stats(std::span<const std::vector<double>> descriptors) {
  if (descriptors.empty())
    throw Error(ErrorCode::EmptyInput, "no ROI descriptors");
  const std::size_t n = descriptors[0].size();
  for (const auto &d : descriptors)
    if (d.size() != n)
      throw Error(ErrorCode::LengthMismatch, "ROI descriptors differ in length");

  // Running mean: exact when all inputs agree.
  RoiStats out;
  out.mean = descriptors[0];
  for (std::size_t k = 1; k < descriptors.size(); ++k)
    for (std::size_t i = 0; i < n; ++i)
      out.mean[i] += (descriptors[k][i] - out.mean[i]) / static_cast<double>(k + 1);
  const double inv = 1.0 / static_cast<double>(descriptors.size());

  std::vector<double> var(n, 0.0);
  for (const auto &d : descriptors)
    for (std::size_t i = 0; i < n; ++i)
      var[i] += (d[i] - out.mean[i]) * (d[i] - out.mean[i]);
  for (double &v : var)
    v *= inv;
  if (n == 0)
    return out;
  const auto [lo, hi] = std::minmax_element(var.begin(), var.end());
  const double vmin = *lo, vmax = *hi;
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.weights[i] = std::clamp(1.0 - (var[i] - vmin) / (vmax - vmin + 1e-12), 0.0, 1.0);
  return out;
}

double weighted_distance(std::span<const double> d_test, std::span<const double> d_model,
                         std::span<const double> w) {
  if (d_test.size() != d_model.size() || d_test.size() != w.size())
    throw Error(ErrorCode::LengthMismatch, "descriptor lengths " + std::to_string(d_test.size()) + ", " +
                                               std::to_string(d_model.size()) + ", weights " +
                                               std::to_string(w.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < d_test.size(); ++i) {
    const double diff = d_test[i] - d_model[i];
    s += w[i] * diff * diff;
  }
  return std::sqrt(s);
}

AnchorModel build_model(const TrainingGraph &graph, const PathCandidate &path, std::span<const cv::Mat> images,
                        ModelProvenance provenance) {
  if (path.surviving_features.empty())
    throw Error(ErrorCode::EmptyModel, "best path keeps no reference features");
  if (path.nodes.size() != graph.layers.size() || images.size() != graph.layers.size())
    throw Error(ErrorCode::InvalidArgument, "path, graph and image list disagree in length");

  const FeatureSet &ref = graph.feature_sets.at(0);
  AnchorModel m;
  m.family = graph.family;
  for (std::size_t r : path.surviving_features) {
    std::vector<const Descriptor *> samples{&ref.descriptors.at(r)};
    for (std::size_t l = 1; l < path.nodes.size(); ++l) {
      const GraphNode &node = path.nodes[l];
      const auto it = std::lower_bound(node.ref_indices.begin(), node.ref_indices.end(), r);
      if (it == node.ref_indices.end() || *it != r)
        throw Error(ErrorCode::InvalidArgument, "surviving feature missing from a path node");
      const std::size_t t = node.tgt_indices[static_cast<std::size_t>(it - node.ref_indices.begin())];
      samples.push_back(&graph.feature_sets.at(l).descriptors.at(t));
    }
    const std::size_t len = samples[0]->size();
    std::vector<double> mean(len, 0.0), var(len, 0.0);
    for (const Descriptor *d : samples)
      for (std::size_t i = 0; i < len; ++i)
        mean[i] += (*d)[i];
    for (double &v : mean)
      v /= static_cast<double>(samples.size());
    for (const Descriptor *d : samples)
      for (std::size_t i = 0; i < len; ++i)
        var[i] += ((*d)[i] - mean[i]) * ((*d)[i] - mean[i]);

    Descriptor desc(len), dvar(len);
    if (samples.size() == 1) {
      desc = *samples[0];
    } else {
      for (std::size_t i = 0; i < len; ++i)
        desc[i] = static_cast<float>(mean[i]);
      detail::l2_normalize(desc);
    }
    for (std::size_t i = 0; i < len; ++i)
      dvar[i] = static_cast<float>(var[i] / static_cast<double>(samples.size()));

    m.features.push_back(ref.features.at(r));
    m.descriptors.push_back(std::move(desc));
    m.descriptor_variance.push_back(std::move(dvar));
  }

  m.roi_model = scale_rect(graph.rois.at(0), kRoiDilation);
  std::vector<std::vector<double>> per_image;
  for (std::size_t l = 0; l < images.size(); ++l)
    per_image.push_back(roi_content_descriptor(images[l], scale_rect(graph.rois.at(l), kRoiDilation)));
  RoiStats stats = roi_descriptor_stats(per_image);
  m.roi_descriptor = std::move(stats.mean);
  m.roi_weights = std::move(stats.weights);
  provenance.path_cost = path.cost;
  m.provenance = std::move(provenance);
  return m;
}

std::string dataset_digest(std::span<const TrainingSample> samples) {
  Sha256 h;
  for (const TrainingSample &s : samples) {
    const cv::Mat gray = to_gray(s.image);
    const std::string header = std::to_string(gray.cols) + "x" + std::to_string(gray.rows) + ";";
    h.update(header);
    for (int y = 0; y < gray.rows; ++y)
      h.update(gray.ptr<std::uint8_t>(y), static_cast<std::size_t>(gray.cols));
    const RoiRecord r = to_record(s.roi);
    std::ostringstream os;
    os.precision(17);
    os << r.center_x << ',' << r.center_y << ',' << r.width << ',' << r.height << ',' << r.orientation_deg << ';';
    h.update(os.str());
  }
  return h.hex();
}

TrainResult train(std::span<const TrainingSample> samples, std::vector<FeatureSet> sets,
                  const TrainingParams &params) {
  std::vector<OrientedRect> rois;
  std::vector<cv::Mat> images;
  for (const TrainingSample &s : samples) {
    rois.push_back(s.roi);
    images.push_back(s.image);
  }
  TrainResult out;
  out.graph = build_graph(std::move(sets), std::move(rois), params);
  out.path = find_best_path(out.graph, params.weights);
  ModelProvenance prov;
  prov.params = params;
  prov.train_images = samples.size();
  prov.dataset_digest = dataset_digest(samples);
  out.model = build_model(out.graph, out.path, images, std::move(prov));
  return out;
}

TrainResult train(std::span<const TrainingSample> samples, const FeatureExtractor &extractor,
                  const TrainingParams &params) {
  if (samples.size() < 2)
    throw Error(ErrorCode::InsufficientTrainData,
                "need at least 2 training images, got " + std::to_string(samples.size()));
  std::vector<FeatureSet> sets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      sets.push_back(extract(samples[i].image, extractor));
    } catch (const Error &e) {
      if (e.code() != ErrorCode::EmptyFeatureSet || i == 0)
        throw;
      throw UntrainableImageError(i, "training image " + std::to_string(i) + " has no features");
    }
  }
  return train(samples, std::move(sets), params);
}

TrainResult train(std::span<const TrainingSample> samples, FeatureFamily family, const TrainingParams &params) {
  return train(samples, *make_extractor(family), params);
}

// ---- serialization -------------------------------------------------------

namespace {

using nlohmann::json;

json rect_json(const OrientedRect &r) {
  return {{"center_x", r.center.x},
          {"center_y", r.center.y},
          {"width", r.width},
          {"height", r.height},
          {"orientation_rad", r.orientation}};
}

OrientedRect rect_from_json(const json &j) {
  return {{j.at("center_x").get<double>(), j.at("center_y").get<double>()},
          j.at("width").get<double>(),
          j.at("height").get<double>(),
          j.at("orientation_rad").get<double>()};
}

json params_json(const TrainingParams &p) {
  return {{"knn", p.knn},
          {"ratio", p.ratio},
          {"scale_low", p.geometric.scale_low},
          {"scale_high", p.geometric.scale_high},
          {"min_roi_iou", p.geometric.min_roi_iou},
          {"ransac_pos", p.ransac.pos_tol},
          {"ransac_ang_deg", p.ransac.ang_tol_deg},
          {"ransac_scale", p.ransac.scale_tol},
          {"min_cluster", p.ransac.min_cluster},
          {"refine_rounds", p.ransac.refine_rounds},
          {"w_feat", p.weights.w_feat},
          {"w_roi", p.weights.w_roi}};
}

TrainingParams params_from_json(const json &j) {
  TrainingParams p;
  p.knn = j.at("knn").get<std::size_t>();
  p.ratio = j.at("ratio").get<double>();
  p.geometric.scale_low = j.at("scale_low").get<double>();
  p.geometric.scale_high = j.at("scale_high").get<double>();
  p.geometric.min_roi_iou = j.at("min_roi_iou").get<double>();
  p.ransac.pos_tol = j.at("ransac_pos").get<double>();
  p.ransac.ang_tol_deg = j.at("ransac_ang_deg").get<double>();
  p.ransac.scale_tol = j.at("ransac_scale").get<double>();
  p.ransac.min_cluster = j.at("min_cluster").get<std::size_t>();
  p.ransac.refine_rounds = j.at("refine_rounds").get<int>();
  p.weights.w_feat = j.at("w_feat").get<double>();
  p.weights.w_roi = j.at("w_roi").get<double>();
  return p;
}

json model_json(const AnchorModel &m) {
  json features = json::array();
  for (const Feature &f : m.features)
    features.push_back({f.position.x, f.position.y, f.direction, f.size});
  return {{"family", std::string(to_string(m.family))},
          {"features", std::move(features)},
          {"descriptors", m.descriptors},
          {"descriptor_variance", m.descriptor_variance},
          {"roi_model", rect_json(m.roi_model)},
          {"roi_descriptor", m.roi_descriptor},
          {"roi_weights", m.roi_weights},
          {"provenance",
           {{"params", params_json(m.provenance.params)},
            {"train_images", m.provenance.train_images},
            {"dataset_digest", m.provenance.dataset_digest},
            {"path_cost", m.provenance.path_cost}}}};
}

AnchorModel model_from_json(const json &j) {
  AnchorModel m;
  m.family = parse_family(j.at("family").get<std::string>());
  for (const json &f : j.at("features")) {
    if (!f.is_array() || f.size() != 4)
      throw Error(ErrorCode::CorruptModel, "feature entry must have 4 numbers");
    m.features.push_back({{f[0].get<double>(), f[1].get<double>()}, f[2].get<double>(), f[3].get<double>()});
  }
  m.descriptors = j.at("descriptors").get<std::vector<Descriptor>>();
  m.descriptor_variance = j.at("descriptor_variance").get<std::vector<Descriptor>>();
  m.roi_model = rect_from_json(j.at("roi_model"));
  m.roi_descriptor = j.at("roi_descriptor").get<std::vector<double>>();
  m.roi_weights = j.at("roi_weights").get<std::vector<double>>();
  const json &p = j.at("provenance");
  m.provenance.params = params_from_json(p.at("params"));
  m.provenance.train_images = p.at("train_images").get<std::size_t>();
  m.provenance.dataset_digest = p.at("dataset_digest").get<std::string>();
  m.provenance.path_cost = p.at("path_cost").get<double>();

  if (m.features.empty())
    throw Error(ErrorCode::CorruptModel, "model has no features");
  if (m.descriptors.size() != m.features.size())
    throw Error(ErrorCode::CorruptModel, "descriptor count differs from feature count");
  if (m.roi_descriptor.size() != kRoiDescriptorSize || m.roi_weights.size() != kRoiDescriptorSize)
    throw Error(ErrorCode::CorruptModel, "ROI descriptor must have 48 bins");
  return m;
}

} // namespace

std::string serialize_model(const AnchorModel &model) {
  const json body = model_json(model);
  const json doc = {{"format", "saffire-model"},
                    {"version", kModelFormatVersion},
                    {"digest", sha256_hex(body.dump())},
                    {"model", body}};
  return doc.dump(1) + "\n";
}

AnchorModel deserialize_model(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::CorruptModel, std::string("unparseable model: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "saffire-model")
      throw Error(ErrorCode::CorruptModel, "not a saffire model document");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw Error(ErrorCode::FormatVersionMismatch, "model format version " + std::to_string(version) +
                                                        ", expected " + std::to_string(kModelFormatVersion));
    const json &body = doc.at("model");
    if (sha256_hex(body.dump()) != doc.at("digest").get<std::string>())
      throw Error(ErrorCode::CorruptModel, "content digest mismatch");
    return model_from_json(body);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::CorruptModel, std::string("malformed model: ") + e.what());
  }
}

void save_model(const AnchorModel &model, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write model " + path.string());
  out << serialize_model(model);
  if (!out)
    throw Error(ErrorCode::IoError, "failed writing model " + path.string());
}

AnchorModel load_model(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open model " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(text);
}

} // namespace saffire
