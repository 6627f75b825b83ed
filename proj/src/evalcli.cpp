#include "saffire/evalcli.hpp"
#include "saffire/error.hpp"
#include "saffire/synthgen.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

namespace saffire {

namespace {

double quantile_sorted(const std::vector<double> &v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

BoxPlotStats compute_boxplot(std::span<const double> values, std::span<const std::string> ids) {
  if (values.empty())
    throw Error(ErrorCode::EmptyInput, "box plot needs at least one value");
  if (!ids.empty() && ids.size() != values.size())
    throw Error(ErrorCode::LengthMismatch, "one id per value required");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  BoxPlotStats s;
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  s.iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * s.iqr;
  const double hi_fence = s.q3 + 1.5 * s.iqr;
  // q1 and q3 lie inside the fences, so both searches succeed.
  s.whisker_low = *std::find_if(sorted.begin(), sorted.end(), [&](double v) { return v >= lo_fence; });
  s.whisker_high = *std::find_if(sorted.rbegin(), sorted.rend(), [&](double v) { return v <= hi_fence; });
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] < s.whisker_low || values[i] > s.whisker_high)
      s.outliers.emplace_back(ids.empty() ? std::to_string(i) : ids[i], values[i]);
  return s;
}

namespace {

cv::Mat read_gray(const std::filesystem::path &path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty())
    throw Error(ErrorCode::IoError, "cannot read image " + path.string());
  return img;
}

} // namespace

EvalReport run_eval(const AnchorModel &model, const Manifest &manifest, const DetectionParams &params) {
  if (manifest.family && *manifest.family != model.family)
    throw Error(ErrorCode::ModelManifestFamilyMismatch,
                "manifest is for family " + std::string(to_string(*manifest.family)) + ", model uses " +
                    std::string(to_string(model.family)));
  if (manifest.records.empty())
    throw Error(ErrorCode::EmptyInput, "manifest lists no images");
  EvalReport report;
  report.family = model.family;
  std::vector<double> values;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const cv::Mat img = read_gray(manifest.image_path(i));
    const DetectionResult det = detect(model, img, params);
    EvalRecord rec;
    rec.image = manifest.records[i].image;
    rec.truth = manifest.records[i].roi;
    rec.detection = det.best;
    rec.oiou = det.best ? oriented_iou(det.best->roi, rec.truth) : 0.0;
    rec.timings = det.timings;
    values.push_back(rec.oiou);
    ids.push_back(rec.image);
    report.records.push_back(std::move(rec));
  }
  report.stats = compute_boxplot(values, ids);
  return report;
}

namespace {

using nlohmann::json;

json roi_json(const OrientedRect &r) {
  const RoiRecord rec = to_record(r);
  return {{"center_x", rec.center_x},
          {"center_y", rec.center_y},
          {"width", rec.width},
          {"height", rec.height},
          {"orientation_deg", rec.orientation_deg}};
}

json timings_json(const StageTimings &t) {
  return {{"extraction", t.extraction_us}, {"matching", t.matching_us}, {"ght", t.ght_us}, {"ranking", t.ranking_us}};
}

json candidate_json(const DetectionCandidate &c) {
  return {{"roi", roi_json(c.roi)},
          {"content_distance", c.content_distance},
          {"vote_count", c.vote_count},
          {"transform", {{"scale", c.transform.scale},
                         {"rotation_deg", rad_to_deg(c.transform.rotation)},
                         {"tx", c.transform.tx},
                         {"ty", c.transform.ty}}}};
}

json detection_json(const DetectionResult &r, const std::string &image) {
  json cands = json::array();
  for (const DetectionCandidate &c : r.candidates)
    cands.push_back(candidate_json(c));
  json doc = {{"format", "saffire-detection"},
              {"version", 1},
              {"image", image},
              {"detected", r.best.has_value()},
              {"candidates", cands},
              {"timings_us", timings_json(r.timings)}};
  if (r.best) {
    doc["best"] = candidate_json(*r.best);
  } else {
    doc["best"] = nullptr;
    doc["diagnostic"] = r.diagnostic;
  }
  return doc;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

void draw_overlay(const cv::Mat &gray, const DetectionResult &r, const std::filesystem::path &path) {
  cv::Mat vis;
  cv::cvtColor(gray, vis, cv::COLOR_GRAY2BGR);
  if (r.best) {
    const Quad q = corners(r.best->roi);
    std::vector<cv::Point> pts;
    for (const Point2 &p : q)
      pts.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
    cv::polylines(vis, pts, true, cv::Scalar(0, 200, 0), 2, cv::LINE_AA);
    cv::line(vis, pts[0], pts[1], cv::Scalar(0, 200, 255), 3, cv::LINE_AA);
    cv::circle(vis, pts[0], 5, cv::Scalar(0, 0, 255), cv::FILLED, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), vis))
    throw Error(ErrorCode::IoError, "cannot write overlay " + path.string());
}

struct TrainOptions {
  std::string manifest;
  std::string out;
  std::string family = "auto";
  TrainingParams params;
};

int run_train(const TrainOptions &o) {
  const Manifest manifest = read_manifest(o.manifest);
  std::vector<TrainingSample> samples;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    samples.push_back({read_gray(manifest.image_path(i)), manifest.records[i].roi});
  if (samples.size() < 2)
    throw Error(ErrorCode::InsufficientTrainData,
                "need at least 2 training images, got " + std::to_string(samples.size()));

  FeatureFamily family;
  if (o.family == "auto") {
    const FeatureFamily all[] = {FeatureFamily::Corner, FeatureFamily::Segment};
    const FamilySelection sel = select_feature_family(samples, all, 0.05, o.params);
    for (const FamilyReport &r : sel.reports)
      std::cerr << "family " << to_string(r.family) << ": "
                << (r.viable ? "mean LOO oIoU " + std::to_string(r.mean_oiou) : "failed (" + r.failure + ")")
                << ", " << r.seconds << " s\n";
    family = sel.family;
  } else {
    family = parse_family(o.family);
  }
  const TrainResult res = train(samples, family, o.params);
  save_model(res.model, o.out);
  std::cout << "trained " << to_string(family) << " model: " << res.model.features.size() << " features, path cost "
            << res.path.cost << ", written to " << o.out << "\n";
  return 0;
}

int run_detect(const std::string &model_path, const std::string &image_path, const std::string &out,
               const std::string &overlay) {
  const AnchorModel model = load_model(model_path);
  const cv::Mat img = read_gray(image_path);
  const DetectionResult r = detect(model, img);
  const std::string doc = detection_json(r, image_path).dump(2) + "\n";
  if (out.empty())
    std::cout << doc;
  else
    write_text(out, doc);
  if (!overlay.empty())
    draw_overlay(img, r, overlay);
  return r.best ? 0 : 1;
}

int run_eval_cmd(const std::string &model_path, const std::string &manifest_path, const std::string &report_path,
                 double threshold) {
  const AnchorModel model = load_model(model_path);
  const EvalReport report = run_eval(model, read_manifest(manifest_path));
  if (!report_path.empty())
    write_text(report_path, eval_report_json(report));
  const BoxPlotStats &s = report.stats;
  std::cout << "images " << report.records.size() << "  q1 " << s.q1 << "  median " << s.median << "  q3 " << s.q3
            << "  whiskers [" << s.whisker_low << ", " << s.whisker_high << "]  outliers " << s.outliers.size()
            << "\n";
  return s.median >= threshold ? 0 : 1;
}

int run_synth(const std::string &preset, std::size_t n, std::optional<std::uint64_t> seed, const std::string &out) {
  SceneSpec spec = preset_by_name(preset);
  if (seed)
    spec.seed = *seed;
  write_dataset(generate(spec, n), out);
  std::cout << "wrote " << n << " " << preset << " samples to " << out << "\n";
  return 0;
}

} // namespace

std::string eval_report_json(const EvalReport &report) {
  json images = json::array();
  json timings = json::array();
  for (const EvalRecord &r : report.records) {
    json item = {{"image", r.image}, {"truth", roi_json(r.truth)}, {"oiou", r.oiou}, {"detected", r.detection.has_value()}};
    if (r.detection)
      item["detection"] = candidate_json(*r.detection);
    images.push_back(std::move(item));
    timings.push_back({{"image", r.image}, {"timings_us", timings_json(r.timings)}});
  }
  const BoxPlotStats &s = report.stats;
  json outliers = json::array();
  for (const auto &[id, v] : s.outliers)
    outliers.push_back({{"image", id}, {"oiou", v}});
  const json doc = {{"format", "saffire-eval-report"},
                    {"version", 1},
                    {"family", std::string(to_string(report.family))},
                    {"stats",
                     {{"q1", s.q1},
                      {"median", s.median},
                      {"q3", s.q3},
                      {"iqr", s.iqr},
                      {"whisker_low", s.whisker_low},
                      {"whisker_high", s.whisker_high},
                      {"outliers", outliers}}},
                    {"images", images},
                    {"timings", timings}};
  return doc.dump(2) + "\n";
}

int cli_main(int argc, const char *const *argv) {
  CLI::App app{"Anchor-pattern ROI localization: train, detect, eval, synth"};
  app.require_subcommand(1);

  TrainOptions topt;
  auto *train_cmd = app.add_subcommand("train", "learn an anchor model from an annotated manifest");
  train_cmd->add_option("--manifest", topt.manifest, "annotation manifest (CSV)")->required();
  train_cmd->add_option("--out", topt.out, "model file to write")->required();
  train_cmd->add_option("--family", topt.family, "corner | segment | auto")
      ->check(CLI::IsMember({"corner", "segment", "auto"}));
  train_cmd->add_option("--w-feat", topt.params.weights.w_feat, "path cost weight of the feature term");
  train_cmd->add_option("--w-roi", topt.params.weights.w_roi, "path cost weight of the ROI term");
  train_cmd->add_option("--ratio", topt.params.ratio, "Lowe ratio threshold");
  train_cmd->add_option("--ransac-pos", topt.params.ransac.pos_tol, "RANSAC position tolerance (px)");
  train_cmd->add_option("--ransac-ang", topt.params.ransac.ang_tol_deg, "RANSAC angle tolerance (deg)");
  train_cmd->add_option("--ransac-scale", topt.params.ransac.scale_tol, "RANSAC relative scale tolerance");
  train_cmd->add_option("--min-cluster", topt.params.ransac.min_cluster, "minimum inliers per graph node");

  std::string model_path, image_path, out_doc, overlay;
  auto *detect_cmd = app.add_subcommand("detect", "localize the ROI in one image");
  detect_cmd->add_option("--model", model_path, "model file")->required();
  detect_cmd->add_option("--image", image_path, "input image")->required();
  detect_cmd->add_option("--out", out_doc, "detection document (JSON); stdout when omitted");
  detect_cmd->add_option("--overlay", overlay, "PNG with the detected ROI drawn");

  std::string eval_model, eval_manifest, report_path;
  double threshold = 0.85;
  auto *eval_cmd = app.add_subcommand("eval", "detect every manifest image and summarize oIoU");
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "annotation manifest (CSV)")->required();
  eval_cmd->add_option("--report", report_path, "report document (JSON)");
  eval_cmd->add_option("--threshold", threshold, "exit 1 when the median oIoU is below this");

  std::string preset, synth_out;
  std::size_t count = 10;
  std::uint64_t seed_value = 0;
  auto *synth_cmd = app.add_subcommand("synth", "generate a synthetic annotated dataset");
  synth_cmd->add_option("--preset", preset, "starcart | textured | dual-instance | noise")
      ->required()
      ->check(CLI::IsMember({"starcart", "textured", "dual-instance", "noise"}));
  synth_cmd->add_option("--n", count, "number of samples")->check(CLI::PositiveNumber);
  auto *seed_opt = synth_cmd->add_option("--seed", seed_value, "override the preset seed");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd)
      return run_train(topt);
    if (*detect_cmd)
      return run_detect(model_path, image_path, out_doc, overlay);
    if (*eval_cmd)
      return run_eval_cmd(eval_model, eval_manifest, report_path, threshold);
    if (*synth_cmd)
      return run_synth(preset, count, *seed_opt ? std::optional<std::uint64_t>(seed_value) : std::nullopt,
                       synth_out);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::UnsupportedFamily)
      return 2;
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

} // namespace saffire
