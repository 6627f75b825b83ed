#include "saffire/synthgen.hpp"
#include "saffire/error.hpp"
#include "saffire/manifest.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace saffire {

std::string_view to_string(ShapeTag tag) {
  switch (tag) {
  case ShapeTag::Star:
    return "star";
  case ShapeTag::Polygon:
    return "polygon";
  case ShapeTag::GlyphBlock:
    return "glyph-block";
  case ShapeTag::Cart:
    return "cart";
  case ShapeTag::Blob:
    return "blob";
  }
  return "unknown";
}

namespace {

struct Poly {
  std::vector<Point2> pts;
  double intensity;
};
using Shape = std::vector<Poly>;

// splitmix64 finalizer; sample streams are keyed by (seed, index).
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // 53-bit uniform in [0, 1); avoids the implementation-defined std distributions.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(unit() * (hi - lo + 1)); }

private:
  std::mt19937_64 engine_;
};

Poly regular_ish(Point2 center, double radius, int sides, double phase_deg,
                 const std::vector<double> &radius_scale, double intensity) {
  Poly p{{}, intensity};
  for (int i = 0; i < sides; ++i) {
    const double a = deg_to_rad(phase_deg + 360.0 * i / sides);
    const double r = radius * radius_scale[static_cast<std::size_t>(i) % radius_scale.size()];
    p.pts.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
  }
  return p;
}

constexpr double kCartScale = 1.3;

Shape make_star() {
  const double outer[5] = {58.0, 46.0, 64.0, 50.0, 55.0};
  const double inner[5] = {22.0, 25.0, 21.0, 26.0, 23.0};
  const double offset[5] = {0.0, 6.0, -5.0, 9.0, -3.0};
  Poly star{{}, 215.0};
  for (int i = 0; i < 5; ++i) {
    const double a = deg_to_rad(-90.0 + 72.0 * i + offset[i]);
    const double b = deg_to_rad(-90.0 + 72.0 * i + 36.0 + 0.5 * (offset[i] + offset[(i + 1) % 5]));
    star.pts.push_back({outer[i] * std::cos(a), outer[i] * std::sin(a)});
    star.pts.push_back({inner[i] * std::cos(b), inner[i] * std::sin(b)});
  }
  return {star};
}

Shape make_cart() {
  Poly body{{{-52, -22}, {-30, -30}, {-6, -24}, {16, -32}, {44, -28}, {56, -10},
             {48, 4},    {52, 20},  {26, 16},  {2, 22},   {-22, 15}, {-50, 8}},
            170.0};
  Poly handle{{{44, -28}, {62, -62}, {72, -57}, {56, -26}}, 150.0};
  Poly wheel_a = regular_ish({-26, 38}, 15.0, 6, 10.0, {1.0, 0.85, 1.05, 0.9, 1.0, 0.8}, 45.0);
  Poly wheel_b = regular_ish({28, 39}, 16.0, 7, -5.0, {1.0, 0.9, 0.8, 1.05, 0.95, 0.85, 1.0}, 45.0);
  Shape cart{body, handle, wheel_a, wheel_b};
  for (Poly &p : cart)
    for (Point2 &q : p.pts)
      q = kCartScale * q;
  return cart;
}

// Fixed emblem; generated from a constant seed so every sample shares it.
Shape make_emblem() {
  Rng rng(0x5AFF1E5EEDull);
  Shape s;
  std::vector<double> radii;
  for (int i = 0; i < 9; ++i)
    radii.push_back(rng.uniform(0.75, 1.05));
  s.push_back(regular_ish({0, 0}, 58.0, 9, rng.uniform(0, 40), radii, 185.0));
  const double tones[4] = {40.0, 75.0, 245.0, 125.0};
  for (int i = 0; i < 9; ++i) {
    const double a = rng.uniform(0, 2 * kPi);
    const double d = rng.uniform(8.0, 34.0);
    const int sides = rng.integer(3, 4);
    std::vector<double> rs{rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0),
                           rng.uniform(0.7, 1.0)};
    s.push_back(regular_ish({d * std::cos(a), d * std::sin(a)}, rng.uniform(7.0, 14.0), sides,
                            rng.uniform(0, 120), rs, tones[i % 4]));
  }
  return s;
}

Shape make_blob(Rng &rng) {
  const int sides = rng.integer(3, 6);
  std::vector<double> rs;
  for (int i = 0; i < sides; ++i)
    rs.push_back(rng.uniform(0.7, 1.0));
  double tone = rng.uniform(30.0, 230.0);
  if (std::abs(tone - 110.0) < 30.0)
    tone += tone < 110.0 ? -30.0 : 30.0;
  return {regular_ish({0, 0}, rng.uniform(12.0, 28.0), sides, rng.uniform(0, 360), rs, tone)};
}

// Text-like bars laid out in the ROI frame (origin corner, width axis, height axis).
Shape make_glyphs(const OrientedRect &roi, Rng &rng) {
  const Quad c = corners(roi);
  const Point2 ex = (1.0 / roi.width) * (c[1] - c[0]);
  const Point2 ey = (1.0 / roi.height) * (c[3] - c[0]);
  const auto to_anchor = [&](double a, double b) { return c[0] + a * ex + b * ey; };
  const auto bar = [&](double a0, double b0, double a1, double b1) {
    return Poly{{to_anchor(a0, b0), to_anchor(a1, b0), to_anchor(a1, b1), to_anchor(a0, b1)}, 35.0};
  };
  Shape s;
  const int cols = 5, rows = 2;
  const double cw = 0.84 * roi.width / cols, ch = 0.8 * roi.height / rows;
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) {
      const double a = 0.08 * roi.width + k * cw;
      const double b = 0.1 * roi.height + r * ch;
      const double stem = rng.uniform(0.15, 0.7) * cw;
      s.push_back(bar(a + stem, b + 0.1 * ch, a + stem + 0.18 * cw, b + rng.uniform(0.6, 0.9) * ch));
      const double arm = rng.uniform(0.15, 0.75) * ch;
      s.push_back(bar(a + rng.uniform(0.05, 0.3) * cw, b + arm, a + rng.uniform(0.55, 0.85) * cw,
                      b + arm + 0.16 * ch));
    }
  }
  return s;
}

Shape shape_for(ShapeTag tag, Rng &rng) {
  switch (tag) {
  case ShapeTag::Star:
    return make_star();
  case ShapeTag::Cart:
    return make_cart();
  case ShapeTag::Polygon:
    return make_emblem();
  case ShapeTag::GlyphBlock: {
    // A fixed text-like pattern, the same in every sample.
    Rng fixed(0x9e3779b97f4a7c15ULL);
    return make_glyphs({{0.0, 0.0}, 100.0, 50.0, -0.5 * kPi}, fixed);
  }
  case ShapeTag::Blob:
    return make_blob(rng);
  }
  return {};
}

double shape_radius(const Shape &s) {
  double r = 0.0;
  for (const Poly &p : s)
    for (Point2 q : p.pts)
      r = std::max(r, std::hypot(q.x, q.y));
  return r;
}

bool inside(const std::vector<Point2> &pts, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
    const Point2 &a = pts[i], &b = pts[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x)
      in = !in;
  }
  return in;
}

// 4x4 supersampled coverage blend of every polygon; mask marks touched pixels.
void render(cv::Mat &canvas, cv::Mat &mask, const Shape &shape, const SimilarityTransform &pose) {
  for (const Poly &poly : shape) {
    std::vector<Point2> pts;
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (Point2 q : poly.pts) {
      const Point2 m = apply(pose, q);
      pts.push_back(m);
      x0 = std::min(x0, m.x);
      y0 = std::min(y0, m.y);
      x1 = std::max(x1, m.x);
      y1 = std::max(y1, m.y);
    }
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int ix1 = std::min(canvas.cols - 1, static_cast<int>(std::ceil(x1)));
    const int iy1 = std::min(canvas.rows - 1, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y <= iy1; ++y) {
      double *row = canvas.ptr<double>(y);
      std::uint8_t *mrow = mask.ptr<std::uint8_t>(y);
      for (int x = ix0; x <= ix1; ++x) {
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy)
          for (int sx = 0; sx < 4; ++sx)
            hits += inside(pts, x + (sx + 0.5) / 4.0 - 0.5, y + (sy + 0.5) / 4.0 - 0.5);
        if (hits == 0)
          continue;
        const double cov = hits / 16.0;
        row[x] = row[x] * (1.0 - cov) + poly.intensity * cov;
        mrow[x] = 255;
      }
    }
  }
}

bool rect_inside_canvas(const OrientedRect &r, cv::Size canvas, double margin) {
  for (Point2 c : corners(r))
    if (c.x < margin || c.y < margin || c.x > canvas.width - 1 - margin ||
        c.y > canvas.height - 1 - margin)
      return false;
  return true;
}

} // namespace

std::size_t segment_count(ShapeTag shape) {
  Rng rng(0);
  if (shape == ShapeTag::Blob || shape == ShapeTag::GlyphBlock)
    return 0;
  std::size_t n = 0;
  for (const Poly &p : shape_for(shape, rng))
    n += p.pts.size();
  return n;
}

GeneratedSample generate_sample(const SceneSpec &spec, std::size_t index) {
  if (spec.canvas.width < 128 || spec.canvas.height < 128)
    throw Error(ErrorCode::SpecError, "canvas must be at least 128x128");
  const PoseJitter &j = spec.pose_jitter;
  if (j.scale_low < 0.85 || j.scale_high > 1.15 || j.scale_low > j.scale_high)
    throw Error(ErrorCode::SpecError, "scale jitter must lie within [0.85, 1.15]");

  Rng rng(mix64(spec.seed ^ mix64(static_cast<std::uint64_t>(index) + 1)));

  GeneratedSample sample;
  const double scale = rng.uniform(j.scale_low, j.scale_high);
  const double rot = deg_to_rad(rng.uniform(-j.rotation_deg, j.rotation_deg));
  const double tx = spec.anchor_center.x + rng.uniform(-j.translation_px, j.translation_px);
  const double ty = spec.anchor_center.y + rng.uniform(-j.translation_px, j.translation_px);
  sample.anchor_pose = {scale, normalize_angle(rot), tx, ty};
  sample.roi = transform_rect(sample.anchor_pose, spec.roi_spec);

  cv::Mat canvas(spec.canvas, CV_64F, cv::Scalar(spec.background));
  const Shape anchor = shape_for(spec.anchor_shape, rng);
  const double anchor_radius = shape_radius(anchor) * scale;

  ShapeMask anchor_mask{spec.anchor_shape, PosePolicy::Rigid, true, sample.anchor_pose,
                        cv::Mat::zeros(spec.canvas, CV_8U)};
  if (spec.anchor_visible)
    render(canvas, anchor_mask.mask, anchor, sample.anchor_pose);
  sample.shape_masks.push_back(std::move(anchor_mask));

  const double roi_radius = 0.5 * std::hypot(sample.roi.width, sample.roi.height);
  std::vector<std::pair<Point2, double>> occupied{{apply(sample.anchor_pose, {0, 0}), anchor_radius},
                                                   {sample.roi.center, roi_radius}};

  for (const Distractor &d : spec.distractors) {
    const Shape shape = shape_for(d.shape, rng);
    const double radius = shape_radius(shape);
    SimilarityTransform pose;
    switch (d.policy) {
    case PosePolicy::Rigid:
      pose = compose(sample.anchor_pose, d.offset);
      break;
    case PosePolicy::Rotating: {
      double phi_deg = rng.uniform(-d.rotation_range_deg, d.rotation_range_deg);
      if (d.rotation_step_deg > 0.0)
        phi_deg = d.rotation_step_deg * std::round(phi_deg / d.rotation_step_deg);
      const double phi = deg_to_rad(phi_deg);
      pose = compose(compose(sample.anchor_pose, d.offset), {1.0, phi, 0.0, 0.0});
      break;
    }
    case PosePolicy::Free: {
      const bool decoy = d.shape == spec.anchor_shape;
      bool placed = false;
      for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
        const double s = decoy ? rng.uniform(j.scale_low, j.scale_high) : 1.0;
        const double r = radius * s;
        const Point2 c{rng.uniform(r + 4, spec.canvas.width - r - 4),
                       rng.uniform(r + 4, spec.canvas.height - r - 4)};
        pose = {s, normalize_angle(rng.uniform(-kPi, kPi)), c.x, c.y};
        std::vector<std::pair<Point2, double>> claim{{c, r}};
        if (decoy) {
          const OrientedRect ghost = transform_rect(pose, spec.roi_spec);
          if (!rect_inside_canvas(ghost, spec.canvas, 2.0))
            continue;
          claim.push_back({ghost.center, 0.5 * std::hypot(ghost.width, ghost.height)});
        }
        placed = std::none_of(claim.begin(), claim.end(), [&](const auto &a) {
          return std::any_of(occupied.begin(), occupied.end(), [&](const auto &b) {
            return distance(a.first, b.first) < a.second + b.second + 6.0;
          });
        });
        if (placed)
          occupied.insert(occupied.end(), claim.begin(), claim.end());
      }
      if (!placed)
        throw Error(ErrorCode::SpecError,
                    "cannot place free " + std::string(to_string(d.shape)) + " without overlap");
      break;
    }
    }
    ShapeMask m{d.shape, d.policy, false, pose, cv::Mat::zeros(spec.canvas, CV_8U)};
    render(canvas, m.mask, shape, pose);
    sample.shape_masks.push_back(std::move(m));
  }

  if (spec.roi_glyphs) {
    ShapeMask m{ShapeTag::GlyphBlock, PosePolicy::Rigid, false, sample.anchor_pose,
                cv::Mat::zeros(spec.canvas, CV_8U)};
    render(canvas, m.mask, make_glyphs(spec.roi_spec, rng), sample.anchor_pose);
    sample.shape_masks.push_back(std::move(m));
  }

  if (spec.anchor_visible) {
    const cv::Mat &am = sample.shape_masks.front().mask;
    const int total = cv::countNonZero(am);
    cv::Mat later = cv::Mat::zeros(spec.canvas, CV_8U);
    for (std::size_t k = 1; k < sample.shape_masks.size(); ++k)
      later |= sample.shape_masks[k].mask;
    const int hidden = cv::countNonZero(am & later);
    if (total > 0 && hidden > 0.3 * total)
      throw Error(ErrorCode::SpecError, "shapes occlude more than 30% of the anchor");
  }

  sample.image.create(spec.canvas, CV_8U);
  for (int y = 0; y < spec.canvas.height; ++y) {
    const double *src = canvas.ptr<double>(y);
    std::uint8_t *dst = sample.image.ptr<std::uint8_t>(y);
    for (int x = 0; x < spec.canvas.width; ++x) {
      const double v = src[x] + (spec.noise > 0.0 ? rng.uniform(-spec.noise, spec.noise) : 0.0);
      dst[x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return sample;
}

std::vector<GeneratedSample> generate(const SceneSpec &spec, std::size_t n, std::size_t first_index) {
  if (n == 0)
    throw Error(ErrorCode::InvalidArgument, "sample count must be at least 1");
  std::vector<GeneratedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(generate_sample(spec, first_index + i));
  return out;
}

SceneSpec starcart_preset() {
  SceneSpec s;
  s.anchor_shape = ShapeTag::Star;
  s.anchor_center = {190.0, 230.0};
  s.roi_spec = {{150.0, -10.0}, 150.0, 80.0, -0.5 * kPi};
  Distractor cart;
  cart.shape = ShapeTag::Cart;
  cart.policy = PosePolicy::Rotating;
  cart.offset = SimilarityTransform::translation(165.0, 105.0);
  cart.rotation_range_deg = 30.0;
  cart.rotation_step_deg = 20.0;
  s.distractors.push_back(cart);
  s.pose_jitter = {20.0, 8.0, 0.97, 1.03};
  s.noise = 4.0;
  s.seed = 7;
  return s;
}

SceneSpec textured_preset() {
  SceneSpec s;
  s.anchor_shape = ShapeTag::Polygon;
  s.anchor_center = {320.0, 240.0};
  s.roi_spec = {{0.0, 100.0}, 130.0, 60.0, -0.5 * kPi};
  for (int i = 0; i < 8; ++i)
    s.distractors.push_back({ShapeTag::Blob, PosePolicy::Free, {}, 0.0});
  s.pose_jitter = {40.0, 180.0, 0.85, 1.15};
  s.noise = 6.0;
  s.seed = 11;
  return s;
}

SceneSpec dual_instance_preset() {
  SceneSpec s = textured_preset();
  s.canvas = {800, 600};
  s.anchor_center = {400.0, 300.0};
  s.distractors.clear();
  s.distractors.push_back({ShapeTag::Polygon, PosePolicy::Free, {}, 0.0});
  for (int i = 0; i < 6; ++i)
    s.distractors.push_back({ShapeTag::Blob, PosePolicy::Free, {}, 0.0});
  s.pose_jitter = {100.0, 180.0, 0.9, 1.1};
  s.seed = 13;
  return s;
}

SceneSpec noise_preset() {
  SceneSpec s;
  s.anchor_visible = false;
  s.roi_glyphs = false;
  for (int i = 0; i < 12; ++i)
    s.distractors.push_back({ShapeTag::Blob, PosePolicy::Free, {}, 0.0});
  s.noise = 8.0;
  s.seed = 17;
  return s;
}

SceneSpec preset_by_name(std::string_view name) {
  if (name == "starcart")
    return starcart_preset();
  if (name == "textured")
    return textured_preset();
  if (name == "dual-instance")
    return dual_instance_preset();
  if (name == "noise")
    return noise_preset();
  throw Error(ErrorCode::InvalidArgument, "unknown preset '" + std::string(name) + "'");
}

void write_dataset(const std::vector<GeneratedSample> &samples, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  nlohmann::json truth = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04zu.png", i);
    if (!cv::imwrite((dir / name).string(), samples[i].image))
      throw Error(ErrorCode::IoError, "cannot write " + (dir / name).string());
    manifest.records.push_back({name, samples[i].roi});
    const auto pose_json = [](const SimilarityTransform &p) {
      return nlohmann::json{{"scale", p.scale}, {"rotation", p.rotation}, {"tx", p.tx}, {"ty", p.ty}};
    };
    nlohmann::json shapes = nlohmann::json::array();
    for (const ShapeMask &m : samples[i].shape_masks)
      shapes.push_back({{"shape", std::string(to_string(m.shape))},
                        {"anchor", m.is_anchor},
                        {"pose", pose_json(m.pose)}});
    truth.push_back({{"image", name}, {"anchor_pose", pose_json(samples[i].anchor_pose)}, {"shapes", shapes}});
  }
  write_manifest(dir / "manifest.csv", manifest);
  std::ofstream out(dir / "truth.json");
  out << nlohmann::json{{"format", "saffire-truth"}, {"version", 1}, {"samples", truth}}.dump(2) << '\n';
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write truth.json");
}

} // namespace saffire
