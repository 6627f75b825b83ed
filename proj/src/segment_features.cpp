#include "feature_families.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace saffire::detail {

namespace {

Point2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
double norm(Point2 a) { return std::hypot(a.x, a.y); }

void soft_bins(Descriptor &d, std::size_t offset, int bins, double value, double lo, double hi,
               bool wrap, double weight) {
  const double width = (hi - lo) / bins;
  const double sigma = 0.75 * width;
  for (int b = 0; b < bins; ++b) {
    const double c = lo + (b + 0.5) * width;
    double diff = value - c;
    if (wrap)
      diff = std::remainder(diff, hi - lo);
    d[offset + b] += static_cast<float>(weight * std::exp(-diff * diff / (2.0 * sigma * sigma)));
  }
}

void normalize_block(Descriptor &d, std::size_t offset, int bins, double target) {
  double s = 0.0;
  for (int b = 0; b < bins; ++b)
    s += d[offset + b];
  if (!(s > 0.0))
    return;
  for (int b = 0; b < bins; ++b)
    d[offset + b] = static_cast<float>(d[offset + b] * target / s);
}

} // namespace

std::vector<LineSegment> find_segments(const cv::Mat &gray, const SegmentParams &p) {
  cv::Mat image32, smooth, gx, gy;
  gray.convertTo(image32, CV_32F);
  cv::GaussianBlur(image32, smooth, cv::Size(), p.blur_sigma, p.blur_sigma, cv::BORDER_REPLICATE);
  cv::Sobel(smooth, gx, CV_32F, 1, 0, 3, 1.0 / 8.0, 0.0, cv::BORDER_REPLICATE);
  cv::Sobel(smooth, gy, CV_32F, 0, 1, 3, 1.0 / 8.0, 0.0, cv::BORDER_REPLICATE);

  const int w = gray.cols, h = gray.rows;
  std::vector<float> mag(static_cast<std::size_t>(w) * h), ang(mag.size());
  std::vector<int> seeds;
  for (int y = 1; y < h - 1; ++y) {
    const float *px = gx.ptr<float>(y);
    const float *py = gy.ptr<float>(y);
    for (int x = 1; x < w - 1; ++x) {
      const int i = y * w + x;
      mag[i] = std::hypot(px[x], py[x]);
      ang[i] = std::atan2(py[x], px[x]);
      if (mag[i] > p.min_gradient)
        seeds.push_back(i);
    }
  }
  std::stable_sort(seeds.begin(), seeds.end(), [&](int a, int b) { return mag[a] > mag[b]; });

  const double tol = deg_to_rad(p.angle_tolerance);
  std::vector<std::uint8_t> used(mag.size(), 0);
  std::vector<int> region;
  std::vector<LineSegment> segments;

  for (int seed : seeds) {
    if (used[seed])
      continue;
    region.clear();
    region.push_back(seed);
    used[seed] = 1;
    double sc = std::cos(ang[seed]), ss = std::sin(ang[seed]);
    double region_angle = ang[seed];
    for (std::size_t head = 0; head < region.size(); ++head) {
      const int cx = region[head] % w, cy = region[head] / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = cx + dx, ny = cy + dy;
          if (nx < 1 || ny < 1 || nx >= w - 1 || ny >= h - 1)
            continue;
          const int n = ny * w + nx;
          if (used[n] || mag[n] <= p.min_gradient)
            continue;
          if (std::abs(normalize_angle(ang[n] - region_angle)) > tol)
            continue;
          used[n] = 1;
          region.push_back(n);
          sc += std::cos(ang[n]);
          ss += std::sin(ang[n]);
          region_angle = std::atan2(ss, sc);
        }
      }
    }
    if (static_cast<double>(region.size()) < 0.5 * p.min_length)
      continue;

    double wsum = 0.0, mx = 0.0, my = 0.0;
    for (int i : region) {
      wsum += mag[i];
      mx += mag[i] * (i % w);
      my += mag[i] * (i / w);
    }
    mx /= wsum;
    my /= wsum;
    double cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (int i : region) {
      const double dx = i % w - mx, dy = i / w - my;
      cxx += mag[i] * dx * dx;
      cyy += mag[i] * dy * dy;
      cxy += mag[i] * dx * dy;
    }
    double axis = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    const double level_line = region_angle + 0.5 * kPi;
    if (std::abs(std::sin(axis - level_line)) > std::sin(tol))
      axis = level_line;
    const Point2 d = unit(axis);
    const Point2 nrm{-d.y, d.x};
    double tmin = 1e300, tmax = -1e300, smin = 1e300, smax = -1e300;
    for (int i : region) {
      const Point2 q{i % w - mx, i / w - my};
      const double t = dot(q, d), s = dot(q, nrm);
      tmin = std::min(tmin, t);
      tmax = std::max(tmax, t);
      smin = std::min(smin, s);
      smax = std::max(smax, s);
    }
    const double length = tmax - tmin + 1.0;
    const double width = smax - smin + 1.0;
    if (length < p.min_length || width > 6.0 + 0.1 * length)
      continue;
    if (static_cast<double>(region.size()) / (length * width) < p.min_density)
      continue;
    const Point2 c{mx, my};
    segments.push_back({c + (tmin - 0.5) * d, c + (tmax + 0.5) * d, region_angle});
  }
  return segments;
}

FeatureSet SegmentExtractor::extract(const cv::Mat &gray) const {
  const SegmentParams &p = params_;
  FeatureSet out;
  out.family = FeatureFamily::Segment;
  out.source_size = gray.size();

  const std::vector<LineSegment> segs = find_segments(gray, p);
  const double min_sin = std::sin(deg_to_rad(p.min_junction_angle));
  const double lo_angle = deg_to_rad(p.min_junction_angle);
  const double hi_angle = deg_to_rad(p.max_junction_angle);

  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      const LineSegment &a = segs[i];
      const LineSegment &b = segs[j];
      const std::array<Point2, 2> ea{a.p1, a.p2};
      const std::array<Point2, 2> eb{b.p1, b.p2};
      int bi = 0, bj = 0;
      double best = 1e300;
      for (int u = 0; u < 2; ++u)
        for (int v = 0; v < 2; ++v)
          if (const double dd = distance(ea[u], eb[v]); dd < best) {
            best = dd;
            bi = u;
            bj = v;
          }
      const double slack = p.endpoint_slack + p.endpoint_rel_slack * std::min(a.length(), b.length());
      if (best > slack)
        continue;

      const Point2 da = (1.0 / a.length()) * (a.p2 - a.p1);
      const Point2 db = (1.0 / b.length()) * (b.p2 - b.p1);
      const double den = cross(da, db);
      if (std::abs(den) < min_sin)
        continue;
      const double ta = cross(b.p1 - a.p1, db) / den;
      const Point2 x = a.p1 + ta * da;
      if (distance(x, ea[bi]) > slack || distance(x, eb[bj]) > slack)
        continue;

      const Point2 far_a = ea[1 - bi];
      const Point2 far_b = eb[1 - bj];
      Point2 arm_a = far_a - x, arm_b = far_b - x;
      const double len_a = norm(arm_a), len_b = norm(arm_b);
      if (len_a < 1e-6 || len_b < 1e-6)
        continue;
      arm_a = (1.0 / len_a) * arm_a;
      arm_b = (1.0 / len_b) * arm_b;
      const double alpha = std::acos(std::clamp(dot(arm_a, arm_b), -1.0, 1.0));
      if (alpha < lo_angle || alpha > hi_angle)
        continue;
      Point2 bis = arm_a + arm_b;
      bis = (1.0 / norm(bis)) * bis;

      // Arm order is fixed by handedness about the bisector.
      const bool a_first = cross(bis, arm_a) > 0.0;
      const LineSegment &s1 = a_first ? a : b;
      const LineSegment &s2 = a_first ? b : a;
      const Point2 arm1 = a_first ? arm_a : arm_b;
      const Point2 arm2 = a_first ? arm_b : arm_a;
      const double l1 = a_first ? len_a : len_b;
      const double l2 = a_first ? len_b : len_a;

      const auto bright_inside = [&](const LineSegment &s, Point2 arm) {
        Point2 inward = bis - dot(bis, arm) * arm;
        return dot(unit(s.gradient_angle), inward) > 0.0;
      };
      const int polarity = (bright_inside(s1, arm1) ? 2 : 0) + (bright_inside(s2, arm2) ? 1 : 0);

      const double size = 0.5 * (l1 + l2);
      const double direction = std::atan2(bis.y, bis.x);

      Descriptor desc(kSegmentDescriptorSize, 0.0f);
      soft_bins(desc, 0, 12, alpha, 0.0, kPi, false, 1.0);
      normalize_block(desc, 0, 12, 1.0);
      soft_bins(desc, 12, 8, l1 / (l1 + l2), 0.0, 1.0, false, 1.0);
      normalize_block(desc, 12, 8, 0.7);
      desc[20 + polarity] = 0.7f;
      const double reach = p.context_radius * size;
      for (std::size_t m = 0; m < segs.size(); ++m) {
        if (m == i || m == j)
          continue;
        const Point2 mid = 0.5 * (segs[m].p1 + segs[m].p2);
        const Point2 rel = mid - x;
        if (norm(rel) > reach || norm(rel) < 1e-9)
          continue;
        const double phi = normalize_angle(std::atan2(rel.y, rel.x) - direction);
        soft_bins(desc, 24, 8, phi, -kPi, kPi, true, segs[m].length() / size);
      }
      normalize_block(desc, 24, 8, 0.5);
      if (!l2_normalize(desc))
        continue;

      out.features.push_back({x, normalize_angle(direction), size});
      out.descriptors.push_back(std::move(desc));
    }
  }
  return out;
}

} // namespace saffire::detail

namespace saffire {

std::vector<LineSegment> detect_segments(const cv::Mat &gray) {
  return detail::find_segments(to_gray(gray), detail::SegmentParams{});
}

} // namespace saffire
