#include "saffire/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace saffire {

double normalize_angle(double radians) {
  if (radians > -kPi && radians <= kPi)
    return radians;
  double a = std::fmod(radians + kPi, 2.0 * kPi);
  if (a <= 0.0)
    a += 2.0 * kPi;
  return a - kPi;
}

double deg_to_rad(double degrees) { return degrees * kPi / 180.0; }
double rad_to_deg(double radians) { return radians * 180.0 / kPi; }

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point2 apply(const SimilarityTransform &t, Point2 p) {
  const double c = std::cos(t.rotation) * t.scale;
  const double s = std::sin(t.rotation) * t.scale;
  return {c * p.x - s * p.y + t.tx, s * p.x + c * p.y + t.ty};
}

SimilarityTransform compose(const SimilarityTransform &a, const SimilarityTransform &b) {
  const Point2 t = apply(a, Point2{b.tx, b.ty});
  return {a.scale * b.scale, normalize_angle(a.rotation + b.rotation), t.x, t.y};
}

SimilarityTransform invert(const SimilarityTransform &t) {
  const double inv_scale = 1.0 / t.scale;
  const double rot = normalize_angle(-t.rotation);
  const double c = std::cos(rot) * inv_scale;
  const double s = std::sin(rot) * inv_scale;
  return {inv_scale, rot, -(c * t.tx - s * t.ty), -(s * t.tx + c * t.ty)};
}

bool approx_equal(const SimilarityTransform &a, const SimilarityTransform &b, double tol) {
  return std::abs(a.scale - b.scale) <= tol &&
         std::abs(normalize_angle(a.rotation - b.rotation)) <= tol &&
         std::abs(a.tx - b.tx) <= tol && std::abs(a.ty - b.ty) <= tol;
}

bool fit_similarity(std::span<const Point2> src, std::span<const Point2> dst,
                    SimilarityTransform &out) {
  const std::size_t n = std::min(src.size(), dst.size());
  if (n < 2)
    return false;
  Point2 ms, md;
  for (std::size_t i = 0; i < n; ++i) {
    ms = ms + src[i];
    md = md + dst[i];
  }
  ms = (1.0 / static_cast<double>(n)) * ms;
  md = (1.0 / static_cast<double>(n)) * md;

  double norm = 0.0, re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = src[i] - ms;
    const Point2 q = dst[i] - md;
    norm += p.x * p.x + p.y * p.y;
    re += p.x * q.x + p.y * q.y;
    im += p.x * q.y - p.y * q.x;
  }
  if (norm < 1e-9)
    return false;
  re /= norm;
  im /= norm;
  const double scale = std::hypot(re, im);
  if (!(scale > 1e-12) || !std::isfinite(scale))
    return false;

  SimilarityTransform t{scale, normalize_angle(std::atan2(im, re)), 0.0, 0.0};
  const Point2 mapped = apply(t, ms);
  t.tx = md.x - mapped.x;
  t.ty = md.y - mapped.y;
  out = t;
  return true;
}

Quad corners(const OrientedRect &r) {
  const Point2 u{std::cos(r.orientation), std::sin(r.orientation)};
  const Point2 n{-u.y, u.x};
  const double hh = 0.5 * r.height;
  const double hw = 0.5 * r.width;
  return {r.center + hh * u - hw * n, r.center + hh * u + hw * n,
          r.center - hh * u + hw * n, r.center - hh * u - hw * n};
}

OrientedRect rect_from_corners(const Quad &c) {
  OrientedRect r;
  r.center = 0.25 * (c[0] + c[1] + c[2] + c[3]);
  r.width = distance(c[0], c[1]);
  r.height = distance(c[1], c[2]);
  const Point2 mid = 0.5 * (c[0] + c[1]);
  r.orientation = normalize_angle(std::atan2(mid.y - r.center.y, mid.x - r.center.x));
  return r;
}

OrientedRect flip180(const OrientedRect &r) {
  OrientedRect f = r;
  f.orientation = normalize_angle(r.orientation + kPi);
  return f;
}

OrientedRect transform_rect(const SimilarityTransform &t, const OrientedRect &r) {
  return {apply(t, r.center), r.width * t.scale, r.height * t.scale,
          normalize_angle(r.orientation + t.rotation)};
}

OrientedRect scale_rect(const OrientedRect &r, double factor) {
  OrientedRect out = r;
  out.width *= factor;
  out.height *= factor;
  return out;
}

double rect_area(const OrientedRect &r) { return r.width * r.height; }

namespace {

double cross(Point2 a, Point2 b, Point2 p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

double polygon_area(const std::vector<Point2> &poly) {
  double s = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point2 &a = poly[i];
    const Point2 &b = poly[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

// Sutherland-Hodgman against a convex clip polygon of either winding.
std::vector<Point2> clip_convex(std::vector<Point2> subject, const Quad &clip) {
  const std::vector<Point2> clip_poly(clip.begin(), clip.end());
  const double sign = polygon_area(clip_poly) >= 0.0 ? 1.0 : -1.0;
  for (std::size_t e = 0; e < 4 && !subject.empty(); ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % 4];
    std::vector<Point2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0, n = subject.size(); i < n; ++i) {
      const Point2 p = subject[i];
      const Point2 q = subject[(i + 1) % n];
      const double dp = sign * cross(a, b, p);
      const double dq = sign * cross(a, b, q);
      if (dp >= 0.0)
        out.push_back(p);
      if ((dp >= 0.0) != (dq >= 0.0)) {
        const double t = dp / (dp - dq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

} // namespace

double iou(const OrientedRect &a, const OrientedRect &b) {
  const Quad ca = corners(a);
  const Quad cb = corners(b);
  if (ca == cb)
    return 1.0;
  const double reach = 0.5 * (std::hypot(a.width, a.height) + std::hypot(b.width, b.height));
  if (distance(a.center, b.center) > reach)
    return 0.0;

  const std::vector<Point2> inter = clip_convex({ca.begin(), ca.end()}, cb);
  if (inter.size() < 3)
    return 0.0;
  const double ai = std::abs(polygon_area(inter));
  const double uni = rect_area(a) + rect_area(b) - ai;
  if (!(uni > 0.0))
    return 0.0;
  return std::clamp(ai / uni, 0.0, 1.0);
}

double oriented_iou(const OrientedRect &a, const OrientedRect &b) {
  const double delta = std::abs(normalize_angle(a.orientation - b.orientation));
  if (delta >= 0.5 * kPi)
    return 0.0;
  return iou(a, b) * std::cos(delta);
}

RoiRecord to_record(const OrientedRect &r) {
  return {r.center.x, r.center.y, r.width, r.height,
          rad_to_deg(normalize_angle(r.orientation))};
}

OrientedRect from_record(const RoiRecord &rec) {
  return {{rec.center_x, rec.center_y},
          rec.width,
          rec.height,
          normalize_angle(deg_to_rad(rec.orientation_deg))};
}

} // namespace saffire
