#pragma once

#include <array>
#include <span>

namespace saffire {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

double deg_to_rad(double degrees);
double rad_to_deg(double radians);

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend bool operator==(const Point2 &, const Point2 &) = default;
};

double distance(Point2 a, Point2 b);

/// p' = scale * R(rotation) * p + (tx, ty).
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  static SimilarityTransform identity() { return {}; }
  static SimilarityTransform translation(double x, double y) { return {1.0, 0.0, x, y}; }

  friend bool operator==(const SimilarityTransform &, const SimilarityTransform &) = default;
};

/// Result applies b first, then a.
SimilarityTransform compose(const SimilarityTransform &a, const SimilarityTransform &b);
SimilarityTransform invert(const SimilarityTransform &t);
Point2 apply(const SimilarityTransform &t, Point2 p);

/// True when every component of a and b agrees within tol (rotation compared on the circle).
bool approx_equal(const SimilarityTransform &a, const SimilarityTransform &b, double tol);

/// Least-squares similarity mapping src[i] onto dst[i]. Returns false when the
/// source points are (numerically) coincident and no rotation/scale is defined.
bool fit_similarity(std::span<const Point2> src, std::span<const Point2> dst,
                    SimilarityTransform &out);

/// Oriented rectangle. The orientation is the direction from the center toward
/// the midpoint of the edge joining corner 0 (the origin) and corner 1. With
/// u = (cos o, sin o) and n = (-sin o, cos o) the corners are
///   c0 = C + h/2 u - w/2 n,  c1 = C + h/2 u + w/2 n,
///   c2 = C - h/2 u + w/2 n,  c3 = C - h/2 u - w/2 n,
/// which is clockwise on screen (y pointing down). An upright box whose origin
/// is its top-left corner therefore has orientation -90 degrees.
struct OrientedRect {
  Point2 center;
  double width = 1.0;
  double height = 1.0;
  double orientation = 0.0;

  friend bool operator==(const OrientedRect &, const OrientedRect &) = default;
};

using Quad = std::array<Point2, 4>;

Quad corners(const OrientedRect &r);
OrientedRect rect_from_corners(const Quad &c);

/// Same rectangle, origin moved to the opposite corner.
OrientedRect flip180(const OrientedRect &r);

OrientedRect transform_rect(const SimilarityTransform &t, const OrientedRect &r);

/// Grows width and height by the given factor around the center.
OrientedRect scale_rect(const OrientedRect &r, double factor);

double rect_area(const OrientedRect &r);

double iou(const OrientedRect &a, const OrientedRect &b);

/// iou(a, b) * max(0, cos(a.orientation - b.orientation)); zero at or beyond a
/// quarter turn of disagreement.
double oriented_iou(const OrientedRect &a, const OrientedRect &b);

/// Interchange encoding: center_x, center_y, width, height, orientation in
/// degrees within (-180, 180].
struct RoiRecord {
  double center_x = 0.0;
  double center_y = 0.0;
  double width = 0.0;
  double height = 0.0;
  double orientation_deg = 0.0;
};

RoiRecord to_record(const OrientedRect &r);
OrientedRect from_record(const RoiRecord &rec);

} // namespace saffire
