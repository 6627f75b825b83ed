#include "helpers.hpp"
#include "oracles.hpp"

#include "saffire/geometry.hpp"

#include <doctest.h>

#include <random>

using namespace saffire;
using testing_support::random_rect;
using testing_support::random_similarity;

TEST_SUITE("geometry") {

TEST_CASE("compose examples") {
  const SimilarityTransform t{1.7, 0.4, -3.0, 12.5};
  CHECK(approx_equal(compose(SimilarityTransform::identity(), t), t, 1e-12));
  CHECK(approx_equal(compose(t, invert(t)), SimilarityTransform::identity(), 1e-12));

  const SimilarityTransform s2{2.0, 0.0, 0.0, 0.0};
  const SimilarityTransform tr = SimilarityTransform::translation(3.0, 0.0);
  const Point2 p = apply(compose(s2, tr), {1.0, 0.0});
  CHECK(p.x == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.0));
  const Point2 q = oracle::apply(oracle::matrix(s2) * oracle::matrix(tr), {1.0, 0.0});
  CHECK(q.x == doctest::Approx(8.0));
  CHECK(q.y == doctest::Approx(0.0));
}

TEST_CASE("apply examples") {
  CHECK(apply(SimilarityTransform::identity(), {5, 7}) == Point2{5, 7});
  const Point2 r = apply({1.0, kPi / 2, 0.0, 0.0}, {1.0, 0.0});
  CHECK(r.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.y == doctest::Approx(1.0));
  const SimilarityTransform t{2.0, 0.0, 1.0, 1.0};
  const Point2 a = apply(t, {2, 3});
  const Point2 b = oracle::apply(oracle::matrix(t), {2, 3});
  CHECK(a.x == doctest::Approx(5.0));
  CHECK(a.y == doctest::Approx(7.0));
  CHECK(b.x == doctest::Approx(5.0));
  CHECK(b.y == doctest::Approx(7.0));
}

TEST_CASE("compose agrees with homogeneous matrices") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 500; ++i) {
    const SimilarityTransform a = random_similarity(rng), b = random_similarity(rng);
    const Eigen::Matrix3d m = oracle::matrix(a) * oracle::matrix(b);
    const Point2 p{u(rng), u(rng)};
    const Point2 got = apply(compose(a, b), p);
    const Point2 want = oracle::apply(m, p);
    REQUIRE(got.x == doctest::Approx(want.x).epsilon(1e-9));
    REQUIRE(got.y == doctest::Approx(want.y).epsilon(1e-9));
  }
}

TEST_CASE("inverse and distance properties") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const SimilarityTransform t = random_similarity(rng);
    REQUIRE(approx_equal(compose(t, invert(t)), SimilarityTransform::identity(), 1e-9));
    REQUIRE(approx_equal(compose(invert(t), t), SimilarityTransform::identity(), 1e-9));
    const Point2 p{u(rng), u(rng)}, q{u(rng), u(rng)};
    const double d0 = distance(p, q), d1 = distance(apply(t, p), apply(t, q));
    REQUIRE(std::abs(d1 - t.scale * d0) <= 1e-9 * std::max(1.0, d1));
  }
}

TEST_CASE("transform_rect examples") {
  const OrientedRect r{{3, 4}, 10, 4, 0.0};
  CHECK(transform_rect(SimilarityTransform::identity(), r) == r);
  const OrientedRect flipped = transform_rect({1.0, kPi, 0.0, 0.0}, OrientedRect{{0, 0}, 10, 4, 0.0});
  CHECK(std::abs(normalize_angle(flipped.orientation - kPi)) < 1e-12);
  CHECK(oriented_iou(flipped, OrientedRect{{0, 0}, 10, 4, 0.0}) == 0.0);
  const OrientedRect big = transform_rect({2.0, 0.0, 0.0, 0.0}, OrientedRect{{0, 0}, 10, 4, 0.0});
  CHECK(big.width == doctest::Approx(20.0));
  CHECK(big.height == doctest::Approx(8.0));
}

TEST_CASE("transform_rect commutes with corners") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const SimilarityTransform t = random_similarity(rng);
    const OrientedRect r = random_rect(rng);
    const Quad a = corners(transform_rect(t, r));
    const Quad b = corners(r);
    for (int k = 0; k < 4; ++k) {
      const Point2 m = apply(t, b[k]);
      REQUIRE(distance(a[k], m) <= 1e-9 * std::max(1.0, std::abs(m.x) + std::abs(m.y)));
    }
  }
}

TEST_CASE("corner convention") {
  // Upright box with its origin at the top-left corner.
  const OrientedRect r{{50, 30}, 100, 60, -kPi / 2};
  const Quad c = corners(r);
  CHECK(c[0].x == doctest::Approx(0.0));
  CHECK(c[0].y == doctest::Approx(0.0));
  CHECK(c[1].x == doctest::Approx(100.0));
  CHECK(c[1].y == doctest::Approx(0.0));
  CHECK(c[2].x == doctest::Approx(100.0));
  CHECK(c[2].y == doctest::Approx(60.0));
  const auto q = oracle::quad(r);
  for (int k = 0; k < 4; ++k)
    CHECK(distance(c[k], q[k]) < 1e-12);
  const OrientedRect back = rect_from_corners(c);
  CHECK(distance(back.center, r.center) < 1e-9);
  CHECK(back.width == doctest::Approx(100.0));
  CHECK(back.height == doctest::Approx(60.0));
  CHECK(std::abs(normalize_angle(back.orientation - r.orientation)) < 1e-12);
}

TEST_CASE("iou examples") {
  const OrientedRect a{{0, 0}, 1, 1, 0.0};
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou(a, OrientedRect{{5, 5}, 1, 1, 0.0}) == 0.0);
  const OrientedRect b{{0.5, 0}, 1, 1, 0.0};
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // 1000x supersampling along each axis.
  CHECK(std::abs(oracle::raster_iou(a, b, 1000) - 1.0 / 3.0) < 1e-3);
}

TEST_CASE("oriented_iou examples") {
  const OrientedRect a{{2, 3}, 8, 8, 0.3};
  CHECK(oriented_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oriented_iou(a, flip180(a)) == 0.0);
  OrientedRect b = a;
  b.orientation += deg_to_rad(60.0);
  CHECK(oriented_iou(a, b) == doctest::Approx(0.5 * iou(a, b)).epsilon(1e-12));
}

TEST_CASE("row-counting rasterizer agrees with point sampling") {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 20; ++i) {
    const OrientedRect a = random_rect(rng, 5.0), b = random_rect(rng, 5.0);
    CHECK(oracle::raster_iou(a, b, 150) == doctest::Approx(oracle::raster_iou_pointwise(a, b, 150)).epsilon(1e-12));
  }
}

TEST_CASE("iou matches rasterization on random pairs") {
  std::mt19937_64 rng(15);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const OrientedRect a = random_rect(rng, 10.0), b = random_rect(rng, 10.0);
    worst = std::max(worst, std::abs(iou(a, b) - oracle::raster_iou(a, b)));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("iou properties") {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 1000; ++i) {
    const OrientedRect a = random_rect(rng, 10.0), b = random_rect(rng, 10.0);
    const double ab = iou(a, b), ba = iou(b, a);
    REQUIRE(ab == doctest::Approx(ba).epsilon(1e-12));
    REQUIRE(ab >= 0.0);
    REQUIRE(ab <= 1.0 + 1e-12);
    REQUIRE(iou(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    const double o = oriented_iou(a, b);
    REQUIRE(o <= ab + 1e-15);
    REQUIRE(o == doctest::Approx(oriented_iou(b, a)).epsilon(1e-12));
    REQUIRE(oriented_iou(a, flip180(a)) == 0.0);
    // The same rectangle expressed from the opposite corner has full plain
    // overlap but the flipped orientation.
    REQUIRE(iou(a, flip180(a)) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("iou below one when corners differ") {
  const OrientedRect a{{0, 0}, 10, 4, 0.0};
  OrientedRect b = a;
  b.center.x += 0.01;
  CHECK(iou(a, b) < 1.0);
  b = a;
  b.width = 10.01;
  CHECK(iou(a, b) < 1.0);
}

TEST_CASE("roi record round trip") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    const OrientedRect r = random_rect(rng);
    const RoiRecord rec = to_record(r);
    REQUIRE(rec.orientation_deg > -180.0);
    REQUIRE(rec.orientation_deg <= 180.0);
    const OrientedRect back = from_record(rec);
    REQUIRE(oriented_iou(r, back) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("fit_similarity recovers planted transforms") {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-40, 40);
  for (int i = 0; i < 100; ++i) {
    const SimilarityTransform t = random_similarity(rng);
    std::vector<Point2> src, dst;
    for (int k = 0; k < 6; ++k) {
      src.push_back({u(rng), u(rng)});
      dst.push_back(oracle::apply(oracle::matrix(t), src.back()));
    }
    SimilarityTransform fit;
    REQUIRE(fit_similarity(src, dst, fit));
    REQUIRE(approx_equal(fit, t, 1e-8));
  }
  std::vector<Point2> same(3, Point2{1, 1});
  SimilarityTransform fit;
  CHECK_FALSE(fit_similarity(same, same, fit));
}

}
