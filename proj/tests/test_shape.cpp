#include <gtest/gtest.h>

#include <cmath>

#include "anchorface/data.hpp"
#include "anchorface/random.hpp"
#include "anchorface/shape.hpp"

using namespace anchorface;

namespace {

LandmarkShape random_shape(Rng& rng, std::size_t n) {
  std::vector<Point2> pts(n);
  for (auto& p : pts) p = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
  return LandmarkShape(std::move(pts));
}

// Eyes at indices 0..3: left inner, left outer, right inner, right outer.
LandmarkShape eyes(double wl, double wr) {
  return LandmarkShape({{-1.0, 0.0}, {-1.0 - wl, 0.0}, {1.0, 0.0}, {1.0 + wr, 0.0}});
}
constexpr EyeCornerIndex kEyes{0, 1, 2, 3};

}  // namespace

TEST(Shape, ConstructionRejectsNonFinite) {
  EXPECT_THROW(LandmarkShape({{0.0, NAN}}), Error);
  EXPECT_THROW(LandmarkShape({{INFINITY, 0.0}}), Error);
}

TEST(Shape, CentroidOfEmptyThrows) {
  try {
    centroid(LandmarkShape{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

TEST(Shape, CentroidAndBoundingBox) {
  const LandmarkShape s({{0, 0}, {4, 0}, {4, 2}, {0, 2}});
  EXPECT_EQ(centroid(s), (Point2{2, 1}));
  const auto b = bounding_box(s);
  EXPECT_DOUBLE_EQ(b.w, 4.0);
  EXPECT_DOUBLE_EQ(b.h, 2.0);
  EXPECT_DOUBLE_EQ(b.diagonal(), std::sqrt(20.0));
}

TEST(Shape, RotateQuarterTurn) {
  const LandmarkShape s({{1, 0}, {-1, 0}});
  const auto r = rotate_shape(s, 90.0, Point2{});
  EXPECT_NEAR(r[0].x, 0.0, 1e-15);
  EXPECT_NEAR(r[0].y, 1.0, 1e-15);
  EXPECT_NEAR(r[1].y, -1.0, 1e-15);
}

TEST(Shape, RotateRejectsNonFiniteAngle) { EXPECT_THROW(rotate_shape(eyes(1, 1), NAN), Error); }

TEST(ShapeProperty, RotationPreservesCentroidAndDistances) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_shape(rng, 1 + rng.below(20));
    const double angle = rng.uniform(-720, 720);
    const auto r = rotate_shape(s, angle);
    const Point2 c0 = centroid(s), c1 = centroid(r);
    EXPECT_NEAR(c0.x, c1.x, 1e-9);
    EXPECT_NEAR(c0.y, c1.y, 1e-9);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      EXPECT_NEAR(distance(s[i], s[i + 1]), distance(r[i], r[i + 1]), 1e-9);
    }
  }
}

TEST(ShapeProperty, RotationComposes) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_shape(rng, 8);
    const double a = rng.uniform(-180, 180), b = rng.uniform(-180, 180);
    const auto twice = rotate_shape(rotate_shape(s, a, Point2{}), b, Point2{});
    const auto once = rotate_shape(s, a + b, Point2{});
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(distance(twice[i], once[i]), 0.0, 1e-9);
  }
}

TEST(Shape, MeanShapeChecksCountsAndFrames) {
  const LandmarkShape a({{0, 0}, {2, 2}}), b({{2, 0}, {0, 2}});
  const std::vector<LandmarkShape> both{a, b};
  const auto m = mean_shape(both);
  EXPECT_EQ(m[0], (Point2{1, 0}));
  EXPECT_EQ(m[1], (Point2{1, 2}));
  const std::vector<LandmarkShape> ragged{a, LandmarkShape({{0, 0}})};
  EXPECT_THROW(mean_shape(ragged), Error);
  const std::vector<LandmarkShape> frames{a, LandmarkShape({{0, 0}, {1, 1}}, Frame::pixel(10, 10))};
  EXPECT_THROW(mean_shape(frames), Error);
  EXPECT_THROW(mean_shape(std::span<const LandmarkShape>{}), Error);
}

TEST(YawIndicator, EqualEyesGiveZero) { EXPECT_DOUBLE_EQ(yaw_indicator(eyes(1, 1), kEyes), 0.0); }

TEST(YawIndicator, MatchesRatioFormula) {
  EXPECT_NEAR(yaw_indicator(eyes(2, 1), kEyes), 2.0 - 0.5, 1e-15);
  EXPECT_NEAR(yaw_indicator(eyes(1, 4), kEyes), 0.25 - 4.0, 1e-15);
}

TEST(YawIndicator, IsAntisymmetricUnderEyeSwap) {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const double wl = rng.uniform(0.1, 3), wr = rng.uniform(0.1, 3);
    EXPECT_NEAR(yaw_indicator(eyes(wl, wr), kEyes), -yaw_indicator(eyes(wr, wl), kEyes), 1e-12);
  }
}

TEST(YawIndicator, DegenerateEyeThrows) {
  try {
    yaw_indicator(eyes(0, 1), kEyes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateEye);
  }
}

TEST(YawIndicator, IndicesAreValidated) {
  EXPECT_THROW(yaw_indicator(eyes(1, 1), EyeCornerIndex{0, 1, 2, 9}), Error);
  EXPECT_THROW(yaw_indicator(eyes(1, 1), EyeCornerIndex{0, 0, 2, 3}), Error);
}

TEST(YawBuckets, StrictInequalityAtGamma) {
  EXPECT_EQ(classify_yaw(6.0, 6.0), YawBucket::Frontal);
  EXPECT_EQ(classify_yaw(-6.0, 6.0), YawBucket::Frontal);
  EXPECT_EQ(classify_yaw(6.0001, 6.0), YawBucket::Positive);
  EXPECT_EQ(classify_yaw(-6.0001, 6.0), YawBucket::Negative);
}

TEST(YawBuckets, SyntheticProfilesLandInTheirBuckets) {
  const std::vector<LandmarkShape> shapes{face_prototype(FacePrototype::Negative), face_prototype(FacePrototype::Frontal),
                                          face_prototype(FacePrototype::Positive)};
  const auto b = bucket_by_yaw(shapes, kFaceEyes, 6.0);
  EXPECT_EQ(b[0], YawBucket::Negative);
  EXPECT_EQ(b[1], YawBucket::Frontal);
  EXPECT_EQ(b[2], YawBucket::Positive);
  EXPECT_THROW(bucket_by_yaw(shapes, kFaceEyes, 0.0), Error);
}

TEST(YawBucketsProperty, InvariantUnderSimilarityTransforms) {
  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    const auto base = interpolate_prototypes(rng.uniform(-1, 1));
    const double r0 = yaw_indicator(base, kFaceEyes);
    const auto moved = translate(scale_about(rotate_shape(base, rng.uniform(-180, 180)), rng.uniform(0.2, 5), Point2{}),
                                 {rng.uniform(-3, 3), rng.uniform(-3, 3)});
    EXPECT_NEAR(yaw_indicator(moved, kFaceEyes), r0, 1e-9);
  }
}
