#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"

using namespace anchorface;

namespace {

std::vector<LandmarkShape> synthetic_gts(std::size_t n, std::uint64_t seed) {
  std::vector<LandmarkShape> out;
  for (const auto& s : synth_dataset({}, seed, n)) out.push_back(s.gt);
  return out;
}

}  // namespace

TEST(AnchorGrid, SevenBySevenSpansTheArea) {
  const auto g = build_anchor_grid({224, 56, 7, 7});
  ASSERT_EQ(g.size(), 49u);
  EXPECT_DOUBLE_EQ(g.points.front().x, 112 - 28);
  EXPECT_DOUBLE_EQ(g.points.front().y, 112 - 28);
  EXPECT_DOUBLE_EQ(g.points.back().x, 112 + 28);
  EXPECT_DOUBLE_EQ(g.points[1].x - g.points[0].x, 56.0 / 6.0);
  EXPECT_DOUBLE_EQ(g.points[7].y - g.points[0].y, 56.0 / 6.0);
  EXPECT_DOUBLE_EQ(g.points[24].x, 112.0);
  EXPECT_DOUBLE_EQ(g.points[24].y, 112.0);
}

TEST(AnchorGrid, SingleCellSitsAtTheCentre) {
  const auto g = build_anchor_grid({64, 16, 1, 1});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.points[0], (Point2{32, 32}));
}

TEST(AnchorGrid, RejectsBadConfigs) {
  EXPECT_THROW(build_anchor_grid({64, 0, 7, 7}), Error);
  EXPECT_THROW(build_anchor_grid({64, 65, 7, 7}), Error);
  EXPECT_THROW(build_anchor_grid({64, 16, 0, 7}), Error);
  EXPECT_THROW(build_anchor_grid({0, 16, 7, 7}), Error);
}

TEST(Kmeans, SeparatesObviousClusters) {
  std::vector<std::vector<double>> data;
  Rng rng(3);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 30; ++i) data.push_back({10.0 * c + rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  const auto r = lloyd_kmeans(data, 3, 1);
  for (int c = 0; c < 3; ++c) {
    std::set<std::size_t> labels;
    for (int i = 0; i < 30; ++i) labels.insert(r.assignment[c * 30 + i]);
    EXPECT_EQ(labels.size(), 1u);
  }
}

TEST(KmeansProperty, FixedPointConditions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> data(60, std::vector<double>(4));
    for (auto& x : data) {
      for (auto& v : x) v = rng.normal();
    }
    const std::size_t k = 1 + seed % 6;
    const auto r = lloyd_kmeans(data, k, seed, {500, 0.0});
    double inertia = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& own = r.centroids[r.assignment[i]];
      const double d_own = detail::squared_distance(own, data[i]);
      for (const auto& c : r.centroids) EXPECT_LE(d_own, detail::squared_distance(c, data[i]) + 1e-12);
      inertia += d_own;
    }
    EXPECT_NEAR(inertia, r.inertia, 1e-9);
  }
}

TEST(Kmeans, RejectsTooFewPoints) {
  EXPECT_THROW(lloyd_kmeans({{1.0}}, 2, 0), Error);
  EXPECT_THROW(lloyd_kmeans({{1.0}}, 0, 0), Error);
}

TEST(Templates, KmeansTwentyFourIsThreeBasesTimesEightRolls) {
  const auto gts = synthetic_gts(300, 1);
  const auto set = kmeans_templates(gts, 3, 45.0, 7);
  ASSERT_EQ(set.size(), 24u);
  EXPECT_EQ(set.landmark_count, kFaceLandmarks);
  for (std::size_t t = 0; t < set.size(); ++t) {
    EXPECT_EQ(set.templates[t].id, static_cast<int>(t));
    EXPECT_EQ(set.templates[t].base_index, static_cast<int>(t / 8));
    EXPECT_DOUBLE_EQ(set.templates[t].roll_deg, 45.0 * (t % 8));
  }
}

TEST(TemplatesProperty, RollCopiesAreRotationsOfTheirBase) {
  const auto gts = synthetic_gts(200, 2);
  const auto set = kmeans_templates(gts, 3, 45.0, 7);
  for (const auto& t : set.templates) {
    const auto& base = set.templates[t.base_index * 8].offsets;
    const auto expect = rotate_shape(base, t.roll_deg, Point2{});
    for (std::size_t j = 0; j < base.size(); ++j) EXPECT_NEAR(distance(t.offsets[j], expect[j]), 0.0, 1e-12);
    const Point2 c = centroid(t.offsets);
    EXPECT_NEAR(c.x, 0.0, 1e-12);
    EXPECT_NEAR(c.y, 0.0, 1e-12);
  }
}

TEST(Templates, ScaledToMeanTrainingDiagonal) {
  const auto gts = synthetic_gts(200, 3);
  const auto set = kmeans_templates(gts, 3, 360.0, 7);
  double diag = 0.0;
  for (const auto& g : gts) diag += bounding_box(g).diagonal() / 64.0;
  diag /= static_cast<double>(gts.size());
  for (const auto& t : set.templates) EXPECT_NEAR(bounding_box(t.offsets).diagonal(), diag, 1e-12);
}

TEST(Templates, HandDesignUsesYawBuckets) {
  std::vector<LandmarkShape> gts;
  for (double y : {-1.0, -0.9, 0.0, 0.1, 0.9, 1.0}) gts.push_back(interpolate_prototypes(y));
  const auto set = hand_design_templates(gts, kFaceEyes, 6.0, 90.0);
  ASSERT_EQ(set.size(), 12u);
  EXPECT_EQ(std::get<YawBucket>(set.templates[0].base_label), YawBucket::Negative);
  EXPECT_EQ(std::get<YawBucket>(set.templates[4].base_label), YawBucket::Frontal);
  EXPECT_EQ(std::get<YawBucket>(set.templates[8].base_label), YawBucket::Positive);
  EXPECT_GT(yaw_indicator(set.templates[8].offsets, kFaceEyes), 6.0);
  EXPECT_LT(yaw_indicator(set.templates[0].offsets, kFaceEyes), -6.0);
}

TEST(Templates, HandDesignEmptyBucketPolicy) {
  const std::vector<LandmarkShape> frontal{interpolate_prototypes(0.0), interpolate_prototypes(0.1)};
  try {
    hand_design_templates(frontal, kFaceEyes, 6.0, 45.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientPoseCoverage);
  }
  const auto set = hand_design_templates(frontal, kFaceEyes, 6.0, 45.0, {}, EmptyBucketPolicy::GlobalMean);
  EXPECT_EQ(set.size(), 24u);
}

TEST(Templates, RollStepMustDivide360) {
  const auto gts = synthetic_gts(20, 4);
  EXPECT_THROW(kmeans_templates(gts, 3, 50.0, 7), Error);
  EXPECT_THROW(kmeans_templates(gts, 3, 0.0, 7), Error);
  EXPECT_THROW(kmeans_templates(gts, 0, 45.0, 7), Error);
}

TEST(Templates, JsonRoundTrip) {
  const auto gts = synthetic_gts(100, 5);
  for (const auto& set : {kmeans_templates(gts, 2, 90.0, 7), hand_design_templates(gts, kFaceEyes, 6.0, 120.0, {},
                                                                                    EmptyBucketPolicy::GlobalMean)}) {
    const auto back = template_set_from_json(nlohmann::json::parse(to_json(set).dump()));
    ASSERT_EQ(back.size(), set.size());
    EXPECT_EQ(back.provenance, set.provenance);
    EXPECT_EQ(back.gamma, set.gamma);
    EXPECT_EQ(back.seed, set.seed);
    for (std::size_t t = 0; t < set.size(); ++t) {
      EXPECT_EQ(back.templates[t].offsets, set.templates[t].offsets);
      EXPECT_EQ(back.templates[t].base_label, set.templates[t].base_label);
      EXPECT_EQ(back.templates[t].base_index, set.templates[t].base_index);
    }
  }
}

TEST(Templates, MalformedJsonIsAParseError) {
  try {
    template_set_from_json(nlohmann::json::parse(R"({"version": 1, "provenance": "kmeans"})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(Templates, InstantiateAddsAnchorToScaledOffsets) {
  Rng rng(6);
  const auto set = testutil::random_templates(3, 4, rng);
  const auto grid = build_anchor_grid({64, 16, 3, 3});
  const auto s = instantiate_template(grid, 5, set, 2, 64);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(s[j].x, grid.points[5].x + 64 * set.templates[2].offsets[j].x);
    EXPECT_DOUBLE_EQ(s[j].y, grid.points[5].y + 64 * set.templates[2].offsets[j].y);
  }
  EXPECT_THROW(instantiate_template(grid, 9, set, 0, 64), Error);
  EXPECT_THROW(instantiate_template(grid, 0, set, 3, 64), Error);
}
