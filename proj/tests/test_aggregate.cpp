#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace anchorface;

namespace {

// Plain-loop oracles that rebuild every template position from the grid
// points and offsets instead of going through the template table.
std::vector<Point2> oracle_pair(const PredictionField& f, const AnchorGrid& g, const AnchorTemplateSet& s, int a, int t) {
  std::vector<Point2> out;
  for (int j = 0; j < f.L; ++j) {
    const Point2 anchor = g.points[a];
    const Point2 off = s.templates[t].offsets[j];
    out.push_back({anchor.x + g.image_side * (off.x + f.offset(a, t, j, 0)),
                   anchor.y + g.image_side * (off.y + f.offset(a, t, j, 1))});
  }
  return out;
}

std::vector<Point2> oracle_argmax(const PredictionField& f, const AnchorGrid& g, const AnchorTemplateSet& s) {
  int ba = 0, bt = 0;
  for (int a = 0; a < static_cast<int>(f.cells()); ++a) {
    for (int t = 0; t < f.K; ++t) {
      if (f.confidence(a, t) > f.confidence(ba, bt)) {
        ba = a;
        bt = t;
      }
    }
  }
  return oracle_pair(f, g, s, ba, bt);
}

std::vector<Point2> oracle_weighted(const PredictionField& f, const AnchorGrid& g, const AnchorTemplateSet& s, double th) {
  std::vector<Point2> acc(f.L);
  double w = 0.0;
  for (int a = 0; a < static_cast<int>(f.cells()); ++a) {
    for (int t = 0; t < f.K; ++t) {
      const double c = f.confidence(a, t);
      if (c < th) continue;
      const auto p = oracle_pair(f, g, s, a, t);
      for (int j = 0; j < f.L; ++j) acc[j] = acc[j] + c * p[j];
      w += c;
    }
  }
  if (w == 0.0) return oracle_argmax(f, g, s);
  for (auto& p : acc) p = (1.0 / w) * p;
  return acc;
}

std::vector<Point2> oracle_mean(const PredictionField& f, const AnchorGrid& g, const AnchorTemplateSet& s) {
  std::vector<Point2> acc(f.L);
  for (int a = 0; a < static_cast<int>(f.cells()); ++a) {
    for (int t = 0; t < f.K; ++t) {
      const auto p = oracle_pair(f, g, s, a, t);
      for (int j = 0; j < f.L; ++j) acc[j] = acc[j] + p[j];
    }
  }
  for (auto& p : acc) p = (1.0 / static_cast<double>(f.pairs())) * p;
  return acc;
}

void expect_close(const LandmarkShape& got, const std::vector<Point2>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t j = 0; j < want.size(); ++j) {
    EXPECT_NEAR(got[j].x, want[j].x, tol);
    EXPECT_NEAR(got[j].y, want[j].y, tol);
  }
}

struct Case {
  AnchorGrid grid;
  AnchorTemplateSet set;
  PredictionField field;
};

Case random_case(Rng& rng) {
  const int rows = 1 + static_cast<int>(rng.below(3)), cols = 1 + static_cast<int>(rng.below(3));
  const int K = 1 + static_cast<int>(rng.below(4)), L = 1 + static_cast<int>(rng.below(5));
  const double side = rng.uniform(16, 256);
  Case c{build_anchor_grid({side, side * rng.uniform(0.1, 1.0), rows, cols}), testutil::random_templates(K, L, rng), {}};
  c.field = testutil::random_field(rows, cols, K, L, rng);
  return c;
}

}  // namespace

TEST(AggregateProperty, StrategiesMatchLoopOracles) {
  Rng rng(100);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_case(rng);
    AggregateConfig cfg;
    cfg.c_th = rng.uniform(0.0, 0.9);
    expect_close(aggregate_weighted(c.field, c.grid, c.set, cfg).landmarks, oracle_weighted(c.field, c.grid, c.set, cfg.c_th), 1e-9);
    expect_close(aggregate_argmax(c.field, c.grid, c.set).landmarks, oracle_argmax(c.field, c.grid, c.set), 1e-9);
    expect_close(aggregate_mean(c.field, c.grid, c.set).landmarks, oracle_mean(c.field, c.grid, c.set), 1e-9);
  }
}

TEST(AggregateProperty, ExactTargetsReconstructGroundTruth) {
  Rng rng(200);
  for (int i = 0; i < 100; ++i) {
    auto c = random_case(rng);
    const auto gt = testutil::random_gt(c.field.L, c.grid.image_side, rng);
    const auto target = regression_targets(gt, c.grid, c.set);
    c.field.offsets = target;
    c.field.confidences[rng.below(c.field.pairs())] = 0.95;
    for (auto s : {AggregateStrategy::Weighted, AggregateStrategy::Argmax, AggregateStrategy::Mean}) {
      AggregateConfig cfg;
      cfg.strategy = s;
      const auto out = aggregate(c.field, c.grid, c.set, cfg);
      EXPECT_FALSE(out.fell_back);
      expect_close(out.landmarks, std::vector<Point2>(gt.begin(), gt.end()), 1e-9);
    }
  }
}

TEST(AggregateProperty, WeightedIsInvariantToConfidenceScale) {
  Rng rng(300);
  for (int i = 0; i < 50; ++i) {
    auto c = random_case(rng);
    AggregateConfig cfg;
    cfg.c_th = 0.0;
    const auto a = aggregate_weighted(c.field, c.grid, c.set, cfg).landmarks;
    for (auto& v : c.field.confidences) v *= 0.5;
    expect_close(aggregate_weighted(c.field, c.grid, c.set, cfg).landmarks, std::vector<Point2>(a.begin(), a.end()), 1e-9);
  }
}

TEST(AggregateProperty, WeightedIsAConvexCombination) {
  Rng rng(400);
  for (int i = 0; i < 50; ++i) {
    const auto c = random_case(rng);
    AggregateConfig cfg;
    cfg.c_th = 0.3;
    const auto out = aggregate_weighted(c.field, c.grid, c.set, cfg).landmarks;
    for (int j = 0; j < c.field.L; ++j) {
      double lo = 1e300, hi = -1e300;
      for (int a = 0; a < static_cast<int>(c.field.cells()); ++a) {
        for (int t = 0; t < c.field.K; ++t) {
          const double x = oracle_pair(c.field, c.grid, c.set, a, t)[j].x;
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
      }
      EXPECT_GE(out[j].x, lo - 1e-9);
      EXPECT_LE(out[j].x, hi + 1e-9);
    }
  }
}

TEST(Aggregate, ThresholdIsInclusive) {
  Rng rng(5);
  auto c = random_case(rng);
  std::fill(c.field.confidences.begin(), c.field.confidences.end(), 0.1);
  c.field.confidences[0] = 0.6;
  AggregateConfig cfg;
  const auto out = aggregate_weighted(c.field, c.grid, c.set, cfg);
  EXPECT_EQ(out.used_count, 1u);
  EXPECT_DOUBLE_EQ(out.total_weight, 0.6);
}

TEST(Aggregate, FallbackAndErrorPolicy) {
  Rng rng(6);
  auto c = random_case(rng);
  std::fill(c.field.confidences.begin(), c.field.confidences.end(), 0.1);
  c.field.confidences.back() = 0.2;
  AggregateConfig cfg;
  const auto out = aggregate_weighted(c.field, c.grid, c.set, cfg);
  EXPECT_TRUE(out.fell_back);
  expect_close(out.landmarks, oracle_argmax(c.field, c.grid, c.set), 1e-12);
  cfg.fallback = AggregateFallback::Error;
  try {
    aggregate_weighted(c.field, c.grid, c.set, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoConfidentAnchor);
  }
}

TEST(Aggregate, ArgmaxTiesPickTheFirstPair) {
  Rng rng(7);
  auto c = random_case(rng);
  std::fill(c.field.confidences.begin(), c.field.confidences.end(), 0.5);
  expect_close(aggregate_argmax(c.field, c.grid, c.set).landmarks, oracle_pair(c.field, c.grid, c.set, 0, 0), 1e-12);
}

TEST(Aggregate, RejectsMisalignedInputs) {
  Rng rng(8);
  auto c = random_case(rng);
  auto bad = c.field;
  bad.confidences.pop_back();
  EXPECT_THROW(aggregate_mean(bad, c.grid, c.set), Error);
  const auto other_grid = build_anchor_grid({c.grid.image_side, c.grid.image_side / 2, c.grid.rows + 1, c.grid.cols});
  EXPECT_THROW(aggregate_argmax(c.field, other_grid, c.set), Error);
  AggregateConfig cfg;
  cfg.c_th = 1.0;
  EXPECT_THROW(aggregate_weighted(c.field, c.grid, c.set, cfg), Error);
}

TEST(Aggregate, StrategyNamesRoundTrip) {
  for (auto s : {AggregateStrategy::Weighted, AggregateStrategy::Argmax, AggregateStrategy::Mean}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("median"), Error);
}
