#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace anchorface;

TEST(AdamW, FirstStepsMatchHandCalculation) {
  ParameterSet<double> p;
  p.tensors.push_back({"w", {2}, {1.0, -2.0}});
  auto g = p.zeros_like();
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW<double> opt(p, cfg);

  g.tensors[0].values = {0.5, -3.0};
  opt.step(p, g, cfg.lr);
  // After one step mhat = g and vhat = g^2, so the update is lr * sign(g).
  EXPECT_NEAR(p.tensors[0].values[0], 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p.tensors[0].values[1], -2.0 + 0.1 * 0.01 * 2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-12);

  const double w0 = p.tensors[0].values[0];
  g.tensors[0].values = {1.0, 0.0};
  opt.step(p, g, cfg.lr);
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 1.0;
  const double v = 0.999 * 0.001 * 0.25 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  const double decayed = w0 - 0.1 * 0.01 * w0;
  EXPECT_NEAR(p.tensors[0].values[0], decayed - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
  EXPECT_EQ(opt.steps(), 2);
}

TEST(AdamW, RejectsMismatchedGradients) {
  ParameterSet<double> p;
  p.tensors.push_back({"w", {1}, {1.0}});
  AdamW<double> opt(p, {});
  ParameterSet<double> g;
  EXPECT_THROW(opt.step(p, g, 0.1), Error);
}

TEST(StepLr, DividesAtFractionBoundaries) {
  const std::vector<double> f{0.5, 0.75};
  EXPECT_DOUBLE_EQ(step_lr(1.0, 0, 20, f), 1.0);
  EXPECT_DOUBLE_EQ(step_lr(1.0, 9, 20, f), 1.0);
  EXPECT_NEAR(step_lr(1.0, 10, 20, f), 0.1, 1e-15);
  EXPECT_NEAR(step_lr(1.0, 14, 20, f), 0.1, 1e-15);
  EXPECT_NEAR(step_lr(1.0, 15, 20, f), 0.01, 1e-15);
  EXPECT_NEAR(step_lr(2.0, 19, 20, f, 0.5), 0.5, 1e-15);
}

TEST(Schedule, JsonRoundTrip) {
  TrainSchedule s;
  s.epochs = 3;
  s.adam.lr = 0.02;
  s.decay_fractions = {0.3};
  s.seed = 99;
  EXPECT_EQ(train_schedule_from_json(nlohmann::json::parse(to_json(s).dump())), s);
  LossConfig l;
  l.beta = 0.2;
  l.con_loss_form = ConLossForm::TargetInLog;
  l.detach_confidence_in_reg = false;
  EXPECT_EQ(loss_config_from_json(nlohmann::json::parse(to_json(l).dump())), l);
}

namespace {

struct Tiny {
  ModelConfig cfg = testutil::tiny_config();
  AnchorSetup setup = testutil::tiny_setup(cfg);
  std::vector<Sample> data = testutil::tiny_batch(cfg, 4);
  TrainSchedule schedule;

  Tiny() {
    schedule.epochs = 200;
    schedule.batch_size = 4;
    schedule.adam.lr = 1e-2;
    schedule.decay_fractions = {};
    schedule.max_rot_deg = 0;
    schedule.max_trans_frac = 0;
  }
};

}  // namespace

TEST(Train, OverfitsFourImages) {
  Tiny t;
  const auto r = train(t.data, t.setup, t.cfg, t.schedule);
  ASSERT_EQ(r.loss_history.size(), 200u);
  EXPECT_LT(r.loss_history.back(), 0.5 * r.loss_history.front());
}

TEST(Train, BaselineOverfitsFourImages) {
  Tiny t;
  t.cfg.head = HeadKind::Direct;
  const auto r = train_baseline(t.data, t.cfg, t.schedule);
  EXPECT_LT(r.loss_history.back(), 0.5 * r.loss_history.front());
}

TEST(Train, IsBitwiseDeterministic) {
  Tiny t;
  t.schedule.epochs = 3;
  t.schedule.max_rot_deg = 20;
  t.schedule.max_trans_frac = 0.05;
  const auto a = train(t.data, t.setup, t.cfg, t.schedule);
  const auto b = train(t.data, t.setup, t.cfg, t.schedule);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss_history, b.loss_history);
  t.schedule.seed += 1;
  EXPECT_NE(train(t.data, t.setup, t.cfg, t.schedule).params, a.params);
}

TEST(Train, ReportsEveryEpoch) {
  Tiny t;
  t.schedule.epochs = 4;
  std::vector<int> seen;
  train(t.data, t.setup, t.cfg, t.schedule, {}, [&](int e, double loss) {
    EXPECT_TRUE(std::isfinite(loss));
    seen.push_back(e);
  });
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Train, DivergenceIsReported) {
  Tiny t;
  t.schedule.adam.lr = 1e30;
  t.schedule.epochs = 5;
  try {
    train(t.data, t.setup, t.cfg, t.schedule);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Divergence);
  }
}

TEST(Train, ConfigMismatchesAreRejected) {
  Tiny t;
  auto other = t.cfg;
  other.K = 3;
  EXPECT_THROW(train(t.data, t.setup, other, t.schedule), Error);
  EXPECT_THROW(train_baseline(t.data, t.cfg, t.schedule), Error);
  EXPECT_THROW(train(std::span<const Sample>{}, t.setup, t.cfg, t.schedule), Error);
  t.schedule.epochs = 0;
  EXPECT_THROW(train(t.data, t.setup, t.cfg, t.schedule), Error);
}

TEST(Evaluate, PerfectFieldsScoreZero) {
  Tiny t;
  std::vector<PredictionField> fields;
  for (const auto& s : t.data) {
    auto f = PredictionField::zeros(2, 2, 2, 3);
    f.offsets = regression_targets(s.gt, t.setup.grid, t.setup.templates, t.setup.table);
    for (std::size_t p = 0; p < f.pairs(); ++p) f.confidences[p] = 0.5 + 0.1 * static_cast<double>(p % 4);
    fields.push_back(std::move(f));
  }
  const auto r = evaluate_fields(fields, t.data, t.setup, {}, false);
  EXPECT_NEAR(r.nme, 0.0, 1e-12);
  EXPECT_NEAR(r.auc_01, 1.0, 1e-12);
  EXPECT_FALSE(r.pearson.has_value());
}

TEST(Evaluate, PearsonSeriesUsesPairDistances) {
  Tiny t;
  auto f = PredictionField::zeros(2, 2, 2, 3);
  for (std::size_t p = 0; p < f.pairs(); ++p) f.confidences[p] = 0.1 * static_cast<double>(p);
  const auto s = pearson_series(f, t.data[0].gt, t.setup);
  const auto target = regression_targets(t.data[0].gt, t.setup.grid, t.setup.templates, t.setup.table);
  for (std::size_t p = 0; p < f.pairs(); ++p) {
    double ss = 0.0;
    for (int i = 0; i < 6; ++i) ss += target[p * 6 + i] * target[p * 6 + i];
    EXPECT_NEAR(s.errors[p], std::sqrt(ss), 1e-12);
  }
  EXPECT_EQ(s.confidences, f.confidences);
}

TEST(Evaluate, FaceSizeFactorIsTheBoxSide) {
  const auto data = synth_dataset({}, 2, 5);
  const auto f = face_size_factors(data);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(f[i], data[i].box.w, 1e-12);
}
