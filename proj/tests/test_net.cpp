#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace anchorface;
using testutil::gradcheck;
using testutil::tiny_batch;
using testutil::tiny_config;
using testutil::tiny_setup;

TEST(Net, ReferenceHeadWidths) {
  ModelConfig cfg;
  cfg.K = 24;
  cfg.L = 19;
  EXPECT_EQ(cfg.regression_channels(), 912);
  EXPECT_EQ(cfg.confidence_channels(), 24);
  const ConvNet<float> net(cfg);
  const auto params = init_params<float>(cfg);
  const Image img(64, 64);
  const auto f = net.forward_field(img, params);
  EXPECT_EQ(f.pairs(), 49u * 24u);
  EXPECT_EQ(f.offsets.size(), 49u * 912u);
  for (double c : f.confidences) {
    EXPECT_GT(c, 0.0);
    EXPECT_LT(c, 1.0);
  }
}

TEST(Net, TraceShapes) {
  ModelConfig cfg;
  const ConvNet<float> net(cfg);
  const auto params = init_params<float>(cfg);
  const Image a(64, 64), b(64, 64);
  const std::vector<const Image*> imgs{&a, &b};
  const auto tr = net.forward(net.pack(imgs), 2, params);
  EXPECT_EQ(tr.reg.rows(), 912);
  EXPECT_EQ(tr.reg.cols(), 2 * 49);
  EXPECT_EQ(tr.conf_logits.rows(), 24);
  EXPECT_EQ(tr.conf_logits.cols(), 2 * 49);
  EXPECT_EQ(cfg.backbone_side(), 8);
}

TEST(Net, RejectsWrongImageSize) {
  const ConvNet<float> net(ModelConfig{});
  const auto params = init_params<float>(ModelConfig{});
  try {
    net.forward_field(Image(32, 32), params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Net, RejectsGridLargerThanBackbone) {
  ModelConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 9;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Net, BackwardWithoutForwardIsAStateError) {
  const auto cfg = tiny_config();
  const ConvNet<double> net(cfg);
  try {
    net.backward(ForwardTrace<double>{}, HeadGradients<double>{}, init_params<double>(cfg));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::State);
  }
}

TEST(Net, ParameterLayoutMatchesHeadOptions) {
  auto cfg = tiny_config();
  const auto layout = parameter_layout(cfg);
  auto shape_of = [&](const std::string& n) {
    for (const auto& [name, shape] : layout) {
      if (name == n) return shape;
    }
    return std::vector<int>{};
  };
  EXPECT_EQ(shape_of("stage0.weight"), (std::vector<int>{4, 3, 3, 1}));
  EXPECT_EQ(shape_of("ctx.weight"), (std::vector<int>{4, 8 * 4}));
  EXPECT_EQ(shape_of("reg.hidden.weight"), (std::vector<int>{3 * 2, 4 + 2}));
  EXPECT_EQ(shape_of("reg.weight"), (std::vector<int>{12, 3}));
  EXPECT_EQ(shape_of("conf.hidden.weight"), (std::vector<int>{5, 8 + 4 + 2}));
  EXPECT_EQ(shape_of("conf.weight"), (std::vector<int>{2, 5}));

  cfg.local_in_reg = true;
  EXPECT_EQ(parameter_layout(cfg)[8].second, (std::vector<int>{6, 8 + 4 + 2}));

  cfg.head = HeadKind::Direct;
  const auto direct = parameter_layout(cfg);
  EXPECT_EQ(direct.back().first, "fc.bias");
  EXPECT_EQ(direct[direct.size() - 2].second, (std::vector<int>{6, 8 * 4}));
}

TEST(Net, InitIsDeterministicAndSeedDependent) {
  auto cfg = tiny_config();
  EXPECT_EQ(init_params<float>(cfg), init_params<float>(cfg));
  auto other = cfg;
  other.seed += 1;
  EXPECT_NE(init_params<float>(cfg), init_params<float>(other));
}

TEST(Net, ParamsRoundTripThroughBinary) {
  const auto cfg = tiny_config();
  const auto p = init_params<float>(cfg);
  const auto bytes = encode_params(p, config_hash(cfg));
  const auto d = decode_params(bytes);
  EXPECT_EQ(d.hash, config_hash(cfg));
  EXPECT_EQ(d.params, p);
  EXPECT_NO_THROW(check_layout(d.params, cfg));
  EXPECT_THROW(decode_params(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(decode_params(bytes + "x"), Error);
  EXPECT_THROW(decode_params("garbage"), Error);
}

TEST(Net, LayoutCheckCatchesOtherConfigs) {
  auto cfg = tiny_config();
  const auto p = init_params<float>(cfg);
  cfg.K = 3;
  EXPECT_THROW(check_layout(p, cfg), Error);
}

TEST(Net, ConfigJsonRoundTrip) {
  auto cfg = tiny_config();
  cfg.local_in_reg = true;
  cfg.head = HeadKind::Direct;
  EXPECT_EQ(model_config_from_json(nlohmann::json::parse(to_json(cfg).dump())), cfg);
}

TEST(Net, BatchedForwardMatchesSingleImages) {
  const auto cfg = tiny_config();
  const ConvNet<double> net(cfg);
  const auto params = init_params<double>(cfg);
  const auto batch = tiny_batch(cfg, 3);
  std::vector<const Image*> imgs;
  for (const auto& s : batch) imgs.push_back(&s.image);
  const auto tr = net.forward(net.pack(imgs), 3, params);
  for (int b = 0; b < 3; ++b) {
    const auto single = net.forward_field(batch[b].image, params);
    const auto batched = net.field(tr, b);
    for (std::size_t i = 0; i < single.offsets.size(); ++i) EXPECT_NEAR(single.offsets[i], batched.offsets[i], 1e-12);
    for (std::size_t i = 0; i < single.confidences.size(); ++i) EXPECT_NEAR(single.confidences[i], batched.confidences[i], 1e-12);
  }
}

namespace {

void expect_gradcheck(const ModelConfig& cfg, bool detach) {
  const auto setup = tiny_setup(cfg);
  const auto batch = tiny_batch(cfg, 2);
  LossConfig loss;
  loss.detach_confidence_in_reg = detach;
  const auto r = gradcheck(cfg, &setup, batch, loss);
  EXPECT_EQ(r.checked, init_params<double>(cfg).count());
  EXPECT_LT(r.max_rel, 1e-3) << r.worst;
}

}  // namespace

TEST(Gradcheck, CoupledConfidence) { expect_gradcheck(tiny_config(), false); }

TEST(Gradcheck, DetachedConfidence) { expect_gradcheck(tiny_config(), true); }

TEST(Gradcheck, LocalFeaturesInRegression) {
  auto cfg = tiny_config();
  cfg.local_in_reg = true;
  expect_gradcheck(cfg, false);
}

TEST(Gradcheck, LocalFeaturesWithoutContextInRegression) {
  auto cfg = tiny_config();
  cfg.local_in_reg = true;
  cfg.context_in_reg = false;
  expect_gradcheck(cfg, false);
}

TEST(Gradcheck, SharedRegressionHidden) {
  auto cfg = tiny_config();
  cfg.reg_grouped = false;
  expect_gradcheck(cfg, false);
}

TEST(Gradcheck, LinearHeadsWithoutContext) {
  auto cfg = tiny_config();
  cfg.context_dim = 0;
  cfg.reg_hidden = 0;
  cfg.conf_hidden = 0;
  expect_gradcheck(cfg, false);
}

TEST(Gradcheck, UnevenPoolingWindows) {
  auto cfg = tiny_config();
  cfg.input_side = 20;
  cfg.grid_rows = cfg.grid_cols = 2;
  cfg.strides = {2, 2, 1};
  expect_gradcheck(cfg, false);
}

TEST(Gradcheck, DirectHead) {
  auto cfg = tiny_config();
  cfg.head = HeadKind::Direct;
  const auto batch = tiny_batch(cfg, 2);
  const auto r = gradcheck(cfg, nullptr, batch, {});
  EXPECT_LT(r.max_rel, 1e-3) << r.worst;
}

TEST(Net, BaselineParameterBudgetIsComparable) {
  ModelConfig anchor;
  ModelConfig direct = anchor;
  direct.head = HeadKind::Direct;
  const double a = static_cast<double>(init_params<float>(anchor).count());
  const double d = static_cast<double>(init_params<float>(direct).count());
  EXPECT_LT(std::max(a, d) / std::min(a, d), 2.0);
}
