#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorface/aggregate.hpp"
#include "anchorface/anchors.hpp"
#include "anchorface/data.hpp"
#include "anchorface/error.hpp"
#include "anchorface/losses.hpp"
#include "anchorface/metrics.hpp"
#include "anchorface/net.hpp"
#include "anchorface/optim.hpp"
#include "anchorface/random.hpp"

namespace anchorface {

struct TrainSchedule {
  int epochs = 15;
  int batch_size = 8;
  AdamWConfig adam{};
  std::vector<double> decay_fractions{0.4, 0.6, 0.8};
  double decay_factor = 0.1;
  double max_rot_deg = 30.0;
  double max_trans_frac = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1) detail::fail(ErrorKind::Config, "epochs and batch size must be >= 1");
    if (!(adam.lr > 0.0)) detail::fail(ErrorKind::Config, "learning rate must be positive");
  }

  friend bool operator==(const TrainSchedule& a, const TrainSchedule& b) {
    return a.epochs == b.epochs && a.batch_size == b.batch_size && a.adam.lr == b.adam.lr &&
           a.adam.beta1 == b.adam.beta1 && a.adam.beta2 == b.adam.beta2 && a.adam.eps == b.adam.eps &&
           a.adam.weight_decay == b.adam.weight_decay && a.decay_fractions == b.decay_fractions &&
           a.decay_factor == b.decay_factor && a.max_rot_deg == b.max_rot_deg &&
           a.max_trans_frac == b.max_trans_frac && a.seed == b.seed;
  }
};

inline nlohmann::ordered_json to_json(const TrainSchedule& s) {
  nlohmann::ordered_json j;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  j["lr"] = s.adam.lr;
  j["beta1"] = s.adam.beta1;
  j["beta2"] = s.adam.beta2;
  j["eps"] = s.adam.eps;
  j["weight_decay"] = s.adam.weight_decay;
  j["decay_fractions"] = s.decay_fractions;
  j["decay_factor"] = s.decay_factor;
  j["max_rot_deg"] = s.max_rot_deg;
  j["max_trans_frac"] = s.max_trans_frac;
  j["seed"] = s.seed;
  return j;
}

inline TrainSchedule train_schedule_from_json(const nlohmann::json& j) {
  TrainSchedule s;
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.adam.lr = j.value("lr", s.adam.lr);
  s.adam.beta1 = j.value("beta1", s.adam.beta1);
  s.adam.beta2 = j.value("beta2", s.adam.beta2);
  s.adam.eps = j.value("eps", s.adam.eps);
  s.adam.weight_decay = j.value("weight_decay", s.adam.weight_decay);
  s.decay_fractions = j.value("decay_fractions", s.decay_fractions);
  s.decay_factor = j.value("decay_factor", s.decay_factor);
  s.max_rot_deg = j.value("max_rot_deg", s.max_rot_deg);
  s.max_trans_frac = j.value("max_trans_frac", s.max_trans_frac);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline nlohmann::ordered_json to_json(const LossConfig& c) {
  nlohmann::ordered_json j;
  j["beta"] = c.beta;
  j["lambda"] = c.lambda;
  j["con_loss_form"] = c.con_loss_form == ConLossForm::StandardBCE ? "bce" : "literal";
  j["detach_confidence_in_reg"] = c.detach_confidence_in_reg;
  return j;
}

inline LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig c;
  c.beta = j.value("beta", c.beta);
  c.lambda = j.value("lambda", c.lambda);
  c.con_loss_form = j.value("con_loss_form", std::string("bce")) == "literal" ? ConLossForm::TargetInLog : ConLossForm::StandardBCE;
  c.detach_confidence_in_reg = j.value("detach_confidence_in_reg", c.detach_confidence_in_reg);
  return c;
}

/// Anchor geometry bound to a model: grid, templates and the cached
/// normalized template table.
struct AnchorSetup {
  AnchorGrid grid;
  AnchorTemplateSet templates;
  std::vector<double> table;

  AnchorSetup() = default;
  AnchorSetup(AnchorGrid g, AnchorTemplateSet t) : grid(std::move(g)), templates(std::move(t)) {
    table = template_table(grid, templates);
  }
};

inline void check_compatible(const ModelConfig& cfg, const AnchorSetup& setup) {
  if (cfg.grid_rows != setup.grid.rows || cfg.grid_cols != setup.grid.cols) {
    detail::fail(ErrorKind::Config, "model grid does not match anchor grid");
  }
  if (static_cast<std::size_t>(cfg.K) != setup.templates.size() ||
      static_cast<std::size_t>(cfg.L) != setup.templates.landmark_count) {
    detail::fail(ErrorKind::Config, "model K/L do not match the template set");
  }
  if (setup.grid.image_side != cfg.input_side) detail::fail(ErrorKind::Config, "anchor grid image side differs from model input");
}

// ---- per-batch losses --------------------------------------------------------

template <typename T>
struct BatchLoss {
  double total = 0.0;  // mean over the batch of L_total (or L1 for the direct head)
  double reg = 0.0;
  double con = 0.0;
  HeadGradients<T> grads;
};

/// Mean per-image L_total of an anchor-head trace and the adjoints of the
/// head outputs.
template <typename T>
BatchLoss<T> anchor_batch_loss(const ForwardTrace<T>& tr, std::span<const LandmarkShape> gts, const AnchorSetup& setup,
                               const LossConfig& loss) {
  const int B = tr.batch;
  if (static_cast<int>(gts.size()) != B) detail::fail(ErrorKind::ShapeMismatch, "batch size differs from ground-truth count");
  const std::size_t G = setup.grid.size();
  const std::size_t K = setup.templates.size();
  const std::size_t L = setup.templates.landmark_count;
  const std::size_t per_img_reg = G * K * L * 2;
  const std::size_t per_img_con = G * K;
  BatchLoss<T> out;
  out.grads.reg.resize(tr.reg.rows(), tr.reg.cols());
  out.grads.conf_logits.resize(tr.conf_logits.rows(), tr.conf_logits.cols());
  const double inv_b = 1.0 / B;
  std::vector<double> O(per_img_reg), z(per_img_con), C(per_img_con);
  for (int b = 0; b < B; ++b) {
    const T* reg = tr.reg.data() + b * per_img_reg;
    const T* logit = tr.conf_logits.data() + b * per_img_con;
    for (std::size_t i = 0; i < per_img_reg; ++i) O[i] = static_cast<double>(reg[i]);
    for (std::size_t i = 0; i < per_img_con; ++i) {
      z[i] = static_cast<double>(logit[i]);
      C[i] = 1.0 / (1.0 + std::exp(-z[i]));
    }
    const auto target = regression_targets(gts[b], setup.grid, setup.templates, setup.table);
    const auto cbar = confidence_targets(target, L, loss.beta);
    const auto rg = loss_reg_grad(O, target, C, loss);
    const auto cg = loss_con_logits(z, cbar, loss);
    out.reg += rg.value * inv_b;
    out.con += cg.value * inv_b;
    T* dreg = out.grads.reg.data() + b * per_img_reg;
    T* dlogit = out.grads.conf_logits.data() + b * per_img_con;
    for (std::size_t i = 0; i < per_img_reg; ++i) dreg[i] = static_cast<T>(rg.d_offsets[i] * inv_b);
    for (std::size_t i = 0; i < per_img_con; ++i) {
      double d = loss.lambda * cg.d_confidences[i];
      if (!loss.detach_confidence_in_reg) d += rg.d_confidences[i] * C[i] * (1.0 - C[i]);
      dlogit[i] = static_cast<T>(d * inv_b);
    }
  }
  out.total = loss_total(out.reg, out.con, loss);
  return out;
}

/// Mean per-image L1 between direct-head outputs and gt / side.
template <typename T>
BatchLoss<T> direct_batch_loss(const ForwardTrace<T>& tr, std::span<const LandmarkShape> gts, double side) {
  const int B = tr.batch;
  if (static_cast<int>(gts.size()) != B) detail::fail(ErrorKind::ShapeMismatch, "batch size differs from ground-truth count");
  BatchLoss<T> out;
  out.grads.direct.resize(tr.direct.rows(), tr.direct.cols());
  const double inv_b = 1.0 / B;
  for (int b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < gts[b].size(); ++j) {
      for (int c = 0; c < 2; ++c) {
        const double target = (c == 0 ? gts[b][j].x : gts[b][j].y) / side;
        const double diff = static_cast<double>(tr.direct(2 * j + c, b)) - target;
        out.reg += std::abs(diff) * inv_b;
        out.grads.direct(2 * j + c, b) = static_cast<T>(((diff > 0) - (diff < 0)) * inv_b);
      }
    }
  }
  out.total = out.reg;
  return out;
}

// ---- training loop ------------------------------------------------------------

struct TrainResult {
  ParameterSet<float> params;
  std::vector<double> loss_history;  // per-epoch mean batch loss
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

namespace detail {

inline TrainResult run_training(const ModelConfig& cfg, std::span<const Sample> data, const TrainSchedule& schedule,
                                const std::function<BatchLoss<float>(const ForwardTrace<float>&,
                                                                     std::span<const LandmarkShape>)>& loss_fn,
                                const EpochCallback& on_epoch) {
  if (data.empty()) fail(ErrorKind::EmptyInput, "training set is empty");
  schedule.validate();
  const ConvNet<float> net(cfg);
  TrainResult res{init_params<float>(cfg), {}};
  AdamW<float> opt(res.params, schedule.adam);
  std::vector<std::size_t> order(data.size());
  const bool augmenting = schedule.max_rot_deg != 0.0 || schedule.max_trans_frac != 0.0;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(schedule.seed, 0x5348554646ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    const double lr = step_lr(schedule.adam.lr, epoch, schedule.epochs, schedule.decay_fractions, schedule.decay_factor);
    double acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = data[order[k]];
        if (augmenting) {
          const std::uint64_t seed = derive_seed(derive_seed(schedule.seed, static_cast<std::uint64_t>(epoch) + 1), order[k]);
          batch.push_back(augment(s, schedule.max_rot_deg, schedule.max_trans_frac, seed));
        } else {
          batch.push_back(s);
        }
      }
      std::vector<const Image*> imgs;
      std::vector<LandmarkShape> gts;
      for (const auto& s : batch) {
        imgs.push_back(&s.image);
        gts.push_back(s.gt);
      }
      const auto tr = net.forward(net.pack(imgs), static_cast<int>(batch.size()), res.params);
      const auto bl = loss_fn(tr, gts);
      if (!std::isfinite(bl.total)) {
        fail(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch));
      }
      const auto grads = net.backward(tr, bl.grads, res.params);
      opt.step(res.params, grads, lr);
      acc += bl.total;
      ++batches;
    }
    const double mean = acc / static_cast<double>(batches);
    if (!std::isfinite(mean) || !res.params.all_finite()) {
      fail(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(epoch));
    }
    res.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return res;
}

}  // namespace detail

/// Trains the two-branch anchor model.
inline TrainResult train(std::span<const Sample> data, const AnchorSetup& setup, const ModelConfig& cfg,
                         const TrainSchedule& schedule, const LossConfig& loss = {}, const EpochCallback& on_epoch = {}) {
  if (cfg.head != HeadKind::Anchor) detail::fail(ErrorKind::Config, "train() needs an anchor-head config");
  check_compatible(cfg, setup);
  loss.validate();
  return detail::run_training(
      cfg, data, schedule,
      [&](const ForwardTrace<float>& tr, std::span<const LandmarkShape> gts) {
        return anchor_batch_loss(tr, gts, setup, loss);
      },
      on_epoch);
}

/// Trains the direct-regression baseline with L1 on normalized coordinates.
inline TrainResult train_baseline(std::span<const Sample> data, const ModelConfig& cfg, const TrainSchedule& schedule,
                                  const EpochCallback& on_epoch = {}) {
  if (cfg.head != HeadKind::Direct) detail::fail(ErrorKind::Config, "train_baseline() needs a direct-head config");
  const double side = cfg.input_side;
  return detail::run_training(
      cfg, data, schedule,
      [side](const ForwardTrace<float>& tr, std::span<const LandmarkShape> gts) {
        return direct_batch_loss(tr, gts, side);
      },
      on_epoch);
}

// ---- inference ------------------------------------------------------------------

inline constexpr int kInferenceBatch = 64;

/// Anchor-head prediction fields for every sample.
inline std::vector<PredictionField> predict_fields(const ModelConfig& cfg, const ParameterSet<float>& params,
                                                   std::span<const Sample> data) {
  const ConvNet<float> net(cfg);
  std::vector<PredictionField> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kInferenceBatch) {
    const std::size_t end = std::min(data.size(), start + kInferenceBatch);
    std::vector<const Image*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&data[i].image);
    const auto tr = net.forward(net.pack(imgs), static_cast<int>(imgs.size()), params);
    for (std::size_t i = 0; i < imgs.size(); ++i) out.push_back(net.field(tr, static_cast<int>(i)));
  }
  return out;
}

/// Direct-head landmark predictions in pixels.
inline std::vector<LandmarkShape> predict_direct(const ModelConfig& cfg, const ParameterSet<float>& params,
                                                 std::span<const Sample> data) {
  const ConvNet<float> net(cfg);
  const double side = cfg.input_side;
  std::vector<LandmarkShape> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kInferenceBatch) {
    const std::size_t end = std::min(data.size(), start + kInferenceBatch);
    std::vector<const Image*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&data[i].image);
    const auto tr = net.forward(net.pack(imgs), static_cast<int>(imgs.size()), params);
    for (std::size_t b = 0; b < imgs.size(); ++b) {
      std::vector<Point2> pts(cfg.L);
      for (int j = 0; j < cfg.L; ++j) {
        pts[j] = {static_cast<double>(tr.direct(2 * j, b)) * side, static_cast<double>(tr.direct(2 * j + 1, b)) * side};
      }
      out.emplace_back(std::move(pts), Frame::pixel(side, side));
    }
  }
  return out;
}

/// Per-pair ||O - Obar||_2 and raw confidence for the correlation analysis.
inline PearsonImage pearson_series(const PredictionField& field, const LandmarkShape& gt, const AnchorSetup& setup) {
  const auto target = regression_targets(gt, setup.grid, setup.templates, setup.table);
  const std::size_t per = static_cast<std::size_t>(field.L) * 2;
  PearsonImage img;
  img.errors.resize(field.pairs());
  img.confidences = field.confidences;
  for (std::size_t p = 0; p < field.pairs(); ++p) {
    double ss = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = field.offsets[p * per + i] - target[p * per + i];
      ss += d * d;
    }
    img.errors[p] = std::sqrt(ss);
  }
  return img;
}

inline std::vector<double> face_size_factors(std::span<const Sample> data) {
  std::vector<double> f;
  f.reserve(data.size());
  for (const auto& s : data) f.push_back(resolve_norm(FaceSizeNorm{}, s.gt, s.box));
  return f;
}

inline std::vector<double> yaw_list(std::span<const Sample> data) {
  std::vector<double> y;
  for (const auto& s : data) {
    if (!s.yaw_deg) return {};
    y.push_back(*s.yaw_deg);
  }
  return y;
}

inline EvalReport evaluate_shapes(std::span<const LandmarkShape> preds, std::span<const Sample> data) {
  std::vector<LandmarkShape> gts;
  gts.reserve(data.size());
  for (const auto& s : data) gts.push_back(s.gt);
  const auto factors = face_size_factors(data);
  const auto errors = per_image_errors(preds, gts, factors);
  return make_report(errors, yaw_list(data));
}

/// Aggregates precomputed fields and evaluates them; optionally attaches
/// the Pearson analysis.
inline EvalReport evaluate_fields(std::span<const PredictionField> fields, std::span<const Sample> data,
                                  const AnchorSetup& setup, const AggregateConfig& agg, bool with_pearson = true) {
  std::vector<LandmarkShape> preds;
  preds.reserve(fields.size());
  for (const auto& f : fields) preds.push_back(aggregate(f, setup.grid, setup.templates, agg, setup.table).landmarks);
  EvalReport r = evaluate_shapes(preds, data);
  if (with_pearson) {
    std::vector<PearsonImage> series;
    series.reserve(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) series.push_back(pearson_series(fields[i], data[i].gt, setup));
    r.pearson = pearson_analysis(series);
  }
  return r;
}

}  // namespace anchorface
