#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "anchorface/anchors.hpp"
#include "anchorface/error.hpp"
#include "anchorface/net.hpp"
#include "anchorface/shape.hpp"

namespace anchorface {

enum class ConLossForm {
  StandardBCE,  // -Cbar log C - (1 - Cbar) log(1 - C)
  TargetInLog,  // -C log Cbar - (1 - C) log(1 - Cbar), Cbar clamped
};

struct LossConfig {
  double beta = 0.05;
  double lambda = 0.5;
  ConLossForm con_loss_form = ConLossForm::StandardBCE;
  bool detach_confidence_in_reg = true;

  void validate() const {
    if (!(beta > 0.0)) detail::fail(ErrorKind::Config, "beta must be positive");
    if (!(lambda >= 0.0)) detail::fail(ErrorKind::Config, "lambda must be non-negative");
  }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

inline constexpr double kTargetClamp = 1e-6;

/// Template landmarks for every (anchor, template) pair, in fractions of
/// the image side: [cell][template][landmark][xy].
inline std::vector<double> template_table(const AnchorGrid& grid, const AnchorTemplateSet& templates) {
  const std::size_t L = templates.landmark_count;
  std::vector<double> out(grid.size() * templates.size() * L * 2);
  const double side = grid.image_side;
  std::size_t i = 0;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const Point2 anchor{grid.points[a].x / side, grid.points[a].y / side};
    for (const auto& t : templates.templates) {
      for (std::size_t j = 0; j < L; ++j) {
        out[i++] = anchor.x + t.offsets[j].x;
        out[i++] = anchor.y + t.offsets[j].y;
      }
    }
  }
  return out;
}

namespace detail {

inline void check_gt_frame(const LandmarkShape& gt, const AnchorGrid& grid, const AnchorTemplateSet& templates) {
  if (gt.frame().kind != Frame::Kind::Pixel || gt.frame().width != grid.image_side || gt.frame().height != grid.image_side) {
    fail(ErrorKind::Frame, "ground truth is in frame " + describe(gt.frame()) + ", expected pixel(" +
                               std::to_string(grid.image_side) + ")");
  }
  if (gt.size() != templates.landmark_count) fail(ErrorKind::ShapeMismatch, "ground truth landmark count differs from templates");
}

}  // namespace detail

/// Obar_j(a,t) = (gt_j - T_j(a,t)) / image_side, laid out like
/// PredictionField::offsets.
inline std::vector<double> regression_targets(const LandmarkShape& gt, const AnchorGrid& grid,
                                              const AnchorTemplateSet& templates, const std::vector<double>& table) {
  detail::check_gt_frame(gt, grid, templates);
  const std::size_t L = gt.size();
  std::vector<double> out(table.size());
  const double inv = 1.0 / grid.image_side;
  for (std::size_t i = 0; i < table.size(); i += 2) {
    const std::size_t j = (i / 2) % L;
    out[i] = gt[j].x * inv - table[i];
    out[i + 1] = gt[j].y * inv - table[i + 1];
  }
  return out;
}

inline std::vector<double> regression_targets(const LandmarkShape& gt, const AnchorGrid& grid,
                                              const AnchorTemplateSet& templates) {
  return regression_targets(gt, grid, templates, template_table(grid, templates));
}

/// tanh(beta * 2L / d), continuously extended to 1 at d = 0.
inline double confidence_from_distance(double d, double beta, std::size_t L) {
  if (!(beta > 0.0)) detail::fail(ErrorKind::Config, "beta must be positive");
  if (!(d >= 0.0) || !std::isfinite(d)) detail::fail(ErrorKind::InvalidInput, "distance must be finite and >= 0");
  if (d == 0.0) return 1.0;
  return std::tanh(beta * 2.0 * static_cast<double>(L) / d);
}

/// Both shapes in the normalized frame; d is the L2 distance between the
/// flattened 2L-vectors.
inline double confidence_target(const LandmarkShape& template_shape, const LandmarkShape& gt, double beta) {
  if (template_shape.size() != gt.size()) detail::fail(ErrorKind::ShapeMismatch, "confidence_target: landmark counts differ");
  double ss = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    const Point2 d = template_shape[j] - gt[j];
    ss += d.x * d.x + d.y * d.y;
  }
  return confidence_from_distance(std::sqrt(ss), beta, gt.size());
}

/// Cbar(a,t) for every pair, from the regression targets (whose per-pair
/// L2 norm is exactly the normalized pose distance).
inline std::vector<double> confidence_targets(std::span<const double> reg_targets, std::size_t L, double beta) {
  const std::size_t per = 2 * L;
  std::vector<double> out(reg_targets.size() / per);
  for (std::size_t p = 0; p < out.size(); ++p) {
    double ss = 0.0;
    for (std::size_t i = 0; i < per; ++i) ss += reg_targets[p * per + i] * reg_targets[p * per + i];
    out[p] = confidence_from_distance(std::sqrt(ss), beta, L);
  }
  return out;
}

struct LossGrad {
  double value = 0.0;
  std::vector<double> d_offsets;      // dL/dO
  std::vector<double> d_confidences;  // dL/dC (empty when not requested)
};

/// Sum over pairs of C(a,t) * sum_j |O_j - Obar_j|, with per-coordinate
/// absolute differences.
inline double loss_reg(std::span<const double> offsets, std::span<const double> targets,
                       std::span<const double> confidences) {
  if (offsets.size() != targets.size() || confidences.empty() || offsets.size() % confidences.size() != 0) {
    detail::fail(ErrorKind::ShapeMismatch, "loss_reg: misaligned tensors");
  }
  const std::size_t per = offsets.size() / confidences.size();
  double total = 0.0;
  for (std::size_t p = 0; p < confidences.size(); ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += std::abs(offsets[p * per + i] - targets[p * per + i]);
    total += confidences[p] * s;
  }
  return total;
}

inline LossGrad loss_reg_grad(std::span<const double> offsets, std::span<const double> targets,
                              std::span<const double> confidences, const LossConfig& cfg) {
  LossGrad g;
  g.value = loss_reg(offsets, targets, confidences);
  const std::size_t per = offsets.size() / confidences.size();
  g.d_offsets.resize(offsets.size());
  if (!cfg.detach_confidence_in_reg) g.d_confidences.assign(confidences.size(), 0.0);
  for (std::size_t p = 0; p < confidences.size(); ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double diff = offsets[p * per + i] - targets[p * per + i];
      g.d_offsets[p * per + i] = confidences[p] * static_cast<double>((diff > 0) - (diff < 0));
      s += std::abs(diff);
    }
    if (!cfg.detach_confidence_in_reg) g.d_confidences[p] = s;
  }
  return g;
}

inline double loss_con(std::span<const double> confidences, std::span<const double> targets, const LossConfig& cfg) {
  if (confidences.size() != targets.size()) detail::fail(ErrorKind::ShapeMismatch, "loss_con: misaligned tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    double t = targets[i];
    if (cfg.con_loss_form == ConLossForm::StandardBCE) {
      if (!(c > 0.0 && c < 1.0)) detail::fail(ErrorKind::Domain, "loss_con: confidence must lie in (0, 1)");
      if (!(t >= 0.0 && t <= 1.0)) detail::fail(ErrorKind::Domain, "loss_con: target must lie in [0, 1]");
      total += -t * std::log(c) - (1.0 - t) * std::log(1.0 - c);
    } else {
      if (!(c >= 0.0 && c <= 1.0)) detail::fail(ErrorKind::Domain, "loss_con: confidence must lie in [0, 1]");
      t = std::clamp(t, kTargetClamp, 1.0 - kTargetClamp);
      total += -c * std::log(t) - (1.0 - c) * std::log(1.0 - t);
    }
  }
  return total;
}

/// loss_con evaluated from confidence logits (C = sigmoid(z)), with the
/// gradient with respect to z. Stable for saturated logits.
inline LossGrad loss_con_logits(std::span<const double> logits, std::span<const double> targets, const LossConfig& cfg) {
  if (logits.size() != targets.size()) detail::fail(ErrorKind::ShapeMismatch, "loss_con: misaligned tensors");
  LossGrad g;
  g.d_confidences.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double c = 1.0 / (1.0 + std::exp(-z));
    if (cfg.con_loss_form == ConLossForm::StandardBCE) {
      const double t = targets[i];
      // -t log s(z) - (1-t) log(1-s(z)) = softplus(z) - t z
      const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      g.value += softplus - t * z;
      g.d_confidences[i] = c - t;
    } else {
      const double t = std::clamp(targets[i], kTargetClamp, 1.0 - kTargetClamp);
      const double slope = -std::log(t) + std::log(1.0 - t);
      g.value += c * slope - std::log(1.0 - t);
      g.d_confidences[i] = slope * c * (1.0 - c);
    }
  }
  return g;
}

inline double loss_total(double l_reg, double l_con, const LossConfig& cfg) { return l_reg + cfg.lambda * l_con; }

}  // namespace anchorface
