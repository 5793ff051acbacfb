#pragma once

#include <string>
#include <vector>

#include "anchorface/anchors.hpp"
#include "anchorface/error.hpp"
#include "anchorface/losses.hpp"
#include "anchorface/net.hpp"

namespace anchorface {

enum class AggregateStrategy { Weighted, Argmax, Mean };
enum class AggregateFallback { ArgmaxFallback, Error };

inline std::string to_string(AggregateStrategy s) {
  switch (s) {
    case AggregateStrategy::Weighted: return "weighted";
    case AggregateStrategy::Argmax: return "argmax";
    case AggregateStrategy::Mean: return "mean";
  }
  return "?";
}

inline AggregateStrategy parse_strategy(const std::string& s) {
  if (s == "weighted") return AggregateStrategy::Weighted;
  if (s == "argmax") return AggregateStrategy::Argmax;
  if (s == "mean") return AggregateStrategy::Mean;
  detail::fail(ErrorKind::Parse, "unknown aggregation strategy '" + s + "'");
}

struct AggregateConfig {
  AggregateStrategy strategy = AggregateStrategy::Weighted;
  double c_th = 0.6;
  AggregateFallback fallback = AggregateFallback::ArgmaxFallback;

  void validate() const {
    if (!(c_th < 1.0)) detail::fail(ErrorKind::Config, "c_th must be < 1");
  }

  friend bool operator==(const AggregateConfig&, const AggregateConfig&) = default;
};

struct AggregatedShape {
  LandmarkShape landmarks;  // pixel frame
  std::size_t used_count = 0;
  double total_weight = 0.0;
  bool fell_back = false;
};

namespace detail {

inline void check_aligned(const PredictionField& f, const AnchorGrid& grid, const AnchorTemplateSet& templates) {
  if (f.cells() != grid.size() || static_cast<std::size_t>(f.K) != templates.size() ||
      static_cast<std::size_t>(f.L) != templates.landmark_count ||
      f.offsets.size() != f.pairs() * f.L * 2 || f.confidences.size() != f.pairs()) {
    fail(ErrorKind::ShapeMismatch, "prediction field does not match anchor grid / template set");
  }
}

/// Absolute pixel prediction of pair p for landmark j: (O + T) * side.
inline Point2 pair_prediction(const PredictionField& f, const std::vector<double>& table, std::size_t p, std::size_t j,
                              double side) {
  const std::size_t i = (p * f.L + j) * 2;
  return {(f.offsets[i] + table[i]) * side, (f.offsets[i + 1] + table[i + 1]) * side};
}

inline AggregatedShape single_pair(const PredictionField& f, const std::vector<double>& table, std::size_t p,
                                   double side) {
  std::vector<Point2> pts(f.L);
  for (int j = 0; j < f.L; ++j) pts[j] = pair_prediction(f, table, p, j, side);
  return {LandmarkShape(std::move(pts), Frame::pixel(side, side)), 1, f.confidences[p], false};
}

}  // namespace detail

inline AggregatedShape aggregate_argmax(const PredictionField& field, const AnchorGrid& grid,
                                        const AnchorTemplateSet& templates, const std::vector<double>& table) {
  detail::check_aligned(field, grid, templates);
  std::size_t best = 0;
  for (std::size_t p = 1; p < field.pairs(); ++p) {
    if (field.confidences[p] > field.confidences[best]) best = p;
  }
  return detail::single_pair(field, table, best, grid.image_side);
}

/// Confidence-weighted vote over pairs with C >= c_th.
inline AggregatedShape aggregate_weighted(const PredictionField& field, const AnchorGrid& grid,
                                          const AnchorTemplateSet& templates, const AggregateConfig& cfg,
                                          const std::vector<double>& table) {
  cfg.validate();
  detail::check_aligned(field, grid, templates);
  const double side = grid.image_side;
  std::vector<Point2> acc(field.L);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t p = 0; p < field.pairs(); ++p) {
    const double c = field.confidences[p];
    if (c < cfg.c_th || c <= 0.0) continue;
    for (int j = 0; j < field.L; ++j) acc[j] = acc[j] + c * detail::pair_prediction(field, table, p, j, side);
    total += c;
    ++used;
  }
  if (used == 0) {
    if (cfg.fallback == AggregateFallback::Error) {
      detail::fail(ErrorKind::NoConfidentAnchor, "no anchor template reached confidence " + std::to_string(cfg.c_th));
    }
    AggregatedShape s = aggregate_argmax(field, grid, templates, table);
    s.fell_back = true;
    return s;
  }
  for (auto& p : acc) p = (1.0 / total) * p;
  return {LandmarkShape(std::move(acc), Frame::pixel(side, side)), used, total, false};
}

inline AggregatedShape aggregate_mean(const PredictionField& field, const AnchorGrid& grid,
                                      const AnchorTemplateSet& templates, const std::vector<double>& table) {
  detail::check_aligned(field, grid, templates);
  const double side = grid.image_side;
  std::vector<Point2> acc(field.L);
  for (std::size_t p = 0; p < field.pairs(); ++p) {
    for (int j = 0; j < field.L; ++j) acc[j] = acc[j] + detail::pair_prediction(field, table, p, j, side);
  }
  const double n = static_cast<double>(field.pairs());
  for (auto& p : acc) p = (1.0 / n) * p;
  return {LandmarkShape(std::move(acc), Frame::pixel(side, side)), field.pairs(), n, false};
}

inline AggregatedShape aggregate(const PredictionField& field, const AnchorGrid& grid, const AnchorTemplateSet& templates,
                                 const AggregateConfig& cfg, const std::vector<double>& table) {
  switch (cfg.strategy) {
    case AggregateStrategy::Weighted: return aggregate_weighted(field, grid, templates, cfg, table);
    case AggregateStrategy::Argmax: return aggregate_argmax(field, grid, templates, table);
    case AggregateStrategy::Mean: return aggregate_mean(field, grid, templates, table);
  }
  detail::fail(ErrorKind::Config, "unknown strategy");
}

// Convenience overloads that build the template table on the fly.
inline AggregatedShape aggregate_weighted(const PredictionField& field, const AnchorGrid& grid,
                                          const AnchorTemplateSet& templates, const AggregateConfig& cfg) {
  return aggregate_weighted(field, grid, templates, cfg, template_table(grid, templates));
}
inline AggregatedShape aggregate_argmax(const PredictionField& field, const AnchorGrid& grid,
                                        const AnchorTemplateSet& templates, const AggregateConfig& = {}) {
  return aggregate_argmax(field, grid, templates, template_table(grid, templates));
}
inline AggregatedShape aggregate_mean(const PredictionField& field, const AnchorGrid& grid,
                                      const AnchorTemplateSet& templates, const AggregateConfig& = {}) {
  return aggregate_mean(field, grid, templates, template_table(grid, templates));
}
inline AggregatedShape aggregate(const PredictionField& field, const AnchorGrid& grid, const AnchorTemplateSet& templates,
                                 const AggregateConfig& cfg) {
  return aggregate(field, grid, templates, cfg, template_table(grid, templates));
}

}  // namespace anchorface
