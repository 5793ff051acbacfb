#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorface/error.hpp"
#include "anchorface/shape.hpp"

namespace anchorface {

// ---- normalization ----------------------------------------------------------

struct FaceSizeNorm {};      // sqrt(box w * h)
struct BoxDiagonalNorm {};   // sqrt(w^2 + h^2)
struct InterOcularNorm {     // distance between the two outer eye corners
  std::size_t left_outer = 0;
  std::size_t right_outer = 0;
};

using NormFactor = std::variant<FaceSizeNorm, BoxDiagonalNorm, InterOcularNorm>;

inline double resolve_norm(const NormFactor& norm, const LandmarkShape& gt, const BoundingBox& box) {
  double d = 0.0;
  if (std::holds_alternative<FaceSizeNorm>(norm)) {
    d = std::sqrt(box.w * box.h);
  } else if (std::holds_alternative<BoxDiagonalNorm>(norm)) {
    d = box.diagonal();
  } else {
    const auto& io = std::get<InterOcularNorm>(norm);
    if (io.left_outer >= gt.size() || io.right_outer >= gt.size()) detail::fail(ErrorKind::Index, "inter-ocular index out of range");
    d = distance(gt[io.left_outer], gt[io.right_outer]);
  }
  if (!(d > 0.0) || !std::isfinite(d)) detail::fail(ErrorKind::Normalization, "normalization factor must be positive");
  return d;
}

/// Mean landmark distance of one image divided by its factor.
inline double normalized_error(const LandmarkShape& pred, const LandmarkShape& gt, double factor) {
  if (pred.size() != gt.size() || gt.size() == 0) detail::fail(ErrorKind::ShapeMismatch, "nme: landmark counts differ");
  if (!(factor > 0.0)) detail::fail(ErrorKind::Normalization, "normalization factor must be positive");
  double s = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) s += distance(pred[j], gt[j]);
  return s / static_cast<double>(gt.size()) / factor;
}

inline std::vector<double> per_image_errors(std::span<const LandmarkShape> preds, std::span<const LandmarkShape> gts,
                                            std::span<const double> factors) {
  if (preds.size() != gts.size() || gts.size() != factors.size()) detail::fail(ErrorKind::ShapeMismatch, "nme: list lengths differ");
  std::vector<double> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) out[i] = normalized_error(preds[i], gts[i], factors[i]);
  return out;
}

inline double nme(std::span<const LandmarkShape> preds, std::span<const LandmarkShape> gts, std::span<const double> factors) {
  if (preds.empty()) detail::fail(ErrorKind::EmptyInput, "nme of empty list");
  const auto e = per_image_errors(preds, gts, factors);
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

// ---- CED / AUC / failure ------------------------------------------------------

struct CedPoint {
  double error;
  double fraction;
};

/// Exact step-function CED on [0, threshold]: every distinct error
/// contributes a vertical jump, so trapezoids integrate it exactly.
inline std::vector<CedPoint> ced_curve(std::span<const double> errors, double threshold = 0.1) {
  if (errors.empty()) detail::fail(ErrorKind::EmptyInput, "ced of empty list");
  for (double e : errors) {
    if (!(e >= 0.0)) detail::fail(ErrorKind::InvalidInput, "errors must be non-negative");
  }
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<CedPoint> pts{{0.0, 0.0}};
  std::size_t i = 0;
  while (i < sorted.size() && sorted[i] <= threshold) {
    const double e = sorted[i];
    std::size_t k = i;
    while (k < sorted.size() && sorted[k] == e) ++k;
    pts.push_back({e, static_cast<double>(i) / n});
    pts.push_back({e, static_cast<double>(k) / n});
    i = k;
  }
  pts.push_back({threshold, static_cast<double>(i) / n});
  return pts;
}

inline double ced_auc(std::span<const double> errors, double threshold = 0.1) {
  if (!(threshold > 0.0)) detail::fail(ErrorKind::InvalidInput, "threshold must be positive");
  const auto pts = ced_curve(errors, threshold);
  double area = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    area += 0.5 * (pts[k].fraction + pts[k - 1].fraction) * (pts[k].error - pts[k - 1].error);
  }
  return area / threshold;
}

inline double failure_rate(std::span<const double> errors, double threshold = 0.1) {
  if (errors.empty()) detail::fail(ErrorKind::EmptyInput, "failure rate of empty list");
  std::size_t fails = 0;
  for (double e : errors) {
    if (!(e >= 0.0)) detail::fail(ErrorKind::InvalidInput, "errors must be non-negative");
    if (e > threshold) ++fails;
  }
  return static_cast<double>(fails) / static_cast<double>(errors.size());
}

// ---- Pearson analysis -----------------------------------------------------------

struct PearsonImage {
  std::vector<double> errors;       // per-pair ||O - Obar||_2
  std::vector<double> confidences;  // per-pair raw C
};

struct PearsonResult {
  double p = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // images with a constant series
};

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) detail::fail(ErrorKind::ShapeMismatch, "pearson: series lengths differ");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

/// Mean over images of the per-image correlation between pair errors and
/// confidences.
inline PearsonResult pearson_analysis(std::span<const PearsonImage> images) {
  PearsonResult res;
  double acc = 0.0;
  for (const auto& img : images) {
    const auto r = pearson(img.errors, img.confidences);
    if (!r) {
      ++res.skipped;
      continue;
    }
    acc += *r;
    ++res.used;
  }
  if (res.used == 0) detail::fail(ErrorKind::EmptyInput, "pearson_analysis: no image with variance in both series");
  res.p = acc / static_cast<double>(res.used);
  return res;
}

// ---- yaw bins and reports --------------------------------------------------------

enum class YawBin { Light, Medium, Large, Heavy };
inline constexpr std::array<YawBin, 4> kYawBins = {YawBin::Light, YawBin::Medium, YawBin::Large, YawBin::Heavy};

inline std::string to_string(YawBin b) {
  switch (b) {
    case YawBin::Light: return "Light";
    case YawBin::Medium: return "Medium";
    case YawBin::Large: return "Large";
    case YawBin::Heavy: return "Heavy";
  }
  return "?";
}

/// [0,30) Light, [30,60) Medium, [60,90) Large, [90,inf) Heavy on |yaw|.
inline YawBin classify_yaw_bin(double yaw_deg) {
  const double a = std::abs(yaw_deg);
  if (a < 30.0) return YawBin::Light;
  if (a < 60.0) return YawBin::Medium;
  if (a < 90.0) return YawBin::Large;
  return YawBin::Heavy;
}

struct BinStat {
  std::size_t count = 0;
  double nme = 0.0;  // 0 for empty bins
};

struct EvalReport {
  std::size_t n = 0;
  double nme = 0.0;
  double auc_01 = 0.0;
  double failure_rate_01 = 0.0;
  std::array<BinStat, 4> per_bin{};
  std::optional<PearsonResult> pearson;

  const BinStat& bin(YawBin b) const { return per_bin[static_cast<std::size_t>(b)]; }
};

inline std::array<BinStat, 4> yaw_binned_report(std::span<const double> yaw_deg, std::span<const double> errors) {
  if (yaw_deg.size() != errors.size()) detail::fail(ErrorKind::ShapeMismatch, "yaw and error lists differ in length");
  std::array<BinStat, 4> bins{};
  for (std::size_t i = 0; i < errors.size(); ++i) {
    auto& b = bins[static_cast<std::size_t>(classify_yaw_bin(yaw_deg[i]))];
    ++b.count;
    b.nme += errors[i];
  }
  for (auto& b : bins) {
    if (b.count) b.nme /= static_cast<double>(b.count);
  }
  return bins;
}

inline EvalReport make_report(std::span<const double> errors, std::span<const double> yaw_deg) {
  EvalReport r;
  r.n = errors.size();
  double s = 0.0;
  for (double e : errors) s += e;
  r.nme = errors.empty() ? 0.0 : s / static_cast<double>(errors.size());
  r.auc_01 = ced_auc(errors, 0.1);
  r.failure_rate_01 = failure_rate(errors, 0.1);
  if (!yaw_deg.empty()) r.per_bin = yaw_binned_report(yaw_deg, errors);
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["nme"] = r.nme;
  j["auc_01"] = r.auc_01;
  j["failure_rate_01"] = r.failure_rate_01;
  auto& bins = j["per_bin"] = nlohmann::ordered_json::object();
  for (YawBin b : kYawBins) {
    nlohmann::ordered_json e;
    e["count"] = r.bin(b).count;
    e["nme"] = r.bin(b).nme;
    bins[to_string(b)] = std::move(e);
  }
  if (r.pearson) {
    j["pearson_p"] = r.pearson->p;
    j["pearson_images"] = r.pearson->used;
    j["pearson_skipped"] = r.pearson->skipped;
  }
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n = j.at("n").get<std::size_t>();
  r.nme = j.at("nme").get<double>();
  r.auc_01 = j.at("auc_01").get<double>();
  r.failure_rate_01 = j.at("failure_rate_01").get<double>();
  for (YawBin b : kYawBins) {
    const auto& e = j.at("per_bin").at(to_string(b));
    r.per_bin[static_cast<std::size_t>(b)] = {e.at("count").get<std::size_t>(), e.at("nme").get<double>()};
  }
  if (j.contains("pearson_p")) {
    r.pearson = PearsonResult{j["pearson_p"].get<double>(), j.at("pearson_images").get<std::size_t>(),
                              j.at("pearson_skipped").get<std::size_t>()};
  }
  return r;
}

/// Two-column CSV "error,fraction" of the CED curve.
inline std::string ced_csv(std::span<const double> errors, double threshold = 0.1) {
  std::string out = "error,fraction\n";
  char buf[64];
  for (const auto& p : ced_curve(errors, threshold)) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", p.error, p.fraction);
    out += buf;
  }
  return out;
}

}  // namespace anchorface
