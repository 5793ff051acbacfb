#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anchorface/image.hpp"
#include "anchorface/metrics.hpp"
#include "anchorface/shape.hpp"

namespace anchorface {

namespace detail {

inline std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

inline std::string num(double v) { return fmt("%.3f", v); }

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string svg_open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

inline const char* palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

}  // namespace detail

/// Grayscale image drawn as pixel rectangles, predicted landmarks as one
/// circle each and optional ground truth as crosses.
inline std::string svg_landmarks(const Image& img, const LandmarkShape& pred,
                                 const std::optional<LandmarkShape>& gt = std::nullopt, double scale = 6.0) {
  using detail::num;
  std::string s = detail::svg_open(img.width * scale, img.height * scale);
  s += "<g shape-rendering=\"crispEdges\">\n";
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int v = static_cast<int>(std::clamp(img.at(x, y), 0.0f, 1.0f) * 255.0f + 0.5f);
      char fill[8];
      std::snprintf(fill, sizeof fill, "#%02x%02x%02x", v, v, v);
      s += "<rect x=\"" + num(x * scale) + "\" y=\"" + num(y * scale) + "\" width=\"" + num(scale) + "\" height=\"" +
           num(scale) + "\" fill=\"" + fill + "\"/>\n";
    }
  }
  s += "</g>\n";
  if (gt) {
    const double r = scale * 0.8;
    for (const auto& p : *gt) {
      const double x = p.x * scale, y = p.y * scale;
      s += "<path d=\"M" + num(x - r) + " " + num(y) + "H" + num(x + r) + "M" + num(x) + " " + num(y - r) + "V" +
           num(y + r) + "\" stroke=\"#2ca02c\" stroke-width=\"1.5\"/>\n";
    }
  }
  for (const auto& p : pred) {
    s += "<circle cx=\"" + num(p.x * scale) + "\" cy=\"" + num(p.y * scale) + "\" r=\"" + num(scale * 0.6) +
         "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

struct NamedErrors {
  std::string name;
  std::vector<double> errors;
};

/// CED curves up to `threshold`, one polyline per method.
inline std::string svg_ced(std::span<const NamedErrors> methods, double threshold = 0.1) {
  using detail::num;
  const double W = 480, H = 360, ml = 50, mr = 20, mt = 20, mb = 45;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](double e) { return ml + pw * e / threshold; };
  auto py = [&](double f) { return mt + ph * (1.0 - f); };
  std::string s = detail::svg_open(W, H);
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
  s += "<path d=\"M" + num(ml) + " " + num(mt) + "V" + num(mt + ph) + "H" + num(ml + pw) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double e = threshold * k / 5.0, f = k / 5.0;
    s += "<text x=\"" + num(px(e)) + "\" y=\"" + num(mt + ph + 16) + "\" font-size=\"11\" text-anchor=\"middle\">" +
         detail::fmt("%.2f", e) + "</text>\n";
    s += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(py(f) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
         detail::fmt("%.1f", f) + "</text>\n";
  }
  s += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(H - 8) +
       "\" font-size=\"12\" text-anchor=\"middle\">normalized error</text>\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::string pts;
    for (const auto& p : ced_curve(methods[m].errors, threshold)) {
      if (!pts.empty()) pts += " ";
      pts += num(px(p.error)) + "," + num(py(p.fraction));
    }
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + detail::palette(m) + "\" stroke-width=\"1.5\"/>\n";
    const double ly = mt + ph - 10 - 14.0 * static_cast<double>(methods.size() - 1 - m);
    s += "<text x=\"" + num(ml + pw - 4) + "\" y=\"" + num(ly) + "\" font-size=\"11\" text-anchor=\"end\" fill=\"" +
         detail::palette(m) + "\">" + detail::xml_escape(methods[m].name) + " AUC " +
         detail::fmt("%.4f", ced_auc(methods[m].errors, threshold)) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

struct NamedReport {
  std::string name;
  EvalReport report;
};

/// Grouped bars of NME per yaw bin, one colour per method.
inline std::string svg_yaw_bins(std::span<const NamedReport> methods) {
  using detail::num;
  const double W = 480, H = 320, ml = 55, mr = 20, mt = 20, mb = 45;
  const double pw = W - ml - mr, ph = H - mt - mb;
  double top = 0.0;
  for (const auto& m : methods) {
    for (auto b : kYawBins) top = std::max(top, m.report.bin(b).nme);
  }
  if (!(top > 0.0)) top = 1.0;
  top *= 1.1;
  std::string s = detail::svg_open(W, H);
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
  s += "<path d=\"M" + num(ml) + " " + num(mt) + "V" + num(mt + ph) + "H" + num(ml + pw) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = top * k / 4.0;
    s += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(mt + ph * (1.0 - k / 4.0) + 4) +
         "\" font-size=\"11\" text-anchor=\"end\">" + detail::fmt("%.3f", v) + "</text>\n";
  }
  const double group = pw / 4.0;
  const double bar = group * 0.8 / static_cast<double>(std::max<std::size_t>(1, methods.size()));
  for (std::size_t bi = 0; bi < kYawBins.size(); ++bi) {
    const double gx = ml + group * static_cast<double>(bi) + group * 0.1;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const double v = methods[m].report.bin(kYawBins[bi]).nme;
      const double h = ph * v / top;
      s += "<rect x=\"" + num(gx + bar * static_cast<double>(m)) + "\" y=\"" + num(mt + ph - h) + "\" width=\"" +
           num(bar) + "\" height=\"" + num(h) + "\" fill=\"" + detail::palette(m) + "\"/>\n";
    }
    s += "<text x=\"" + num(gx + group * 0.4) + "\" y=\"" + num(mt + ph + 16) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + to_string(kYawBins[bi]) + "</text>\n";
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    s += "<text x=\"" + num(ml + 8) + "\" y=\"" + num(mt + 12 + 14.0 * static_cast<double>(m)) +
         "\" font-size=\"11\" fill=\"" + detail::palette(m) + "\">" + detail::xml_escape(methods[m].name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace anchorface
