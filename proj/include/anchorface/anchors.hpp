#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorface/error.hpp"
#include "anchorface/kmeans.hpp"
#include "anchorface/shape.hpp"

namespace anchorface {

struct AnchorGridConfig {
  double image_side = 224.0;
  double anchor_area_side = 56.0;
  int grid_rows = 7;
  int grid_cols = 7;

  void validate() const {
    if (!(image_side > 0.0)) detail::fail(ErrorKind::Config, "image_side must be positive");
    if (!(anchor_area_side > 0.0) || anchor_area_side > image_side) {
      detail::fail(ErrorKind::Config, "anchor area must satisfy 0 < area <= image_side");
    }
    if (grid_rows < 1 || grid_cols < 1) detail::fail(ErrorKind::Config, "grid dimensions must be >= 1");
  }

  friend bool operator==(const AnchorGridConfig&, const AnchorGridConfig&) = default;
};

/// Anchor points in pixel coordinates, row-major (row = y).
struct AnchorGrid {
  int rows = 0;
  int cols = 0;
  double image_side = 0.0;
  std::vector<Point2> points;

  std::size_t size() const { return points.size(); }
};

inline AnchorGrid build_anchor_grid(const AnchorGridConfig& cfg) {
  cfg.validate();
  AnchorGrid grid;
  grid.rows = cfg.grid_rows;
  grid.cols = cfg.grid_cols;
  grid.image_side = cfg.image_side;
  const double center = cfg.image_side / 2.0;
  const double lo = center - cfg.anchor_area_side / 2.0;
  auto coord = [&](int i, int n) {
    if (n == 1) return center;
    return lo + cfg.anchor_area_side * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  grid.points.reserve(static_cast<std::size_t>(cfg.grid_rows) * cfg.grid_cols);
  for (int r = 0; r < cfg.grid_rows; ++r) {
    for (int c = 0; c < cfg.grid_cols; ++c) grid.points.push_back({coord(c, cfg.grid_cols), coord(r, cfg.grid_rows)});
  }
  return grid;
}

enum class TemplateProvenance { HandDesign, KMeans };

inline std::string to_string(TemplateProvenance p) {
  return p == TemplateProvenance::HandDesign ? "hand" : "kmeans";
}

inline TemplateProvenance parse_provenance(const std::string& s) {
  if (s == "hand" || s == "hand-design" || s == "handdesign") return TemplateProvenance::HandDesign;
  if (s == "kmeans") return TemplateProvenance::KMeans;
  detail::fail(ErrorKind::Parse, "unknown template provenance '" + s + "'");
}

/// Yaw bucket for hand-designed bases, cluster index for KMeans bases.
using BaseLabel = std::variant<YawBucket, int>;

struct AnchorTemplate {
  int id = 0;
  int base_index = 0;
  BaseLabel base_label = YawBucket::Frontal;
  double roll_deg = 0.0;
  LandmarkShape offsets;  // centroid-centered displacements in fractions of image_side
};

struct AnchorTemplateSet {
  TemplateProvenance provenance = TemplateProvenance::KMeans;
  std::size_t landmark_count = 0;
  int n_base = 0;
  double roll_step = 360.0;
  std::optional<double> gamma;          // hand design only
  std::optional<std::uint64_t> seed;    // KMeans only
  std::vector<AnchorTemplate> templates;

  std::size_t size() const { return templates.size(); }
  int roll_count() const { return static_cast<int>(std::lround(360.0 / roll_step)); }
};

/// How base shapes are sized before roll expansion.
struct TemplateScale {
  enum class Mode { AsAveraged, MeanTrainingDiagonal, FixedDiagonal };
  Mode mode = Mode::MeanTrainingDiagonal;
  double diagonal = 0.0;  // fraction of image side; FixedDiagonal only

  static TemplateScale as_averaged() { return {Mode::AsAveraged, 0.0}; }
  static TemplateScale fixed(double diagonal) { return {Mode::FixedDiagonal, diagonal}; }
};

namespace detail {

inline int roll_count_for(double roll_step) {
  if (!(roll_step > 0.0) || roll_step > 360.0) fail(ErrorKind::Config, "roll_step must lie in (0, 360]");
  const double n = 360.0 / roll_step;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9) fail(ErrorKind::Config, "360 must be divisible by roll_step");
  return static_cast<int>(rounded);
}

inline LandmarkShape to_normalized(const LandmarkShape& s) {
  if (s.frame().kind == Frame::Kind::Normalized) return s;
  std::vector<Point2> pts(s.begin(), s.end());
  for (auto& p : pts) p = {p.x / s.frame().width, p.y / s.frame().height};
  return LandmarkShape(std::move(pts), Frame::normalized());
}

inline LandmarkShape centered(const LandmarkShape& s) { return translate(s, Point2{} - centroid(s)); }

inline double mean_diagonal(std::span<const LandmarkShape> normalized) {
  double acc = 0.0;
  for (const auto& s : normalized) acc += bounding_box(s).diagonal();
  return acc / static_cast<double>(normalized.size());
}

inline LandmarkShape apply_scale(const LandmarkShape& centered_base, const TemplateScale& scale,
                                 double training_diagonal) {
  double target = 0.0;
  switch (scale.mode) {
    case TemplateScale::Mode::AsAveraged: return centered_base;
    case TemplateScale::Mode::MeanTrainingDiagonal: target = training_diagonal; break;
    case TemplateScale::Mode::FixedDiagonal: target = scale.diagonal; break;
  }
  const double diag = bounding_box(centered_base).diagonal();
  if (!(diag > 0.0)) return centered_base;
  return scale_about(centered_base, target / diag, Point2{});
}

inline std::vector<AnchorTemplate> expand_rolls(const std::vector<LandmarkShape>& bases,
                                                const std::vector<BaseLabel>& labels, double roll_step) {
  const int rolls = roll_count_for(roll_step);
  std::vector<AnchorTemplate> out;
  out.reserve(bases.size() * rolls);
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (int r = 0; r < rolls; ++r) {
      AnchorTemplate t;
      t.id = static_cast<int>(out.size());
      t.base_index = static_cast<int>(b);
      t.base_label = labels[b];
      t.roll_deg = roll_step * r;
      t.offsets = r == 0 ? bases[b] : rotate_shape(bases[b], t.roll_deg, Point2{});
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace detail

enum class EmptyBucketPolicy {
  Error,       // insufficient-pose-coverage
  GlobalMean,  // substitute the mean of all training faces
};

/// Three yaw-bucket mean shapes, each expanded over roll angles
/// 0, roll_step, ... < 360. Shapes may be in pixel or normalized frame.
inline AnchorTemplateSet hand_design_templates(std::span<const LandmarkShape> training,
                                               const EyeCornerIndex& eyes, double gamma,
                                               double roll_step, TemplateScale scale = {},
                                               EmptyBucketPolicy empty = EmptyBucketPolicy::Error) {
  if (training.empty()) detail::fail(ErrorKind::EmptyInput, "hand_design_templates: empty training set");
  detail::roll_count_for(roll_step);
  const auto buckets = bucket_by_yaw(training, eyes, gamma);

  std::vector<LandmarkShape> normalized;
  normalized.reserve(training.size());
  for (const auto& s : training) normalized.push_back(detail::to_normalized(s));
  const double diag = detail::mean_diagonal(normalized);

  const YawBucket order[3] = {YawBucket::Negative, YawBucket::Frontal, YawBucket::Positive};
  std::vector<LandmarkShape> bases;
  std::vector<BaseLabel> labels;
  for (YawBucket b : order) {
    std::vector<LandmarkShape> members;
    for (std::size_t i = 0; i < normalized.size(); ++i) {
      if (buckets[i] == b) members.push_back(normalized[i]);
    }
    if (members.empty() && empty == EmptyBucketPolicy::GlobalMean) members = normalized;
    if (members.empty()) {
      detail::fail(ErrorKind::InsufficientPoseCoverage,
                   "no training faces in the " + std::string(to_string(b)) + " yaw bucket");
    }
    bases.push_back(detail::apply_scale(detail::centered(mean_shape(members)), scale, diag));
    labels.emplace_back(b);
  }

  AnchorTemplateSet set;
  set.provenance = TemplateProvenance::HandDesign;
  set.landmark_count = training.front().size();
  set.n_base = 3;
  set.roll_step = roll_step;
  set.gamma = gamma;
  set.templates = detail::expand_rolls(bases, labels, roll_step);
  return set;
}

/// Pose-space representation used for clustering: centroid removed and
/// divided by the RMS landmark radius.
inline std::vector<double> pose_vector(const LandmarkShape& shape, double* radius_out = nullptr) {
  const LandmarkShape c = detail::centered(detail::to_normalized(shape));
  double ss = 0.0;
  for (const auto& p : c) ss += p.x * p.x + p.y * p.y;
  const double radius = std::sqrt(ss / static_cast<double>(c.size()));
  if (radius_out) *radius_out = radius;
  std::vector<double> v = c.flatten();
  if (radius > 0.0) {
    for (auto& x : v) x /= radius;
  }
  return v;
}

inline AnchorTemplateSet kmeans_templates(std::span<const LandmarkShape> training, int n_base,
                                          double roll_step, std::uint64_t seed, TemplateScale scale = {},
                                          KMeansOptions opts = {}) {
  if (n_base < 1) detail::fail(ErrorKind::Config, "kmeans_templates: n_base must be >= 1");
  if (training.size() < static_cast<std::size_t>(n_base)) {
    detail::fail(ErrorKind::InvalidInput, "kmeans_templates: fewer training shapes than clusters");
  }
  detail::roll_count_for(roll_step);

  std::vector<std::vector<double>> data;
  std::vector<double> radii;
  std::vector<LandmarkShape> normalized;
  data.reserve(training.size());
  for (const auto& s : training) {
    double radius = 0.0;
    data.push_back(pose_vector(s, &radius));
    radii.push_back(radius);
    normalized.push_back(detail::to_normalized(s));
  }
  const double diag = detail::mean_diagonal(normalized);
  const KMeansResult km = lloyd_kmeans(data, static_cast<std::size_t>(n_base), seed, opts);

  std::vector<LandmarkShape> bases;
  std::vector<BaseLabel> labels;
  for (int c = 0; c < n_base; ++c) {
    double radius = 0.0;
    std::size_t members = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (km.assignment[i] == static_cast<std::size_t>(c)) {
        radius += radii[i];
        ++members;
      }
    }
    radius = members ? radius / static_cast<double>(members) : 0.0;
    const auto& v = km.centroids[c];
    std::vector<Point2> pts(v.size() / 2);
    for (std::size_t j = 0; j < pts.size(); ++j) pts[j] = {v[2 * j] * radius, v[2 * j + 1] * radius};
    bases.push_back(detail::apply_scale(detail::centered(LandmarkShape(std::move(pts))), scale, diag));
    labels.emplace_back(c);
  }

  AnchorTemplateSet set;
  set.provenance = TemplateProvenance::KMeans;
  set.landmark_count = training.front().size();
  set.n_base = n_base;
  set.roll_step = roll_step;
  set.seed = seed;
  set.templates = detail::expand_rolls(bases, labels, roll_step);
  return set;
}

/// Absolute pixel landmarks of template `template_index` centred on anchor
/// point `anchor_index`.
inline LandmarkShape instantiate_template(const AnchorGrid& grid, std::size_t anchor_index,
                                          const AnchorTemplateSet& set, std::size_t template_index,
                                          double image_side) {
  if (anchor_index >= grid.size()) {
    detail::fail(ErrorKind::Index, "anchor index " + std::to_string(anchor_index) + " out of range");
  }
  if (template_index >= set.size()) {
    detail::fail(ErrorKind::Index, "template index " + std::to_string(template_index) + " out of range");
  }
  const Point2 a = grid.points[anchor_index];
  const auto& off = set.templates[template_index].offsets;
  std::vector<Point2> pts(off.size());
  for (std::size_t j = 0; j < off.size(); ++j) pts[j] = a + image_side * off[j];
  return LandmarkShape(std::move(pts), Frame::pixel(image_side, image_side));
}

// ---- serialization -------------------------------------------------------

inline constexpr int kTemplateFormatVersion = 1;

inline nlohmann::ordered_json to_json(const AnchorTemplateSet& set) {
  nlohmann::ordered_json j;
  j["version"] = kTemplateFormatVersion;
  j["provenance"] = to_string(set.provenance);
  j["L"] = set.landmark_count;
  j["K"] = set.size();
  j["roll_step"] = set.roll_step;
  j["n_base"] = set.n_base;
  if (set.gamma) j["gamma"] = *set.gamma;
  if (set.seed) j["seed"] = *set.seed;
  auto& arr = j["templates"] = nlohmann::ordered_json::array();
  for (const auto& t : set.templates) {
    nlohmann::ordered_json e;
    e["id"] = t.id;
    if (std::holds_alternative<YawBucket>(t.base_label)) {
      e["base_label"] = std::string(to_string(std::get<YawBucket>(t.base_label)));
    } else {
      e["base_label"] = std::get<int>(t.base_label);
    }
    e["roll_deg"] = t.roll_deg;
    auto& offs = e["offsets"] = nlohmann::ordered_json::array();
    for (const auto& p : t.offsets) offs.push_back({p.x, p.y});
    arr.push_back(std::move(e));
  }
  return j;
}

inline AnchorTemplateSet template_set_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kTemplateFormatVersion) {
      detail::fail(ErrorKind::Parse, "unsupported template set version");
    }
    AnchorTemplateSet set;
    set.provenance = parse_provenance(j.at("provenance").get<std::string>());
    set.landmark_count = j.at("L").get<std::size_t>();
    set.roll_step = j.at("roll_step").get<double>();
    set.n_base = j.at("n_base").get<int>();
    if (j.contains("gamma")) set.gamma = j["gamma"].get<double>();
    if (j.contains("seed")) set.seed = j["seed"].get<std::uint64_t>();
    const int rolls = detail::roll_count_for(set.roll_step);
    for (const auto& e : j.at("templates")) {
      AnchorTemplate t;
      t.id = e.at("id").get<int>();
      if (t.id != static_cast<int>(set.templates.size())) detail::fail(ErrorKind::Parse, "template ids must be 0..K-1 in order");
      t.base_index = t.id / rolls;
      const auto& bl = e.at("base_label");
      if (bl.is_string()) {
        const auto s = bl.get<std::string>();
        if (s == "Negative") t.base_label = YawBucket::Negative;
        else if (s == "Frontal") t.base_label = YawBucket::Frontal;
        else if (s == "Positive") t.base_label = YawBucket::Positive;
        else detail::fail(ErrorKind::Parse, "unknown base label '" + s + "'");
      } else {
        t.base_label = bl.get<int>();
      }
      t.roll_deg = e.at("roll_deg").get<double>();
      std::vector<Point2> pts;
      for (const auto& p : e.at("offsets")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      if (pts.size() != set.landmark_count) detail::fail(ErrorKind::CountMismatch, "template landmark count differs from L");
      t.offsets = LandmarkShape(std::move(pts));
      set.templates.push_back(std::move(t));
    }
    if (set.templates.size() != j.at("K").get<std::size_t>()) detail::fail(ErrorKind::CountMismatch, "K does not match template list");
    return set;
  } catch (const nlohmann::json::exception& e) {
    detail::fail(ErrorKind::Parse, std::string("template set: ") + e.what());
  }
}

}  // namespace anchorface
