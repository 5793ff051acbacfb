#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorface/error.hpp"
#include "anchorface/image.hpp"
#include "anchorface/random.hpp"
#include "anchorface/shape.hpp"

namespace anchorface {

// ---- 19-point face layout -------------------------------------------------
//  0- 2 left brow (outer, mid, inner)     3- 5 right brow (inner, mid, outer)
//  6- 8 left eye (outer, mid, inner)      9-11 right eye (inner, mid, outer)
// 12-14 nose (left, tip, right)          15-17 mouth (left, mid, right)
// 18    chin
// "left"/"right" are image sides.

inline constexpr std::size_t kFaceLandmarks = 19;

inline constexpr EyeCornerIndex kFaceEyes{8, 6, 9, 11};

/// Index of the bilaterally mirrored landmark.
inline constexpr std::array<std::size_t, kFaceLandmarks> kFaceMirror = {5, 4, 3, 2, 1, 0, 11, 10, 9, 8,
                                                                        7, 6, 14, 13, 12, 17, 16, 15, 18};

namespace detail {

// Unit-face coordinates: face box is [-0.5, 0.5]^2, y grows downwards.
inline constexpr std::array<Point2, kFaceLandmarks> kFrontal = {{
    {-0.36, -0.28}, {-0.23, -0.31}, {-0.10, -0.28},
    {0.10, -0.28},  {0.23, -0.31},  {0.36, -0.28},
    {-0.34, -0.15}, {-0.23, -0.16}, {-0.12, -0.15},
    {0.12, -0.15},  {0.23, -0.16},  {0.34, -0.15},
    {-0.08, 0.12},  {0.0, 0.08},    {0.08, 0.12},
    {-0.18, 0.28},  {0.0, 0.30},    {0.18, 0.28},
    {0.0, 0.48},
}};

// Turned so that the right eye is foreshortened to 1/8 of the left one.
inline constexpr std::array<Point2, kFaceLandmarks> kPositive = {{
    {-0.22, -0.29}, {-0.08, -0.33}, {0.07, -0.30},
    {0.17, -0.29},  {0.21, -0.31},  {0.25, -0.28},
    {-0.17, -0.15}, {-0.05, -0.16}, {0.07, -0.15},
    {0.19, -0.15},  {0.205, -0.16}, {0.22, -0.15},
    {0.12, 0.12},   {0.36, 0.06},   {0.24, 0.12},
    {-0.03, 0.28},  {0.15, 0.30},   {0.24, 0.28},
    {0.14, 0.47},
}};

}  // namespace detail

enum class FacePrototype { Negative, Frontal, Positive };

/// The three fixed prototypes in unit-face coordinates.
inline LandmarkShape face_prototype(FacePrototype which) {
  std::vector<Point2> pts(kFaceLandmarks);
  for (std::size_t j = 0; j < kFaceLandmarks; ++j) {
    switch (which) {
      case FacePrototype::Frontal: pts[j] = detail::kFrontal[j]; break;
      case FacePrototype::Positive: pts[j] = detail::kPositive[j]; break;
      case FacePrototype::Negative: {
        const Point2 m = detail::kPositive[kFaceMirror[j]];
        pts[j] = {-m.x, m.y};
        break;
      }
    }
  }
  return LandmarkShape(std::move(pts));
}

/// Piecewise-linear blend: -1 -> Negative, 0 -> Frontal, +1 -> Positive.
inline LandmarkShape interpolate_prototypes(double yaw_param) {
  const double t = std::clamp(yaw_param, -1.0, 1.0);
  const LandmarkShape f = face_prototype(FacePrototype::Frontal);
  const LandmarkShape side = face_prototype(t >= 0 ? FacePrototype::Positive : FacePrototype::Negative);
  const double w = std::abs(t);
  std::vector<Point2> pts(kFaceLandmarks);
  for (std::size_t j = 0; j < kFaceLandmarks; ++j) pts[j] = (1.0 - w) * f[j] + w * side[j];
  return LandmarkShape(std::move(pts));
}

struct SyntheticSpec {
  std::size_t landmark_count = kFaceLandmarks;
  int image_side = 64;
  double yaw_param = 0.0;
  double roll_deg = 0.0;
  double scale = 0.75;       // face box side as a fraction of image side
  Point2 translation{};      // pixels, relative to the image centre
  double noise_std = 0.0;    // pixels
};

struct Sample {
  Image image;
  LandmarkShape gt;          // pixel frame
  std::optional<double> yaw_deg;
  double roll_deg = 0.0;
  BoundingBox box;           // face box in pixels

  friend bool operator==(const Sample&, const Sample&) = default;
};

namespace detail {

struct Stroke {
  std::size_t a, b;
  float intensity;
};

inline constexpr float kLineIntensity = 0.45f;

inline float landmark_intensity(std::size_t j) {
  if (j <= 5) return 0.7f;
  if (j <= 11) return 1.0f;
  if (j <= 14) return 0.85f;
  if (j <= 17) return 0.75f;
  return 0.9f;
}

inline constexpr std::array<std::pair<std::size_t, std::size_t>, 14> kStrokes = {{
    {0, 1}, {1, 2}, {3, 4}, {4, 5}, {6, 7}, {7, 8}, {9, 10}, {10, 11},
    {12, 13}, {13, 14}, {15, 16}, {16, 17}, {15, 18}, {17, 18},
}};

inline void stamp_blob(Image& img, Point2 c, double sigma, float amp) {
  const double r = 3.0 * sigma;
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y + r)));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
      const float v = amp * static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
      img.at(x, y) = std::max(img.at(x, y), v);
    }
  }
}

inline void stamp_segment(Image& img, Point2 a, Point2 b, double sigma, float amp) {
  const double r = 3.0 * sigma;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
  const Point2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Point2 p{x + 0.5, y + 0.5};
      double t = len2 > 0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const Point2 q = a + t * ab;
      const double d2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
      const float v = amp * static_cast<float>(std::exp(-d2 * inv));
      img.at(x, y) = std::max(img.at(x, y), v);
    }
  }
}

inline bool inside(const LandmarkShape& s, double side) {
  for (const auto& p : s) {
    if (p.x < 0.0 || p.y < 0.0 || p.x >= side || p.y >= side) return false;
  }
  return true;
}

}  // namespace detail

/// Draws landmark blobs joined by facial strokes (max-composited), so the
/// brightest pixel always sits on a landmark.
inline Image render_face(const LandmarkShape& gt, int side, double face_px) {
  Image img(side, side, 1);
  const double line_sigma = std::max(0.6, 0.012 * face_px);
  const double blob_sigma = std::max(0.8, 0.022 * face_px);
  if (gt.size() == kFaceLandmarks) {
    for (const auto& [a, b] : detail::kStrokes) detail::stamp_segment(img, gt[a], gt[b], line_sigma, detail::kLineIntensity);
  }
  for (std::size_t j = 0; j < gt.size(); ++j) {
    detail::stamp_blob(img, gt[j], blob_sigma, gt.size() == kFaceLandmarks ? detail::landmark_intensity(j) : 1.0f);
  }
  return img;
}

/// Deterministic synthetic face. Throws OutOfBounds when the placed face
/// leaves the image; callers retry with a smaller scale.
inline Sample synth_sample(const SyntheticSpec& spec, std::uint64_t rng_seed) {
  if (spec.landmark_count != kFaceLandmarks) {
    detail::fail(ErrorKind::Config, "synthetic faces have " + std::to_string(kFaceLandmarks) + " landmarks");
  }
  if (spec.image_side <= 0 || !(spec.scale > 0.0) || spec.noise_std < 0.0 || !std::isfinite(spec.roll_deg)) {
    detail::fail(ErrorKind::Config, "invalid synthetic spec");
  }
  const double side = spec.image_side;
  const double face_px = spec.scale * side;
  const Point2 center = Point2{side / 2.0, side / 2.0} + spec.translation;

  const LandmarkShape unit = interpolate_prototypes(spec.yaw_param);
  std::vector<Point2> pts(unit.size());
  for (std::size_t j = 0; j < unit.size(); ++j) pts[j] = center + face_px * unit[j];
  LandmarkShape gt(std::move(pts), Frame::pixel(side, side));
  if (spec.roll_deg != 0.0) gt = rotate_shape(gt, spec.roll_deg);
  if (spec.noise_std > 0.0) {
    Rng rng(rng_seed);
    for (auto& p : gt.points()) p = p + Point2{spec.noise_std * rng.normal(), spec.noise_std * rng.normal()};
  }
  if (!detail::inside(gt, side)) detail::fail(ErrorKind::OutOfBounds, "synthetic landmarks leave the image; retry with smaller scale");

  Sample s;
  s.image = render_face(gt, spec.image_side, face_px);
  s.gt = std::move(gt);
  s.yaw_deg = 90.0 * std::clamp(spec.yaw_param, -1.0, 1.0);
  s.roll_deg = spec.roll_deg;
  s.box = {center.x - face_px / 2.0, center.y - face_px / 2.0, face_px, face_px};
  return s;
}

/// Sampling ranges for whole synthetic datasets.
struct SyntheticDistribution {
  int image_side = 64;
  double yaw_extent = 1.2;   // yaw_param ~ U(-extent, extent), clamped to [-1, 1]
  double max_roll_deg = 90.0;
  double min_scale = 0.5;
  double max_scale = 0.75;
  double max_translation_frac = 0.06;
  double noise_std = 0.4;

  friend bool operator==(const SyntheticDistribution&, const SyntheticDistribution&) = default;
};

inline nlohmann::ordered_json to_json(const SyntheticDistribution& d) {
  nlohmann::ordered_json j;
  j["image_side"] = d.image_side;
  j["yaw_extent"] = d.yaw_extent;
  j["max_roll_deg"] = d.max_roll_deg;
  j["min_scale"] = d.min_scale;
  j["max_scale"] = d.max_scale;
  j["max_translation_frac"] = d.max_translation_frac;
  j["noise_std"] = d.noise_std;
  return j;
}

inline SyntheticDistribution synthetic_distribution_from_json(const nlohmann::json& j) {
  SyntheticDistribution d;
  d.image_side = j.value("image_side", d.image_side);
  d.yaw_extent = j.value("yaw_extent", d.yaw_extent);
  d.max_roll_deg = j.value("max_roll_deg", d.max_roll_deg);
  d.min_scale = j.value("min_scale", d.min_scale);
  d.max_scale = j.value("max_scale", d.max_scale);
  d.max_translation_frac = j.value("max_translation_frac", d.max_translation_frac);
  d.noise_std = j.value("noise_std", d.noise_std);
  return d;
}

inline SyntheticSpec draw_spec(const SyntheticDistribution& dist, Rng& rng) {
  SyntheticSpec spec;
  spec.image_side = dist.image_side;
  spec.yaw_param = std::clamp(rng.uniform(-dist.yaw_extent, dist.yaw_extent), -1.0, 1.0);
  spec.roll_deg = rng.uniform(-dist.max_roll_deg, dist.max_roll_deg);
  spec.scale = rng.uniform(dist.min_scale, dist.max_scale);
  const double t = dist.max_translation_frac * dist.image_side;
  spec.translation = {rng.uniform(-t, t), rng.uniform(-t, t)};
  spec.noise_std = dist.noise_std;
  return spec;
}

/// Sample `index` of the dataset identified by `seed`; independent of every
/// other index, so datasets can be generated in any order or in parallel.
inline Sample synth_dataset_sample(const SyntheticDistribution& dist, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  SyntheticSpec spec = draw_spec(dist, rng);
  const std::uint64_t noise_seed = rng.next_u64();
  for (int attempt = 0;; ++attempt) {
    try {
      return synth_sample(spec, noise_seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OutOfBounds || attempt >= 20) throw;
      spec.scale *= 0.9;
    }
  }
}

inline std::vector<Sample> synth_dataset(const SyntheticDistribution& dist, std::uint64_t seed, std::size_t count) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_dataset_sample(dist, seed, i));
  return out;
}

// ---- annotations ----------------------------------------------------------

struct AnnotationRecord {
  std::string image_path;
  BoundingBox box;
  std::vector<Point2> landmarks;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) fail(ErrorKind::InvalidInput, "cannot format number");
  return std::string(buf, ptr);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& field, std::size_t line_no) {
  std::size_t b = field.find_first_not_of(" \t");
  std::size_t e = field.find_last_not_of(" \t");
  if (b == std::string::npos) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": empty numeric field");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data() + b, field.data() + e + 1, v);
  if (ec != std::errc() || ptr != field.data() + e + 1 || !std::isfinite(v)) {
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad number '" + field + "'");
  }
  return v;
}

}  // namespace detail

/// CSV: one row per face: path,x,y,w,h,x0,y0,...,x{L-1},y{L-1}. A first
/// row whose first field is "path" is a header and skipped.
inline std::vector<AnnotationRecord> parse_annotations(const std::string& text, std::size_t landmark_count) {
  std::vector<AnnotationRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv(line);
    if (line_no == 1 && fields[0] == "path") continue;
    if (fields.size() < 5) detail::fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected path and box");
    const std::size_t coords = fields.size() - 5;
    if (coords % 2 != 0 || coords / 2 != landmark_count) {
      detail::fail(ErrorKind::CountMismatch, "line " + std::to_string(line_no) + ": expected " +
                                                 std::to_string(landmark_count) + " landmarks, found " +
                                                 std::to_string(coords / 2) + (coords % 2 ? ".5" : ""));
    }
    AnnotationRecord r;
    r.image_path = fields[0];
    r.box = {detail::parse_number(fields[1], line_no), detail::parse_number(fields[2], line_no),
             detail::parse_number(fields[3], line_no), detail::parse_number(fields[4], line_no)};
    if (!(r.box.w > 0.0) || !(r.box.h > 0.0)) {
      detail::fail(ErrorKind::DegenerateBox, "line " + std::to_string(line_no) + ": box must have positive area");
    }
    for (std::size_t j = 0; j < landmark_count; ++j) {
      r.landmarks.push_back({detail::parse_number(fields[5 + 2 * j], line_no), detail::parse_number(fields[6 + 2 * j], line_no)});
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<AnnotationRecord> load_annotations(const std::string& path, std::size_t landmark_count) {
  return parse_annotations(detail::read_file(path), landmark_count);
}

inline std::string serialize_annotation(const AnnotationRecord& r) {
  if (r.image_path.find_first_of(",\n") != std::string::npos) {
    detail::fail(ErrorKind::InvalidInput, "image path may not contain commas or newlines");
  }
  std::string line = r.image_path;
  for (double v : {r.box.x, r.box.y, r.box.w, r.box.h}) line += "," + detail::format_number(v);
  for (const auto& p : r.landmarks) line += "," + detail::format_number(p.x) + "," + detail::format_number(p.y);
  return line + "\n";
}

inline std::string serialize_annotations(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) out += serialize_annotation(r);
  return out;
}

// ---- geometric transforms --------------------------------------------------

struct CropResult {
  Sample sample;
  bool clamped = false;  // the box extended past the image and was clipped
};

/// Crops to the record's box and resamples to target_side x target_side;
/// landmarks follow p' = (p - box.origin) * (target / box.size).
inline CropResult crop_resize(const AnnotationRecord& record, const Image& image, int target_side) {
  if (target_side <= 0) detail::fail(ErrorKind::Config, "target side must be positive");
  if (!(record.box.w > 0.0) || !(record.box.h > 0.0)) detail::fail(ErrorKind::DegenerateBox, "box must have positive area");
  CropResult res;
  BoundingBox box = record.box;
  const double x0 = std::max(0.0, box.x), y0 = std::max(0.0, box.y);
  const double x1 = std::min<double>(image.width, box.x + box.w), y1 = std::min<double>(image.height, box.y + box.h);
  if (x0 != box.x || y0 != box.y || x1 != box.x + box.w || y1 != box.y + box.h) {
    if (!(x1 > x0) || !(y1 > y0)) detail::fail(ErrorKind::DegenerateBox, "box lies entirely outside the image");
    box = {x0, y0, x1 - x0, y1 - y0};
    res.clamped = true;
  }
  const double sx = target_side / box.w, sy = target_side / box.h;
  Image out(target_side, target_side, image.channels);
  for (int y = 0; y < target_side; ++y) {
    for (int x = 0; x < target_side; ++x) {
      const double u = box.x + (x + 0.5) / sx, v = box.y + (y + 0.5) / sy;
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = sample_bilinear(image, u, v, c);
    }
  }
  std::vector<Point2> pts;
  pts.reserve(record.landmarks.size());
  for (const auto& p : record.landmarks) pts.push_back({(p.x - box.x) * sx, (p.y - box.y) * sy});
  res.sample.image = std::move(out);
  res.sample.gt = LandmarkShape(std::move(pts), Frame::pixel(target_side, target_side));
  res.sample.box = {0.0, 0.0, static_cast<double>(target_side), static_cast<double>(target_side)};
  return res;
}

/// Rotation about the image centre followed by a translation, applied to
/// image (bilinear, zero padded), landmarks and face box.
inline Sample warp_sample(const Sample& s, double angle_deg, Point2 shift) {
  const double side_x = s.image.width, side_y = s.image.height;
  const Point2 c{side_x / 2.0, side_y / 2.0};
  Sample out;
  out.image = Image(s.image.width, s.image.height, s.image.channels);
  for (int y = 0; y < s.image.height; ++y) {
    for (int x = 0; x < s.image.width; ++x) {
      const Point2 src = rotate_point(Point2{x + 0.5, y + 0.5} - shift, -angle_deg, c);
      for (int ch = 0; ch < s.image.channels; ++ch) out.image.at(x, y, ch) = sample_bilinear(s.image, src.x, src.y, ch);
    }
  }
  out.gt = translate(rotate_shape(s.gt, angle_deg, c), shift);
  const Point2 bc = rotate_point({s.box.x + s.box.w / 2.0, s.box.y + s.box.h / 2.0}, angle_deg, c) + shift;
  out.box = {bc.x - s.box.w / 2.0, bc.y - s.box.h / 2.0, s.box.w, s.box.h};
  out.yaw_deg = s.yaw_deg;
  out.roll_deg = s.roll_deg + angle_deg;
  return out;
}

/// Random rotation in +-max_rot_deg and translation in +-max_trans_frac *
/// side. Transforms that push a landmark off the image are redrawn (10
/// tries) before the sample is passed through unchanged.
inline Sample augment(const Sample& s, double max_rot_deg, double max_trans_frac, std::uint64_t rng_seed) {
  if (max_rot_deg == 0.0 && max_trans_frac == 0.0) return s;
  Rng rng(rng_seed);
  const double side = s.image.width;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double angle = rng.uniform(-max_rot_deg, max_rot_deg);
    const Point2 shift{rng.uniform(-1.0, 1.0) * max_trans_frac * side, rng.uniform(-1.0, 1.0) * max_trans_frac * side};
    const LandmarkShape moved = translate(rotate_shape(s.gt, angle, {side / 2.0, side / 2.0}), shift);
    if (detail::inside(moved, side)) return warp_sample(s, angle, shift);
  }
  return s;
}

// ---- dataset materialization ----------------------------------------------

/// Writes `<dir>/images/NNNNNN.fgrid`, `<dir>/landmarks.csv` and
/// `<dir>/manifest.json`.
inline void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDistribution& dist,
                                    std::uint64_t seed, std::size_t count) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  std::vector<AnnotationRecord> records;
  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["spec"] = to_json(dist);
  manifest["count"] = count;
  auto& entries = manifest["samples"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = synth_dataset_sample(dist, seed, i);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.fgrid", i);
    const std::string rel = std::string("images/") + name;
    write_fgrid((dir / rel).string(), s.image);
    records.push_back({rel, s.box, std::vector<Point2>(s.gt.begin(), s.gt.end())});
    nlohmann::ordered_json e;
    e["image"] = rel;
    e["yaw_deg"] = s.yaw_deg.value_or(0.0);
    e["roll_deg"] = s.roll_deg;
    entries.push_back(std::move(e));
  }
  detail::write_file((dir / "landmarks.csv").string(), serialize_annotations(records));
  detail::write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

/// Reads a directory produced by write_synthetic_dataset.
inline std::vector<Sample> read_synthetic_dataset(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(detail::read_file((dir / "manifest.json").string()));
  const auto records = load_annotations((dir / "landmarks.csv").string(), kFaceLandmarks);
  const auto& entries = manifest.at("samples");
  if (entries.size() != records.size()) detail::fail(ErrorKind::CountMismatch, "manifest and landmarks.csv disagree");
  std::vector<Sample> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Sample s;
    s.image = read_image((dir / records[i].image_path).string());
    s.gt = LandmarkShape(records[i].landmarks, Frame::pixel(s.image.width, s.image.height));
    s.box = records[i].box;
    s.yaw_deg = entries[i].at("yaw_deg").get<double>();
    s.roll_deg = entries[i].at("roll_deg").get<double>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace anchorface
