#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchorface/error.hpp"

namespace anchorface {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend Point2 operator*(Point2 p, double s) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

/// Coordinate frame of a shape: the canonical unit square, or pixels of an
/// image with the given size. Pixel (i, j) covers [i, i+1) x [j, j+1).
struct Frame {
  enum class Kind { Normalized, Pixel };
  Kind kind = Kind::Normalized;
  double width = 1.0;
  double height = 1.0;

  static Frame normalized() { return {}; }
  static Frame pixel(double width, double height) { return {Kind::Pixel, width, height}; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline std::string describe(const Frame& f) {
  if (f.kind == Frame::Kind::Normalized) return "normalized";
  return "pixel(" + std::to_string(f.width) + "x" + std::to_string(f.height) + ")";
}

/// Ordered, fixed-length list of 2D landmarks. The count is set at
/// construction; coordinates may be edited in place but must stay finite.
class LandmarkShape {
 public:
  LandmarkShape() = default;

  LandmarkShape(std::vector<Point2> points, Frame frame = Frame::normalized())
      : points_(std::move(points)), frame_(frame) {
    for (const auto& p : points_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        detail::fail(ErrorKind::InvalidInput, "landmark shape has non-finite coordinate");
      }
    }
  }

  LandmarkShape(std::initializer_list<Point2> points, Frame frame = Frame::normalized())
      : LandmarkShape(std::vector<Point2>(points), frame) {}

  /// L points at the origin.
  static LandmarkShape zeros(std::size_t count, Frame frame = Frame::normalized()) {
    return LandmarkShape(std::vector<Point2>(count), frame);
  }

  std::size_t size() const noexcept { return points_.size(); }
  const Frame& frame() const noexcept { return frame_; }

  std::span<const Point2> points() const noexcept { return points_; }
  std::span<Point2> points() noexcept { return points_; }

  const Point2& operator[](std::size_t i) const { return points_[i]; }
  Point2& operator[](std::size_t i) { return points_[i]; }

  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  /// Flattened (x0, y0, x1, y1, ...).
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(2 * points_.size());
    for (const auto& p : points_) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
    return out;
  }

  bool all_finite() const {
    return std::all_of(points_.begin(), points_.end(),
                       [](const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); });
  }

  friend bool operator==(const LandmarkShape&, const LandmarkShape&) = default;

 private:
  std::vector<Point2> points_;
  Frame frame_;
};

struct EyeCornerIndex {
  std::size_t left_inner = 0;
  std::size_t left_outer = 0;
  std::size_t right_inner = 0;
  std::size_t right_outer = 0;

  void validate(std::size_t landmark_count) const {
    const std::size_t idx[4] = {left_inner, left_outer, right_inner, right_outer};
    for (int i = 0; i < 4; ++i) {
      if (idx[i] >= landmark_count) {
        detail::fail(ErrorKind::Index, "eye corner index " + std::to_string(idx[i]) +
                                           " out of range for " + std::to_string(landmark_count) +
                                           " landmarks");
      }
      for (int j = i + 1; j < 4; ++j) {
        if (idx[i] == idx[j]) detail::fail(ErrorKind::InvalidInput, "eye corner indices must be distinct");
      }
    }
  }
};

enum class YawBucket { Negative, Frontal, Positive };

inline std::string_view to_string(YawBucket b) {
  switch (b) {
    case YawBucket::Negative: return "Negative";
    case YawBucket::Frontal: return "Frontal";
    case YawBucket::Positive: return "Positive";
  }
  return "?";
}

inline Point2 centroid(const LandmarkShape& shape) {
  if (shape.size() == 0) detail::fail(ErrorKind::EmptyInput, "centroid of empty shape");
  Point2 c;
  for (const auto& p : shape) c = c + p;
  return (1.0 / static_cast<double>(shape.size())) * c;
}

inline LandmarkShape translate(const LandmarkShape& shape, Point2 delta) {
  std::vector<Point2> pts(shape.begin(), shape.end());
  for (auto& p : pts) p = p + delta;
  return LandmarkShape(std::move(pts), shape.frame());
}

/// Scales every point about `center`.
inline LandmarkShape scale_about(const LandmarkShape& shape, double factor, Point2 center) {
  std::vector<Point2> pts(shape.begin(), shape.end());
  for (auto& p : pts) p = center + factor * (p - center);
  return LandmarkShape(std::move(pts), shape.frame());
}

struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double diagonal() const { return std::hypot(w, h); }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox bounding_box(const LandmarkShape& shape) {
  if (shape.size() == 0) detail::fail(ErrorKind::EmptyInput, "bounding box of empty shape");
  double x0 = shape[0].x, x1 = shape[0].x, y0 = shape[0].y, y1 = shape[0].y;
  for (const auto& p : shape) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

inline Point2 rotate_point(Point2 p, double angle_deg, Point2 center) {
  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const Point2 d = p - center;
  return {center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y};
}

/// Rotates counter-clockwise (x towards y) by `angle_deg` about `center`.
inline LandmarkShape rotate_shape(const LandmarkShape& shape, double angle_deg, Point2 center) {
  if (!std::isfinite(angle_deg) || !std::isfinite(center.x) || !std::isfinite(center.y)) {
    detail::fail(ErrorKind::InvalidInput, "rotate_shape: non-finite angle or center");
  }
  if (!shape.all_finite()) detail::fail(ErrorKind::InvalidInput, "rotate_shape: non-finite shape");
  std::vector<Point2> pts;
  pts.reserve(shape.size());
  for (const auto& p : shape) pts.push_back(rotate_point(p, angle_deg, center));
  return LandmarkShape(std::move(pts), shape.frame());
}

/// Rotation about the shape's own centroid.
inline LandmarkShape rotate_shape(const LandmarkShape& shape, double angle_deg) {
  return rotate_shape(shape, angle_deg, centroid(shape));
}

inline LandmarkShape mean_shape(std::span<const LandmarkShape> shapes) {
  if (shapes.empty()) detail::fail(ErrorKind::EmptyInput, "mean_shape of empty list");
  const std::size_t count = shapes.front().size();
  const Frame frame = shapes.front().frame();
  std::vector<Point2> acc(count);
  for (const auto& s : shapes) {
    if (s.size() != count) {
      detail::fail(ErrorKind::ShapeMismatch, "mean_shape: landmark counts differ (" +
                                                 std::to_string(s.size()) + " vs " +
                                                 std::to_string(count) + ")");
    }
    if (!(s.frame() == frame)) detail::fail(ErrorKind::ShapeMismatch, "mean_shape: frames differ");
    for (std::size_t j = 0; j < count; ++j) acc[j] = acc[j] + s[j];
  }
  const double inv = 1.0 / static_cast<double>(shapes.size());
  for (auto& p : acc) p = inv * p;
  return LandmarkShape(std::move(acc), frame);
}

/// Eye-width ratio statistic: wl/wr - wr/wl. Positive when the left eye
/// appears wider than the right one.
inline double yaw_indicator(const LandmarkShape& shape, const EyeCornerIndex& eyes) {
  eyes.validate(shape.size());
  const double wl = distance(shape[eyes.left_inner], shape[eyes.left_outer]);
  const double wr = distance(shape[eyes.right_inner], shape[eyes.right_outer]);
  if (!(wl > 0.0) || !(wr > 0.0)) {
    detail::fail(ErrorKind::DegenerateEye, "eye corners coincide (left width " + std::to_string(wl) +
                                               ", right width " + std::to_string(wr) + ")");
  }
  return wl / wr - wr / wl;
}

/// Three-way split on r; |r| == gamma stays Frontal.
inline YawBucket classify_yaw(double r, double gamma) {
  if (r > gamma) return YawBucket::Positive;
  if (r < -gamma) return YawBucket::Negative;
  return YawBucket::Frontal;
}

inline std::vector<YawBucket> bucket_by_yaw(std::span<const LandmarkShape> shapes,
                                            const EyeCornerIndex& eyes, double gamma) {
  if (!(gamma > 0.0)) detail::fail(ErrorKind::InvalidInput, "bucket_by_yaw: gamma must be positive");
  std::vector<YawBucket> out;
  out.reserve(shapes.size());
  for (const auto& s : shapes) out.push_back(classify_yaw(yaw_indicator(s, eyes), gamma));
  return out;
}

}  // namespace anchorface
