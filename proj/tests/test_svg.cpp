#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace anchorface;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Svg, LandmarkOverlayHasOneCirclePerPoint) {
  const auto s = synth_dataset_sample({}, 1, 0);
  const auto svg = svg_landmarks(s.image, s.gt);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "<circle"), kFaceLandmarks);
  EXPECT_EQ(count(svg, "<rect"), 64u * 64u);
  EXPECT_EQ(count(svg, "<path"), 0u);
  const auto with_gt = svg_landmarks(s.image, s.gt, s.gt);
  EXPECT_EQ(count(with_gt, "<path"), kFaceLandmarks);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Svg, CedHasOneCurvePerMethodAndEscapesNames) {
  const std::vector<NamedErrors> m{{"a<b", {0.01, 0.02, 0.2}}, {"c&d", {0.05}}};
  const auto svg = svg_ced(m);
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_NE(svg.find("c&amp;d"), std::string::npos);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
}

TEST(Svg, YawBinsDrawsABarPerBinAndMethod) {
  const std::vector<double> yaw{0, 40, 70, 95}, err{0.1, 0.2, 0.3, 0.4};
  const std::vector<NamedReport> m{{"x", make_report(err, yaw)}, {"y", make_report(err, yaw)}};
  const auto svg = svg_yaw_bins(m);
  EXPECT_EQ(count(svg, "<rect"), 1u + 4u * 2u);
  for (auto b : kYawBins) EXPECT_NE(svg.find(">" + to_string(b) + "<"), std::string::npos);
}

TEST(Svg, OutputIsDeterministic) {
  const std::vector<NamedErrors> m{{"a", {0.01, 0.02}}};
  EXPECT_EQ(svg_ced(m), svg_ced(m));
}
