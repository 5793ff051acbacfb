#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

using namespace anchorface;

TEST(Synth, SampleIsDeterministicPerSeedAndIndex) {
  const SyntheticDistribution d;
  EXPECT_EQ(synth_dataset_sample(d, 4, 17), synth_dataset_sample(d, 4, 17));
  EXPECT_NE(synth_dataset_sample(d, 4, 17).gt, synth_dataset_sample(d, 5, 17).gt);
  const auto all = synth_dataset(d, 4, 20);
  EXPECT_EQ(all[17], synth_dataset_sample(d, 4, 17));
}

TEST(Synth, LandmarksStayInsideTheImage) {
  const auto data = synth_dataset({}, 8, 300);
  for (const auto& s : data) {
    ASSERT_EQ(s.gt.size(), kFaceLandmarks);
    EXPECT_EQ(s.gt.frame(), Frame::pixel(64, 64));
    for (const auto& p : s.gt) {
      EXPECT_GE(p.x, 0.0);
      EXPECT_LT(p.x, 64.0);
      EXPECT_GE(p.y, 0.0);
      EXPECT_LT(p.y, 64.0);
    }
    ASSERT_TRUE(s.yaw_deg.has_value());
    EXPECT_LE(std::abs(*s.yaw_deg), 90.0);
  }
}

TEST(Synth, BrightestPixelSitsOnALandmark) {
  SyntheticSpec spec;
  spec.yaw_param = 0.3;
  spec.roll_deg = 20;
  const auto s = synth_sample(spec, 1);
  const auto it = std::max_element(s.image.data.begin(), s.image.data.end());
  const int idx = static_cast<int>(it - s.image.data.begin());
  const Point2 px{idx % 64 + 0.5, idx / 64 + 0.5};
  double best = 1e9;
  for (const auto& p : s.gt) best = std::min(best, distance(p, px));
  EXPECT_LT(best, 1.0);
}

TEST(Synth, HeavyYawCoversTheHeavyBin) {
  const auto data = synth_dataset({}, 9, 400);
  std::size_t heavy = 0;
  for (const auto& s : data) heavy += classify_yaw_bin(*s.yaw_deg) == YawBin::Heavy;
  EXPECT_GT(heavy, 40u);
  EXPECT_LT(heavy, 100u);
}

TEST(Synth, HalfTurnMatchesRotatedGroundTruth) {
  SyntheticSpec a, b;
  a.yaw_param = b.yaw_param = 0.4;
  b.roll_deg = 180.0;
  const auto s0 = synth_sample(a, 1), s1 = synth_sample(b, 1);
  const auto expect = rotate_shape(s0.gt, 180.0);
  for (std::size_t j = 0; j < expect.size(); ++j) EXPECT_NEAR(distance(expect[j], s1.gt[j]), 0.0, 1e-9);
}

TEST(Synth, RejectsInvalidSpecs) {
  SyntheticSpec s;
  s.landmark_count = 5;
  EXPECT_THROW(synth_sample(s, 0), Error);
  s = {};
  s.scale = 0;
  EXPECT_THROW(synth_sample(s, 0), Error);
  s = {};
  s.scale = 3.0;
  try {
    synth_sample(s, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfBounds);
  }
}

TEST(Prototypes, NegativeMirrorsPositive) {
  const auto pos = face_prototype(FacePrototype::Positive), neg = face_prototype(FacePrototype::Negative);
  for (std::size_t j = 0; j < kFaceLandmarks; ++j) {
    EXPECT_DOUBLE_EQ(neg[j].x, -pos[kFaceMirror[j]].x);
    EXPECT_DOUBLE_EQ(neg[j].y, pos[kFaceMirror[j]].y);
  }
  EXPECT_NEAR(yaw_indicator(pos, kFaceEyes), -yaw_indicator(neg, kFaceEyes), 1e-12);
  EXPECT_NEAR(yaw_indicator(face_prototype(FacePrototype::Frontal), kFaceEyes), 0.0, 1e-12);
}

TEST(Annotations, CsvRoundTrip) {
  const std::vector<AnnotationRecord> recs{{"a.pgm", {1, 2, 30, 40}, {{1.5, 2.25}, {0.1, 1e-7}}},
                                           {"dir/b.fgrid", {0, 0, 10, 10}, {{3, 4}, {5, 6}}}};
  const auto text = "path,x,y,w,h,x0,y0,x1,y1\n" + serialize_annotations(recs);
  EXPECT_EQ(parse_annotations(text, 2), recs);
}

TEST(Annotations, ErrorsCarryKinds) {
  auto kind_of = [](const std::string& text, std::size_t L) {
    try {
      parse_annotations(text, L);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::State;
  };
  EXPECT_EQ(kind_of("a,0,0,1,1,2,3\n", 2), ErrorKind::CountMismatch);
  EXPECT_EQ(kind_of("a,0,0,1,1,2\n", 1), ErrorKind::CountMismatch);
  EXPECT_EQ(kind_of("a,0,0,0,1,2,3\n", 1), ErrorKind::DegenerateBox);
  EXPECT_EQ(kind_of("a,0,0,1,1,x,3\n", 1), ErrorKind::Parse);
  EXPECT_EQ(kind_of("a,0,0\n", 1), ErrorKind::Parse);
  EXPECT_THROW(serialize_annotation({"a,b", {0, 0, 1, 1}, {}}), Error);
}

TEST(CropResize, MapsLandmarksAndPixels) {
  Image img(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) img.at(x, y) = static_cast<float>(x);
  }
  const AnnotationRecord r{"", {2, 2, 4, 4}, {{2, 2}, {6, 6}, {4, 3}}};
  const auto res = crop_resize(r, img, 4);
  EXPECT_FALSE(res.clamped);
  EXPECT_EQ(res.sample.gt[0], (Point2{0, 0}));
  EXPECT_EQ(res.sample.gt[1], (Point2{4, 4}));
  EXPECT_EQ(res.sample.gt[2], (Point2{2, 1}));
  EXPECT_FLOAT_EQ(res.sample.image.at(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(res.sample.image.at(3, 3), 5.0f);
  const auto up = crop_resize(r, img, 8);
  EXPECT_EQ(up.sample.gt[1], (Point2{8, 8}));
}

TEST(CropResize, ClampsOrRejectsBoxes) {
  const Image img(8, 8);
  EXPECT_TRUE(crop_resize({"", {-2, -2, 6, 6}, {}}, img, 4).clamped);
  EXPECT_THROW(crop_resize({"", {20, 20, 4, 4}, {}}, img, 4), Error);
  EXPECT_THROW(crop_resize({"", {0, 0, 0, 4}, {}}, img, 4), Error);
}

TEST(WarpProperty, LandmarksFollowTheImage) {
  SyntheticSpec spec;
  spec.scale = 0.5;
  const auto s = synth_sample(spec, 0);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const double angle = rng.uniform(-40, 40);
    const Point2 shift{rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const auto w = warp_sample(s, angle, shift);
    EXPECT_NEAR(w.roll_deg, angle, 1e-12);
    // Each eye landmark is a local intensity peak, so the warped image must
    // still be bright where the warped landmark lands.
    for (std::size_t j : {6u, 8u, 9u, 11u}) {
      const double before = sample_bilinear(s.image, s.gt[j].x, s.gt[j].y);
      const double after = sample_bilinear(w.image, w.gt[j].x, w.gt[j].y);
      EXPECT_NEAR(after, before, 0.15);
    }
  }
}

TEST(Augment, IsDeterministicAndIdentityWhenDisabled) {
  const auto s = synth_dataset_sample({}, 1, 0);
  EXPECT_EQ(augment(s, 0.0, 0.0, 5), s);
  EXPECT_EQ(augment(s, 30.0, 0.05, 5), augment(s, 30.0, 0.05, 5));
  EXPECT_NE(augment(s, 30.0, 0.05, 5).gt, augment(s, 30.0, 0.05, 6).gt);
}

TEST(Images, FgridRoundTripAndPgm) {
  Image img(3, 2, 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = 0.1f * static_cast<float>(i);
  EXPECT_EQ(decode_image(encode_fgrid(img)), img);
  EXPECT_THROW(decode_fgrid(encode_fgrid(img) + "x"), Error);
  const auto pgm = decode_image("P2\n# c\n2 1\n255\n0 255\n");
  EXPECT_FLOAT_EQ(pgm.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(pgm.at(1, 0), 1.0f);
  EXPECT_THROW(decode_image("P9"), Error);
}

TEST(Images, BilinearSamplesPixelCentres) {
  Image img(2, 1);
  img.at(0, 0) = 0.0f;
  img.at(1, 0) = 1.0f;
  EXPECT_FLOAT_EQ(sample_bilinear(img, 0.5, 0.5), 0.0f);
  EXPECT_FLOAT_EQ(sample_bilinear(img, 1.0, 0.5), 0.5f);
  EXPECT_FLOAT_EQ(sample_bilinear(img, 1.5, 0.5), 1.0f);
}

TEST(DatasetFiles, WriteThenReadIsLossless) {
  const auto dir = testutil::temp_dir("dataset");
  const SyntheticDistribution d;
  write_synthetic_dataset(dir, d, 3, 5);
  const auto back = read_synthetic_dataset(dir);
  const auto want = synth_dataset(d, 3, 5);
  ASSERT_EQ(back.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(back[i].image, want[i].image);
    EXPECT_EQ(back[i].gt, want[i].gt);
    EXPECT_EQ(back[i].box, want[i].box);
    EXPECT_EQ(back[i].yaw_deg, want[i].yaw_deg);
  }
  std::filesystem::remove_all(dir);
}
