// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "keypatch/error.hpp"
#include "keypatch/random.hpp"
#include "keypatch/targets.hpp"

namespace kp = keypatch;
namespace sy = keypatch::synth;

namespace {

sy::KeypointInstance kpt(double x, double y, int type, double radius = 10.0) {
  sy::KeypointInstance k;
  k.x = x;
  k.y = y;
  k.type_id = type;
  k.radius_px = radius;
  return k;
}

sy::SampleAnnotation annotation(int w, int h, std::vector<sy::KeypointInstance> instances) {
  sy::SampleAnnotation a;
  a.width = w;
  a.height = h;
  a.instances = std::move(instances);
  return a;
}

sy::SampleAnnotation random_annotation(kp::Rng& rng) {
  const int w = 8 * kp::uniform_int(rng, 4, 40);
  const int h = 8 * kp::uniform_int(rng, 4, 30);
  std::vector<sy::KeypointInstance> ks;
  const int n = kp::uniform_int(rng, 0, 10);
  for (int i = 0; i < n; ++i) {
    ks.push_back(kpt(kp::uniform(rng, 0.0, w - 0.5), kp::uniform(rng, 0.0, h - 0.5), kp::uniform_int(rng, 0, 3),
                     kp::uniform(rng, 5.0, 40.0)));
  }
  // Force occasional shared cells.
  if (n >= 2 && kp::bernoulli(rng, 0.5)) {
    ks[1].x = std::floor(ks[0].x / 8) * 8 + 0.2;
    ks[1].y = std::floor(ks[0].y / 8) * 8 + 7.3;
  }
  return annotation(w, h, ks);
}

}  // namespace

TEST(Targets, WorkedExample) {
  const auto g = sy::make_detector_target(annotation(640, 480, {kpt(12.0, 20.0, 1)}));
  EXPECT_EQ(g.rows, 60);
  EXPECT_EQ(g.cols, 80);
  EXPECT_EQ(g.at(2, 1), 36);
  int dust = 0;
  for (auto c : g.classes) dust += c == sy::kDustbin;
  EXPECT_EQ(dust, 60 * 80 - 1);
}

TEST(Targets, EmptyAnnotation) {
  const auto t = sy::make_targets(annotation(640, 480, {}));
  for (auto c : t.detector.classes) EXPECT_EQ(c, sy::kDustbin);
  for (auto c : t.id.classes) EXPECT_EQ(c, sy::kBackgroundId);
}

TEST(Targets, IdTargetSingleKeypoint) {
  const auto g = sy::make_id_target(annotation(640, 480, {kpt(100.0, 100.0, 2)}));
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) EXPECT_EQ(g.at(r, c), (r == 12 && c == 12) ? 2 : 4);
  }
}

TEST(Targets, RoundsToNearestPixel) {
  // 15.6 rounds to 16, which belongs to the next cell.
  const auto g = sy::make_detector_target(annotation(64, 64, {kpt(15.6, 3.4, 0)}));
  EXPECT_EQ(g.at(0, 2), 3 * 8 + 0);
  EXPECT_EQ(g.at(0, 1), sy::kDustbin);
}

TEST(Targets, TieBreakLargestRadiusThenLowestIndex) {
  auto a = annotation(64, 64, {kpt(1, 1, 0, 8.0), kpt(6, 6, 1, 12.0), kpt(3, 3, 2, 12.0)});
  auto t = sy::make_targets(a);
  EXPECT_EQ(t.detector.at(0, 0), 6 * 8 + 6);
  EXPECT_EQ(t.id.at(0, 0), 1);
  EXPECT_EQ(sy::cell_survivors(a)[0], 1);
  // Repeated calls agree.
  EXPECT_EQ(sy::make_targets(a).detector, t.detector);
}

TEST(Targets, BruteForceAgreementOverRandomAnnotations) {
  kp::Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_annotation(rng);
    const auto t = sy::make_targets(a);
    const int cols = a.width / 8, rows = a.height / 8;
    ASSERT_EQ(t.detector.rows, rows);
    ASSERT_EQ(t.detector.cols, cols);
    // Oracle: for each cell, scan all instances.
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        int best = -1;
        for (int i = 0; i < static_cast<int>(a.instances.size()); ++i) {
          const long px = std::lround(a.instances[i].x), py = std::lround(a.instances[i].y);
          if (px / 8 != c || py / 8 != r) continue;
          if (best < 0 || a.instances[i].radius_px > a.instances[best].radius_px) best = i;
        }
        const int det = t.detector.at(r, c), id = t.id.at(r, c);
        ASSERT_EQ(det == sy::kDustbin, id == sy::kBackgroundId);
        if (best < 0) {
          ASSERT_EQ(det, sy::kDustbin);
          continue;
        }
        const long px = std::lround(a.instances[best].x), py = std::lround(a.instances[best].y);
        ASSERT_EQ(det, (py % 8) * 8 + px % 8);
        ASSERT_EQ(id, a.instances[best].type_id);
        // Decoding the class recovers the keypoint within the rounding bound.
        const double dx = c * 8 + det % 8, dy = r * 8 + det / 8;
        ASSERT_LE(std::abs(dx - a.instances[best].x), 0.5 + 1e-12);
        ASSERT_LE(std::abs(dy - a.instances[best].y), 0.5 + 1e-12);
      }
    }
  }
}

TEST(Targets, OutOfImageKeypointRejected) {
  for (auto k : {kpt(63.6, 10, 0), kpt(-0.6, 10, 0), kpt(10, 64.0, 0)}) {
    try {
      sy::make_detector_target(annotation(64, 64, {k}));
      FAIL();
    } catch (const kp::Error& e) {
      EXPECT_EQ(e.code(), kp::ErrorCode::kAnnotationInconsistent);
    }
  }
}

TEST(Targets, NonMultipleOfEightRejected) {
  try {
    sy::make_id_target(annotation(65, 64, {}));
    FAIL();
  } catch (const kp::Error& e) {
    EXPECT_EQ(e.code(), kp::ErrorCode::kShapeError);
  }
}

TEST(Targets, OneHot) {
  EXPECT_EQ(sy::one_hot(4), (std::vector<float>{0, 0, 0, 0, 1}));
  EXPECT_EQ(sy::one_hot(0), (std::vector<float>{1, 0, 0, 0, 0}));
  EXPECT_THROW(sy::one_hot(5), kp::Error);
}
