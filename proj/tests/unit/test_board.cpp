// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "keypatch/board.hpp"
#include "keypatch/error.hpp"
#include "keypatch/experiments.hpp"
#include "test_support.hpp"

namespace kp = keypatch;
namespace ev = keypatch::eval;
namespace geo = keypatch::geometry;
namespace md = keypatch::model;

namespace {

double dist(geo::Point a, geo::Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double quad_area(const std::array<geo::Point, 4>& q) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += q[i].x * q[(i + 1) % 4].y - q[(i + 1) % 4].x * q[i].y;
  return std::abs(s) / 2.0;
}

ev::CameraModel small_camera() {
  ev::CameraModel c;
  c.width = 320;
  c.height = 240;
  c.focal_px = 250.0;
  return c;
}

std::string image_key(const kp::Image& img) {
  return std::string(reinterpret_cast<const char*>(img.data().data()), img.data().size());
}

md::Detection as_detection(const kp::synth::KeypointInstance& k) {
  md::Detection d;
  d.x = k.x;
  d.y = k.y;
  d.type_id = k.type_id;
  d.confidence = 1.0;
  return d;
}

}  // namespace

TEST(Board, HexagonSidesEqual) {
  const ev::HexBoardSpec b;
  const auto v = b.vertices();
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(dist(v[i], v[(i + 1) % 6]), b.circumradius, 1e-6);
  EXPECT_NO_THROW(b.validate());
  ev::HexBoardSpec bad;
  bad.patch_radius = 0.2;
  EXPECT_THROW(bad.validate(), kp::Error);
}

TEST(Board, AreaFractionSolved) {
  const ev::CameraModel cam;
  for (double pitch : {0.0, 30.0, 60.0}) {
    for (double frac : {0.005, 0.16, 0.32}) {
      ev::BoardPose pose;
      pose.area_fraction = frac;
      pose.pitch_deg = pitch;
      pose.roll_deg = 17.0;
      const auto h = ev::board_homography(cam, pose);
      const double a = quad_area(ev::board_corners(h)) / (cam.width * cam.height);
      EXPECT_NEAR(a, frac, 1e-6 * frac + 1e-9) << pitch << " " << frac;
    }
  }
}

TEST(Board, HalfPercentGivesSixteenPixelPatches) {
  const ev::CameraModel cam;
  ev::BoardPose pose;
  pose.area_fraction = 0.005;
  const auto ks = ev::board_keypoints(ev::HexBoardSpec{}, ev::board_homography(cam, pose));
  ASSERT_EQ(ks.size(), 6u);
  for (const auto& k : ks) EXPECT_NEAR(2.0 * k.radius_px, 16.0, 1.5);
}

TEST(Board, AffineSideLengths) {
  // Fronto-parallel view: the homography is a similarity, sides stay equal.
  const ev::CameraModel cam;
  ev::BoardPose pose;
  pose.roll_deg = 33.0;
  pose.center_x = 0.4;
  const auto h = ev::board_homography(cam, pose);
  const auto& m = h.matrix();
  ASSERT_NEAR(m(2, 0), 0.0, 1e-12);
  ASSERT_NEAR(m(2, 1), 0.0, 1e-12);
  const auto ks = ev::board_keypoints(ev::HexBoardSpec{}, h);
  const double side = std::hypot(ks[0].x - ks[1].x, ks[0].y - ks[1].y);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(std::hypot(ks[i].x - ks[(i + 1) % 6].x, ks[i].y - ks[(i + 1) % 6].y), side, 1e-6 * side);
  }
}

TEST(Board, ConsistencyCheck) {
  const ev::HexBoardSpec board;
  ev::BoardPose pose;
  const auto h = ev::board_homography(ev::CameraModel{}, pose);
  std::vector<md::Detection> dets;
  for (const auto& k : ev::board_keypoints(board, h)) dets.push_back(as_detection(k));
  auto v = ev::hexagon_consistency_check(dets, board, h);
  EXPECT_EQ(v.hits, 6);
  EXPECT_EQ(v.misses, 0);
  EXPECT_EQ(v.id_correct, 6);
  EXPECT_TRUE(v.false_positives.empty());

  const auto c = geo::apply_homography(h, {0.5, 0.5});
  md::Detection center;
  center.x = c.x;
  center.y = c.y;
  dets.push_back(center);
  v = ev::hexagon_consistency_check(dets, board, h);
  EXPECT_EQ(v.hits, 6);
  ASSERT_EQ(v.false_positives.size(), 1u);
  EXPECT_EQ(v.false_positives[0], 6);

  dets.erase(dets.begin() + 2);
  dets[0].type_id = 3;
  v = ev::hexagon_consistency_check(dets, board, h);
  EXPECT_EQ(v.hits, 5);
  EXPECT_EQ(v.misses, 1);
  EXPECT_EQ(v.vertex_hit[2], -1);
  EXPECT_EQ(v.id_correct, 4);
}

TEST(Board, InfeasiblePlacement) {
  ev::BoardPose pose;
  pose.area_fraction = 0.9;
  pose.pitch_deg = 0.0;
  const kp::Image bg(1624, 1240, 3, 100);
  try {
    ev::render_board_scene(ev::HexBoardSpec{}, ev::CameraModel{}, pose, bg);
    FAIL();
  } catch (const kp::Error& e) {
    EXPECT_EQ(e.code(), kp::ErrorCode::kConstraintInfeasible);
  }
  kp::Rng rng(1);
  EXPECT_THROW(ev::random_board_pose(rng, ev::CameraModel{}, 0.95, 0.0), kp::Error);
}

TEST(Board, RenderedScene) {
  const auto cam = small_camera();
  ev::BoardPose pose;
  pose.area_fraction = 0.2;
  const kp::Image bg(cam.width, cam.height, 3, 90);
  ev::HexBoardSpec board;
  board.type_id = 2;
  const auto scene = ev::render_board_scene(board, cam, pose, bg);
  EXPECT_EQ(scene.image.width(), 320);
  EXPECT_EQ(scene.image.height(), 240);
  ASSERT_EQ(scene.keypoints.size(), 6u);
  for (const auto& k : scene.keypoints) {
    EXPECT_EQ(k.type_id, 2);
    // Board interior is white paper, the patch center is black.
    EXPECT_LT(scene.image.at(static_cast<int>(std::lround(k.x)), static_cast<int>(std::lround(k.y))), 90);
  }
  const auto c = geo::apply_homography(scene.board_to_image, {0.5, 0.5});
  EXPECT_GT(scene.image.at(static_cast<int>(c.x), static_cast<int>(c.y)), 200);
}

TEST(Sweep, DefaultLevels) {
  EXPECT_EQ(ev::default_levels(ev::SweepAxis::kScale), (std::vector<double>{0.5, 1, 2, 4, 8, 16, 32}));
  EXPECT_EQ(ev::default_levels(ev::SweepAxis::kPitch), (std::vector<double>{0, 10, 20, 30, 40, 50, 60}));
  EXPECT_EQ(ev::default_levels(ev::SweepAxis::kBlur), (std::vector<double>{3, 7, 11, 15}));
  EXPECT_EQ(ev::default_levels(ev::SweepAxis::kDimming), (std::vector<double>{10, 20, 30, 40}));
  EXPECT_EQ(ev::default_levels(ev::SweepAxis::kNoise), (std::vector<double>{15, 30, 45, 60}));
  EXPECT_EQ(ev::SweepSpec::defaults(ev::SweepAxis::kBlur).images_per_level, 500);
  EXPECT_EQ(ev::axis_from_string("gaussian_noise"), ev::SweepAxis::kNoise);
  EXPECT_EQ(ev::axis_from_string(ev::to_string(ev::SweepAxis::kDimming)), ev::SweepAxis::kDimming);
  EXPECT_THROW(ev::axis_from_string("fog"), kp::Error);
}

TEST(Sweep, SpecJson) {
  auto s = ev::SweepSpec::defaults(ev::SweepAxis::kNoise);
  s.images_per_level = 7;
  const nlohmann::json j = s;
  EXPECT_EQ(nlohmann::json(j.get<ev::SweepSpec>()), j);
  const auto d = nlohmann::json::object().get<ev::SweepSpec>();
  EXPECT_EQ(d.axis, ev::SweepAxis::kScale);
  EXPECT_EQ(d.levels, ev::default_levels(ev::SweepAxis::kScale));
}

TEST(Sweep, ScenesShareEverythingButTheLevel) {
  auto spec = ev::SweepSpec::defaults(ev::SweepAxis::kBlur);
  spec.camera = small_camera();
  const auto a = ev::sweep_scene(spec, 3, 5), b = ev::sweep_scene(spec, 15, 5);
  EXPECT_EQ(a.board_to_image.row_major(), b.board_to_image.row_major());
  EXPECT_NE(a.image, b.image);
  EXPECT_EQ(a.keypoints[0].type_id, 1);
  EXPECT_EQ(ev::sweep_scene(spec, 3, 5).image, a.image);
}

TEST(Sweep, StubDetectorIsPerfect) {
  for (auto axis : {ev::SweepAxis::kPitch, ev::SweepAxis::kScale}) {
    auto spec = ev::SweepSpec::defaults(axis);
    spec.images_per_level = 3;
    spec.levels = axis == ev::SweepAxis::kPitch ? std::vector<double>{0, 40} : std::vector<double>{0.5, 16};
    std::map<std::string, std::vector<md::Detection>> truth;
    for (double level : spec.levels) {
      for (int i = 0; i < spec.images_per_level; ++i) {
        const auto scene = ev::sweep_scene(spec, level, i);
        auto& d = truth[image_key(scene.image)];
        for (const auto& k : scene.keypoints) d.push_back(as_detection(k));
      }
    }
    const ev::Detector stub = [&](const kp::Image& img) { return truth.at(image_key(img)); };
    const auto reports = ev::run_sweep(stub, spec);
    ASSERT_EQ(reports.size(), 2u);
    for (const auto& r : reports) {
      EXPECT_EQ(r.detection_score, 1.0);
      EXPECT_EQ(r.id_matching_score, 1.0);
      EXPECT_EQ(r.average_false_alarm, 0.0);
      EXPECT_EQ(r.n_images, 3u);
    }
    EXPECT_EQ(reports[1].condition.at("level").get<double>(), spec.levels[1]);
  }
}

TEST(Sweep, RandomNetworkCompletesAndCsvLayout) {
  auto spec = ev::SweepSpec::defaults(ev::SweepAxis::kNoise);
  spec.camera = small_camera();
  spec.images_per_level = 2;
  md::SuperPointNet net(kp::testing::tiny_config(), 1);
  const auto reports = ev::run_sweep(ev::model_detector(net), spec);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    EXPECT_GE(r.detection_score, 0.0);
    EXPECT_LE(r.detection_score, 1.0);
  }
  const std::string csv = ev::sweep_csv(spec, reports);
  std::istringstream in(csv);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 4);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
  }
  EXPECT_EQ(rows, 3);
}

TEST(Validation, ModelDetectorPadsOddSizes) {
  md::SuperPointNet net(kp::testing::tiny_config(), 2);
  const kp::Image img(61, 45, 3, 128);
  for (const auto& d : ev::model_detector(net)(img)) {
    EXPECT_LT(d.x, 61.0);
    EXPECT_LT(d.y, 45.0);
  }
}
