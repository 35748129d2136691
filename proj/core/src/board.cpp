// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/board.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "keypatch/error.hpp"
#include "keypatch/matching.hpp"
#include "keypatch/patch_designs.hpp"

namespace keypatch::eval {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double quad_area(const std::array<geometry::Point, 4>& q) {
  // Corners are ordered (0,0), (1,0), (1,1), (0,1).
  double a = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& p = q[i];
    const auto& n = q[(i + 1) % 4];
    a += p.x * n.y - n.x * p.y;
  }
  return std::abs(a) / 2.0;
}

Eigen::Matrix3d extrinsic(const CameraModel& camera, const BoardPose& pose, double z) {
  const double p = pose.pitch_deg * kDeg, r = pose.roll_deg * kDeg;
  Eigen::Matrix3d rx, rz;
  rx << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
  rz << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
  const Eigen::Matrix3d rot = rz * rx;
  const double cx = (camera.width - 1) / 2.0, cy = (camera.height - 1) / 2.0;
  const double px = pose.center_x * (camera.width - 1), py = pose.center_y * (camera.height - 1);
  const Eigen::Vector3d center(z * (px - cx) / camera.focal_px, z * (py - cy) / camera.focal_px, z);
  // Board point (u, v) sits at rot * (u - 0.5, v - 0.5, 0) + center.
  const Eigen::Vector3d t = center - rot * Eigen::Vector3d(0.5, 0.5, 0.0);
  Eigen::Matrix3d ext;
  ext.col(0) = rot.col(0);
  ext.col(1) = rot.col(1);
  ext.col(2) = t;
  return ext;
}

geometry::Homography homography_at_depth(const CameraModel& camera, const BoardPose& pose, double z) {
  const double cx = (camera.width - 1) / 2.0, cy = (camera.height - 1) / 2.0;
  Eigen::Matrix3d k;
  k << camera.focal_px, 0, cx, 0, camera.focal_px, cy, 0, 0, 1;
  return geometry::Homography(k * extrinsic(camera, pose, z));
}

bool in_front(const CameraModel& camera, const BoardPose& pose, double z) {
  const Eigen::Matrix3d ext = extrinsic(camera, pose, z);
  for (const auto& [u, v] : {std::pair{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}) {
    if ((ext * Eigen::Vector3d(u, v, 1.0)).z() <= 1e-9) return false;
  }
  return true;
}

bool fits(const std::array<geometry::Point, 4>& q, const CameraModel& camera) {
  for (const auto& p : q) {
    if (p.x < 0.0 || p.y < 0.0 || p.x > camera.width - 1.0 || p.y > camera.height - 1.0) return false;
  }
  return true;
}

}  // namespace

void CameraModel::validate() const {
  require(width > 0 && height > 0 && focal_px > 0.0, ErrorCode::kInvalidArgument, "invalid camera model");
}

std::array<geometry::Point, 6> HexBoardSpec::vertices() const {
  std::array<geometry::Point, 6> v;
  for (int k = 0; k < 6; ++k) {
    const double a = vertex_phase + k * std::numbers::pi / 3.0;
    v[k] = {0.5 + circumradius * std::cos(a), 0.5 + circumradius * std::sin(a)};
  }
  return v;
}

void HexBoardSpec::validate() const {
  require(type_id >= 0 && type_id < patch::kNumTypes, ErrorCode::kInvalidArgument, "board type_id out of range");
  require(patch_radius > 0.0 && circumradius > 0.0 && circumradius + patch_radius <= 0.5,
          ErrorCode::kInvalidArgument, "hexagon does not fit on the board");
  require(2.0 * patch_radius < circumradius, ErrorCode::kInvalidArgument, "board patches overlap");
  require(black_level >= 0 && black_level <= patch::kBlackMax && white_level >= patch::kWhiteMin &&
              white_level <= 255,
          ErrorCode::kInvalidArgument, "board intensity levels out of range");
}

std::array<geometry::Point, 4> board_corners(const geometry::Homography& h) {
  return {geometry::apply_homography(h, {0, 0}), geometry::apply_homography(h, {1, 0}),
          geometry::apply_homography(h, {1, 1}), geometry::apply_homography(h, {0, 1})};
}

geometry::Homography board_homography(const CameraModel& camera, const BoardPose& pose) {
  camera.validate();
  require(pose.area_fraction > 0.0 && pose.area_fraction < 1.0, ErrorCode::kInvalidArgument,
          "area_fraction must lie in (0, 1)");
  require(pose.pitch_deg >= 0.0 && pose.pitch_deg < 85.0, ErrorCode::kInvalidArgument, "pitch out of range");
  const double target = pose.area_fraction * camera.width * camera.height;
  // Projected area falls monotonically with depth.
  double lo = 1e-3, hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    double area = 0.0;
    try {
      // A corner at or behind the camera counts as too close.
      area = in_front(camera, pose, mid) ? quad_area(board_corners(homography_at_depth(camera, pose, mid)))
                                         : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      area = std::numeric_limits<double>::infinity();
    }
    if (area > target) lo = mid; else hi = mid;
  }
  return homography_at_depth(camera, pose, hi);
}

std::vector<synth::KeypointInstance> board_keypoints(const HexBoardSpec& board, const geometry::Homography& h) {
  std::vector<synth::KeypointInstance> out;
  for (const auto& v : board.vertices()) {
    const geometry::Ellipse e = geometry::warp_circle(h, v, board.patch_radius);
    synth::KeypointInstance k;
    const geometry::Point p = geometry::apply_homography(h, v);
    k.x = p.x;
    k.y = p.y;
    k.type_id = board.type_id;
    k.radius_px = e.geometric_mean_radius();
    k.homography = h;
    k.black_level = board.black_level;
    k.white_level = board.white_level;
    out.push_back(k);
  }
  return out;
}

BoardPose random_board_pose(Rng& rng, const CameraModel& camera, double area_fraction, double pitch_deg) {
  BoardPose pose;
  pose.area_fraction = area_fraction;
  pose.pitch_deg = pitch_deg;
  pose.roll_deg = uniform(rng, 0.0, 360.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    pose.center_x = uniform(rng, 0.05, 0.95);
    pose.center_y = uniform(rng, 0.05, 0.95);
    if (fits(board_corners(board_homography(camera, pose)), camera)) return pose;
  }
  pose.center_x = pose.center_y = 0.5;
  for (int attempt = 0; attempt < 36; ++attempt) {
    if (fits(board_corners(board_homography(camera, pose)), camera)) return pose;
    pose.roll_deg = std::fmod(pose.roll_deg + 10.0, 360.0);
  }
  fail(ErrorCode::kConstraintInfeasible, "board at area fraction " + std::to_string(area_fraction) + " and pitch " +
                                             std::to_string(pitch_deg) + " does not fit the image");
}

BoardScene render_board_scene(const HexBoardSpec& board, const CameraModel& camera, const BoardPose& pose,
                              const Image& background) {
  board.validate();
  require(background.width() == camera.width && background.height() == camera.height,
          ErrorCode::kInvalidArgument, "background size must match the camera");
  const geometry::Homography h = board_homography(camera, pose);
  const auto corners = board_corners(h);
  if (!fits(corners, camera)) fail(ErrorCode::kConstraintInfeasible, "board leaves the image");

  // Board raster at roughly one board pixel per image pixel along its
  // longest projected edge.
  double edge = 0.0;
  for (int i = 0; i < 4; ++i) {
    edge = std::max(edge, std::hypot(corners[i].x - corners[(i + 1) % 4].x, corners[i].y - corners[(i + 1) % 4].y));
  }
  const int side = std::max(static_cast<int>(std::ceil(edge)) + 1, 16);
  const double px_per_unit = side - 1.0;
  const int radius_px = static_cast<int>(std::lround(board.patch_radius * px_per_unit));
  if (radius_px < patch::kMinRadiusPx) {
    fail(ErrorCode::kConstraintInfeasible, "board patches would be rendered below the minimum radius");
  }
  Image raster_board(side, side, 1, static_cast<std::uint8_t>(board.white_level));
  const auto& spec = patch::canonical_designs()[board.type_id];
  // Scale the patch so its rendered radius maps to patch_radius exactly.
  const patch::PatchRaster raster =
      patch::render_patch(spec, radius_px, board.black_level, board.white_level, 0.0);
  const double s = board.patch_radius * px_per_unit / radius_px;
  for (const auto& v : board.vertices()) {
    const double cx = v.x * px_per_unit, cy = v.y * px_per_unit;
    Eigen::Matrix3d m;
    m << s, 0, cx - s * raster.center_x, 0, s, cy - s * raster.center_y, 0, 0, 1;
    geometry::warp_image_onto(geometry::Homography(m), raster.pixels, raster_board);
  }

  BoardScene scene;
  scene.image = background;
  Eigen::Matrix3d to_unit = Eigen::Matrix3d::Identity();
  to_unit(0, 0) = to_unit(1, 1) = 1.0 / px_per_unit;
  geometry::warp_image_onto(h * geometry::Homography(to_unit), raster_board, scene.image);
  scene.board_to_image = h;
  scene.keypoints = board_keypoints(board, h);
  return scene;
}

HexagonVerdicts hexagon_consistency_check(std::span<const model::Detection> detections, const HexBoardSpec& board,
                                          const geometry::Homography& h) {
  const std::vector<synth::KeypointInstance> gts = board_keypoints(board, h);
  const MatchResult m = match_detections(detections, gts);
  HexagonVerdicts v;
  for (const MatchPair& p : m.pairs) {
    v.vertex_hit[p.ground_truth] = p.prediction;
    ++v.hits;
    v.id_correct += detections[p.prediction].type_id == board.type_id;
  }
  v.misses = 6 - v.hits;
  v.false_positives = m.unmatched_predictions;
  return v;
}

}  // namespace keypatch::eval
