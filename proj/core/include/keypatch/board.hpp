// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "keypatch/geometry.hpp"
#include "keypatch/image.hpp"
#include "keypatch/model.hpp"
#include "keypatch/synth.hpp"

namespace keypatch::eval {

// Pinhole camera looking down +Z, principal point at the image center.
struct CameraModel {
  int width = 1624;
  int height = 1240;
  double focal_px = 890.0;  // 4 mm lens, 4.5 um pixels

  void validate() const;
};

// Six identical patches at the vertices of a regular hexagon, drawn on a
// white unit-square board (board coordinates in [0, 1]^2).
struct HexBoardSpec {
  int type_id = 0;
  double circumradius = 0.3;  // equals the side length
  double patch_radius = 0.08;
  double vertex_phase = 0.0;  // radians
  int black_level = 30;
  int white_level = 225;

  std::array<geometry::Point, 6> vertices() const;
  void validate() const;
};

struct BoardPose {
  double area_fraction = 0.16;  // projected board area / image area
  double pitch_deg = 0.0;       // tilt about the board's horizontal axis
  double roll_deg = 0.0;        // in-plane rotation
  double center_x = 0.5;        // board center in normalized image coordinates
  double center_y = 0.5;
};

// Maps board coordinates to image pixels. The viewing distance is solved by
// bisection so the projected board quad has the requested area.
geometry::Homography board_homography(const CameraModel& camera, const BoardPose& pose);

// Board corners in image pixels for the given homography.
std::array<geometry::Point, 4> board_corners(const geometry::Homography& h);

struct BoardScene {
  Image image;  // RGB
  geometry::Homography board_to_image;
  std::vector<synth::KeypointInstance> keypoints;  // the six vertices
};

// Renders the board over `background` (RGB, camera-sized). Throws
// constraint-infeasible if the board leaves the image or a patch would be
// smaller than the minimum raster radius.
BoardScene render_board_scene(const HexBoardSpec& board, const CameraModel& camera, const BoardPose& pose,
                              const Image& background);

// Picks roll and image position at random such that the board fits.
BoardPose random_board_pose(Rng& rng, const CameraModel& camera, double area_fraction, double pitch_deg);

// Projected vertices with per-vertex radius, as ground-truth instances.
std::vector<synth::KeypointInstance> board_keypoints(const HexBoardSpec& board, const geometry::Homography& h);

struct HexagonVerdicts {
  std::array<int, 6> vertex_hit{-1, -1, -1, -1, -1, -1};  // detection index per vertex, -1 = miss
  std::vector<int> false_positives;                       // detection indices
  int hits = 0;
  int misses = 0;
  int id_correct = 0;  // hits whose type matches the board
};

HexagonVerdicts hexagon_consistency_check(std::span<const model::Detection> detections, const HexBoardSpec& board,
                                          const geometry::Homography& h);

}  // namespace keypatch::eval
