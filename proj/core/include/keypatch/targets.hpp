// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "keypatch/synth.hpp"

namespace keypatch::synth {

inline constexpr int kCell = 8;
inline constexpr int kDustbin = 64;
inline constexpr int kBackgroundId = 4;
inline constexpr int kIdClasses = 5;
inline constexpr int kDetectorClasses = 65;

// Per-cell class grid, row-major over (H/8) x (W/8) cells.
struct CellGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> classes;

  std::uint8_t at(int r, int c) const { return classes[static_cast<std::size_t>(r) * cols + c]; }
  bool operator==(const CellGrid&) const = default;
};

struct CellTargets {
  CellGrid detector;  // 0..63 within-cell pixel (row * 8 + col), 64 = dustbin
  CellGrid id;        // 0..3 patch type, 4 = background
};

// Index of the instance kept in each occupied cell (-1 if empty): largest
// radius_px wins, ties go to the lowest instance index.
std::vector<int> cell_survivors(const SampleAnnotation& ann);

CellGrid make_detector_target(const SampleAnnotation& ann);
CellGrid make_id_target(const SampleAnnotation& ann);
CellTargets make_targets(const SampleAnnotation& ann);

// 5-dim indicator of an id class.
std::vector<float> one_hot(int id_class);

}  // namespace keypatch::synth
