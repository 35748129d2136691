// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/targets.hpp"

#include <cmath>
#include <string>

#include "keypatch/error.hpp"

namespace keypatch::synth {

namespace {

struct PixelIndex {
  int x;
  int y;
};

PixelIndex rounded_pixel(const SampleAnnotation& ann, const KeypointInstance& k) {
  const long x = std::lround(k.x);
  const long y = std::lround(k.y);
  if (x < 0 || y < 0 || x >= ann.width || y >= ann.height) {
    fail(ErrorCode::kAnnotationInconsistent, "keypoint (" + std::to_string(k.x) + ", " + std::to_string(k.y) +
                                                 ") rounds outside the " + std::to_string(ann.width) + "x" +
                                                 std::to_string(ann.height) + " image");
  }
  return {static_cast<int>(x), static_cast<int>(y)};
}

void check_dims(const SampleAnnotation& ann) {
  if (ann.width <= 0 || ann.height <= 0 || ann.width % kCell != 0 || ann.height % kCell != 0) {
    fail(ErrorCode::kShapeError,
         "image size " + std::to_string(ann.width) + "x" + std::to_string(ann.height) + " is not divisible by 8");
  }
}

}  // namespace

std::vector<int> cell_survivors(const SampleAnnotation& ann) {
  check_dims(ann);
  const int cols = ann.width / kCell;
  const int rows = ann.height / kCell;
  std::vector<int> owner(static_cast<std::size_t>(rows) * cols, -1);
  for (std::size_t i = 0; i < ann.instances.size(); ++i) {
    const KeypointInstance& k = ann.instances[i];
    PixelIndex p = rounded_pixel(ann, k);
    int& slot = owner[static_cast<std::size_t>(p.y / kCell) * cols + p.x / kCell];
    if (slot < 0 || k.radius_px > ann.instances[slot].radius_px) slot = static_cast<int>(i);
  }
  return owner;
}

CellGrid make_detector_target(const SampleAnnotation& ann) {
  std::vector<int> owner = cell_survivors(ann);
  CellGrid g{ann.height / kCell, ann.width / kCell, std::vector<std::uint8_t>(owner.size(), kDustbin)};
  for (std::size_t c = 0; c < owner.size(); ++c) {
    if (owner[c] < 0) continue;
    PixelIndex p = rounded_pixel(ann, ann.instances[owner[c]]);
    g.classes[c] = static_cast<std::uint8_t>((p.y % kCell) * kCell + (p.x % kCell));
  }
  return g;
}

CellGrid make_id_target(const SampleAnnotation& ann) {
  std::vector<int> owner = cell_survivors(ann);
  CellGrid g{ann.height / kCell, ann.width / kCell, std::vector<std::uint8_t>(owner.size(), kBackgroundId)};
  for (std::size_t c = 0; c < owner.size(); ++c) {
    if (owner[c] >= 0) g.classes[c] = static_cast<std::uint8_t>(ann.instances[owner[c]].type_id);
  }
  return g;
}

CellTargets make_targets(const SampleAnnotation& ann) { return {make_detector_target(ann), make_id_target(ann)}; }

std::vector<float> one_hot(int id_class) {
  require(id_class >= 0 && id_class < kIdClasses, ErrorCode::kInvalidArgument, "id class out of range");
  std::vector<float> v(kIdClasses, 0.0f);
  v[id_class] = 1.0f;
  return v;
}

}  // namespace keypatch::synth
