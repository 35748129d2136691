// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keypatch/image.hpp"

namespace keypatch::patch {

inline constexpr int kNumTypes = 4;
inline constexpr int kMinRadiusPx = 5;
inline constexpr int kBlackMax = 120;
inline constexpr int kWhiteMin = 180;
inline constexpr int kDesignVersion = 1;

enum class Color { kBlack, kWhite };

// Annular sector of the unit disk. Angles are measured in image coordinates
// (x right, y down) so a positive angle turns from +x towards +y.
struct RingElement {
  double inner_fraction = 0.0;
  double outer_fraction = 1.0;
  double start_angle = 0.0;
  double end_angle = 0.0;
  Color color = Color::kBlack;

  bool full_ring() const;
  bool contains(double radius_fraction, double angle) const;
};

struct PatchSpec {
  int type_id = 0;
  std::vector<RingElement> rings;
};

// The four designs, ordered by type_id. Each is a black/white arrangement
// of semi-circular sectors around a full innermost disk whose center is
// the keypoint.
const std::array<PatchSpec, kNumTypes>& canonical_designs();

struct PatchRaster {
  Image pixels;  // gray, side 2 * radius_px + 1
  double center_x = 0.0;
  double center_y = 0.0;
  int radius_px = 0;
};

struct RenderOptions {
  bool anti_alias = true;
  int supersample = 4;
};

PatchRaster render_patch(const PatchSpec& spec, int radius_px, int black_level, int white_level,
                         double rotation, const RenderOptions& options = {});

// Zero-mean normalized cross-correlation of two equally sized gray images.
double normalized_cross_correlation(const Image& a, const Image& b);

nlohmann::json designs_to_json();

}  // namespace keypatch::patch
