// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/patch_designs.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"

namespace keypatch::patch {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

RingElement disk(double outer, Color c) { return {0.0, outer, 0.0, kTwoPi, c}; }
RingElement annulus(double inner, double outer, Color c) { return {inner, outer, 0.0, kTwoPi, c}; }
RingElement half(double inner, double outer, double start, Color c) {
  return {inner, outer, start, start + kPi, c};
}

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

}  // namespace

bool RingElement::full_ring() const { return end_angle - start_angle >= kTwoPi - 1e-12; }

bool RingElement::contains(double r, double angle) const {
  if (r < inner_fraction || r >= outer_fraction) return false;
  if (full_ring()) return true;
  double rel = wrap_angle(angle - start_angle);
  return rel < end_angle - start_angle;
}

const std::array<PatchSpec, kNumTypes>& canonical_designs() {
  // Geometry version kDesignVersion. The distinguishing structure sits
  // within 0.65 of the radius so large patches stay identifiable from the
  // center neighbourhood alone.
  static const std::array<PatchSpec, kNumTypes> designs = {{
      {0,
       {disk(0.30, Color::kBlack),
        half(0.30, 1.0, 0.0, Color::kBlack),
        half(0.30, 1.0, kPi, Color::kWhite)}},
      {1,
       {disk(0.30, Color::kWhite),
        half(0.30, 1.0, 0.0, Color::kBlack),
        half(0.30, 1.0, kPi, Color::kWhite)}},
      {2,
       {disk(0.30, Color::kBlack),
        half(0.30, 0.65, 0.0, Color::kBlack),
        half(0.30, 0.65, kPi, Color::kWhite),
        half(0.65, 1.0, 0.0, Color::kWhite),
        half(0.65, 1.0, kPi, Color::kBlack)}},
      {3,
       {disk(0.30, Color::kBlack),
        annulus(0.30, 0.60, Color::kWhite),
        half(0.60, 1.0, 0.0, Color::kBlack),
        half(0.60, 1.0, kPi, Color::kWhite)}},
  }};
  return designs;
}

PatchRaster render_patch(const PatchSpec& spec, int radius_px, int black_level, int white_level,
                         double rotation, const RenderOptions& options) {
  require(radius_px >= kMinRadiusPx, ErrorCode::kInvalidArgument,
          "patch radius " + std::to_string(radius_px) + " below minimum " + std::to_string(kMinRadiusPx));
  require(black_level >= 0 && black_level <= kBlackMax, ErrorCode::kInvalidArgument,
          "black level " + std::to_string(black_level) + " outside [0, 120]");
  require(white_level >= kWhiteMin && white_level <= 255, ErrorCode::kInvalidArgument,
          "white level " + std::to_string(white_level) + " outside [180, 255]");

  const int side = 2 * radius_px + 1;
  const int ss = options.anti_alias ? std::max(1, options.supersample) : 1;
  PatchRaster out;
  out.pixels = Image(side, side, 1);
  out.center_x = radius_px;
  out.center_y = radius_px;
  out.radius_px = radius_px;

  auto sample_level = [&](double dx, double dy) -> int {
    double r = std::hypot(dx, dy) / radius_px;
    double angle = std::atan2(dy, dx) - rotation;
    for (const RingElement& e : spec.rings) {
      if (e.contains(r, angle)) return e.color == Color::kBlack ? black_level : white_level;
    }
    return white_level;
  };

  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double dx0 = x - out.center_x;
      double dy0 = y - out.center_y;
      if (ss == 1) {
        out.pixels.at(x, y) = static_cast<std::uint8_t>(sample_level(dx0, dy0));
        continue;
      }
      int acc = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          double ox = (sx + 0.5) / ss - 0.5;
          double oy = (sy + 0.5) / ss - 0.5;
          acc += sample_level(dx0 + ox, dy0 + oy);
        }
      }
      int n = ss * ss;
      out.pixels.at(x, y) = static_cast<std::uint8_t>((acc + n / 2) / n);
    }
  }
  return out;
}

double normalized_cross_correlation(const Image& a, const Image& b) {
  require(a.width() == b.width() && a.height() == b.height() && a.channels() == b.channels(),
          ErrorCode::kShapeError, "NCC operands differ in shape");
  auto da = a.data();
  auto db = b.data();
  const double n = static_cast<double>(da.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    ma += da[i];
    mb += db[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    double va = da[i] - ma;
    double vb = db[i] - mb;
    sab += va * vb;
    saa += va * va;
    sbb += vb * vb;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

nlohmann::json designs_to_json() {
  nlohmann::json doc;
  doc["format"] = "keypatch-designs";
  doc["version"] = kDesignVersion;
  doc["angle_convention"] = "radians, image coordinates (x right, y down)";
  nlohmann::json types = nlohmann::json::array();
  for (const PatchSpec& spec : canonical_designs()) {
    nlohmann::json rings = nlohmann::json::array();
    for (const RingElement& e : spec.rings) {
      rings.push_back({{"inner_fraction", e.inner_fraction},
                       {"outer_fraction", e.outer_fraction},
                       {"start_angle", e.start_angle},
                       {"end_angle", e.end_angle},
                       {"color", e.color == Color::kBlack ? "black" : "white"}});
    }
    types.push_back({{"type_id", spec.type_id}, {"rings", rings}});
  }
  doc["types"] = types;
  return doc;
}

}  // namespace keypatch::patch
