// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"
#include "keypatch/patch_designs.hpp"

namespace kp = keypatch;
using kp::patch::canonical_designs;
using kp::patch::normalized_cross_correlation;
using kp::patch::render_patch;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kRotations = 24;
constexpr double kWorstPairNcc = 0.86351;

double rotation_at(int i) { return 2.0 * kPi * i / kRotations; }

// Nearest template over all types and rotations.
int classify(const kp::Image& img, int radius) {
  double best = -2.0;
  int best_type = -1;
  for (const auto& spec : canonical_designs()) {
    for (int r = 0; r < kRotations; ++r) {
      const double ncc = normalized_cross_correlation(img, render_patch(spec, radius, 0, 255, rotation_at(r)).pixels);
      if (ncc > best) {
        best = ncc;
        best_type = spec.type_id;
      }
    }
  }
  return best_type;
}

}  // namespace

TEST(PatchDesigns, FourDistinctTypesInOrder) {
  const auto& d = canonical_designs();
  ASSERT_EQ(d.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(d[i].type_id, i);
}

TEST(PatchDesigns, RingsInsideUnitDiskWithHalfOrFullExtent) {
  for (const auto& spec : canonical_designs()) {
    ASSERT_FALSE(spec.rings.empty());
    for (const auto& e : spec.rings) {
      EXPECT_GE(e.inner_fraction, 0.0);
      EXPECT_LT(e.inner_fraction, e.outer_fraction);
      EXPECT_LE(e.outer_fraction, 1.0);
      const double extent = e.end_angle - e.start_angle;
      EXPECT_TRUE(std::abs(extent - kPi) < 1e-12 || std::abs(extent - 2 * kPi) < 1e-12) << extent;
    }
    // Innermost element is a full disk covering the center.
    EXPECT_EQ(spec.rings.front().inner_fraction, 0.0);
    EXPECT_TRUE(spec.rings.front().full_ring());
  }
}

TEST(PatchDesigns, RenderGeometry) {
  const auto r = render_patch(canonical_designs()[0], 32, 0, 255, 0.0);
  EXPECT_EQ(r.pixels.width(), 65);
  EXPECT_EQ(r.pixels.height(), 65);
  EXPECT_EQ(r.pixels.channels(), 1);
  EXPECT_DOUBLE_EQ(r.center_x, 32.0);
  EXPECT_DOUBLE_EQ(r.center_y, 32.0);
  EXPECT_EQ(r.radius_px, 32);
  // Outside the outer circle the raster is white_level.
  EXPECT_EQ(r.pixels.at(0, 0), 255);
  EXPECT_EQ(r.pixels.at(64, 64), 255);
}

TEST(PatchDesigns, RejectsIllegalArguments) {
  const auto& s = canonical_designs()[0];
  auto code = [&](int radius, int black, int white) {
    try {
      render_patch(s, radius, black, white, 0.0);
    } catch (const kp::Error& e) {
      return e.code();
    }
    return kp::ErrorCode::kNumericError;
  };
  EXPECT_EQ(code(4, 0, 255), kp::ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(32, 130, 255), kp::ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(32, 0, 170), kp::ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(32, -1, 255), kp::ErrorCode::kInvalidArgument);
  EXPECT_NO_THROW(render_patch(s, 5, 120, 180, 0.0));
}

TEST(PatchDesigns, Deterministic) {
  for (const auto& spec : canonical_designs()) {
    EXPECT_EQ(render_patch(spec, 21, 17, 201, 0.7).pixels, render_patch(spec, 21, 17, 201, 0.7).pixels);
  }
}

TEST(PatchDesigns, WithoutAntiAliasingOnlyTwoLevels) {
  kp::patch::RenderOptions opt;
  opt.anti_alias = false;
  for (const auto& spec : canonical_designs()) {
    const auto r = render_patch(spec, 30, 40, 210, 1.1, opt);
    for (auto v : r.pixels.data()) EXPECT_TRUE(v == 40 || v == 210);
  }
}

TEST(PatchDesigns, AntiAliasedIntermediatesOnlyAtBoundaries) {
  kp::patch::RenderOptions hard;
  hard.anti_alias = false;
  for (const auto& spec : canonical_designs()) {
    const auto soft = render_patch(spec, 30, 0, 255, 0.4);
    const auto sharp = render_patch(spec, 30, 0, 255, 0.4, hard);
    const auto& img = sharp.pixels;
    for (int y = 1; y + 1 < img.height(); ++y) {
      for (int x = 1; x + 1 < img.width(); ++x) {
        const auto v = soft.pixels.at(x, y);
        if (v == 0 || v == 255) continue;
        bool boundary = false;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) boundary |= img.at(x + dx, y + dy) != img.at(x, y);
        }
        EXPECT_TRUE(boundary) << "type " << spec.type_id << " at " << x << "," << y;
      }
    }
  }
}

TEST(PatchDesigns, CenterPixelUnchangedByRotation) {
  for (const auto& spec : canonical_designs()) {
    const auto ref = render_patch(spec, 20, 0, 255, 0.0);
    for (int i = 1; i < kRotations; ++i) {
      const auto r = render_patch(spec, 20, 0, 255, rotation_at(i));
      EXPECT_EQ(r.pixels.at(20, 20), ref.pixels.at(20, 20));
    }
  }
}

TEST(PatchDesigns, ScaleConsistencyAwayFromBoundaries) {
  for (const auto& spec : canonical_designs()) {
    const int radius = 24;
    const auto small = render_patch(spec, radius, 0, 255, 0.3);
    const auto big = render_patch(spec, 2 * radius, 0, 255, 0.3);
    const auto& s = small.pixels;
    int checked = 0;
    for (int y = 2; y + 2 < s.height(); ++y) {
      for (int x = 2; x + 2 < s.width(); ++x) {
        bool flat = true;
        for (int dy = -2; dy <= 2; ++dy) {
          for (int dx = -2; dx <= 2; ++dx) flat &= s.at(x + dx, y + dy) == s.at(x, y);
        }
        if (!flat) continue;
        // Area average of the 2x footprint centered on (2x, 2y).
        double acc = 0.0;
        const double w[3] = {0.25, 0.5, 0.25};
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) acc += w[dx + 1] * w[dy + 1] * big.pixels.at(2 * x + dx, 2 * y + dy);
        }
        EXPECT_LE(std::abs(acc - s.at(x, y)), 10.0);
        ++checked;
      }
    }
    EXPECT_GT(checked, 500);
  }
}

TEST(PatchDesigns, PairwiseRotationalDissimilarity) {
  // Maximum NCC between two different types over all rotation pairs.
  const int radius = 64;
  std::vector<std::vector<kp::Image>> renders(4);
  for (const auto& spec : canonical_designs()) {
    for (int r = 0; r < kRotations; ++r) {
      renders[spec.type_id].push_back(render_patch(spec, radius, 0, 255, rotation_at(r)).pixels);
    }
  }
  double worst = -1.0;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      for (int r = 0; r < kRotations; ++r) {
        worst = std::max(worst, normalized_cross_correlation(renders[a][0], renders[b][r]));
      }
    }
  }
  EXPECT_LT(worst, 0.95);
  // Regression baseline measured on the version-1 geometry.
  EXPECT_NEAR(worst, kWorstPairNcc, 1e-3);
}

TEST(PatchDesigns, RotatedRenderClassifiedAsItsType) {
  const auto& d = canonical_designs();
  const auto r0 = render_patch(d[0], 24, 0, 255, 0.0);
  const auto rpi = render_patch(d[0], 24, 0, 255, kPi);
  EXPECT_EQ(classify(r0.pixels, 24), 0);
  EXPECT_EQ(classify(rpi.pixels, 24), 0);
}

TEST(PatchDesigns, NearestTemplateClassificationAllRotations) {
  for (int radius : {10, 16, 32}) {
    for (const auto& spec : canonical_designs()) {
      for (int i = 0; i < kRotations; ++i) {
        // Offset by half a step so the probe is not one of the templates.
        const double rot = rotation_at(i) + kPi / kRotations;
        const auto img = render_patch(spec, radius, 0, 255, rot).pixels;
        EXPECT_EQ(classify(img, radius), spec.type_id) << "radius " << radius << " rot " << rot;
      }
    }
  }
}

TEST(PatchDesigns, DesignDocument) {
  const auto doc = kp::patch::designs_to_json();
  EXPECT_EQ(doc.at("version").get<int>(), kp::patch::kDesignVersion);
  ASSERT_EQ(doc.at("types").size(), 4u);
  std::set<int> ids;
  for (const auto& t : doc["types"]) ids.insert(t.at("type_id").get<int>());
  EXPECT_EQ(ids, (std::set<int>{0, 1, 2, 3}));
}

TEST(PatchDesigns, NccOfIdenticalImagesIsOne) {
  const auto r = render_patch(canonical_designs()[2], 12, 0, 255, 0.0);
  EXPECT_NEAR(normalized_cross_correlation(r.pixels, r.pixels), 1.0, 1e-12);
}
