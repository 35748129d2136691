// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "keypatch/background.hpp"
#include "keypatch/error.hpp"
#include "keypatch/synth.hpp"

namespace kp = keypatch;
namespace sy = keypatch::synth;

namespace {

sy::SynthConfig small_config() {
  sy::SynthConfig cfg;
  cfg.width = 320;
  cfg.height = 240;
  return cfg;
}

class EmptyCorpus final : public sy::BackgroundCorpus {
 public:
  std::size_t size() const override { return 0; }
  std::string pick(kp::Rng&) const override { return ""; }
  kp::Image load(const std::string&, int w, int h) const override { return kp::Image(w, h, 3); }
};

}  // namespace

TEST(Synth, ZeroPatchesGivesDegradedBackground) {
  sy::ProceduralCorpus corpus;
  auto cfg = small_config();
  cfg.max_patches = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sy::synthesize_sample(seed, corpus, cfg);
    EXPECT_TRUE(s.annotation.instances.empty());
    const kp::Image bg = corpus.load(s.annotation.background_source, cfg.width, cfg.height);
    EXPECT_EQ(s.composite, bg);
    EXPECT_EQ(s.image, kp::degrade::apply_all(s.annotation.degradations, bg));
  }
}

TEST(Synth, DefaultResolution) {
  sy::ProceduralCorpus corpus;
  const auto s = sy::synthesize_sample(1, corpus, sy::SynthConfig{});
  EXPECT_EQ(s.image.width(), 640);
  EXPECT_EQ(s.image.height(), 480);
  EXPECT_EQ(s.annotation.width, 640);
  EXPECT_EQ(s.annotation.height, 480);
}

TEST(Synth, ReplayReproducesCompositeExactly) {
  sy::ProceduralCorpus corpus;
  const auto cfg = small_config();
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const auto s = sy::synthesize_sample(seed, corpus, cfg);
    // Through JSON, so the stored record alone is enough.
    const nlohmann::json j = s.annotation;
    const auto ann = j.get<sy::SampleAnnotation>();
    kp::Image canvas = corpus.load(ann.background_source, ann.width, ann.height);
    for (const auto& inst : ann.instances) {
      const auto raster = kp::patch::render_patch(kp::patch::canonical_designs()[inst.type_id], inst.source_radius_px,
                                                  inst.black_level, inst.white_level, 0.0, {true, 4});
      kp::geometry::warp_raster_onto(inst.homography, raster, canvas);
    }
    EXPECT_EQ(canvas, s.composite) << seed;
    EXPECT_EQ(sy::replay_composite(ann, corpus), s.composite);
    EXPECT_EQ(kp::degrade::apply_all(ann.degradations, canvas), s.image);
  }
}

TEST(Synth, LabelCenterAgreesWithHomography) {
  sy::ProceduralCorpus corpus;
  const auto cfg = small_config();
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = sy::synthesize_sample(seed, corpus, cfg);
    for (const auto& inst : s.annotation.instances) {
      const double r = inst.source_radius_px;
      const Eigen::Vector3d p = inst.homography.matrix() * Eigen::Vector3d(r, r, 1.0);
      EXPECT_NEAR(p.x() / p.z(), inst.x, 1e-6);
      EXPECT_NEAR(p.y() / p.z(), inst.y, 1e-6);
      EXPECT_GE(inst.x, 0.0);
      EXPECT_GE(inst.y, 0.0);
      EXPECT_LT(inst.x, cfg.width);
      EXPECT_LT(inst.y, cfg.height);
      const auto e = kp::geometry::warp_circle(inst.homography, {r, r}, r);
      EXPECT_GE(2.0 * e.semi_minor, cfg.min_short_axis_px - 1e-9);
      EXPECT_GE(e.semi_minor / e.semi_major, cfg.min_axis_ratio - 1e-9);
      EXPECT_NEAR(inst.radius_px, e.geometric_mean_radius(), 1e-9);
      EXPECT_GE(inst.black_level, 0);
      EXPECT_LE(inst.black_level, 120);
      EXPECT_GE(inst.white_level, 180);
      EXPECT_LE(inst.white_level, 255);
      ++checked;
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(Synth, CountBoundAndSpread) {
  sy::ProceduralCorpus corpus;
  const auto cfg = small_config();
  std::vector<int> seen(sy::kMaxInstances + 1, 0);
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto n = sy::synthesize_sample(seed, corpus, cfg).annotation.instances.size();
    ASSERT_LE(n, 10u);
    ++seen[n];
  }
  EXPECT_GT(seen[0], 0);
  EXPECT_GT(seen[7] + seen[8] + seen[9] + seen[10], 0);
}

TEST(Synth, Deterministic) {
  sy::ProceduralCorpus corpus;
  const auto cfg = small_config();
  const auto a = sy::synthesize_sample(77, corpus, cfg);
  const auto b = sy::synthesize_sample(77, corpus, cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(nlohmann::json(a.annotation), nlohmann::json(b.annotation));
  EXPECT_NE(a.image, sy::synthesize_sample(78, corpus, cfg).image);
}

TEST(Synth, EmptyCorpusRejected) {
  try {
    sy::synthesize_sample(0, EmptyCorpus{}, small_config());
    FAIL();
  } catch (const kp::Error& e) {
    EXPECT_EQ(e.code(), kp::ErrorCode::kEmptyCorpus);
  }
}

TEST(Synth, InvalidConfigRejected) {
  sy::ProceduralCorpus corpus;
  auto cfg = small_config();
  cfg.max_patches = 11;
  EXPECT_THROW(sy::synthesize_sample(0, corpus, cfg), kp::Error);
  cfg = small_config();
  cfg.max_radius_px = 200;
  try {
    sy::synthesize_sample(0, corpus, cfg);
    FAIL();
  } catch (const kp::Error& e) {
    EXPECT_EQ(e.code(), kp::ErrorCode::kConstraintInfeasible);
  }
}

TEST(Synth, AnnotationJsonRoundTrip) {
  sy::ProceduralCorpus corpus;
  const auto s = sy::synthesize_sample(5, corpus, small_config());
  const nlohmann::json j = s.annotation;
  EXPECT_EQ(nlohmann::json(j.get<sy::SampleAnnotation>()), j);
}

TEST(Synth, ProceduralBackgroundDeterministic) {
  EXPECT_EQ(sy::procedural_background(9, 64, 48), sy::procedural_background(9, 64, 48));
  EXPECT_NE(sy::procedural_background(9, 64, 48), sy::procedural_background(10, 64, 48));
  EXPECT_EQ(sy::procedural_background(9, 64, 48).channels(), 3);
}
