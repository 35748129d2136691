// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/synth.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"
#include "keypatch/patch_designs.hpp"

namespace keypatch::synth {

geometry::WarpConstraints SynthConfig::constraints() const {
  geometry::WarpConstraints c;
  c.min_short_axis_px = min_short_axis_px;
  c.min_axis_ratio = min_axis_ratio;
  c.max_patches_per_image = max_patches;
  c.image_width = width;
  c.image_height = height;
  return c;
}

void SynthConfig::validate() const {
  constraints().validate();
  require(max_patches >= 0 && max_patches <= kMaxInstances, ErrorCode::kInvalidArgument,
          "max_patches must lie in [0, 10]");
  require(min_radius_px >= patch::kMinRadiusPx && max_radius_px >= min_radius_px, ErrorCode::kInvalidArgument,
          "radius range must satisfy 5 <= min_radius_px <= max_radius_px");
  require(0 <= black_min && black_min <= black_max && black_max <= patch::kBlackMax, ErrorCode::kInvalidArgument,
          "black range must lie within [0, 120]");
  require(patch::kWhiteMin <= white_min && white_min <= white_max && white_max <= 255, ErrorCode::kInvalidArgument,
          "white range must lie within [180, 255]");
  require(degradation_probability >= 0.0 && degradation_probability <= 1.0, ErrorCode::kInvalidArgument,
          "degradation_probability must lie in [0, 1]");
  require(placement_retries >= 1, ErrorCode::kInvalidArgument, "placement_retries must be >= 1");
  const double fit = 0.5 * std::min(width, height) / 1.25;
  if (max_radius_px * sampler.min_scale > fit) {
    fail(ErrorCode::kConstraintInfeasible,
         "max_radius_px " + std::to_string(max_radius_px) + " cannot fit a " + std::to_string(width) + "x" +
             std::to_string(height) + " image");
  }
}

namespace {

bool conflicts(const std::vector<KeypointInstance>& placed, const geometry::Homography& h, int side,
               geometry::Point center) {
  for (const KeypointInstance& other : placed) {
    const int other_side = 2 * other.source_radius_px + 1;
    if (geometry::inside_footprint(other.homography, other_side, other_side, center)) return true;
    if (geometry::inside_footprint(h, side, side, {other.x, other.y})) return true;
  }
  return false;
}

}  // namespace

SynthesizedSample synthesize_sample(std::uint64_t seed, const BackgroundCorpus& backgrounds, const SynthConfig& cfg) {
  cfg.validate();
  if (backgrounds.size() == 0) fail(ErrorCode::kEmptyCorpus, "background corpus is empty");
  Rng rng(seed);
  SynthesizedSample out;
  SampleAnnotation& ann = out.annotation;
  ann.seed = seed;
  ann.width = cfg.width;
  ann.height = cfg.height;

  const int count = uniform_int(rng, 0, cfg.max_patches);
  ann.background_source = backgrounds.pick(rng);
  Image canvas = backgrounds.load(ann.background_source, cfg.width, cfg.height);
  const geometry::WarpConstraints constraints = cfg.constraints();
  const patch::RenderOptions render_options{cfg.anti_alias, 4};

  for (int i = 0; i < count; ++i) {
    KeypointInstance inst;
    inst.type_id = uniform_int(rng, 0, patch::kNumTypes - 1);
    inst.black_level = uniform_int(rng, cfg.black_min, cfg.black_max);
    inst.white_level = uniform_int(rng, cfg.white_min, cfg.white_max);
    inst.source_radius_px = static_cast<int>(
        std::lround(std::exp(uniform(rng, std::log(cfg.min_radius_px), std::log(cfg.max_radius_px + 0.499)))));
    inst.source_radius_px = std::clamp(inst.source_radius_px, cfg.min_radius_px, cfg.max_radius_px);
    const int side = 2 * inst.source_radius_px + 1;
    const geometry::Point src_center{static_cast<double>(inst.source_radius_px),
                                     static_cast<double>(inst.source_radius_px)};

    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
      geometry::Homography h = geometry::sample_patch_homography(rng, constraints, inst.source_radius_px, cfg.sampler);
      geometry::Point c = geometry::apply_homography(h, src_center);
      if (conflicts(ann.instances, h, side, c)) continue;
      inst.homography = h;
      inst.x = c.x;
      inst.y = c.y;
      placed = true;
      break;
    }
    if (!placed) continue;

    patch::PatchRaster raster = patch::render_patch(patch::canonical_designs()[inst.type_id], inst.source_radius_px,
                                                    inst.black_level, inst.white_level, 0.0, render_options);
    geometry::WarpResult warped = geometry::warp_raster_onto(inst.homography, raster, canvas);
    inst.radius_px = warped.warped_radius;
    ann.instances.push_back(inst);
  }

  ann.degradations = degrade::synthesis_degradation_stack(rng, cfg.degradation_probability, cfg.ranges);
  out.composite = canvas;
  out.image = degrade::apply_all(ann.degradations, canvas);
  return out;
}

Image replay_composite(const SampleAnnotation& ann, const BackgroundCorpus& backgrounds, bool anti_alias) {
  Image canvas = backgrounds.load(ann.background_source, ann.width, ann.height);
  for (const KeypointInstance& inst : ann.instances) {
    patch::PatchRaster raster = patch::render_patch(patch::canonical_designs().at(inst.type_id), inst.source_radius_px,
                                                    inst.black_level, inst.white_level, 0.0, {anti_alias, 4});
    geometry::warp_raster_onto(inst.homography, raster, canvas);
  }
  return canvas;
}

void to_json(nlohmann::json& j, const KeypointInstance& k) {
  j = nlohmann::json{{"x", k.x},
                     {"y", k.y},
                     {"type_id", k.type_id},
                     {"radius_px", k.radius_px},
                     {"homography", k.homography.row_major()},
                     {"source_radius_px", k.source_radius_px},
                     {"black_level", k.black_level},
                     {"white_level", k.white_level}};
}

void from_json(const nlohmann::json& j, KeypointInstance& k) {
  k.x = j.at("x").get<double>();
  k.y = j.at("y").get<double>();
  k.type_id = j.at("type_id").get<int>();
  k.radius_px = j.at("radius_px").get<double>();
  k.homography = geometry::Homography::from_row_major(j.at("homography").get<std::array<double, 9>>());
  k.source_radius_px = j.at("source_radius_px").get<int>();
  k.black_level = j.at("black_level").get<int>();
  k.white_level = j.at("white_level").get<int>();
  require(k.type_id >= 0 && k.type_id < patch::kNumTypes, ErrorCode::kRecordCorrupt, "type_id out of range");
}

void to_json(nlohmann::json& j, const SampleAnnotation& a) {
  j = nlohmann::json{{"index", a.index},
                     {"image_path", a.image_path},
                     {"image_size", {a.width, a.height}},
                     {"instances", a.instances},
                     {"degradations", a.degradations},
                     {"background_source", a.background_source},
                     {"seed", a.seed}};
}

void from_json(const nlohmann::json& j, SampleAnnotation& a) {
  a.index = j.at("index").get<std::uint64_t>();
  a.image_path = j.at("image_path").get<std::string>();
  a.width = j.at("image_size").at(0).get<int>();
  a.height = j.at("image_size").at(1).get<int>();
  a.instances = j.at("instances").get<std::vector<KeypointInstance>>();
  a.degradations = j.at("degradations").get<std::vector<degrade::DegradationSpec>>();
  a.background_source = j.at("background_source").get<std::string>();
  a.seed = j.at("seed").get<std::uint64_t>();
  require(a.instances.size() <= static_cast<std::size_t>(kMaxInstances), ErrorCode::kRecordCorrupt,
          "annotation has more than 10 instances");
}

}  // namespace keypatch::synth
