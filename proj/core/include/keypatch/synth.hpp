// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keypatch/background.hpp"
#include "keypatch/degradations.hpp"
#include "keypatch/geometry.hpp"
#include "keypatch/image.hpp"

namespace keypatch::synth {

inline constexpr int kMaxInstances = 10;

struct SynthConfig {
  int width = 640;
  int height = 480;
  int max_patches = kMaxInstances;
  int min_radius_px = 5;    // source raster radius, log-uniform
  int max_radius_px = 64;
  double min_short_axis_px = 10.0;
  double min_axis_ratio = 0.2;
  geometry::SamplerOptions sampler;
  int black_min = 0;
  int black_max = 120;
  int white_min = 180;
  int white_max = 255;
  bool anti_alias = true;
  double degradation_probability = 0.25;
  degrade::AugmentationRanges ranges;
  int placement_retries = 100;

  geometry::WarpConstraints constraints() const;
  void validate() const;
};

struct KeypointInstance {
  double x = 0.0;
  double y = 0.0;
  int type_id = 0;
  double radius_px = 0.0;  // geometric-mean semi-axis of the warped bounding circle
  geometry::Homography homography;
  // Render parameters, kept for replay.
  int source_radius_px = 0;
  int black_level = 0;
  int white_level = 255;
};

struct SampleAnnotation {
  std::uint64_t index = 0;
  std::string image_path;
  int width = 0;
  int height = 0;
  std::vector<KeypointInstance> instances;
  std::vector<degrade::DegradationSpec> degradations;
  std::string background_source;
  std::uint64_t seed = 0;
};

struct SynthesizedSample {
  Image image;      // after degradations
  Image composite;  // before degradations
  SampleAnnotation annotation;
};

// The whole sample is a function of (seed, corpus contents, cfg).
SynthesizedSample synthesize_sample(std::uint64_t seed, const BackgroundCorpus& backgrounds, const SynthConfig& cfg);

// Re-renders and re-warps every stored instance onto the stored background.
Image replay_composite(const SampleAnnotation& ann, const BackgroundCorpus& backgrounds, bool anti_alias = true);

void to_json(nlohmann::json& j, const KeypointInstance& k);
void from_json(const nlohmann::json& j, KeypointInstance& k);
void to_json(nlohmann::json& j, const SampleAnnotation& a);
void from_json(const nlohmann::json& j, SampleAnnotation& a);

}  // namespace keypatch::synth
