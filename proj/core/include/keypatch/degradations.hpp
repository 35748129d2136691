// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keypatch/image.hpp"
#include "keypatch/random.hpp"

namespace keypatch::degrade {

enum class Kind { kMotionBlur, kBoxBlur, kBrightness, kDimming, kShadow, kRain, kGaussianNoise };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view name);

// One deterioration with all parameters needed to replay it bit-exactly.
// Only the fields relevant to `kind` are meaningful.
struct DegradationSpec {
  Kind kind = Kind::kBoxBlur;
  int kernel_px = 3;            // motion_blur, box_blur
  double angle_deg = 0.0;       // motion_blur
  double factor = 1.0;          // brightness; dimming when k is unset
  std::optional<double> k;      // dimming exponent, factor = 0.6^k
  double sigma = 0.0;           // gaussian_noise
  std::uint64_t seed = 0;       // shadow, rain, gaussian_noise

  void validate() const;
  bool operator==(const DegradationSpec&) const = default;

  static DegradationSpec box_blur(int kernel_px);
  static DegradationSpec motion_blur(int kernel_px, double angle_deg);
  static DegradationSpec brightness(double factor);
  static DegradationSpec dimming(double k);
  static DegradationSpec dimming_by_factor(double factor);
  static DegradationSpec gaussian_noise(double sigma, std::uint64_t seed);
  static DegradationSpec shadow(std::uint64_t seed);
  static DegradationSpec rain(std::uint64_t seed);
};

double dimming_factor(double k);

Image apply(const DegradationSpec& spec, const Image& img);
Image apply_all(const std::vector<DegradationSpec>& specs, const Image& img);

// Parameter ranges used when drawing random deteriorations.
struct AugmentationRanges {
  double probability = 0.5;
  int motion_blur_min_px = 3;
  int motion_blur_max_px = 9;
  double noise_sigma_min = 2.0;
  double noise_sigma_max = 20.0;
  double brightness_min = 0.6;
  double brightness_max = 1.4;
};

// Deteriorations applied to training images from `augment_from_epoch` on:
// each of motion blur, gaussian noise, shadow and rain with probability
// ranges.probability. Empty before that epoch.
std::vector<DegradationSpec> training_augmentation_stack(Rng& rng, int epoch, int augment_from_epoch = 31,
                                                         const AugmentationRanges& ranges = {});

// Deteriorations baked into synthesized samples: motion blur, brightness,
// shadow and rain, each with probability `probability`.
std::vector<DegradationSpec> synthesis_degradation_stack(Rng& rng, double probability,
                                                         const AugmentationRanges& ranges = {});

void to_json(nlohmann::json& j, const DegradationSpec& spec);
void from_json(const nlohmann::json& j, DegradationSpec& spec);

}  // namespace keypatch::degrade
