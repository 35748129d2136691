// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keypatch/board.hpp"
#include "keypatch/dataset_io.hpp"
#include "keypatch/degradations.hpp"
#include "keypatch/matching.hpp"
#include "keypatch/model.hpp"

namespace keypatch::eval {

using Detector = std::function<std::vector<model::Detection>(const Image&)>;

// Wraps a network with its config's decoding settings. Images whose sides
// are not multiples of 8 are edge-padded; detections in the padding are
// dropped.
Detector model_detector(const model::SuperPointNet& net);

struct ValidationOptions {
  std::uint64_t seed = 0;        // deterioration draws
  std::size_t max_images = 0;    // 0 = whole dataset
  degrade::AugmentationRanges deterioration;
};

struct ValidationReport {
  EvalReport clean;
  EvalReport deteriorated;
};

// Scores the same images as stored and with a random blur / noise /
// shadow / rain stack.
ValidationReport run_validation(const Detector& detector, const synth::Dataset& data,
                                const ValidationOptions& options = {});

// Clean-only pass, used for periodic validation during training.
EvalReport evaluate_clean(const Detector& detector, const synth::Dataset& data, std::size_t max_images = 0);

enum class SweepAxis { kScale, kPitch, kBlur, kDimming, kNoise };

std::string_view to_string(SweepAxis axis);
SweepAxis axis_from_string(std::string_view name);
std::vector<double> default_levels(SweepAxis axis);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kScale;
  std::vector<double> levels;  // percent for scale, degrees for pitch, kernel px, k, sigma
  int images_per_level = 500;
  CameraModel camera;
  HexBoardSpec board;            // type_id cycles over the four designs per image
  double area_fraction = 0.16;   // for every axis except scale
  std::uint64_t seed = 0;

  static SweepSpec defaults(SweepAxis axis);
  void validate() const;
};

void to_json(nlohmann::json& j, const SweepSpec& s);
void from_json(const nlohmann::json& j, SweepSpec& s);

// Scene index i at level l: the board pose, type and background depend on
// i only, so levels differ only in the swept quantity.
BoardScene sweep_scene(const SweepSpec& spec, double level, int index);

using SweepProgress = std::function<void(double level, int done, int total)>;

std::vector<EvalReport> run_sweep(const Detector& detector, const SweepSpec& spec,
                                  const SweepProgress& progress = {});

// One row per metric, one column per level.
std::string sweep_csv(const SweepSpec& spec, const std::vector<EvalReport>& reports);

}  // namespace keypatch::eval
