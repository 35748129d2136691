// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "keypatch/experiments.hpp"
#include "keypatch/model.hpp"
#include "keypatch/synth.hpp"
#include "keypatch/training.hpp"

namespace keypatch {

namespace synth {
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
}  // namespace synth

// Dataset generation settings on top of the per-image SynthConfig.
struct GenerateConfig {
  synth::SynthConfig synth;
  std::uint64_t count = 20000;
  std::uint64_t validation_count = 2000;
  std::string backgrounds = "procedural";  // or a directory of images
};

// Whole-pipeline configuration document. Sections may be omitted; unknown
// keys anywhere are rejected.
//
//   {"seed": 0, "output": "runs/default",
//    "synth": {..., "count": 20000, "backgrounds": "procedural"},
//    "model": {"preset": "full" | "compact", ...},
//    "train": {"scale": 1.0, ...},
//    "sweep": {"axis": "scale", ...}}
//
// "preset" and "scale" select a baseline that the remaining keys override.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output = "runs/default";
  GenerateConfig generate;
  model::ModelConfig model;
  train::TrainConfig train;
  eval::SweepSpec sweep = eval::SweepSpec::defaults(eval::SweepAxis::kScale);
};

void to_json(nlohmann::json& j, const GenerateConfig& c);
void from_json(const nlohmann::json& j, GenerateConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

}  // namespace keypatch
