// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/config.hpp"

#include <fstream>

#include "keypatch/error.hpp"

namespace keypatch {

namespace synth {

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"width", c.width},
                     {"height", c.height},
                     {"max_patches", c.max_patches},
                     {"min_radius_px", c.min_radius_px},
                     {"max_radius_px", c.max_radius_px},
                     {"min_short_axis_px", c.min_short_axis_px},
                     {"min_axis_ratio", c.min_axis_ratio},
                     {"min_scale", c.sampler.min_scale},
                     {"max_scale", c.sampler.max_scale},
                     {"max_perspective", c.sampler.max_perspective},
                     {"black_min", c.black_min},
                     {"black_max", c.black_max},
                     {"white_min", c.white_min},
                     {"white_max", c.white_max},
                     {"anti_alias", c.anti_alias},
                     {"degradation_probability", c.degradation_probability},
                     {"placement_retries", c.placement_retries}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  for (const auto& [key, v] : j.items()) {
    if (key == "width") d.width = v.get<int>();
    else if (key == "height") d.height = v.get<int>();
    else if (key == "max_patches") d.max_patches = v.get<int>();
    else if (key == "min_radius_px") d.min_radius_px = v.get<int>();
    else if (key == "max_radius_px") d.max_radius_px = v.get<int>();
    else if (key == "min_short_axis_px") d.min_short_axis_px = v.get<double>();
    else if (key == "min_axis_ratio") d.min_axis_ratio = v.get<double>();
    else if (key == "min_scale") d.sampler.min_scale = v.get<double>();
    else if (key == "max_scale") d.sampler.max_scale = v.get<double>();
    else if (key == "max_perspective") d.sampler.max_perspective = v.get<double>();
    else if (key == "black_min") d.black_min = v.get<int>();
    else if (key == "black_max") d.black_max = v.get<int>();
    else if (key == "white_min") d.white_min = v.get<int>();
    else if (key == "white_max") d.white_max = v.get<int>();
    else if (key == "anti_alias") d.anti_alias = v.get<bool>();
    else if (key == "degradation_probability") d.degradation_probability = v.get<double>();
    else if (key == "placement_retries") d.placement_retries = v.get<int>();
    else fail(ErrorCode::kInvalidArgument, "unknown synth key '" + key + "'");
  }
  d.validate();
  c = d;
}

}  // namespace synth

void to_json(nlohmann::json& j, const GenerateConfig& c) {
  j = c.synth;
  j["count"] = c.count;
  j["validation_count"] = c.validation_count;
  j["backgrounds"] = c.backgrounds;
}

void from_json(const nlohmann::json& j, GenerateConfig& c) {
  GenerateConfig d;
  nlohmann::json rest = nlohmann::json::object();
  for (const auto& [key, v] : j.items()) {
    if (key == "count") d.count = v.get<std::uint64_t>();
    else if (key == "validation_count") d.validation_count = v.get<std::uint64_t>();
    else if (key == "backgrounds") d.backgrounds = v.get<std::string>();
    else rest[key] = v;
  }
  d.synth = rest.get<synth::SynthConfig>();
  c = d;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},   {"output", c.output}, {"synth", c.generate},
                     {"model", c.model}, {"train", c.train},   {"sweep", c.sweep}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  require(j.is_object(), ErrorCode::kInvalidArgument, "config must be a JSON object");
  RunConfig d;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      d.seed = v.get<std::uint64_t>();
    } else if (key == "output") {
      d.output = v.get<std::string>();
    } else if (key == "synth") {
      d.generate = v.get<GenerateConfig>();
    } else if (key == "model") {
      nlohmann::json base;
      nlohmann::json rest = v;
      if (rest.contains("preset")) {
        const std::string preset = rest["preset"].get<std::string>();
        rest.erase("preset");
        if (preset == "compact") base = model::ModelConfig::compact();
        else if (preset == "full") base = model::ModelConfig{};
        else fail(ErrorCode::kInvalidArgument, "unknown model preset '" + preset + "'");
      } else {
        base = model::ModelConfig{};
      }
      base.update(rest);
      d.model = base.get<model::ModelConfig>();
    } else if (key == "train") {
      nlohmann::json rest = v;
      nlohmann::json base = train::TrainConfig{};
      if (rest.contains("scale")) {
        base = train::TrainConfig::scaled(rest["scale"].get<double>());
        rest.erase("scale");
      }
      base.update(rest);
      d.train = base.get<train::TrainConfig>();
    } else if (key == "sweep") {
      d.sweep = v.get<eval::SweepSpec>();
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
  }
  if (!j.contains("train") || !j["train"].contains("seed")) d.train.seed = d.seed;
  if (!j.contains("sweep") || !j["sweep"].contains("seed")) d.sweep.seed = d.seed;
  c = d;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, "malformed config " + path.string() + ": " + e.what());
  }
  try {
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, "bad value in config " + path.string() + ": " + e.what());
  }
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << nlohmann::json(c).dump(2) << '\n';
}

}  // namespace keypatch
