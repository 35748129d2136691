// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "keypatch/model.hpp"
#include "keypatch/synth.hpp"

namespace keypatch::eval {

// A ground truth is hit when a prediction lies within this fraction of its
// radius.
inline constexpr double kEpsilonFraction = 0.1;

struct MatchPair {
  int prediction = 0;
  int ground_truth = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_predictions;
  std::vector<int> unmatched_ground_truth;
  std::vector<double> epsilon_used;  // per ground truth
};

// One-to-one matching. Candidate pairs (distance <= eps of the ground truth)
// are taken greedily by ascending distance; augmenting paths then repair
// the rare cases where greedy choice blocks a larger matching.
MatchResult match_detections(std::span<const model::Detection> preds, std::span<const synth::KeypointInstance> gts,
                             double epsilon_fraction = kEpsilonFraction);

double detection_score(const MatchResult& m, std::size_t n_gt);
double id_matching_score(const MatchResult& m, std::span<const model::Detection> preds,
                         std::span<const synth::KeypointInstance> gts);

// Per-image counts; scores aggregate over them.
struct ImageCounts {
  std::size_t n_ground_truth = 0;
  std::size_t n_predictions = 0;
  std::size_t n_matched = 0;
  std::size_t n_id_correct = 0;
};

ImageCounts count_image(const MatchResult& m, std::span<const model::Detection> preds,
                        std::span<const synth::KeypointInstance> gts);

double average_false_alarm(std::span<const ImageCounts> images);

struct EvalReport {
  double detection_score = 0.0;
  double id_matching_score = 0.0;
  double average_false_alarm = 0.0;
  std::size_t n_images = 0;
  std::size_t n_ground_truth = 0;
  std::size_t n_predictions = 0;
  std::size_t n_matched = 0;
  std::size_t n_id_correct = 0;
  nlohmann::json condition = nlohmann::json::object();
};

// Folds per-image counts in order. Detection score is matched over ground
// truth summed across images; ID score is correct over matched.
EvalReport aggregate(std::span<const ImageCounts> images, nlohmann::json condition = nlohmann::json::object());

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

}  // namespace keypatch::eval
