// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "keypatch/error.hpp"

namespace keypatch::eval {

MatchResult match_detections(std::span<const model::Detection> preds, std::span<const synth::KeypointInstance> gts,
                             double epsilon_fraction) {
  const int np = static_cast<int>(preds.size()), ng = static_cast<int>(gts.size());
  MatchResult m;
  m.epsilon_used.resize(ng);
  for (int g = 0; g < ng; ++g) m.epsilon_used[g] = epsilon_fraction * gts[g].radius_px;

  std::vector<MatchPair> cands;
  for (int p = 0; p < np; ++p) {
    for (int g = 0; g < ng; ++g) {
      const double d = std::hypot(preds[p].x - gts[g].x, preds[p].y - gts[g].y);
      if (d <= m.epsilon_used[g]) cands.push_back({p, g, d});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const MatchPair& a, const MatchPair& b) { return a.distance < b.distance; });

  std::vector<int> pred_of(ng, -1), gt_of(np, -1);
  for (const MatchPair& c : cands) {
    if (pred_of[c.ground_truth] < 0 && gt_of[c.prediction] < 0) {
      pred_of[c.ground_truth] = c.prediction;
      gt_of[c.prediction] = c.ground_truth;
    }
  }

  // Adjacency in ascending distance order, for the augmenting search.
  std::vector<std::vector<int>> adj(ng);
  for (const MatchPair& c : cands) adj[c.ground_truth].push_back(c.prediction);
  std::vector<char> seen(np);
  std::function<bool(int)> augment = [&](int g) {
    for (int p : adj[g]) {
      if (seen[p]) continue;
      seen[p] = 1;
      if (gt_of[p] < 0 || augment(gt_of[p])) {
        gt_of[p] = g;
        pred_of[g] = p;
        return true;
      }
    }
    return false;
  };
  for (int g = 0; g < ng; ++g) {
    if (pred_of[g] >= 0 || adj[g].empty()) continue;
    std::fill(seen.begin(), seen.end(), 0);
    augment(g);
  }

  for (int g = 0; g < ng; ++g) {
    if (pred_of[g] < 0) {
      m.unmatched_ground_truth.push_back(g);
      continue;
    }
    const auto& p = preds[pred_of[g]];
    m.pairs.push_back({pred_of[g], g, std::hypot(p.x - gts[g].x, p.y - gts[g].y)});
  }
  std::sort(m.pairs.begin(), m.pairs.end(),
            [](const MatchPair& a, const MatchPair& b) { return a.distance < b.distance; });
  for (int p = 0; p < np; ++p) {
    if (gt_of[p] < 0) m.unmatched_predictions.push_back(p);
  }
  return m;
}

double detection_score(const MatchResult& m, std::size_t n_gt) {
  if (n_gt == 0) return m.unmatched_predictions.empty() ? 1.0 : 0.0;
  return static_cast<double>(m.pairs.size()) / static_cast<double>(n_gt);
}

double id_matching_score(const MatchResult& m, std::span<const model::Detection> preds,
                         std::span<const synth::KeypointInstance> gts) {
  if (m.pairs.empty()) return 1.0;
  std::size_t ok = 0;
  for (const MatchPair& p : m.pairs) ok += preds[p.prediction].type_id == gts[p.ground_truth].type_id;
  return static_cast<double>(ok) / static_cast<double>(m.pairs.size());
}

ImageCounts count_image(const MatchResult& m, std::span<const model::Detection> preds,
                        std::span<const synth::KeypointInstance> gts) {
  ImageCounts c;
  c.n_ground_truth = gts.size();
  c.n_predictions = preds.size();
  c.n_matched = m.pairs.size();
  for (const MatchPair& p : m.pairs) c.n_id_correct += preds[p.prediction].type_id == gts[p.ground_truth].type_id;
  return c;
}

double average_false_alarm(std::span<const ImageCounts> images) {
  require(!images.empty(), ErrorCode::kInvalidArgument, "average_false_alarm needs at least one image");
  std::size_t unmatched = 0;
  for (const ImageCounts& c : images) unmatched += c.n_predictions - c.n_matched;
  return static_cast<double>(unmatched) / static_cast<double>(images.size());
}

EvalReport aggregate(std::span<const ImageCounts> images, nlohmann::json condition) {
  EvalReport r;
  r.condition = std::move(condition);
  r.n_images = images.size();
  for (const ImageCounts& c : images) {
    r.n_ground_truth += c.n_ground_truth;
    r.n_predictions += c.n_predictions;
    r.n_matched += c.n_matched;
    r.n_id_correct += c.n_id_correct;
  }
  if (r.n_ground_truth == 0) {
    r.detection_score = r.n_predictions == 0 ? 1.0 : 0.0;
  } else {
    r.detection_score = static_cast<double>(r.n_matched) / static_cast<double>(r.n_ground_truth);
  }
  r.id_matching_score =
      r.n_matched == 0 ? 1.0 : static_cast<double>(r.n_id_correct) / static_cast<double>(r.n_matched);
  r.average_false_alarm = images.empty() ? 0.0 : average_false_alarm(images);
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"detection_score", r.detection_score},   {"id_matching_score", r.id_matching_score},
                     {"average_false_alarm", r.average_false_alarm}, {"n_images", r.n_images},
                     {"n_ground_truth", r.n_ground_truth},     {"n_predictions", r.n_predictions},
                     {"n_matched", r.n_matched},               {"n_id_correct", r.n_id_correct},
                     {"condition", r.condition}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.detection_score = j.at("detection_score").get<double>();
  r.id_matching_score = j.at("id_matching_score").get<double>();
  r.average_false_alarm = j.at("average_false_alarm").get<double>();
  r.n_images = j.at("n_images").get<std::size_t>();
  r.n_ground_truth = j.value("n_ground_truth", std::size_t{0});
  r.n_predictions = j.value("n_predictions", std::size_t{0});
  r.n_matched = j.value("n_matched", std::size_t{0});
  r.n_id_correct = j.value("n_id_correct", std::size_t{0});
  r.condition = j.value("condition", nlohmann::json::object());
}

}  // namespace keypatch::eval
