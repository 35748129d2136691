// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "keypatch/background.hpp"
#include "keypatch/error.hpp"
#include "keypatch/random.hpp"

namespace keypatch::eval {

Detector model_detector(const model::SuperPointNet& net) {
  return [&net](const Image& img) {
    const int w = img.width(), h = img.height();
    const int pw = (w + 7) / 8 * 8, ph = (h + 7) / 8 * 8;
    if (pw == w && ph == h) return model::detect(net, img);
    Image gray = to_gray(img);
    Image padded(pw, ph, 1);
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) padded.at(x, y) = gray.at(std::min(x, w - 1), std::min(y, h - 1));
    }
    std::vector<model::Detection> dets = model::detect(net, padded);
    std::erase_if(dets, [&](const model::Detection& d) { return d.pixel_x >= w || d.pixel_y >= h; });
    return dets;
  };
}

namespace {

ImageCounts score_image(const Detector& detector, const Image& img,
                        const std::vector<synth::KeypointInstance>& gts) {
  const std::vector<model::Detection> dets = detector(img);
  const MatchResult m = match_detections(dets, gts);
  return count_image(m, dets, gts);
}

std::size_t limit(const synth::Dataset& data, std::size_t max_images) {
  return max_images == 0 ? data.size() : std::min(max_images, data.size());
}

}  // namespace

EvalReport evaluate_clean(const Detector& detector, const synth::Dataset& data, std::size_t max_images) {
  const std::size_t n = limit(data, max_images);
  require(n > 0, ErrorCode::kEmptyCorpus, "validation dataset is empty");
  std::vector<ImageCounts> counts;
  counts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    counts.push_back(score_image(detector, data.load_image(i), data.annotation(i).instances));
  }
  return aggregate(counts, {{"condition", "clean"}});
}

ValidationReport run_validation(const Detector& detector, const synth::Dataset& data,
                                const ValidationOptions& options) {
  const std::size_t n = limit(data, options.max_images);
  require(n > 0, ErrorCode::kEmptyCorpus, "validation dataset is empty");
  std::vector<ImageCounts> clean, bad;
  for (std::size_t i = 0; i < n; ++i) {
    const Image img = data.load_image(i);
    const auto& gts = data.annotation(i).instances;
    clean.push_back(score_image(detector, img, gts));
    Rng rng = make_rng(options.seed, i, streams::kDeterioration);
    const auto stack = degrade::training_augmentation_stack(rng, 1, 1, options.deterioration);
    bad.push_back(score_image(detector, degrade::apply_all(stack, img), gts));
  }
  return {aggregate(clean, {{"condition", "clean"}}), aggregate(bad, {{"condition", "deteriorated"}})};
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kScale: return "scale";
    case SweepAxis::kPitch: return "pitch";
    case SweepAxis::kBlur: return "blur";
    case SweepAxis::kDimming: return "dimming";
    case SweepAxis::kNoise: return "noise";
  }
  return "?";
}

SweepAxis axis_from_string(std::string_view name) {
  for (SweepAxis a : {SweepAxis::kScale, SweepAxis::kPitch, SweepAxis::kBlur, SweepAxis::kDimming,
                      SweepAxis::kNoise}) {
    if (to_string(a) == name) return a;
  }
  if (name == "gaussian_noise") return SweepAxis::kNoise;
  fail(ErrorCode::kInvalidArgument, "unknown sweep axis '" + std::string(name) + "'");
}

std::vector<double> default_levels(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kScale: return {0.5, 1, 2, 4, 8, 16, 32};
    case SweepAxis::kPitch: return {0, 10, 20, 30, 40, 50, 60};
    case SweepAxis::kBlur: return {3, 7, 11, 15};
    case SweepAxis::kDimming: return {10, 20, 30, 40};
    case SweepAxis::kNoise: return {15, 30, 45, 60};
  }
  return {};
}

SweepSpec SweepSpec::defaults(SweepAxis axis) {
  SweepSpec s;
  s.axis = axis;
  s.levels = default_levels(axis);
  return s;
}

void SweepSpec::validate() const {
  require(!levels.empty(), ErrorCode::kInvalidArgument, "sweep needs at least one level");
  require(images_per_level > 0, ErrorCode::kInvalidArgument, "images_per_level must be positive");
  require(area_fraction > 0.0 && area_fraction < 1.0, ErrorCode::kInvalidArgument, "area_fraction out of range");
  camera.validate();
  board.validate();
  for (double l : levels) {
    switch (axis) {
      case SweepAxis::kScale:
        require(l > 0.0 && l < 100.0, ErrorCode::kInvalidArgument, "scale levels are percentages in (0, 100)");
        break;
      case SweepAxis::kPitch:
        require(l >= 0.0 && l < 85.0, ErrorCode::kInvalidArgument, "pitch levels must lie in [0, 85)");
        break;
      case SweepAxis::kBlur:
        require(l >= 1.0 && std::floor(l) == l, ErrorCode::kInvalidArgument, "blur levels are integer kernels");
        break;
      case SweepAxis::kDimming:
      case SweepAxis::kNoise:
        require(l >= 0.0, ErrorCode::kInvalidArgument, "levels must be non-negative");
        break;
    }
  }
}

void to_json(nlohmann::json& j, const SweepSpec& s) {
  j = nlohmann::json{{"axis", to_string(s.axis)},
                     {"levels", s.levels},
                     {"images_per_level", s.images_per_level},
                     {"camera", {{"width", s.camera.width}, {"height", s.camera.height},
                                 {"focal_px", s.camera.focal_px}}},
                     {"board", {{"circumradius", s.board.circumradius}, {"patch_radius", s.board.patch_radius},
                                {"black_level", s.board.black_level}, {"white_level", s.board.white_level}}},
                     {"area_fraction", s.area_fraction},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SweepSpec& s) {
  SweepSpec d = SweepSpec::defaults(SweepAxis::kScale);
  if (j.contains("axis")) d = SweepSpec::defaults(axis_from_string(j.at("axis").get<std::string>()));
  for (const auto& [key, v] : j.items()) {
    if (key == "axis") continue;
    if (key == "levels") d.levels = v.get<std::vector<double>>();
    else if (key == "images_per_level") d.images_per_level = v.get<int>();
    else if (key == "area_fraction") d.area_fraction = v.get<double>();
    else if (key == "seed") d.seed = v.get<std::uint64_t>();
    else if (key == "camera") {
      for (const auto& [ck, cv] : v.items()) {
        if (ck == "width") d.camera.width = cv.get<int>();
        else if (ck == "height") d.camera.height = cv.get<int>();
        else if (ck == "focal_px") d.camera.focal_px = cv.get<double>();
        else fail(ErrorCode::kInvalidArgument, "unknown camera key '" + ck + "'");
      }
    } else if (key == "board") {
      for (const auto& [bk, bv] : v.items()) {
        if (bk == "circumradius") d.board.circumradius = bv.get<double>();
        else if (bk == "patch_radius") d.board.patch_radius = bv.get<double>();
        else if (bk == "black_level") d.board.black_level = bv.get<int>();
        else if (bk == "white_level") d.board.white_level = bv.get<int>();
        else fail(ErrorCode::kInvalidArgument, "unknown board key '" + bk + "'");
      }
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown sweep key '" + key + "'");
    }
  }
  d.validate();
  s = d;
}

BoardScene sweep_scene(const SweepSpec& spec, double level, int index) {
  Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(index), streams::kSweep);
  HexBoardSpec board = spec.board;
  board.type_id = index % patch::kNumTypes;
  board.vertex_phase = 0.0;
  const double area = spec.axis == SweepAxis::kScale ? level / 100.0 : spec.area_fraction;
  const double pitch = spec.axis == SweepAxis::kPitch ? level : 0.0;
  const std::uint64_t bg_seed = rng();
  // Pose draws come after the background seed so every axis sees the same
  // sequence for a given index.
  Rng pose_rng(rng());
  const BoardPose pose = random_board_pose(pose_rng, spec.camera, area, pitch);
  const Image background = synth::procedural_background(bg_seed, spec.camera.width, spec.camera.height);
  BoardScene scene = render_board_scene(board, spec.camera, pose, background);

  degrade::DegradationSpec deg;
  switch (spec.axis) {
    case SweepAxis::kScale:
    case SweepAxis::kPitch:
      return scene;
    case SweepAxis::kBlur:
      deg = degrade::DegradationSpec::box_blur(static_cast<int>(level));
      break;
    case SweepAxis::kDimming:
      deg = degrade::DegradationSpec::dimming(level);
      break;
    case SweepAxis::kNoise:
      deg = degrade::DegradationSpec::gaussian_noise(level, rng());
      break;
  }
  scene.image = degrade::apply(deg, scene.image);
  return scene;
}

std::vector<EvalReport> run_sweep(const Detector& detector, const SweepSpec& spec, const SweepProgress& progress) {
  spec.validate();
  std::vector<EvalReport> reports;
  for (double level : spec.levels) {
    std::vector<ImageCounts> counts;
    for (int i = 0; i < spec.images_per_level; ++i) {
      const BoardScene scene = sweep_scene(spec, level, i);
      const std::vector<model::Detection> dets = detector(scene.image);
      HexBoardSpec board = spec.board;
      board.type_id = i % patch::kNumTypes;
      const HexagonVerdicts v = hexagon_consistency_check(dets, board, scene.board_to_image);
      ImageCounts c;
      c.n_ground_truth = 6;
      c.n_predictions = dets.size();
      c.n_matched = static_cast<std::size_t>(v.hits);
      c.n_id_correct = static_cast<std::size_t>(v.id_correct);
      counts.push_back(c);
      if (progress) progress(level, i + 1, spec.images_per_level);
    }
    reports.push_back(aggregate(counts, {{"axis", to_string(spec.axis)}, {"level", level}}));
  }
  return reports;
}

std::string sweep_csv(const SweepSpec& spec, const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "metric";
  for (double l : spec.levels) out << ',' << l;
  out << '\n';
  auto row = [&](const char* name, auto get) {
    out << name;
    for (const EvalReport& r : reports) out << ',' << get(r);
    out << '\n';
  };
  row("detection_score", [](const EvalReport& r) { return r.detection_score; });
  row("id_matching_score", [](const EvalReport& r) { return r.id_matching_score; });
  row("average_false_alarm", [](const EvalReport& r) { return r.average_false_alarm; });
  return out.str();
}

}  // namespace keypatch::eval
