// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// keypatch: design preview, dataset generation, training, inference,
// validation and sweeps.

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "keypatch/background.hpp"
#include "keypatch/config.hpp"
#include "keypatch/dataset_io.hpp"
#include "keypatch/error.hpp"
#include "keypatch/experiments.hpp"
#include "keypatch/model.hpp"
#include "keypatch/patch_designs.hpp"
#include "keypatch/random.hpp"
#include "keypatch/synth.hpp"
#include "keypatch/training.hpp"

namespace fs = std::filesystem;
using keypatch::ErrorCode;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kConstraintInfeasible:
      return kExitConfig;
    case ErrorCode::kEmptyCorpus:
    case ErrorCode::kAnnotationInconsistent:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kRecordCorrupt:
    case ErrorCode::kWeightMismatch:
    case ErrorCode::kIoError:
      return kExitData;
    default:
      return kExitRuntime;
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) keypatch::fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".keypatch-write-probe";
  std::ofstream out(probe);
  if (ec || !out) keypatch::fail(ErrorCode::kInvalidArgument, "output directory " + dir.string() + " is not writable");
  out.close();
  fs::remove(probe, ec);
}

int worker_count() {
  if (const char* env = std::getenv("KEYPATCH_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

keypatch::RunConfig load_config(const std::string& path) {
  return path.empty() ? keypatch::RunConfig{} : keypatch::load_run_config(path);
}

// ---- render ---------------------------------------------------------------

struct RenderArgs {
  std::string out;
  int radius = 64;
  double rotation_deg = 0.0;
  int black = 0;
  int white = 255;
};

void cmd_render(const RenderArgs& a) {
  if (a.radius < keypatch::patch::kMinRadiusPx) {
    keypatch::fail(ErrorCode::kInvalidArgument, "radius must be at least " +
                                                    std::to_string(keypatch::patch::kMinRadiusPx) + " px");
  }
  ensure_writable_dir(a.out);
  const auto& designs = keypatch::patch::canonical_designs();
  for (const auto& spec : designs) {
    auto raster = keypatch::patch::render_patch(spec, a.radius, a.black, a.white, a.rotation_deg * M_PI / 180.0);
    keypatch::write_png(raster.pixels, fs::path(a.out) / ("type_" + std::to_string(spec.type_id) + ".png"));
  }
  write_json(fs::path(a.out) / "designs.json", keypatch::patch::designs_to_json());
  std::cerr << "wrote " << designs.size() << " previews to " << a.out << "\n";
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> count;
  std::optional<std::uint64_t> seed;
  std::string split = "train";
};

void cmd_generate(const GenerateArgs& a) {
  keypatch::RunConfig cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const bool validation = a.split == "validation";
  if (!validation && a.split != "train") {
    keypatch::fail(ErrorCode::kInvalidArgument, "split must be 'train' or 'validation'");
  }
  const std::uint64_t count = a.count ? *a.count : (validation ? cfg.generate.validation_count : cfg.generate.count);
  if (a.count) (validation ? cfg.generate.validation_count : cfg.generate.count) = count;
  cfg.generate.synth.validate();

  const auto corpus = keypatch::synth::open_corpus(cfg.generate.backgrounds);
  if (corpus->size() == 0) {
    keypatch::fail(ErrorCode::kEmptyCorpus, "background corpus '" + cfg.generate.backgrounds + "' is empty");
  }
  ensure_writable_dir(a.out);
  keypatch::save_run_config(cfg, fs::path(a.out) / "config.json");

  keypatch::synth::DatasetWriter writer(a.out);
  const std::uint64_t stream = validation ? keypatch::streams::kValidationSamples : keypatch::streams::kTrainSamples;
  std::vector<std::uint64_t> todo;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!writer.has_sample(i)) todo.push_back(i);
  }
  std::cerr << "generating " << todo.size() << " of " << count << " samples (" << count - todo.size()
            << " already present)\n";

  std::atomic<std::size_t> next{0}, done{0};
  std::mutex err_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      try {
        const std::uint64_t i = todo[k];
        auto sample = keypatch::synth::synthesize_sample(keypatch::child_seed(cfg.seed, i, stream), *corpus,
                                                         cfg.generate.synth);
        sample.annotation.index = i;
        writer.write(sample.image, sample.annotation);
        const std::size_t d = ++done;
        if (d % 500 == 0) std::cerr << "  " << d << "/" << todo.size() << "\n";
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
        next = todo.size();
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_workers = std::min<int>(worker_count(), std::max<std::size_t>(todo.size(), 1));
  for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  keypatch::synth::DatasetManifest manifest;
  manifest.seed = cfg.seed;
  manifest.count = count;
  manifest.split = a.split;
  manifest.config = nlohmann::json(cfg.generate);
  writer.finalize(manifest);
  std::cerr << "dataset complete: " << a.out << "\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string validation;
  std::string pretrained;
  std::string out;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
  std::size_t validation_images = 0;
  bool fresh = false;
};

void cmd_train(const TrainArgs& a) {
  keypatch::RunConfig cfg = load_config(a.config);
  if (a.seed) cfg.seed = cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  cfg.train.validate();
  const keypatch::synth::Dataset data = keypatch::synth::read_dataset(a.data);
  std::optional<keypatch::synth::Dataset> val;
  if (!a.validation.empty()) val = keypatch::synth::read_dataset(a.validation);

  ensure_writable_dir(a.out);
  keypatch::save_run_config(cfg, fs::path(a.out) / "config.json");

  keypatch::model::SuperPointNet net(cfg.model, keypatch::child_seed(cfg.seed, 0, keypatch::streams::kInit));
  const bool pretrained = !a.pretrained.empty();
  if (pretrained) keypatch::model::load_pretrained(a.pretrained, net, true, cfg.seed);

  keypatch::train::TrainOptions options;
  options.pretrained = pretrained;
  options.resume = !a.fresh;
  if (val) {
    options.validator = [&](const keypatch::model::SuperPointNet& m) {
      return keypatch::eval::evaluate_clean(keypatch::eval::model_detector(m), *val, a.validation_images);
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  options.progress = [&](const keypatch::train::EpochMetrics& m) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "epoch " << m.epoch << " lr " << m.lr << " loss " << m.loss_total << " (det " << m.loss_detector
              << ", desc " << m.loss_descriptor << ")";
    if (m.val_detection) std::cerr << " val det " << *m.val_detection << " id " << *m.val_id << " fa " << *m.val_false_alarm;
    std::cerr << " [" << s << " s]\n";
  };
  const auto result = keypatch::train::train(cfg.train, data, net, a.out, options);
  std::cerr << "final checkpoint: " << result.final_checkpoint.string() << "\n";
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::vector<std::string> images;
  std::string out;
  std::optional<float> threshold;
  std::optional<int> nms;
  bool no_veto = false;
};

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> paths;
  for (const auto& pattern : patterns) {
    glob_t g{};
    if (glob(pattern.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
  }
  std::sort(paths.begin(), paths.end());
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  return paths;
}

keypatch::model::SuperPointNet load_net(const std::string& path, std::optional<float> threshold,
                                        std::optional<int> nms, bool no_veto) {
  auto ck = keypatch::model::load_checkpoint(path);
  auto& mc = ck.net.mutable_config();
  if (threshold) mc.detect_threshold = *threshold;
  if (nms) mc.nms_radius = *nms;
  if (no_veto) mc.background_veto = false;
  mc.validate();
  return std::move(ck.net);
}

void cmd_infer(const InferArgs& a) {
  const auto net = load_net(a.checkpoint, a.threshold, a.nms, a.no_veto);
  const auto paths = expand_globs(a.images);
  if (paths.empty()) keypatch::fail(ErrorCode::kIoError, "no images match the given pattern(s)");
  const auto detector = keypatch::eval::model_detector(net);
  nlohmann::json results = nlohmann::json::array();
  for (const auto& p : paths) {
    const keypatch::Image img = keypatch::read_image_rgb(p);
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : detector(img)) {
      dets.push_back({{"x", d.x}, {"y", d.y}, {"confidence", d.confidence}, {"type_id", d.type_id},
                      {"type_confidence", d.type_confidence}});
    }
    results.push_back({{"image", p}, {"width", img.width()}, {"height", img.height()}, {"detections", dets}});
    std::cerr << p << ": " << dets.size() << " detections\n";
  }
  write_json(a.out, {{"checkpoint", a.checkpoint}, {"model_config", net.config()}, {"images", results}});
}

// ---- validate -------------------------------------------------------------

struct ValidateArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t max_images = 0;
  std::uint64_t seed = 0;
};

void cmd_validate(const ValidateArgs& a) {
  const auto net = load_net(a.checkpoint, std::nullopt, std::nullopt, false);
  const auto data = keypatch::synth::read_dataset(a.data);
  keypatch::eval::ValidationOptions opt;
  opt.seed = a.seed;
  opt.max_images = a.max_images;
  const auto report = keypatch::eval::run_validation(keypatch::eval::model_detector(net), data, opt);
  const nlohmann::json j{{"checkpoint", a.checkpoint}, {"data", a.data}, {"seed", a.seed},
                         {"clean", report.clean}, {"deteriorated", report.deteriorated}};
  if (a.out.empty()) std::cout << j.dump(2) << '\n';
  else write_json(a.out, j);
  std::cerr << "clean: detection " << report.clean.detection_score << " id " << report.clean.id_matching_score
            << " false alarm " << report.clean.average_false_alarm << "\n";
  std::cerr << "deteriorated: detection " << report.deteriorated.detection_score << " id "
            << report.deteriorated.id_matching_score << " false alarm " << report.deteriorated.average_false_alarm
            << "\n";
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::string checkpoint;
  std::string config;
  std::string axis;
  std::vector<double> levels;
  std::optional<int> images_per_level;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void cmd_sweep(const SweepArgs& a) {
  keypatch::RunConfig cfg = load_config(a.config);
  keypatch::eval::SweepSpec spec = cfg.sweep;
  const auto axis = keypatch::eval::axis_from_string(a.axis);
  if (axis != spec.axis) {
    spec.axis = axis;
    spec.levels = keypatch::eval::default_levels(axis);
  }
  if (!a.levels.empty()) spec.levels = a.levels;
  if (a.images_per_level) spec.images_per_level = *a.images_per_level;
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  const auto net = load_net(a.checkpoint, std::nullopt, std::nullopt, false);
  ensure_writable_dir(a.out);
  cfg.sweep = spec;
  keypatch::save_run_config(cfg, fs::path(a.out) / "config.json");

  const auto reports = keypatch::eval::run_sweep(
      keypatch::eval::model_detector(net), spec, [](double level, int done, int total) {
        if (done == total) std::cerr << "level " << level << " done\n";
      });
  write_json(fs::path(a.out) / "reports.json", {{"checkpoint", a.checkpoint}, {"spec", spec}, {"reports", reports}});
  std::ofstream(fs::path(a.out) / "sweep.csv") << keypatch::eval::sweep_csv(spec, reports);
  std::cerr << keypatch::eval::sweep_csv(spec, reports);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keypatch: keypoint patch synthesis, training and evaluation"};
  app.require_subcommand(1);

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Write previews of the four patch designs");
  render->add_option("--out", ra.out, "Output directory")->required();
  render->add_option("--radius", ra.radius, "Patch radius in pixels");
  render->add_option("--rotation", ra.rotation_deg, "Rotation in degrees");
  render->add_option("--black", ra.black, "Black level");
  render->add_option("--white", ra.white, "White level");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Synthesize a labeled dataset");
  generate->add_option("--config", ga.config, "Run configuration (JSON)");
  generate->add_option("--out", ga.out, "Dataset directory")->required();
  generate->add_option("--count", ga.count, "Number of images");
  generate->add_option("--seed", ga.seed, "Master seed");
  generate->add_option("--split", ga.split, "train or validation");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the detector");
  train->add_option("--config", ta.config, "Run configuration (JSON)");
  train->add_option("--data", ta.data, "Training dataset")->required();
  train->add_option("--validation", ta.validation, "Validation dataset");
  train->add_option("--validation-images", ta.validation_images, "Cap on validation images (0 = all)");
  train->add_option("--pretrained", ta.pretrained, "Pretrained SuperPoint weights (converted container)");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--epochs", ta.epochs, "Override epochs");
  train->add_option("--batch-size", ta.batch_size, "Override batch size");
  train->add_option("--seed", ta.seed, "Override master seed");
  train->add_flag("--fresh", ta.fresh, "Ignore an existing last.ckpt");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Detect keypoint patches in images");
  infer->add_option("--checkpoint", ia.checkpoint, "Checkpoint")->required();
  infer->add_option("--images", ia.images, "Image paths or glob patterns")->required();
  infer->add_option("--out", ia.out, "Detections JSON")->required();
  infer->add_option("--threshold", ia.threshold, "Detection threshold");
  infer->add_option("--nms", ia.nms, "NMS radius in pixels");
  infer->add_flag("--no-veto", ia.no_veto, "Keep detections whose cell is classified as background");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Score a checkpoint on a labeled dataset");
  validate->add_option("--checkpoint", va.checkpoint, "Checkpoint")->required();
  validate->add_option("--data", va.data, "Validation dataset")->required();
  validate->add_option("--out", va.out, "Report JSON (stdout if omitted)");
  validate->add_option("--max-images", va.max_images, "Cap on images (0 = all)");
  validate->add_option("--seed", va.seed, "Deterioration seed");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Hexagon-board sweep over scale, pitch or a deterioration");
  sweep->add_option("--checkpoint", sa.checkpoint, "Checkpoint")->required();
  sweep->add_option("--config", sa.config, "Run configuration (JSON)");
  sweep->add_option("--axis", sa.axis, "scale, pitch, blur, dimming or noise")->required();
  sweep->add_option("--levels", sa.levels, "Levels (defaults per axis)");
  sweep->add_option("--images-per-level", sa.images_per_level, "Images per level");
  sweep->add_option("--seed", sa.seed, "Scene seed");
  sweep->add_option("--out", sa.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*render) cmd_render(ra);
    else if (*generate) cmd_generate(ga);
    else if (*train) cmd_train(ta);
    else if (*infer) cmd_infer(ia);
    else if (*validate) cmd_validate(va);
    else if (*sweep) cmd_sweep(sa);
  } catch (const keypatch::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error [invalid-argument]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io-error]: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
