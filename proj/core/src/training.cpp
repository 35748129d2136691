// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"
#include "keypatch/random.hpp"

namespace keypatch::train {

namespace {

void ranges_to_json(nlohmann::json& j, const degrade::AugmentationRanges& r) {
  j = nlohmann::json{{"probability", r.probability},
                     {"motion_blur_min_px", r.motion_blur_min_px},
                     {"motion_blur_max_px", r.motion_blur_max_px},
                     {"noise_sigma_min", r.noise_sigma_min},
                     {"noise_sigma_max", r.noise_sigma_max},
                     {"brightness_min", r.brightness_min},
                     {"brightness_max", r.brightness_max}};
}

degrade::AugmentationRanges ranges_from_json(const nlohmann::json& j) {
  degrade::AugmentationRanges r;
  for (const auto& [key, v] : j.items()) {
    if (key == "probability") r.probability = v.get<double>();
    else if (key == "motion_blur_min_px") r.motion_blur_min_px = v.get<int>();
    else if (key == "motion_blur_max_px") r.motion_blur_max_px = v.get<int>();
    else if (key == "noise_sigma_min") r.noise_sigma_min = v.get<double>();
    else if (key == "noise_sigma_max") r.noise_sigma_max = v.get<double>();
    else if (key == "brightness_min") r.brightness_min = v.get<double>();
    else if (key == "brightness_max") r.brightness_max = v.get<double>();
    else fail(ErrorCode::kInvalidArgument, "unknown augmentation key '" + key + "'");
  }
  return r;
}

int scale_epoch(int epoch, double factor) { return std::max(1, static_cast<int>(std::lround(epoch * factor))); }

}  // namespace

TrainConfig TrainConfig::scaled(double factor) {
  require(factor > 0.0, ErrorCode::kInvalidArgument, "scale factor must be positive");
  TrainConfig c;
  c.epochs = scale_epoch(c.epochs, factor);
  for (int& e : c.lr_decay_epochs) e = scale_epoch(e, factor);
  c.freeze_until_epoch = scale_epoch(c.freeze_until_epoch, factor);
  c.unfreeze_end_epoch = scale_epoch(c.unfreeze_end_epoch, factor);
  c.augment_from_epoch = c.unfreeze_end_epoch + 1;
  c.validation_every = scale_epoch(c.validation_every, factor);
  c.checkpoint_every = scale_epoch(c.checkpoint_every, factor);
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    require(v > 0.0 && std::isfinite(v), ErrorCode::kInvalidArgument, std::string(name) + " must be positive");
  };
  positive(epochs, "epochs");
  positive(lambda_descriptor, "lambda_descriptor");
  positive(lambda_d, "lambda_d");
  positive(mp, "mp");
  positive(mn, "mn");
  positive(lr, "lr");
  positive(lr_decay, "lr_decay");
  positive(weight_decay, "weight_decay");
  positive(batch_size, "batch_size");
  positive(validation_every, "validation_every");
  positive(checkpoint_every, "checkpoint_every");
  require(mn < mp, ErrorCode::kInvalidArgument, "mn must be below mp");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0,
          ErrorCode::kInvalidArgument, "invalid Adam parameters");
  require(freeze_until_epoch >= 0 && freeze_until_epoch < unfreeze_end_epoch &&
              unfreeze_end_epoch < augment_from_epoch,
          ErrorCode::kInvalidArgument, "stage boundaries must satisfy freeze < unfreeze end < augment start");
  require(std::is_sorted(lr_decay_epochs.begin(), lr_decay_epochs.end()), ErrorCode::kInvalidArgument,
          "lr_decay_epochs must be ascending");
  for (int e : lr_decay_epochs) positive(e, "lr decay epoch");
  require(max_steps_per_epoch >= 0, ErrorCode::kInvalidArgument, "max_steps_per_epoch must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  nlohmann::json aug;
  ranges_to_json(aug, c.augmentation);
  j = nlohmann::json{{"epochs", c.epochs},
                     {"lambda_descriptor", c.lambda_descriptor},
                     {"lambda_d", c.lambda_d},
                     {"mp", c.mp},
                     {"mn", c.mn},
                     {"lr", c.lr},
                     {"lr_decay", c.lr_decay},
                     {"lr_decay_epochs", c.lr_decay_epochs},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"weight_decay", c.weight_decay},
                     {"freeze_until_epoch", c.freeze_until_epoch},
                     {"unfreeze_end_epoch", c.unfreeze_end_epoch},
                     {"augment_from_epoch", c.augment_from_epoch},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"validation_every", c.validation_every},
                     {"checkpoint_every", c.checkpoint_every},
                     {"max_steps_per_epoch", c.max_steps_per_epoch},
                     {"augmentation", aug}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") d.epochs = v.get<int>();
    else if (key == "lambda_descriptor") d.lambda_descriptor = v.get<double>();
    else if (key == "lambda_d") d.lambda_d = v.get<double>();
    else if (key == "mp") d.mp = v.get<double>();
    else if (key == "mn") d.mn = v.get<double>();
    else if (key == "lr") d.lr = v.get<double>();
    else if (key == "lr_decay") d.lr_decay = v.get<double>();
    else if (key == "lr_decay_epochs") d.lr_decay_epochs = v.get<std::vector<int>>();
    else if (key == "adam_beta1") d.adam_beta1 = v.get<double>();
    else if (key == "adam_beta2") d.adam_beta2 = v.get<double>();
    else if (key == "adam_eps") d.adam_eps = v.get<double>();
    else if (key == "weight_decay") d.weight_decay = v.get<double>();
    else if (key == "freeze_until_epoch") d.freeze_until_epoch = v.get<int>();
    else if (key == "unfreeze_end_epoch") d.unfreeze_end_epoch = v.get<int>();
    else if (key == "augment_from_epoch") d.augment_from_epoch = v.get<int>();
    else if (key == "batch_size") d.batch_size = v.get<int>();
    else if (key == "seed") d.seed = v.get<std::uint64_t>();
    else if (key == "validation_every") d.validation_every = v.get<int>();
    else if (key == "checkpoint_every") d.checkpoint_every = v.get<int>();
    else if (key == "max_steps_per_epoch") d.max_steps_per_epoch = v.get<int>();
    else if (key == "augmentation") d.augmentation = ranges_from_json(v);
    else fail(ErrorCode::kInvalidArgument, "unknown train config key '" + key + "'");
  }
  d.validate();
  c = d;
}

Stage stage_for_epoch(const TrainConfig& cfg, int epoch, bool pretrained) {
  if (pretrained && epoch <= cfg.freeze_until_epoch) return Stage::kAdaptation;
  if (epoch >= cfg.augment_from_epoch) return Stage::kAugmented;
  return Stage::kFineTune;
}

bool backbone_trainable(Stage stage) { return stage != Stage::kAdaptation; }

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int e : cfg.lr_decay_epochs) {
    if (epoch > e) lr *= cfg.lr_decay;
  }
  return lr;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(const model::SuperPointNet& net) {
  for (int l = 0; l < model::kNumLayers; ++l) {
    const nn::Conv2d& conv = net.layers()[l];
    m_[2 * l].assign(conv.weight.size(), 0.0f);
    v_[2 * l].assign(conv.weight.size(), 0.0f);
    m_[2 * l + 1].assign(conv.bias.size(), 0.0f);
    v_[2 * l + 1].assign(conv.bias.size(), 0.0f);
  }
}

void Adam::step(model::SuperPointNet& net, const model::Gradients& grads, double lr, const TrainConfig& cfg,
                bool backbone) {
  const float b1 = static_cast<float>(cfg.adam_beta1), b2 = static_cast<float>(cfg.adam_beta2);
  const float wd = static_cast<float>(cfg.weight_decay), eps = static_cast<float>(cfg.adam_eps);
  for (int l = 0; l < model::kNumLayers; ++l) {
    if (!backbone && !model::is_adaptation_layer(l)) continue;
    nn::Conv2d& conv = net.layers()[l];
    for (int part = 0; part < 2; ++part) {
      const int slot = 2 * l + part;
      std::vector<float>& w = part == 0 ? conv.weight : conv.bias;
      const std::vector<float>& g = part == 0 ? grads.layers[l].weight : grads.layers[l].bias;
      std::vector<float>& m = m_[slot];
      std::vector<float>& v = v_[slot];
      const std::int64_t t = ++t_[slot];
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
      const float step = static_cast<float>(lr / c1);
      const float root_c2 = static_cast<float>(std::sqrt(c2));
      for (std::size_t i = 0; i < w.size(); ++i) {
        const float gi = g[i] + wd * w[i];
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        w[i] -= step * m[i] / (std::sqrt(v[i]) / root_c2 + eps);
      }
    }
  }
}

std::map<std::string, model::NamedTensor> Adam::state_tensors() const {
  std::map<std::string, model::NamedTensor> out;
  model::NamedTensor steps;
  steps.shape = {static_cast<int>(t_.size())};
  for (int l = 0; l < model::kNumLayers; ++l) {
    for (int part = 0; part < 2; ++part) {
      const int slot = 2 * l + part;
      const std::string name = model::tensor_name(l, part == 1);
      out["adam.m." + name] = {{static_cast<int>(m_[slot].size())}, m_[slot]};
      out["adam.v." + name] = {{static_cast<int>(v_[slot].size())}, v_[slot]};
    }
  }
  for (std::int64_t t : t_) steps.values.push_back(static_cast<float>(t));
  out["adam.step"] = steps;
  return out;
}

void Adam::load_state(const std::map<std::string, model::NamedTensor>& tensors) {
  auto fetch = [&](const std::string& name, std::size_t count) -> const std::vector<float>& {
    auto it = tensors.find(name);
    if (it == tensors.end() || it->second.values.size() != count) {
      fail(ErrorCode::kWeightMismatch, "optimizer state " + name + " missing or mis-sized");
    }
    return it->second.values;
  };
  for (int l = 0; l < model::kNumLayers; ++l) {
    for (int part = 0; part < 2; ++part) {
      const int slot = 2 * l + part;
      const std::string name = model::tensor_name(l, part == 1);
      m_[slot] = fetch("adam.m." + name, m_[slot].size());
      v_[slot] = fetch("adam.v." + name, v_[slot].size());
    }
  }
  const auto& steps = fetch("adam.step", t_.size());
  for (std::size_t i = 0; i < t_.size(); ++i) t_[i] = static_cast<std::int64_t>(steps[i]);
}

// ---- Trainer ----------------------------------------------------------------

Trainer::Trainer(model::SuperPointNet& net, TrainConfig cfg, bool pretrained)
    : net_(net), cfg_(std::move(cfg)), pretrained_(pretrained), grads_(net.make_gradients()), adam_(net) {
  cfg_.validate();
}

StepStats Trainer::step(std::span<const Sample> batch, int epoch) {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const bool backbone = backbone_trainable(stage_for_epoch(cfg_, epoch, pretrained_));
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  grads_.zero();
  StepStats stats;
  nn::Tensor g_det, g_id;
  for (const Sample& s : batch) {
    const model::NetworkOutput& out = net_.forward(s.image, acts_, ws_);
    const double ld = detector_loss(out.detector_logits, s.targets.detector, &g_det);
    const double lq = descriptor_loss(out.id_logits, s.targets.id, cfg_.mp, cfg_.mn, cfg_.lambda_d, &g_id);
    if (!std::isfinite(ld) || !std::isfinite(lq)) {
      fail(ErrorCode::kTrainingDiverged,
           "non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(global_step_));
    }
    const float wq = static_cast<float>(cfg_.lambda_descriptor) * inv_b;
    for (float& v : g_det.data) v *= inv_b;
    for (float& v : g_id.data) v *= wq;
    net_.backward(acts_, g_det, g_id, grads_, backbone, ws_);
    stats.loss_detector += ld / batch.size();
    stats.loss_descriptor += lq / batch.size();
  }
  stats.loss_total = total_loss(stats.loss_detector, stats.loss_descriptor, cfg_.lambda_descriptor);
  adam_.step(net_, grads_, lr_for_epoch(cfg_, epoch), cfg_, backbone);
  ++global_step_;
  return stats;
}

// ---- loop -------------------------------------------------------------------

void to_json(nlohmann::json& j, const EpochMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"epoch", m.epoch},
                     {"lr", m.lr},
                     {"loss_detector", m.loss_detector},
                     {"loss_descriptor", m.loss_descriptor},
                     {"loss_total", m.loss_total},
                     {"val_detection", opt(m.val_detection)},
                     {"val_id", opt(m.val_id)},
                     {"val_false_alarm", opt(m.val_false_alarm)}};
}

Sample make_sample(const Image& image, const synth::SampleAnnotation& ann) {
  if (image.width() % 8 != 0 || image.height() % 8 != 0) {
    fail(ErrorCode::kShapeError, "training images must have sides divisible by 8, got " +
                                     std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  return Sample{model::image_to_tensor(image), synth::make_targets(ann)};
}

namespace {

constexpr std::size_t kCacheBudgetBytes = std::size_t{1} << 30;

void append_line(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::kIoError, "cannot append to " + path.string());
  out << j.dump() << '\n';
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const synth::Dataset& data, model::SuperPointNet& net,
                  const std::filesystem::path& out_dir, const TrainOptions& options) {
  cfg.validate();
  require(data.size() > 0, ErrorCode::kEmptyCorpus, "training dataset is empty");
  const synth::SampleAnnotation& first = data.annotation(0);
  if (first.width % 8 != 0 || first.height % 8 != 0) {
    fail(ErrorCode::kShapeError, "dataset image size " + std::to_string(first.width) + "x" +
                                     std::to_string(first.height) + " is not divisible by 8");
  }
  std::filesystem::create_directories(out_dir);
  const auto last_path = out_dir / "last.ckpt";
  const auto metrics_path = out_dir / "metrics.jsonl";

  Trainer trainer(net, cfg, options.pretrained);
  TrainResult result;
  int start_epoch = 1;
  if (options.resume && std::filesystem::exists(last_path)) {
    model::LoadedCheckpoint ck = model::load_checkpoint(last_path);
    if (!(ck.net.config() == net.config())) {
      fail(ErrorCode::kShapeError, "checkpoint in " + out_dir.string() + " has a different model config");
    }
    net.layers() = ck.net.layers();
    trainer.optimizer().load_state(ck.extra_tensors);
    start_epoch = ck.epoch + 1;
    // Keep only the metrics of completed epochs.
    std::vector<std::string> kept;
    if (std::ifstream in(metrics_path); in) {
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.at("epoch").get<int>() > ck.epoch) continue;
        EpochMetrics m;
        m.epoch = j.at("epoch");
        m.lr = j.at("lr");
        m.loss_detector = j.at("loss_detector");
        m.loss_descriptor = j.at("loss_descriptor");
        m.loss_total = j.at("loss_total");
        if (!j["val_detection"].is_null()) m.val_detection = j["val_detection"].get<double>();
        if (!j["val_id"].is_null()) m.val_id = j["val_id"].get<double>();
        if (!j["val_false_alarm"].is_null()) m.val_false_alarm = j["val_false_alarm"].get<double>();
        result.history.push_back(m);
        kept.push_back(line);
      }
    }
    std::ofstream out(metrics_path, std::ios::trunc);
    for (const auto& line : kept) out << line << '\n';
  } else {
    std::ofstream(metrics_path, std::ios::trunc);
  }

  const std::size_t n = data.size();
  const bool cache = n * static_cast<std::size_t>(first.width) * first.height <= kCacheBudgetBytes;
  std::vector<Image> cached;
  std::vector<synth::CellTargets> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = synth::make_targets(data.annotation(i));
  auto gray_image = [&](std::size_t i) {
    if (cache) {
      if (cached.empty()) {
        cached.reserve(n);
        for (std::size_t k = 0; k < n; ++k) cached.push_back(to_gray(data.load_image(k)));
      }
      return cached[i];
    }
    return to_gray(data.load_image(i));
  };

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    const Stage stage = stage_for_epoch(cfg, epoch, options.pretrained);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch), streams::kShuffle);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(shuffle, 0, static_cast<int>(i - 1)))]);
    }

    std::size_t steps = (n + batch - 1) / batch;
    if (cfg.max_steps_per_epoch > 0) steps = std::min(steps, static_cast<std::size_t>(cfg.max_steps_per_epoch));
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = lr_for_epoch(cfg, epoch);
    std::vector<Sample> samples;
    for (std::size_t s = 0; s < steps; ++s) {
      samples.clear();
      for (std::size_t k = s * batch; k < std::min(n, (s + 1) * batch); ++k) {
        const std::size_t idx = order[k];
        Image img = gray_image(idx);
        if (stage == Stage::kAugmented) {
          Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch) * n + idx, streams::kAugmentation);
          img = degrade::apply_all(
              degrade::training_augmentation_stack(rng, epoch, cfg.augment_from_epoch, cfg.augmentation), img);
        }
        samples.push_back(Sample{model::image_to_tensor(img), targets[idx]});
      }
      StepStats st = trainer.step(samples, epoch);
      metrics.loss_detector += st.loss_detector / steps;
      metrics.loss_descriptor += st.loss_descriptor / steps;
      metrics.loss_total += st.loss_total / steps;
    }

    if (options.validator && (epoch % cfg.validation_every == 0 || epoch == cfg.epochs)) {
      eval::EvalReport report = options.validator(net);
      metrics.val_detection = report.detection_score;
      metrics.val_id = report.id_matching_score;
      metrics.val_false_alarm = report.average_false_alarm;
    }

    nlohmann::json extra{{"train_config", cfg}, {"pretrained", options.pretrained}};
    model::save_checkpoint(last_path, net, epoch, cfg.seed, trainer.optimizer().state_tensors(), &extra);
    if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
      model::save_checkpoint(out_dir / name, net, epoch, cfg.seed, {}, &extra);
    }
    nlohmann::json line = metrics;
    append_line(metrics_path, line);
    result.history.push_back(metrics);
    if (options.progress) options.progress(metrics);
  }
  result.final_checkpoint = last_path;
  return result;
}

}  // namespace keypatch::train
