// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keypatch/dataset_io.hpp"
#include "keypatch/degradations.hpp"
#include "keypatch/matching.hpp"
#include "keypatch/model.hpp"
#include "keypatch/targets.hpp"

namespace keypatch::train {

// ---- losses ---------------------------------------------------------------

// Mean over cells of the 65-way cross-entropy. If grad is non-null it
// receives dLoss/dLogits.
double detector_loss(const nn::Tensor& logits, const synth::CellGrid& target, nn::Tensor* grad = nullptr);

// Hinge loss between the L2-normalized ID vector of each cell and one-hot
// targets. Patch cells carry a positive term weighted by lambda_d,
// background cells a unit-weight positive term; every cell adds the
// negative terms of its four wrong classes. Summed and divided by the
// total positive weight, so the loss stays on the detector's scale.
double descriptor_loss(const nn::Tensor& id_logits, const synth::CellGrid& target, double mp, double mn,
                       double lambda_d, nn::Tensor* grad = nullptr);

double total_loss(double detector, double descriptor, double lambda_descriptor);

// ---- configuration --------------------------------------------------------

struct TrainConfig {
  int epochs = 150;
  double lambda_descriptor = 0.2;
  double lambda_d = 640.0 * 480.0 / 5.0;
  double mp = 0.9;
  double mn = 0.2;
  double lr = 0.0005;
  double lr_decay = 0.2;
  std::vector<int> lr_decay_epochs{15, 45};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-6;
  int freeze_until_epoch = 15;
  int unfreeze_end_epoch = 30;
  int augment_from_epoch = 31;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int validation_every = 5;
  int checkpoint_every = 5;      // numbered checkpoints; last.ckpt is written every epoch
  int max_steps_per_epoch = 0;   // 0 = full pass
  degrade::AugmentationRanges augmentation;

  // Table defaults with every epoch boundary multiplied by `factor`.
  static TrainConfig scaled(double factor);

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

enum class Stage { kAdaptation, kFineTune, kAugmented };

// With no pretrained weights the adaptation stage is skipped.
Stage stage_for_epoch(const TrainConfig& cfg, int epoch, bool pretrained);
bool backbone_trainable(Stage stage);
double lr_for_epoch(const TrainConfig& cfg, int epoch);

// ---- optimizer ------------------------------------------------------------

// Adam with coupled L2 weight decay and one step counter per tensor, so
// layers that start training later get proper bias correction.
class Adam {
 public:
  explicit Adam(const model::SuperPointNet& net);

  void step(model::SuperPointNet& net, const model::Gradients& grads, double lr, const TrainConfig& cfg,
            bool backbone);

  std::map<std::string, model::NamedTensor> state_tensors() const;
  void load_state(const std::map<std::string, model::NamedTensor>& tensors);

 private:
  std::array<std::vector<float>, model::kNumLayers * 2> m_, v_;
  std::array<std::int64_t, model::kNumLayers * 2> t_{};
};

// ---- training loop --------------------------------------------------------

struct Sample {
  nn::Tensor image;  // 1 x H x W
  synth::CellTargets targets;
};

struct StepStats {
  double loss_detector = 0.0;
  double loss_descriptor = 0.0;
  double loss_total = 0.0;
};

class Trainer {
 public:
  Trainer(model::SuperPointNet& net, TrainConfig cfg, bool pretrained);

  // Forward/backward over the batch (losses averaged) and one optimizer
  // update of the parameters trainable at `epoch`.
  StepStats step(std::span<const Sample> batch, int epoch);

  const model::Gradients& gradients() const { return grads_; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  bool pretrained() const { return pretrained_; }

 private:
  model::SuperPointNet& net_;
  TrainConfig cfg_;
  bool pretrained_;
  model::Gradients grads_;
  Adam adam_;
  model::Activations acts_;
  nn::Workspace ws_;
  std::int64_t global_step_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss_detector = 0.0;
  double loss_descriptor = 0.0;
  double loss_total = 0.0;
  std::optional<double> val_detection;
  std::optional<double> val_id;
  std::optional<double> val_false_alarm;
};

void to_json(nlohmann::json& j, const EpochMetrics& m);

using Validator = std::function<eval::EvalReport(const model::SuperPointNet&)>;
using Progress = std::function<void(const EpochMetrics&)>;

struct TrainOptions {
  bool pretrained = false;
  bool resume = true;  // continue from out_dir/last.ckpt when present
  Validator validator;
  Progress progress;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::filesystem::path final_checkpoint;
};

// Converts an image and its annotation into a training sample; the image
// size must be divisible by 8.
Sample make_sample(const Image& image, const synth::SampleAnnotation& ann);

// Runs the staged schedule over the dataset, writing last.ckpt every epoch,
// epoch_XXXX.ckpt every checkpoint_every epochs and metrics.jsonl.
TrainResult train(const TrainConfig& cfg, const synth::Dataset& data, model::SuperPointNet& net,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

}  // namespace keypatch::train
