// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keypatch/image.hpp"
#include "keypatch/nn.hpp"

namespace keypatch::model {

inline constexpr int kDetectorChannels = 65;
inline constexpr int kIdChannels = 5;

struct ModelConfig {
  // conv1a, conv1b, conv2a, conv2b, conv3a, conv3b, conv4a, conv4b
  std::array<int, 8> encoder_channels{64, 64, 64, 64, 128, 128, 128, 128};
  int detector_head_width = 256;    // convPa
  int descriptor_head_width = 256;  // convDa
  int descriptor_width = 256;       // convDb, input of the ID adaptation layer
  float detect_threshold = 0.015f;
  int nms_radius = 4;
  bool background_veto = true;
  bool subpixel = true;

  // Reduced widths for single-core training runs.
  static ModelConfig compact();

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct NetworkOutput {
  nn::Tensor detector_logits;  // 65 x H/8 x W/8
  nn::Tensor id_logits;        // 5 x H/8 x W/8
};

struct Detection {
  double x = 0.0;
  double y = 0.0;
  int pixel_x = 0;  // heatmap peak
  int pixel_y = 0;
  double confidence = 0.0;
  int type_id = -1;  // -1 until decode_ids
  double type_confidence = 0.0;
};

// Layer order; the first twelve carry the public SuperPoint names.
enum Layer : int {
  kConv1a, kConv1b, kConv2a, kConv2b, kConv3a, kConv3b, kConv4a, kConv4b,
  kConvPa, kConvPb, kConvDa, kConvDb,
  kAdaptP, kAdaptD,
  kNumLayers
};

inline bool is_adaptation_layer(int layer) { return layer == kAdaptP || layer == kAdaptD; }

// Intermediate tensors kept for the backward pass.
struct Activations {
  nn::Tensor input;
  std::array<nn::Tensor, 8> encoder;   // post-ReLU conv outputs
  std::array<nn::Tensor, 3> pooled;
  std::array<std::vector<std::uint32_t>, 3> pool_argmax;
  nn::Tensor det_hidden, semi, id_hidden, desc;
  NetworkOutput output;
};

struct Gradients {
  std::array<nn::ConvGrad, kNumLayers> layers;

  double norm(int layer) const;
  void zero();
  void scale(float s);
};

class SuperPointNet {
 public:
  explicit SuperPointNet(const ModelConfig& cfg, std::uint64_t init_seed = 0);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }

  // image: 1 x H x W in [0, 1]; H and W divisible by 8.
  NetworkOutput forward(const nn::Tensor& image) const;
  NetworkOutput forward(const nn::Tensor& image, Activations& acts, nn::Workspace& ws) const;

  // Accumulates into grads. With backbone == false only the adaptation
  // layers receive gradient and the backbone pass is skipped.
  void backward(const Activations& acts, const nn::Tensor& grad_detector, const nn::Tensor& grad_id,
                Gradients& grads, bool backbone, nn::Workspace& ws) const;

  Gradients make_gradients() const;

  std::array<nn::Conv2d, kNumLayers>& layers() { return layers_; }
  const std::array<nn::Conv2d, kNumLayers>& layers() const { return layers_; }

  // Re-initializes one layer; adaptation layers get their dedicated init.
  void init_layer(int layer, std::uint64_t seed);

  std::size_t parameter_count() const;

 private:
  ModelConfig cfg_;
  std::array<nn::Conv2d, kNumLayers> layers_;
};

nn::Tensor image_to_tensor(const Image& img);  // gray or RGB (converted to luma)

// Per-cell softmax, dustbin dropped, threshold, greedy NMS by descending
// confidence. Optional 3x3 probability-weighted refinement of each peak.
std::vector<Detection> decode_keypoints(const NetworkOutput& out, float threshold, int nms_radius,
                                        bool subpixel = true);

// Assigns type_id from the cell's ID softmax; background-argmax cells are
// dropped when veto is set.
std::vector<Detection> decode_ids(const NetworkOutput& out, std::vector<Detection> detections,
                                  bool background_veto = true);

// Full-resolution keypoint probability map (H x W).
nn::Tensor keypoint_heatmap(const NetworkOutput& out);

std::vector<Detection> detect(const SuperPointNet& net, const Image& img);

// ---- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::vector<int> shape;
  std::vector<float> values;
};

// Container: magic "KPCKPT01", u32 version, u64 header length, JSON header
// (format, format_version, tensor table, plus caller fields such as the
// model config, epoch and master seed), then little-endian float32 blobs.
void write_container(const std::filesystem::path& path, const nlohmann::json& header_fields,
                     const std::map<std::string, NamedTensor>& tensors);


void save_checkpoint(const std::filesystem::path& path, const SuperPointNet& net, int epoch, std::uint64_t master_seed,
                     const std::map<std::string, NamedTensor>& extra_tensors = {},
                     const nlohmann::json* extra_header = nullptr);

struct LoadedCheckpoint {
  SuperPointNet net;
  int epoch = 0;
  std::uint64_t master_seed = 0;
  std::map<std::string, NamedTensor> extra_tensors;
  std::string extra_header;  // serialized JSON, "{}" when absent
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Maps public SuperPoint encoder/head weights into `net`; the adaptation
// layers keep (or receive) their fresh initialization. In strict mode any
// missing backbone tensor is an error; shape mismatches always are.
void load_pretrained(const std::filesystem::path& path, SuperPointNet& net, bool strict, std::uint64_t adapt_seed = 0);

// Raw container reader shared by the loaders.
std::map<std::string, NamedTensor> read_tensors(const std::filesystem::path& path, std::string* header_json);

std::string tensor_name(int layer, bool bias);

}  // namespace keypatch::model
