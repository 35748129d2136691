// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"
#include "keypatch/random.hpp"

namespace keypatch::model {

namespace {

constexpr std::array<const char*, kNumLayers> kLayerNames = {
    "conv1a", "conv1b", "conv2a", "conv2b", "conv3a", "conv3b", "conv4a",
    "conv4b", "convPa", "convPb", "convDa", "convDb", "adaptP", "adaptD"};

constexpr int kCell = 8;

}  // namespace

ModelConfig ModelConfig::compact() {
  ModelConfig c;
  c.encoder_channels = {8, 8, 16, 16, 32, 32, 64, 64};
  c.detector_head_width = 64;
  c.descriptor_head_width = 64;
  c.descriptor_width = 32;
  return c;
}

void ModelConfig::validate() const {
  for (int ch : encoder_channels) require(ch > 0, ErrorCode::kInvalidArgument, "encoder widths must be positive");
  require(detector_head_width > 0 && descriptor_head_width > 0 && descriptor_width > 0, ErrorCode::kInvalidArgument,
          "head widths must be positive");
  require(detect_threshold > 0.0f && detect_threshold < 1.0f, ErrorCode::kInvalidArgument,
          "detect_threshold must lie in (0, 1)");
  require(nms_radius >= 0, ErrorCode::kInvalidArgument, "nms_radius must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"encoder_channels", c.encoder_channels},
                     {"detector_head_width", c.detector_head_width},
                     {"descriptor_head_width", c.descriptor_head_width},
                     {"descriptor_width", c.descriptor_width},
                     {"detect_threshold", c.detect_threshold},
                     {"nms_radius", c.nms_radius},
                     {"background_veto", c.background_veto},
                     {"subpixel", c.subpixel}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  for (const auto& [key, v] : j.items()) {
    if (key == "encoder_channels") d.encoder_channels = v.get<std::array<int, 8>>();
    else if (key == "detector_head_width") d.detector_head_width = v.get<int>();
    else if (key == "descriptor_head_width") d.descriptor_head_width = v.get<int>();
    else if (key == "descriptor_width") d.descriptor_width = v.get<int>();
    else if (key == "detect_threshold") d.detect_threshold = v.get<float>();
    else if (key == "nms_radius") d.nms_radius = v.get<int>();
    else if (key == "background_veto") d.background_veto = v.get<bool>();
    else if (key == "subpixel") d.subpixel = v.get<bool>();
    else fail(ErrorCode::kInvalidArgument, "unknown model config key '" + key + "'");
  }
  d.validate();
  c = d;
}

std::string tensor_name(int layer, bool bias) {
  return std::string(kLayerNames.at(layer)) + (bias ? ".bias" : ".weight");
}

double Gradients::norm(int layer) const {
  double acc = 0.0;
  for (float v : layers[layer].weight) acc += static_cast<double>(v) * v;
  for (float v : layers[layer].bias) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

void Gradients::zero() {
  for (auto& g : layers) g.zero();
}

void Gradients::scale(float s) {
  for (auto& g : layers) {
    for (float& v : g.weight) v *= s;
    for (float& v : g.bias) v *= s;
  }
}

SuperPointNet::SuperPointNet(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const auto& e = cfg_.encoder_channels;
  const std::array<std::array<int, 3>, kNumLayers> dims = {{
      {1, e[0], 3}, {e[0], e[1], 3}, {e[1], e[2], 3}, {e[2], e[3], 3},
      {e[3], e[4], 3}, {e[4], e[5], 3}, {e[5], e[6], 3}, {e[6], e[7], 3},
      {e[7], cfg_.detector_head_width, 3}, {cfg_.detector_head_width, kDetectorChannels, 1},
      {e[7], cfg_.descriptor_head_width, 3}, {cfg_.descriptor_head_width, cfg_.descriptor_width, 1},
      {kDetectorChannels, kDetectorChannels, 1}, {cfg_.descriptor_width, kIdChannels, 1},
  }};
  for (int l = 0; l < kNumLayers; ++l) {
    layers_[l] = nn::Conv2d(kLayerNames[l], dims[l][0], dims[l][1], dims[l][2]);
    init_layer(l, child_seed(init_seed, static_cast<std::uint64_t>(l), streams::kInit));
  }
}

void SuperPointNet::init_layer(int layer, std::uint64_t seed) {
  nn::Conv2d& conv = layers_.at(layer);
  Rng rng(seed);
  const double fan_in = static_cast<double>(conv.in_channels) * conv.kernel * conv.kernel;
  std::fill(conv.bias.begin(), conv.bias.end(), 0.0f);
  if (layer == kAdaptP) {
    // Near-identity so the pretrained detector logits pass through.
    for (int o = 0; o < conv.out_channels; ++o) {
      for (int i = 0; i < conv.in_channels; ++i) {
        conv.weight[o * conv.in_channels + i] = static_cast<float>((o == i ? 1.0 : 0.0) + uniform(rng, -0.01, 0.01));
      }
    }
    return;
  }
  const bool feeds_relu = layer != kConvPb && layer != kConvDb && layer != kAdaptD;
  const double bound = feeds_relu ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
  for (float& w : conv.weight) w = static_cast<float>(uniform(rng, -bound, bound));
}

std::size_t SuperPointNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Gradients SuperPointNet::make_gradients() const {
  Gradients g;
  for (int l = 0; l < kNumLayers; ++l) g.layers[l].resize_like(layers_[l]);
  return g;
}

namespace {

void check_input(const nn::Tensor& image) {
  if (image.channels != 1 || image.height <= 0 || image.width <= 0 || image.height % kCell != 0 ||
      image.width % kCell != 0) {
    fail(ErrorCode::kShapeError, "network input must be 1 x H x W with H, W divisible by 8; got " +
                                     std::to_string(image.channels) + " x " + std::to_string(image.height) + " x " +
                                     std::to_string(image.width));
  }
}

}  // namespace

NetworkOutput SuperPointNet::forward(const nn::Tensor& image) const {
  check_input(image);
  nn::Workspace ws;
  nn::Tensor a, b;
  std::vector<std::uint32_t> argmax;
  const nn::Tensor* x = &image;
  for (int stage = 0; stage < 4; ++stage) {
    nn::conv2d_forward(layers_[2 * stage], *x, a, true, ws);
    nn::conv2d_forward(layers_[2 * stage + 1], a, b, true, ws);
    if (stage < 3) {
      nn::maxpool2x2_forward(b, a, argmax);
      std::swap(a, b);
    }
    x = &b;
  }
  nn::Tensor trunk = std::move(b);
  NetworkOutput out;
  nn::conv2d_forward(layers_[kConvPa], trunk, a, true, ws);
  nn::Tensor semi;
  nn::conv2d_forward(layers_[kConvPb], a, semi, false, ws);
  nn::conv2d_forward(layers_[kAdaptP], semi, out.detector_logits, false, ws);
  nn::conv2d_forward(layers_[kConvDa], trunk, a, true, ws);
  nn::Tensor desc;
  nn::conv2d_forward(layers_[kConvDb], a, desc, false, ws);
  nn::conv2d_forward(layers_[kAdaptD], desc, out.id_logits, false, ws);
  return out;
}

NetworkOutput SuperPointNet::forward(const nn::Tensor& image, Activations& acts, nn::Workspace& ws) const {
  check_input(image);
  acts.input = image;
  const nn::Tensor* x = &acts.input;
  for (int stage = 0; stage < 4; ++stage) {
    nn::conv2d_forward(layers_[2 * stage], *x, acts.encoder[2 * stage], true, ws);
    nn::conv2d_forward(layers_[2 * stage + 1], acts.encoder[2 * stage], acts.encoder[2 * stage + 1], true, ws);
    if (stage < 3) {
      nn::maxpool2x2_forward(acts.encoder[2 * stage + 1], acts.pooled[stage], acts.pool_argmax[stage]);
      x = &acts.pooled[stage];
    }
  }
  const nn::Tensor& trunk = acts.encoder[7];
  nn::conv2d_forward(layers_[kConvPa], trunk, acts.det_hidden, true, ws);
  nn::conv2d_forward(layers_[kConvPb], acts.det_hidden, acts.semi, false, ws);
  nn::conv2d_forward(layers_[kAdaptP], acts.semi, acts.output.detector_logits, false, ws);
  nn::conv2d_forward(layers_[kConvDa], trunk, acts.id_hidden, true, ws);
  nn::conv2d_forward(layers_[kConvDb], acts.id_hidden, acts.desc, false, ws);
  nn::conv2d_forward(layers_[kAdaptD], acts.desc, acts.output.id_logits, false, ws);
  return acts.output;
}

void SuperPointNet::backward(const Activations& acts, const nn::Tensor& grad_detector, const nn::Tensor& grad_id,
                             Gradients& grads, bool backbone, nn::Workspace& ws) const {
  nn::Tensor g_semi, g_desc;
  nn::conv2d_backward(layers_[kAdaptP], acts.semi, grad_detector, backbone ? &g_semi : nullptr,
                      &grads.layers[kAdaptP], ws);
  nn::conv2d_backward(layers_[kAdaptD], acts.desc, grad_id, backbone ? &g_desc : nullptr, &grads.layers[kAdaptD], ws);
  if (!backbone) return;

  nn::Tensor g_hidden, g_trunk, g_trunk_d;
  nn::conv2d_backward(layers_[kConvPb], acts.det_hidden, g_semi, &g_hidden, &grads.layers[kConvPb], ws);
  nn::relu_backward(acts.det_hidden, g_hidden);
  nn::conv2d_backward(layers_[kConvPa], acts.encoder[7], g_hidden, &g_trunk, &grads.layers[kConvPa], ws);
  nn::conv2d_backward(layers_[kConvDb], acts.id_hidden, g_desc, &g_hidden, &grads.layers[kConvDb], ws);
  nn::relu_backward(acts.id_hidden, g_hidden);
  nn::conv2d_backward(layers_[kConvDa], acts.encoder[7], g_hidden, &g_trunk_d, &grads.layers[kConvDa], ws);
  for (std::size_t i = 0; i < g_trunk.data.size(); ++i) g_trunk.data[i] += g_trunk_d.data[i];

  nn::Tensor g = std::move(g_trunk), g_prev;
  for (int stage = 3; stage >= 0; --stage) {
    const int lb = 2 * stage + 1, la = 2 * stage;
    nn::relu_backward(acts.encoder[lb], g);
    nn::conv2d_backward(layers_[lb], acts.encoder[la], g, &g_prev, &grads.layers[lb], ws);
    nn::relu_backward(acts.encoder[la], g_prev);
    const nn::Tensor& stage_in = stage == 0 ? acts.input : acts.pooled[stage - 1];
    if (stage == 0) {
      nn::conv2d_backward(layers_[la], stage_in, g_prev, nullptr, &grads.layers[la], ws);
    } else {
      nn::conv2d_backward(layers_[la], stage_in, g_prev, &g, &grads.layers[la], ws);
      const nn::Tensor& before_pool = acts.encoder[2 * (stage - 1) + 1];
      nn::Tensor unpooled;
      nn::maxpool2x2_backward(g, acts.pool_argmax[stage - 1], before_pool.height, before_pool.width, unpooled);
      g = std::move(unpooled);
    }
  }
}

nn::Tensor image_to_tensor(const Image& img) {
  Image gray = to_gray(img);
  nn::Tensor t(1, gray.height(), gray.width());
  auto src = gray.data();
  for (std::size_t i = 0; i < src.size(); ++i) t.data[i] = src[i] / 255.0f;
  return t;
}

nn::Tensor keypoint_heatmap(const NetworkOutput& out) {
  const nn::Tensor& logits = out.detector_logits;
  const int rows = logits.height, cols = logits.width;
  nn::Tensor heat(1, rows * kCell, cols * kCell);
  std::array<double, kDetectorChannels> e{};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double mx = -1e300;
      for (int k = 0; k < kDetectorChannels; ++k) mx = std::max(mx, static_cast<double>(logits.at(k, r, c)));
      double sum = 0.0;
      for (int k = 0; k < kDetectorChannels; ++k) {
        e[k] = std::exp(logits.at(k, r, c) - mx);
        sum += e[k];
      }
      for (int k = 0; k < kDetectorChannels - 1; ++k) {
        heat.at(0, r * kCell + k / kCell, c * kCell + k % kCell) = static_cast<float>(e[k] / sum);
      }
    }
  }
  return heat;
}

std::vector<Detection> decode_keypoints(const NetworkOutput& out, float threshold, int nms_radius, bool subpixel) {
  nn::Tensor heat = keypoint_heatmap(out);
  const int h = heat.height, w = heat.width;
  struct Candidate {
    float p;
    int x, y;
  };
  std::vector<Candidate> cands;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float p = heat.at(0, y, x);
      if (p >= threshold) cands.push_back({p, x, y});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.p != b.p) return a.p > b.p;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<std::uint8_t> suppressed(static_cast<std::size_t>(h) * w, 0);
  const int r2 = nms_radius * nms_radius;
  std::vector<Detection> dets;
  for (const Candidate& c : cands) {
    if (suppressed[static_cast<std::size_t>(c.y) * w + c.x]) continue;
    Detection d;
    d.pixel_x = c.x;
    d.pixel_y = c.y;
    d.x = c.x;
    d.y = c.y;
    d.confidence = c.p;
    if (subpixel) {
      double sw = 0.0, sx = 0.0, sy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          int xx = c.x + dx, yy = c.y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          double p = heat.at(0, yy, xx);
          sw += p;
          sx += p * dx;
          sy += p * dy;
        }
      }
      d.x += sx / sw;
      d.y += sy / sw;
    }
    dets.push_back(d);
    for (int dy = -nms_radius; dy <= nms_radius; ++dy) {
      for (int dx = -nms_radius; dx <= nms_radius; ++dx) {
        if (dx * dx + dy * dy > r2) continue;
        int xx = c.x + dx, yy = c.y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        suppressed[static_cast<std::size_t>(yy) * w + xx] = 1;
      }
    }
  }
  return dets;
}

std::vector<Detection> decode_ids(const NetworkOutput& out, std::vector<Detection> detections, bool background_veto) {
  const nn::Tensor& logits = out.id_logits;
  std::vector<Detection> kept;
  kept.reserve(detections.size());
  for (Detection& d : detections) {
    const int r = d.pixel_y / kCell, c = d.pixel_x / kCell;
    double mx = -1e300;
    for (int k = 0; k < kIdChannels; ++k) mx = std::max(mx, static_cast<double>(logits.at(k, r, c)));
    std::array<double, kIdChannels> e{};
    double sum = 0.0;
    int best = 0;
    for (int k = 0; k < kIdChannels; ++k) {
      e[k] = std::exp(logits.at(k, r, c) - mx);
      sum += e[k];
      if (logits.at(k, r, c) > logits.at(best, r, c)) best = k;
    }
    if (best == kIdChannels - 1 && background_veto) continue;
    d.type_id = best;
    d.type_confidence = e[best] / sum;
    kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> detect(const SuperPointNet& net, const Image& img) {
  const ModelConfig& cfg = net.config();
  NetworkOutput out = net.forward(image_to_tensor(img));
  return decode_ids(out, decode_keypoints(out, cfg.detect_threshold, cfg.nms_radius, cfg.subpixel),
                    cfg.background_veto);
}

}  // namespace keypatch::model
