// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace keypatch::nn {

// Planar (C, H, W) float tensor for a single image.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  float* plane(int c) { return data.data() + c * plane_size(); }
  const float* plane(int c) const { return data.data() + c * plane_size(); }
  float& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }

  void resize(int c, int h, int w);
  void zero();
};

// Same-padded, stride-1 convolution. Weights are (out, in, k, k) row-major,
// matching the usual deep-learning checkpoint layout.
struct Conv2d {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  std::vector<float> weight;
  std::vector<float> bias;

  Conv2d() = default;
  Conv2d(std::string name, int in, int out, int kernel);

  std::size_t weight_count() const { return weight.size(); }
};

struct ConvGrad {
  std::vector<float> weight;
  std::vector<float> bias;

  void resize_like(const Conv2d& conv);
  void zero();
};

// Scratch buffers reused across calls; one per thread.
struct Workspace {
  std::vector<float> columns;
  std::vector<float> grad_columns;
};

void conv2d_forward(const Conv2d& conv, const Tensor& in, Tensor& out, bool relu, Workspace& ws);

// Accumulates parameter gradients into `grad` and, if grad_in is non-null,
// overwrites *grad_in with the input gradient.
void conv2d_backward(const Conv2d& conv, const Tensor& in, const Tensor& grad_out, Tensor* grad_in, ConvGrad* grad,
                     Workspace& ws);

// grad *= (activation > 0); `activation` is the post-ReLU output.
void relu_backward(const Tensor& activation, Tensor& grad);

void maxpool2x2_forward(const Tensor& in, Tensor& out, std::vector<std::uint32_t>& argmax);
void maxpool2x2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, int in_height,
                         int in_width, Tensor& grad_in);

}  // namespace keypatch::nn
