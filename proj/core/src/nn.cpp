// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/nn.hpp"

#include <algorithm>
#include <cstring>

#include <Eigen/Core>

#include "keypatch/error.hpp"

namespace keypatch::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Column buffer budget in floats; bounds memory on large inputs.
constexpr std::size_t kColumnBudget = 1u << 21;

int rows_per_chunk(int k_rows, int width, int height) {
  std::size_t per_row = static_cast<std::size_t>(k_rows) * width;
  int rows = static_cast<int>(std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, per_row)));
  return std::min(rows, height);
}

// Rows [y0, y1) of the k x k patch matrix, shape (in * k * k, (y1 - y0) * W).
void im2col(const Tensor& in, int k, int y0, int y1, float* cols) {
  const int w = in.width, h = in.height, pad = k / 2;
  const int n = (y1 - y0) * w;
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.plane(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
        const int dx = kx - pad;
        for (int y = y0; y < y1; ++y) {
          float* row = dst + static_cast<std::size_t>(y - y0) * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(sy) * w;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(w, w - dx);
          std::fill(row, row + x_lo, 0.0f);
          std::memcpy(row + x_lo, srow + x_lo + dx, sizeof(float) * std::max(0, x_hi - x_lo));
          std::fill(row + std::max(x_lo, x_hi), row + w, 0.0f);
        }
      }
    }
  }
}

void col2im_add(const float* cols, int k, int y0, int y1, Tensor& out) {
  const int w = out.width, h = out.height, pad = k / 2;
  const int n = (y1 - y0) * w;
  for (int c = 0; c < out.channels; ++c) {
    float* dst = out.plane(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
        const int dx = kx - pad;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const float* row = src + static_cast<std::size_t>(y - y0) * w;
          float* drow = dst + static_cast<std::size_t>(sy) * w;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(w, w - dx);
          for (int x = x_lo; x < x_hi; ++x) drow[x + dx] += row[x];
        }
      }
    }
  }
}

}  // namespace

void Tensor::resize(int c, int h, int w) {
  channels = c;
  height = h;
  width = w;
  data.resize(static_cast<std::size_t>(c) * h * w);
}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0f); }

Conv2d::Conv2d(std::string n, int in, int out, int k)
    : name(std::move(n)),
      in_channels(in),
      out_channels(out),
      kernel(k),
      weight(static_cast<std::size_t>(out) * in * k * k, 0.0f),
      bias(out, 0.0f) {}

void ConvGrad::resize_like(const Conv2d& conv) {
  weight.assign(conv.weight.size(), 0.0f);
  bias.assign(conv.bias.size(), 0.0f);
}

void ConvGrad::zero() {
  std::fill(weight.begin(), weight.end(), 0.0f);
  std::fill(bias.begin(), bias.end(), 0.0f);
}

void conv2d_forward(const Conv2d& conv, const Tensor& in, Tensor& out, bool relu, Workspace& ws) {
  if (in.channels != conv.in_channels) {
    fail(ErrorCode::kShapeError, conv.name + ": expected " + std::to_string(conv.in_channels) + " input channels, got " +
                                     std::to_string(in.channels));
  }
  const int h = in.height, w = in.width, k = conv.kernel;
  const int krows = conv.in_channels * k * k;
  out.resize(conv.out_channels, h, w);
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(h) * w;
  ConstMatMap wmat(conv.weight.data(), conv.out_channels, krows);

  if (k == 1) {
    ConstMatMap x(in.data.data(), conv.in_channels, plane);
    MatMap y(out.data.data(), conv.out_channels, plane);
    y.noalias() = wmat * x;
  } else {
    const int chunk = rows_per_chunk(krows, w, h);
    ws.columns.resize(static_cast<std::size_t>(krows) * chunk * w);
    for (int y0 = 0; y0 < h; y0 += chunk) {
      const int y1 = std::min(h, y0 + chunk);
      const int n = (y1 - y0) * w;
      im2col(in, k, y0, y1, ws.columns.data());
      ConstMatMap cols(ws.columns.data(), krows, n);
      StridedMap y(out.data.data() + static_cast<std::ptrdiff_t>(y0) * w, conv.out_channels, n,
                   Eigen::OuterStride<>(plane));
      y.noalias() = wmat * cols;
    }
  }

  for (int c = 0; c < conv.out_channels; ++c) {
    float* p = out.plane(c);
    const float b = conv.bias[c];
    if (relu) {
      for (std::ptrdiff_t i = 0; i < plane; ++i) p[i] = std::max(0.0f, p[i] + b);
    } else {
      for (std::ptrdiff_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

void conv2d_backward(const Conv2d& conv, const Tensor& in, const Tensor& grad_out, Tensor* grad_in, ConvGrad* grad,
                     Workspace& ws) {
  const int h = in.height, w = in.width, k = conv.kernel;
  const int krows = conv.in_channels * k * k;
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(h) * w;
  ConstMatMap wmat(conv.weight.data(), conv.out_channels, krows);

  if (grad) {
    for (int c = 0; c < conv.out_channels; ++c) {
      const float* g = grad_out.plane(c);
      double acc = 0.0;
      for (std::ptrdiff_t i = 0; i < plane; ++i) acc += g[i];
      grad->bias[c] += static_cast<float>(acc);
    }
  }
  if (grad_in) {
    grad_in->resize(conv.in_channels, h, w);
    grad_in->zero();
  }

  if (k == 1) {
    ConstMatMap x(in.data.data(), conv.in_channels, plane);
    ConstMatMap gy(grad_out.data.data(), conv.out_channels, plane);
    if (grad) {
      MatMap gw(grad->weight.data(), conv.out_channels, krows);
      gw.noalias() += gy * x.transpose();
    }
    if (grad_in) {
      MatMap gx(grad_in->data.data(), conv.in_channels, plane);
      gx.noalias() = wmat.transpose() * gy;
    }
    return;
  }

  const int chunk = rows_per_chunk(krows, w, h);
  ws.columns.resize(static_cast<std::size_t>(krows) * chunk * w);
  if (grad_in) ws.grad_columns.resize(ws.columns.size());
  for (int y0 = 0; y0 < h; y0 += chunk) {
    const int y1 = std::min(h, y0 + chunk);
    const int n = (y1 - y0) * w;
    ConstStridedMap gy(grad_out.data.data() + static_cast<std::ptrdiff_t>(y0) * w, conv.out_channels, n,
                       Eigen::OuterStride<>(plane));
    if (grad) {
      im2col(in, k, y0, y1, ws.columns.data());
      ConstMatMap cols(ws.columns.data(), krows, n);
      MatMap gw(grad->weight.data(), conv.out_channels, krows);
      gw.noalias() += gy * cols.transpose();
    }
    if (grad_in) {
      MatMap gcols(ws.grad_columns.data(), krows, n);
      gcols.noalias() = wmat.transpose() * gy;
      col2im_add(ws.grad_columns.data(), k, y0, y1, *grad_in);
    }
  }
}

void relu_backward(const Tensor& activation, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (activation.data[i] <= 0.0f) grad.data[i] = 0.0f;
  }
}

void maxpool2x2_forward(const Tensor& in, Tensor& out, std::vector<std::uint32_t>& argmax) {
  const int oh = in.height / 2, ow = in.width / 2;
  out.resize(in.channels, oh, ow);
  argmax.resize(out.data.size());
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.plane(c);
    float* dst = out.plane(c);
    std::uint32_t* arg = argmax.data() + c * out.plane_size();
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * in.width + 2 * x);
        float bv = src[best];
        for (int d = 1; d < 4; ++d) {
          std::uint32_t idx = static_cast<std::uint32_t>((2 * y + d / 2) * in.width + 2 * x + d % 2);
          if (src[idx] > bv) {
            bv = src[idx];
            best = idx;
          }
        }
        dst[y * ow + x] = bv;
        arg[y * ow + x] = best;
      }
    }
  }
}

void maxpool2x2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, int in_height,
                         int in_width, Tensor& grad_in) {
  grad_in.resize(grad_out.channels, in_height, in_width);
  grad_in.zero();
  for (int c = 0; c < grad_out.channels; ++c) {
    const float* g = grad_out.plane(c);
    const std::uint32_t* arg = argmax.data() + c * grad_out.plane_size();
    float* dst = grad_in.plane(c);
    for (std::size_t i = 0; i < grad_out.plane_size(); ++i) dst[arg[i]] += g[i];
  }
}

}  // namespace keypatch::nn
