// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "keypatch/error.hpp"
#include "keypatch/training.hpp"

namespace keypatch::train {

namespace {

void check_shape(const nn::Tensor& t, int channels, const synth::CellGrid& grid, const char* what) {
  if (t.channels != channels || t.height != grid.rows || t.width != grid.cols) {
    fail(ErrorCode::kShapeError, std::string(what) + ": logits " + std::to_string(t.channels) + "x" +
                                     std::to_string(t.height) + "x" + std::to_string(t.width) + " vs target grid " +
                                     std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
  }
}

}  // namespace

double detector_loss(const nn::Tensor& logits, const synth::CellGrid& target, nn::Tensor* grad) {
  check_shape(logits, synth::kDetectorClasses, target, "detector_loss");
  const int rows = target.rows, cols = target.cols;
  const double inv_cells = 1.0 / (static_cast<double>(rows) * cols);
  if (grad) grad->resize(logits.channels, rows, cols);
  std::array<double, synth::kDetectorClasses> e{};
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double mx = -1e300;
      for (int k = 0; k < synth::kDetectorClasses; ++k) mx = std::max(mx, static_cast<double>(logits.at(k, r, c)));
      double sum = 0.0;
      for (int k = 0; k < synth::kDetectorClasses; ++k) {
        e[k] = std::exp(logits.at(k, r, c) - mx);
        sum += e[k];
      }
      const int t = target.at(r, c);
      total += std::log(sum) + mx - logits.at(t, r, c);
      if (grad) {
        for (int k = 0; k < synth::kDetectorClasses; ++k) {
          grad->at(k, r, c) = static_cast<float>((e[k] / sum - (k == t ? 1.0 : 0.0)) * inv_cells);
        }
      }
    }
  }
  return total * inv_cells;
}

double descriptor_loss(const nn::Tensor& id_logits, const synth::CellGrid& target, double mp, double mn,
                       double lambda_d, nn::Tensor* grad) {
  check_shape(id_logits, synth::kIdClasses, target, "descriptor_loss");
  const int rows = target.rows, cols = target.cols;
  constexpr int kC = synth::kIdClasses;
  // Normalized by the total positive weight: patch cells count lambda_d times.
  double weight_sum = 0.0;
  for (const auto t : target.classes) weight_sum += t == synth::kBackgroundId ? 1.0 : lambda_d;
  const double inv_weight = 1.0 / weight_sum;
  if (grad) grad->resize(id_logits.channels, rows, cols);
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      std::array<double, kC> z{}, d{}, g{};
      double sq = 0.0;
      for (int k = 0; k < kC; ++k) {
        z[k] = id_logits.at(k, r, c);
        sq += z[k] * z[k];
      }
      const double norm = std::sqrt(sq + 1e-12);
      for (int k = 0; k < kC; ++k) d[k] = z[k] / norm;
      const int t = target.at(r, c);
      const double w = t == synth::kBackgroundId ? 1.0 : lambda_d;
      for (int k = 0; k < kC; ++k) {
        if (k == t) {
          const double h = std::max(0.0, mp - d[k]);
          total += w * h * h;
          g[k] = -2.0 * w * h;
        } else {
          const double h = std::max(0.0, d[k] - mn);
          total += h * h;
          g[k] = 2.0 * h;
        }
      }
      if (grad) {
        double dg = 0.0;
        for (int k = 0; k < kC; ++k) dg += d[k] * g[k];
        for (int k = 0; k < kC; ++k) grad->at(k, r, c) = static_cast<float>((g[k] - d[k] * dg) / norm * inv_weight);
      }
    }
  }
  return total * inv_weight;
}

double total_loss(double detector, double descriptor, double lambda_descriptor) {
  if (!std::isfinite(detector) || !std::isfinite(descriptor) || !std::isfinite(lambda_descriptor)) {
    fail(ErrorCode::kNumericError, "non-finite loss component");
  }
  return detector + lambda_descriptor * descriptor;
}

}  // namespace keypatch::train
