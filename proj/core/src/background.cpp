// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/background.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "keypatch/error.hpp"

namespace keypatch::synth {

namespace {

using Rgb = std::array<double, 3>;

Rgb random_color(Rng& rng) { return {uniform(rng, 0, 255), uniform(rng, 0, 255), uniform(rng, 0, 255)}; }

void blend(Image& img, int x, int y, const Rgb& c, double alpha) {
  for (int k = 0; k < 3; ++k) img.at(x, y, k) = clamp_u8((1 - alpha) * img.at(x, y, k) + alpha * c[k]);
}

template <typename Inside>
void fill_region(Image& img, double x0, double y0, double x1, double y1, const Rgb& c, double alpha, Inside inside) {
  int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
  int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
  int ix1 = std::min(img.width() - 1, static_cast<int>(std::ceil(x1)));
  int iy1 = std::min(img.height() - 1, static_cast<int>(std::ceil(y1)));
  for (int y = iy0; y <= iy1; ++y) {
    for (int x = ix0; x <= ix1; ++x) {
      if (inside(x, y)) blend(img, x, y, c, alpha);
    }
  }
}

}  // namespace

Image procedural_background(std::uint64_t seed, int width, int height) {
  Rng rng(seed);
  Image img(width, height, 3);
  const Rgb c0 = random_color(rng), c1 = random_color(rng);
  const double ga = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(ga), gy = std::sin(ga);
  const double span = std::abs(gx) * width + std::abs(gy) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double t = std::clamp(((x - width / 2.0) * gx + (y - height / 2.0) * gy) / span + 0.5, 0.0, 1.0);
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = clamp_u8((1 - t) * c0[k] + t * c1[k]);
    }
  }

  const double scale = std::min(width, height);
  const int shapes = uniform_int(rng, 15, 45);
  for (int s = 0; s < shapes; ++s) {
    const Rgb c = random_color(rng);
    const double alpha = uniform(rng, 0.5, 1.0);
    const double cx = uniform(rng, -0.1 * width, 1.1 * width);
    const double cy = uniform(rng, -0.1 * height, 1.1 * height);
    const double size = scale * std::exp(uniform(rng, std::log(0.02), std::log(0.35)));
    const double rot = uniform(rng, 0.0, std::numbers::pi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    switch (uniform_int(rng, 0, 3)) {
      case 0: {  // rotated rectangle
        double hw = size * uniform(rng, 0.3, 1.0), hh = size * uniform(rng, 0.3, 1.0);
        double ext = hw + hh;
        fill_region(img, cx - ext, cy - ext, cx + ext, cy + ext, c, alpha, [&](int x, int y) {
          double u = (x - cx) * cr + (y - cy) * sr, v = -(x - cx) * sr + (y - cy) * cr;
          return std::abs(u) <= hw && std::abs(v) <= hh;
        });
        break;
      }
      case 1: {  // ellipse
        double a = size * uniform(rng, 0.3, 1.0), b = size * uniform(rng, 0.3, 1.0);
        double ext = std::max(a, b);
        fill_region(img, cx - ext, cy - ext, cx + ext, cy + ext, c, alpha, [&](int x, int y) {
          double u = (x - cx) * cr + (y - cy) * sr, v = -(x - cx) * sr + (y - cy) * cr;
          return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
        });
        break;
      }
      case 2: {  // bar
        double half_len = size * uniform(rng, 0.8, 2.0), half_w = std::max(1.0, size * uniform(rng, 0.03, 0.15));
        double ext = half_len + half_w;
        fill_region(img, cx - ext, cy - ext, cx + ext, cy + ext, c, alpha, [&](int x, int y) {
          double u = (x - cx) * cr + (y - cy) * sr, v = -(x - cx) * sr + (y - cy) * cr;
          return std::abs(u) <= half_len && std::abs(v) <= half_w;
        });
        break;
      }
      default: {  // triangle
        std::array<double, 6> p;
        for (int i = 0; i < 3; ++i) {
          double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
          p[2 * i] = cx + size * std::cos(a);
          p[2 * i + 1] = cy + size * std::sin(a);
        }
        auto edge = [&](int i, int x, int y) {
          int j = (i + 1) % 3;
          return (p[2 * j] - p[2 * i]) * (y - p[2 * i + 1]) - (p[2 * j + 1] - p[2 * i + 1]) * (x - p[2 * i]);
        };
        fill_region(img, cx - size, cy - size, cx + size, cy + size, c, alpha, [&](int x, int y) {
          double e0 = edge(0, x, y), e1 = edge(1, x, y), e2 = edge(2, x, y);
          return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        });
        break;
      }
    }
  }

  const double grain = uniform(rng, 2.0, 10.0);
  for (auto& v : img.data()) v = clamp_u8(v + normal(rng, 0.0, grain));
  return img;
}

std::size_t ProceduralCorpus::size() const { return static_cast<std::size_t>(-1); }

std::string ProceduralCorpus::pick(Rng& rng) const { return "procedural:" + std::to_string(rng()); }

Image ProceduralCorpus::load(const std::string& source_id, int width, int height) const {
  constexpr std::string_view prefix = "procedural:";
  if (source_id.rfind(prefix, 0) != 0) {
    fail(ErrorCode::kInvalidArgument, "not a procedural background id: " + source_id);
  }
  return procedural_background(std::stoull(source_id.substr(prefix.size())), width, height);
}

DirectoryCorpus::DirectoryCorpus(std::filesystem::path root) : root_(std::move(root)) {
  if (!std::filesystem::is_directory(root_)) {
    fail(ErrorCode::kEmptyCorpus, "background directory does not exist: " + root_.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm") {
      files_.push_back(entry.path().filename().string());
    }
  }
  std::sort(files_.begin(), files_.end());
}

std::string DirectoryCorpus::pick(Rng& rng) const {
  if (files_.empty()) fail(ErrorCode::kEmptyCorpus, "no images in " + root_.string());
  return "file:" + files_[rng() % files_.size()];
}

Image DirectoryCorpus::load(const std::string& source_id, int width, int height) const {
  constexpr std::string_view prefix = "file:";
  if (source_id.rfind(prefix, 0) != 0) fail(ErrorCode::kInvalidArgument, "not a file background id: " + source_id);
  return aspect_fill(read_image_rgb(root_ / source_id.substr(prefix.size())), width, height);
}

std::unique_ptr<BackgroundCorpus> open_corpus(const std::string& spec) {
  if (spec == "procedural") return std::make_unique<ProceduralCorpus>();
  auto corpus = std::make_unique<DirectoryCorpus>(spec);
  if (corpus->size() == 0) fail(ErrorCode::kEmptyCorpus, "no images in background directory " + spec);
  return corpus;
}

}  // namespace keypatch::synth
