// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "keypatch/error.hpp"

namespace keypatch {

Image::Image(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument, "image dimensions must be positive");
  require(channels == 1 || channels == 3, ErrorCode::kInvalidArgument, "image must have 1 or 3 channels");
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double v = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      out.at(x, y) = clamp_u8(v);
    }
  }
  return out;
}

namespace {

cv::Mat to_mat(const Image& img) {
  cv::Mat m(img.height(), img.width(), img.channels() == 1 ? CV_8UC1 : CV_8UC3);
  std::memcpy(m.data, img.data().data(), img.size());
  if (img.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  return m;
}

Image from_mat(const cv::Mat& src) {
  cv::Mat m;
  int channels = 1;
  if (src.channels() == 1) {
    m = src;
  } else if (src.channels() == 3) {
    cv::cvtColor(src, m, cv::COLOR_BGR2RGB);
    channels = 3;
  } else {
    cv::cvtColor(src, m, cv::COLOR_BGRA2RGB);
    channels = 3;
  }
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U);
  if (!m.isContinuous()) m = m.clone();
  Image out(m.cols, m.rows, channels);
  std::memcpy(out.data().data(), m.data, out.size());
  return out;
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorCode::kIoError, "cannot read image " + path.string());
  return from_mat(m);
}

void write_png(const Image& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_mat(img))) {
    fail(ErrorCode::kIoError, "cannot write image " + path.string());
  }
}

Image read_image_rgb(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) fail(ErrorCode::kIoError, "cannot read image " + path.string());
  return from_mat(m);
}

Image aspect_fill(const Image& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  double scale = std::max(static_cast<double>(width) / img.width(),
                          static_cast<double>(height) / img.height());
  int sw = std::max(width, static_cast<int>(std::ceil(img.width() * scale)));
  int sh = std::max(height, static_cast<int>(std::ceil(img.height() * scale)));
  cv::Mat scaled;
  cv::resize(to_mat(img), scaled, cv::Size(sw, sh), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  cv::Rect roi((sw - width) / 2, (sh - height) / 2, width, height);
  return from_mat(scaled(roi).clone());
}

}  // namespace keypatch
