// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "keypatch/synth.hpp"

namespace keypatch::synth {

inline constexpr int kDatasetVersion = 1;

// On-disk layout:
//   root/manifest.json      {format, version, seed, count, split, config}
//   root/images/%08d.png    RGB
//   root/labels/%08d.json   SampleAnnotation
std::string image_relpath(std::uint64_t index);
std::string label_relpath(std::uint64_t index);

struct DatasetManifest {
  int version = kDatasetVersion;
  std::uint64_t seed = 0;
  std::uint64_t count = 0;
  std::string split = "train";
  nlohmann::json config = nlohmann::json::object();
};

// Single writer. Samples may be written in any order; finalize() writes the
// manifest once every index in [0, count) is present.
class DatasetWriter {
 public:
  explicit DatasetWriter(std::filesystem::path root);

  bool has_sample(std::uint64_t index) const;
  void write(const Image& image, SampleAnnotation annotation);
  void finalize(const DatasetManifest& manifest) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

struct LabeledImage {
  Image image;
  SampleAnnotation annotation;
};

void write_dataset(std::span<const LabeledImage> samples, const std::filesystem::path& root,
                   const DatasetManifest& manifest);

// Read-only handle; safe for concurrent readers.
class Dataset {
 public:
  std::size_t size() const { return annotations_.size(); }
  const DatasetManifest& manifest() const { return manifest_; }
  const SampleAnnotation& annotation(std::size_t i) const { return annotations_.at(i); }
  Image load_image(std::size_t i) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  friend Dataset read_dataset(const std::filesystem::path& root);

  std::filesystem::path root_;
  DatasetManifest manifest_;
  std::vector<SampleAnnotation> annotations_;
};

Dataset read_dataset(const std::filesystem::path& root);

}  // namespace keypatch::synth
