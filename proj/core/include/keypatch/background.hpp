// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "keypatch/image.hpp"
#include "keypatch/random.hpp"

namespace keypatch::synth {

// Source of RGB background images. A background is named by a string
// identifier so annotations can reload it for replay.
class BackgroundCorpus {
 public:
  virtual ~BackgroundCorpus() = default;

  virtual std::size_t size() const = 0;
  virtual std::string pick(Rng& rng) const = 0;
  virtual Image load(const std::string& source_id, int width, int height) const = 0;
};

// Cluttered synthetic scenes (gradients, rectangles, ellipses, bars,
// triangles, texture noise). Unbounded; identifiers are "procedural:<seed>".
class ProceduralCorpus final : public BackgroundCorpus {
 public:
  std::size_t size() const override;
  std::string pick(Rng& rng) const override;
  Image load(const std::string& source_id, int width, int height) const override;
};

// Every decodable image file directly under a directory, sorted by name.
// Identifiers are "file:<name>"; loading aspect-fills to the target size.
class DirectoryCorpus final : public BackgroundCorpus {
 public:
  explicit DirectoryCorpus(std::filesystem::path root);

  std::size_t size() const override { return files_.size(); }
  std::string pick(Rng& rng) const override;
  Image load(const std::string& source_id, int width, int height) const override;

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

// "procedural" selects ProceduralCorpus, anything else is a directory.
std::unique_ptr<BackgroundCorpus> open_corpus(const std::string& spec);

Image procedural_background(std::uint64_t seed, int width, int height);

}  // namespace keypatch::synth
