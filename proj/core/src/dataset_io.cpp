// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include "keypatch/error.hpp"

namespace keypatch::synth {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "keypatch-dataset";

std::string padded(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08llu", static_cast<unsigned long long>(index));
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path, ErrorCode on_error, const std::string& context) {
  std::ifstream in(path);
  if (!in) fail(on_error, "cannot open " + path.string() + context);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(on_error, "malformed JSON in " + path.string() + context + ": " + e.what());
  }
}

std::size_t count_images(const fs::path& dir) {
  std::size_t n = 0;
  if (!fs::is_directory(dir)) return 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".png" && p.stem().extension() != ".tmp") ++n;
  }
  return n;
}

}  // namespace

std::string image_relpath(std::uint64_t index) { return "images/" + padded(index) + ".png"; }
std::string label_relpath(std::uint64_t index) { return "labels/" + padded(index) + ".json"; }

DatasetWriter::DatasetWriter(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "images", ec);
  fs::create_directories(root_ / "labels", ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create dataset directories under " + root_.string());
}

bool DatasetWriter::has_sample(std::uint64_t index) const {
  return fs::exists(root_ / image_relpath(index)) && fs::exists(root_ / label_relpath(index));
}

void DatasetWriter::write(const Image& image, SampleAnnotation annotation) {
  annotation.image_path = image_relpath(annotation.index);
  // Image first: a label's presence marks the sample complete.
  fs::path img_path = root_ / annotation.image_path;
  fs::path tmp = img_path;
  tmp.replace_extension(".tmp.png");
  write_png(image, tmp);
  fs::rename(tmp, img_path);
  write_text_atomic(root_ / label_relpath(annotation.index), nlohmann::json(annotation).dump(1));
}

void DatasetWriter::finalize(const DatasetManifest& manifest) const {
  for (std::uint64_t i = 0; i < manifest.count; ++i) {
    if (!has_sample(i)) fail(ErrorCode::kRecordCorrupt, "sample " + std::to_string(i) + " missing at finalize");
  }
  nlohmann::json doc{{"format", kFormat},
                     {"version", manifest.version},
                     {"seed", manifest.seed},
                     {"count", manifest.count},
                     {"split", manifest.split},
                     {"config", manifest.config}};
  write_text_atomic(root_ / "manifest.json", doc.dump(2));
}

void write_dataset(std::span<const LabeledImage> samples, const fs::path& root, const DatasetManifest& manifest) {
  DatasetWriter writer(root);
  for (const LabeledImage& s : samples) writer.write(s.image, s.annotation);
  DatasetManifest m = manifest;
  m.count = samples.size();
  writer.finalize(m);
}

Image Dataset::load_image(std::size_t i) const {
  const SampleAnnotation& ann = annotation(i);
  Image img = read_png(root_ / ann.image_path);
  if (img.width() != ann.width || img.height() != ann.height) {
    fail(ErrorCode::kRecordCorrupt, "image " + std::to_string(i) + " size disagrees with its annotation");
  }
  return img;
}

Dataset read_dataset(const fs::path& root) {
  nlohmann::json doc = read_json(root / "manifest.json", ErrorCode::kUnsupportedFormat, "");
  if (doc.value("format", std::string()) != kFormat) {
    fail(ErrorCode::kUnsupportedFormat, root.string() + " is not a keypatch dataset");
  }
  const int version = doc.value("version", -1);
  if (version != kDatasetVersion) {
    fail(ErrorCode::kUnsupportedFormat, "dataset version " + std::to_string(version) + " is not supported (expected " +
                                            std::to_string(kDatasetVersion) + ")");
  }
  Dataset ds;
  ds.root_ = root;
  ds.manifest_.version = version;
  ds.manifest_.seed = doc.at("seed").get<std::uint64_t>();
  ds.manifest_.count = doc.at("count").get<std::uint64_t>();
  ds.manifest_.split = doc.value("split", std::string("train"));
  ds.manifest_.config = doc.value("config", nlohmann::json::object());

  const std::size_t on_disk = count_images(root / "images");
  if (on_disk != ds.manifest_.count) {
    fail(ErrorCode::kRecordCorrupt, "manifest count " + std::to_string(ds.manifest_.count) + " but " +
                                        std::to_string(on_disk) + " images on disk");
  }
  ds.annotations_.reserve(ds.manifest_.count);
  for (std::uint64_t i = 0; i < ds.manifest_.count; ++i) {
    const std::string ctx = " (record " + std::to_string(i) + ")";
    nlohmann::json label = read_json(root / label_relpath(i), ErrorCode::kRecordCorrupt, ctx);
    try {
      SampleAnnotation ann = label.get<SampleAnnotation>();
      if (ann.index != i) fail(ErrorCode::kRecordCorrupt, "index field mismatch" + ctx);
      ds.annotations_.push_back(std::move(ann));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kRecordCorrupt, std::string("bad annotation: ") + e.what() + ctx);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kRecordCorrupt) throw;
      fail(ErrorCode::kRecordCorrupt, std::string(e.what()) + ctx);
    }
  }
  return ds;
}

}  // namespace keypatch::synth
