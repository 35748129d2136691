// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"
#include "keypatch/model.hpp"

namespace keypatch::model {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are stored little-endian");

namespace {

constexpr char kMagic[8] = {'K', 'P', 'C', 'K', 'P', 'T', '0', '1'};
constexpr const char* kFormat = "keypatch-checkpoint";

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<int> layer_shape(const nn::Conv2d& conv, bool bias) {
  if (bias) return {conv.out_channels};
  return {conv.out_channels, conv.in_channels, conv.kernel, conv.kernel};
}

void assign(const NamedTensor& t, const std::string& name, const std::vector<int>& expect, std::vector<float>& dst) {
  if (t.shape != expect) {
    std::string got, want;
    for (int d : t.shape) got += std::to_string(d) + " ";
    for (int d : expect) want += std::to_string(d) + " ";
    fail(ErrorCode::kWeightMismatch, name + ": shape [" + got + "] does not match [" + want + "]");
  }
  dst = t.values;
}

}  // namespace

void write_container(const std::filesystem::path& path, const nlohmann::json& header_fields,
                     const std::map<std::string, NamedTensor>& tensors) {
  nlohmann::json header = header_fields;
  header["format"] = kFormat;
  header["format_version"] = kCheckpointVersion;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    require(element_count(t.shape) == t.values.size(), ErrorCode::kInvalidArgument, name + ": shape/value mismatch");
    table.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size();
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorCode::kIoError, "cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    }
    if (!out) fail(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::map<std::string, NamedTensor> read_tensors(const std::filesystem::path& path, std::string* header_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kUnsupportedFormat, path.string() + " is not a keypatch checkpoint");
  }
  if (!in.read(reinterpret_cast<char*>(&version), sizeof(version))) {
    fail(ErrorCode::kWeightMismatch, path.string() + " is truncated");
  }
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kUnsupportedFormat, "checkpoint version " + std::to_string(version) + " is not supported");
  }
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1ull << 30)) {
    fail(ErrorCode::kWeightMismatch, path.string() + " is truncated");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    fail(ErrorCode::kWeightMismatch, path.string() + " is truncated inside its header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kUnsupportedFormat, "malformed checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format", std::string()) != kFormat ||
      header.value("format_version", -1) != kCheckpointVersion) {
    fail(ErrorCode::kUnsupportedFormat, "unsupported checkpoint header in " + path.string());
  }
  const std::streamoff data_start = in.tellg();
  std::map<std::string, NamedTensor> tensors;
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.shape = entry.at("shape").get<std::vector<int>>();
    const std::uint64_t count = entry.at("count").get<std::uint64_t>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::string name = entry.at("name").get<std::string>();
    if (count != element_count(t.shape)) fail(ErrorCode::kWeightMismatch, name + ": count disagrees with shape");
    t.values.resize(count);
    in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(float)));
    if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(count * sizeof(float)))) {
      fail(ErrorCode::kWeightMismatch, name + ": blob truncated in " + path.string());
    }
    tensors.emplace(name, std::move(t));
  }
  if (header_json) *header_json = text;
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const SuperPointNet& net, int epoch, std::uint64_t master_seed,
                     const std::map<std::string, NamedTensor>& extra_tensors, const nlohmann::json* extra_header) {
  nlohmann::json header{{"model_config", net.config()}, {"epoch", epoch}, {"master_seed", master_seed}};
  if (extra_header) header["extra"] = *extra_header;
  std::map<std::string, NamedTensor> tensors = extra_tensors;
  for (int l = 0; l < kNumLayers; ++l) {
    const nn::Conv2d& conv = net.layers()[l];
    tensors[tensor_name(l, false)] = {layer_shape(conv, false), conv.weight};
    tensors[tensor_name(l, true)] = {layer_shape(conv, true), conv.bias};
  }
  write_container(path, header, tensors);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::string text;
  std::map<std::string, NamedTensor> tensors = read_tensors(path, &text);
  nlohmann::json header = nlohmann::json::parse(text);
  if (!header.contains("model_config")) {
    fail(ErrorCode::kUnsupportedFormat, path.string() + " has no model config (pretrained weights only?)");
  }
  LoadedCheckpoint ck{SuperPointNet(header.at("model_config").get<ModelConfig>()),
                      header.value("epoch", 0),
                      header.value("master_seed", std::uint64_t{0}),
                      {},
                      header.contains("extra") ? header["extra"].dump() : std::string("{}")};
  for (int l = 0; l < kNumLayers; ++l) {
    nn::Conv2d& conv = ck.net.layers()[l];
    for (bool bias : {false, true}) {
      const std::string name = tensor_name(l, bias);
      auto it = tensors.find(name);
      if (it == tensors.end()) fail(ErrorCode::kWeightMismatch, "checkpoint is missing " + name);
      assign(it->second, name, layer_shape(conv, bias), bias ? conv.bias : conv.weight);
      tensors.erase(it);
    }
  }
  ck.extra_tensors = std::move(tensors);
  return ck;
}

void load_pretrained(const std::filesystem::path& path, SuperPointNet& net, bool strict, std::uint64_t adapt_seed) {
  std::map<std::string, NamedTensor> tensors = read_tensors(path, nullptr);
  for (int l = 0; l < kNumLayers; ++l) {
    if (is_adaptation_layer(l)) {
      net.init_layer(l, adapt_seed + static_cast<std::uint64_t>(l));
      continue;
    }
    nn::Conv2d& conv = net.layers()[l];
    for (bool bias : {false, true}) {
      const std::string name = tensor_name(l, bias);
      auto it = tensors.find(name);
      if (it == tensors.end()) {
        if (strict) fail(ErrorCode::kWeightMismatch, "pretrained weights are missing " + name);
        continue;
      }
      assign(it->second, name, layer_shape(conv, bias), bias ? conv.bias : conv.weight);
    }
  }
}

}  // namespace keypatch::model
