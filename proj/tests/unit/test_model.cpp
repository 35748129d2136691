// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"
#include "keypatch/model.hpp"
#include "keypatch/random.hpp"
#include "test_support.hpp"

namespace kp = keypatch;
namespace md = keypatch::model;
namespace nn = keypatch::nn;
namespace sy = keypatch::synth;

namespace {

nn::Tensor random_input(int h, int w, std::uint64_t seed) {
  nn::Tensor t(1, h, w);
  kp::Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(kp::uniform(rng, 0.0, 1.0));
  return t;
}

md::NetworkOutput uniform_output(int rows, int cols) {
  return {nn::Tensor(md::kDetectorChannels, rows, cols, 0.0f), nn::Tensor(md::kIdChannels, rows, cols, 0.0f)};
}

sy::CellTargets random_targets(kp::Rng& rng, int rows, int cols) {
  sy::CellTargets t{{rows, cols, {}}, {rows, cols, {}}};
  for (int i = 0; i < rows * cols; ++i) {
    if (kp::bernoulli(rng, 0.3)) {
      t.detector.classes.push_back(static_cast<std::uint8_t>(kp::uniform_int(rng, 0, 63)));
      t.id.classes.push_back(static_cast<std::uint8_t>(kp::uniform_int(rng, 0, 3)));
    } else {
      t.detector.classes.push_back(sy::kDustbin);
      t.id.classes.push_back(sy::kBackgroundId);
    }
  }
  return t;
}

// Weighted sum of both logit tensors; gradient is the weights themselves.
struct Probe {
  nn::Tensor wd, wi;
  double operator()(const md::NetworkOutput& o) const {
    double s = 0.0;
    for (std::size_t i = 0; i < wd.data.size(); ++i) s += double(wd.data[i]) * o.detector_logits.data[i];
    for (std::size_t i = 0; i < wi.data.size(); ++i) s += double(wi.data[i]) * o.id_logits.data[i];
    return s;
  }
};

}  // namespace

TEST(Model, OutputShapes) {
  md::SuperPointNet net(kp::testing::tiny_config(), 1);
  for (auto [w, h] : {std::pair{640, 480}, std::pair{320, 240}, std::pair{64, 72}}) {
    const auto out = net.forward(random_input(h, w, 2));
    EXPECT_EQ(out.detector_logits.channels, 65);
    EXPECT_EQ(out.detector_logits.height, h / 8);
    EXPECT_EQ(out.detector_logits.width, w / 8);
    EXPECT_EQ(out.id_logits.channels, 5);
    EXPECT_EQ(out.id_logits.height, h / 8);
    EXPECT_EQ(out.id_logits.width, w / 8);
  }
}

TEST(Model, IndivisibleInputRejected) {
  md::SuperPointNet net(kp::testing::tiny_config(), 1);
  try {
    net.forward(random_input(480, 641, 2));
    FAIL();
  } catch (const kp::Error& e) {
    EXPECT_EQ(e.code(), kp::ErrorCode::kShapeError);
  }
}

TEST(Model, FullWidthDefaults) {
  const md::ModelConfig c;
  EXPECT_EQ(c.encoder_channels, (std::array<int, 8>{64, 64, 64, 64, 128, 128, 128, 128}));
  EXPECT_FLOAT_EQ(c.detect_threshold, 0.015f);
  EXPECT_EQ(c.nms_radius, 4);
  md::SuperPointNet net(c, 0);
  EXPECT_EQ(net.layers()[md::kAdaptP].in_channels, 65);
  EXPECT_EQ(net.layers()[md::kAdaptP].out_channels, 65);
  EXPECT_EQ(net.layers()[md::kAdaptP].kernel, 1);
  EXPECT_EQ(net.layers()[md::kAdaptD].out_channels, 5);
  EXPECT_EQ(net.layers()[md::kAdaptD].kernel, 1);
}

TEST(Model, ConfigJsonAndValidation) {
  const auto c = md::ModelConfig::compact();
  EXPECT_EQ(nlohmann::json(c).get<md::ModelConfig>(), c);
  auto bad = c;
  bad.detect_threshold = 1.0f;
  EXPECT_THROW(bad.validate(), kp::Error);
  bad = c;
  bad.encoder_channels[3] = 0;
  EXPECT_THROW(bad.validate(), kp::Error);
  nlohmann::json j = c;
  j["extra"] = 1;
  EXPECT_THROW(j.get<md::ModelConfig>(), kp::Error);
}

TEST(Model, DeterministicInit) {
  md::SuperPointNet a(kp::testing::tiny_config(), 5), b(kp::testing::tiny_config(), 5), c(kp::testing::tiny_config(), 6);
  EXPECT_EQ(a.layers()[md::kConv3a].weight, b.layers()[md::kConv3a].weight);
  EXPECT_NE(a.layers()[md::kConv3a].weight, c.layers()[md::kConv3a].weight);
}

TEST(Decode, UniformLogitsBelowThreshold) {
  EXPECT_TRUE(md::decode_keypoints(uniform_output(4, 5), 0.1f, 4).empty());
  // 1/65 clears the default threshold, so every pixel is a candidate.
  EXPECT_FALSE(md::decode_keypoints(uniform_output(4, 5), 0.015f, 4).empty());
}

TEST(Decode, SingleSpike) {
  auto out = uniform_output(6, 7);
  for (auto& v : out.detector_logits.data) v = -10.0f;
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 7; ++c) out.detector_logits.at(64, r, c) = 10.0f;
  }
  out.detector_logits.at(64, 3, 2) = -10.0f;
  out.detector_logits.at(36, 3, 2) = 10.0f;
  const auto dets = md::decode_keypoints(out, 0.015f, 4);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].pixel_x, 2 * 8 + 4);
  EXPECT_EQ(dets[0].pixel_y, 3 * 8 + 4);
  EXPECT_NEAR(dets[0].x, 20.0, 1e-6);
  EXPECT_NEAR(dets[0].y, 28.0, 1e-6);
  // Oracle: 64 cells at -10 plus the spike at +10 out of 65 channels.
  const double p = std::exp(10.0) / (std::exp(10.0) + 64.0 * std::exp(-10.0));
  EXPECT_NEAR(dets[0].confidence, p, 1e-6);
}

TEST(Decode, NmsKeepsHigher) {
  auto out = uniform_output(2, 2);
  for (auto& v : out.detector_logits.data) v = -10.0f;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) out.detector_logits.at(64, r, c) = 10.0f;
  }
  out.detector_logits.at(64, 0, 0) = -10.0f;
  out.detector_logits.at(1 * 8 + 1, 0, 0) = 8.0f;  // pixel (1, 1)
  out.detector_logits.at(1 * 8 + 3, 0, 0) = 9.0f;  // pixel (3, 1), 2 px away
  const auto dets = md::decode_keypoints(out, 0.015f, 4, false);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].pixel_x, 3);
  EXPECT_EQ(dets[0].pixel_y, 1);
  EXPECT_EQ(md::decode_keypoints(out, 0.015f, 1, false).size(), 2u);
}

TEST(Decode, NoTwoDetectionsWithinRadius) {
  md::SuperPointNet net(kp::testing::tiny_config(), 3);
  const auto out = net.forward(random_input(64, 64, 4));
  const auto dets = md::decode_keypoints(out, 0.0f, 4, false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      const int dx = dets[i].pixel_x - dets[j].pixel_x, dy = dets[i].pixel_y - dets[j].pixel_y;
      EXPECT_GT(dx * dx + dy * dy, 16);
    }
  }
}

TEST(DecodeIds, ArgmaxVetoAndTies) {
  auto out = uniform_output(1, 3);
  md::Detection d0, d1, d2;
  d0.pixel_x = 2;
  d1.pixel_x = 9;
  d2.pixel_x = 17;
  out.id_logits.at(2, 0, 0) = 5.0f;
  out.id_logits.at(4, 0, 1) = 5.0f;
  const auto kept = md::decode_ids(out, {d0, d1, d2}, true);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].type_id, 2);
  EXPECT_NEAR(kept[0].type_confidence, std::exp(5.0) / (std::exp(5.0) + 4.0), 1e-6);
  EXPECT_EQ(kept[1].type_id, 0);
  EXPECT_NEAR(kept[1].type_confidence, 0.2, 1e-9);
  const auto all = md::decode_ids(out, {d0, d1, d2}, false);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[1].type_id, 4);
}

TEST(Decode, IdealLogitRoundTrip) {
  kp::Rng rng(808);
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = kp::uniform_int(rng, 1, 12), cols = kp::uniform_int(rng, 1, 12);
    const auto t = random_targets(rng, rows, cols);
    const auto out = kp::testing::ideal_output(t);
    const auto dets = md::decode_ids(out, md::decode_keypoints(out, 0.5f, 0, false), true);
    std::set<std::tuple<int, int, int>> got, want;
    for (const auto& d : dets) {
      got.insert({d.pixel_x, d.pixel_y, d.type_id});
      EXPECT_EQ(d.x, d.pixel_x);
    }
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const int k = t.detector.at(r, c);
        if (k != sy::kDustbin) want.insert({c * 8 + k % 8, r * 8 + k / 8, t.id.at(r, c)});
      }
    }
    ASSERT_EQ(got, want) << trial;
  }
}

TEST(Decode, HeatmapScatter) {
  auto out = uniform_output(1, 1);
  out.detector_logits.at(8 * 5 + 2, 0, 0) = 3.0f;
  const auto heat = md::keypoint_heatmap(out);
  EXPECT_EQ(heat.height, 8);
  EXPECT_EQ(heat.width, 8);
  const double z = std::exp(3.0) + 64.0;
  EXPECT_NEAR(heat.at(0, 5, 2), std::exp(3.0) / z, 1e-6);
  EXPECT_NEAR(heat.at(0, 0, 0), 1.0 / z, 1e-6);
}

TEST(Model, TranslationCovariance) {
  md::SuperPointNet net(kp::testing::tiny_config(), 9);
  const auto wide = random_input(64, 168, 10);
  nn::Tensor a(1, 64, 160), b(1, 64, 160);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 160; ++x) {
      a.at(0, y, x) = wide.at(0, y, x + 8);
      b.at(0, y, x) = wide.at(0, y, x);
    }
  }
  const auto oa = net.forward(a), ob = net.forward(b);
  // b is a shifted right by one cell; compare interior columns.
  for (int ch = 0; ch < 65; ++ch) {
    for (int r = 0; r < 8; ++r) {
      for (int c = 7; c < 13; ++c) {
        EXPECT_NEAR(ob.detector_logits.at(ch, r, c + 1), oa.detector_logits.at(ch, r, c), 1e-4);
      }
    }
  }
}

TEST(Model, BackwardMatchesFiniteDifferences) {
  auto cfg = kp::testing::tiny_config();
  md::SuperPointNet net(cfg, 12);
  const auto input = random_input(16, 16, 13);
  kp::Rng rng(14);
  Probe probe{nn::Tensor(65, 2, 2), nn::Tensor(5, 2, 2)};
  for (auto& v : probe.wd.data) v = static_cast<float>(kp::uniform(rng, -1, 1));
  for (auto& v : probe.wi.data) v = static_cast<float>(kp::uniform(rng, -1, 1));

  md::Activations acts;
  nn::Workspace ws;
  net.forward(input, acts, ws);
  auto grads = net.make_gradients();
  grads.zero();
  net.backward(acts, probe.wd, probe.wi, grads, true, ws);

  int checked = 0, bad = 0;
  for (int l = 0; l < md::kNumLayers; ++l) {
    auto& layer = net.layers()[l];
    for (int s = 0; s < 4; ++s) {
      const std::size_t i = kp::uniform_int(rng, 0, static_cast<int>(layer.weight.size()) - 1);
      const float orig = layer.weight[i];
      const float h = 1e-2f * std::max(1.0f, std::abs(orig));
      layer.weight[i] = orig + h;
      const double up = probe(net.forward(input));
      layer.weight[i] = orig - h;
      const double down = probe(net.forward(input));
      layer.weight[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads.layers[l].weight[i];
      ++checked;
      // ReLU kinks can make an occasional probe disagree.
      if (std::abs(fd - an) > 2e-2 * std::max(1.0, std::abs(fd))) ++bad;
    }
    const std::size_t bi = kp::uniform_int(rng, 0, static_cast<int>(layer.bias.size()) - 1);
    const float orig = layer.bias[bi];
    layer.bias[bi] = orig + 1e-2f;
    const double up = probe(net.forward(input));
    layer.bias[bi] = orig - 1e-2f;
    const double down = probe(net.forward(input));
    layer.bias[bi] = orig;
    const double fd = (up - down) / 2e-2;
    ++checked;
    if (std::abs(fd - grads.layers[l].bias[bi]) > 2e-2 * std::max(1.0, std::abs(fd))) ++bad;
  }
  EXPECT_LE(bad, checked / 20) << bad << " of " << checked;
}

TEST(Model, FrozenBackwardTouchesOnlyAdaptation) {
  md::SuperPointNet net(kp::testing::tiny_config(), 15);
  md::Activations acts;
  nn::Workspace ws;
  net.forward(random_input(16, 16, 16), acts, ws);
  auto grads = net.make_gradients();
  grads.zero();
  net.backward(acts, nn::Tensor(65, 2, 2, 1.0f), nn::Tensor(5, 2, 2, 1.0f), grads, false, ws);
  for (int l = 0; l < md::kNumLayers; ++l) {
    if (md::is_adaptation_layer(l)) EXPECT_GT(grads.norm(l), 0.0);
    else EXPECT_EQ(grads.norm(l), 0.0);
  }
}

TEST(Model, AdaptationDetectorInitNearIdentity) {
  md::SuperPointNet net(md::ModelConfig::compact(), 3);
  const auto& w = net.layers()[md::kAdaptP].weight;
  for (int o = 0; o < 65; ++o) {
    for (int i = 0; i < 65; ++i) EXPECT_NEAR(w[o * 65 + i], o == i ? 1.0f : 0.0f, 0.0100001f);
  }
}

TEST(Model, ImageToTensorScalesToUnit) {
  kp::Image img(8, 8, 1, 255);
  img.at(3, 2) = 0;
  const auto t = md::image_to_tensor(img);
  EXPECT_EQ(t.channels, 1);
  EXPECT_FLOAT_EQ(t.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(t.at(0, 2, 3), 0.0f);
}
