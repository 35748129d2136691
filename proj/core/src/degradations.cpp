// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/degradations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "keypatch/error.hpp"

namespace keypatch::degrade {

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"motion_blur", "box_blur", "brightness", "dimming",
                                                        "shadow",      "rain",     "gaussian_noise"};

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

Image scale_intensity(const Image& img, double f) {
  Image out = img;
  for (auto& v : out.data()) v = clamp_u8(v * f);
  return out;
}

// Exact integer box filter: horizontal then vertical running sums with
// reflected borders, divided once with round-half-up.
Image box_blur(const Image& img, int k) {
  const int w = img.width(), h = img.height(), ch = img.channels(), r = k / 2;
  std::vector<int> rows(static_cast<std::size_t>(w) * h * ch);
  for (int y = 0; y < h; ++y) {
    for (int c = 0; c < ch; ++c) {
      int acc = 0;
      for (int d = -r; d <= r; ++d) acc += img.at(reflect(d, w), y, c);
      for (int x = 0; x < w; ++x) {
        rows[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
        acc += img.at(reflect(x + r + 1, w), y, c) - img.at(reflect(x - r, w), y, c);
      }
    }
  }
  Image out(w, h, ch);
  const int n = k * k;
  for (int x = 0; x < w; ++x) {
    for (int c = 0; c < ch; ++c) {
      auto row = [&](int y) { return rows[(static_cast<std::size_t>(reflect(y, h)) * w + x) * ch + c]; };
      int acc = 0;
      for (int d = -r; d <= r; ++d) acc += row(d);
      for (int y = 0; y < h; ++y) {
        out.at(x, y, c) = static_cast<std::uint8_t>(std::min(255, (acc + n / 2) / n));
        acc += row(y + r + 1) - row(y - r);
      }
    }
  }
  return out;
}

// Generic correlation with a small normalized kernel and reflected borders.
Image convolve(const Image& img, const std::vector<double>& kernel, int ksize) {
  const int w = img.width(), h = img.height(), ch = img.channels(), r = ksize / 2;
  Image out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = reflect(y + dy, h);
          for (int dx = -r; dx <= r; ++dx) {
            double kv = kernel[(dy + r) * ksize + (dx + r)];
            if (kv == 0.0) continue;
            acc += kv * img.at(reflect(x + dx, w), sy, c);
          }
        }
        out.at(x, y, c) = clamp_u8(acc);
      }
    }
  }
  return out;
}

std::vector<double> line_kernel(int k, double angle_deg) {
  std::vector<double> kernel(static_cast<std::size_t>(k) * k, 0.0);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double r = k / 2;
  const int samples = 8 * k;
  for (int i = 0; i < samples; ++i) {
    double t = -r + 2.0 * r * (i + 0.5) / samples;
    int x = static_cast<int>(std::lround(r + t * std::cos(a)));
    int y = static_cast<int>(std::lround(r + t * std::sin(a)));
    kernel[static_cast<std::size_t>(y) * k + x] += 1.0;
  }
  double sum = 0.0;
  for (double v : kernel) sum += v;
  for (double& v : kernel) v /= sum;
  return kernel;
}

Image add_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (sigma == 0.0) return img;
  Rng rng(seed);
  Image out = img;
  for (auto& v : out.data()) v = clamp_u8(v + normal(rng, 0.0, sigma));
  return out;
}

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Darken a random convex quadrilateral with a feathered edge.
Image shadow(const Image& img, std::uint64_t seed) {
  Rng rng(seed);
  const int w = img.width(), h = img.height();
  const double darken = uniform(rng, 0.3, 0.7);
  const double feather = 5.0;
  // Convex quad: four sorted angles around a random center.
  double cx = uniform(rng, 0.0, w), cy = uniform(rng, 0.0, h);
  double rad = uniform(rng, 0.25, 0.6) * std::max(w, h);
  std::array<double, 4> ang;
  for (double& a : ang) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::sort(ang.begin(), ang.end());
  std::array<std::pair<double, double>, 4> quad;
  for (int i = 0; i < 4; ++i) {
    double rr = rad * uniform(rng, 0.6, 1.0);
    quad[i] = {cx + rr * std::cos(ang[i]), cy + rr * std::sin(ang[i])};
  }
  Image out = img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Signed distance to the inside of the quad (positive inside).
      double inside = std::numeric_limits<double>::max();
      for (int i = 0; i < 4; ++i) {
        auto [ax, ay] = quad[i];
        auto [bx, by] = quad[(i + 1) % 4];
        double ex = bx - ax, ey = by - ay;
        double len = std::hypot(ex, ey);
        if (len < 1e-9) continue;
        inside = std::min(inside, cross(ex, ey, x - ax, y - ay) / len);
      }
      double t = std::clamp((inside + feather * 0.5) / feather, 0.0, 1.0);
      if (t <= 0.0) continue;
      double f = 1.0 - t * (1.0 - darken);
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = clamp_u8(img.at(x, y, c) * f);
    }
  }
  return out;
}

// Short bright streaks along a common slant, then a light blur.
Image rain(const Image& img, std::uint64_t seed) {
  Rng rng(seed);
  const int w = img.width(), h = img.height();
  const int drops = uniform_int(rng, 50, 300);
  const double slant = uniform(rng, -0.35, 0.35);
  const int length = uniform_int(rng, 6, 18);
  const double brightness = uniform(rng, 180.0, 230.0);
  const double alpha = uniform(rng, 0.5, 0.8);
  Image out = img;
  for (int d = 0; d < drops; ++d) {
    double x = uniform(rng, 0.0, w);
    double y = uniform(rng, 0.0, h);
    for (int s = 0; s < length; ++s) {
      int px = static_cast<int>(x + slant * s);
      int py = static_cast<int>(y + s);
      if (px < 0 || py < 0 || px >= w || py >= h) continue;
      for (int c = 0; c < img.channels(); ++c) {
        out.at(px, py, c) = clamp_u8((1.0 - alpha) * out.at(px, py, c) + alpha * brightness);
      }
    }
  }
  std::vector<double> soft = {1, 2, 1, 2, 4, 2, 1, 2, 1};
  for (double& v : soft) v /= 16.0;
  return convolve(out, soft, 3);
}

}  // namespace

std::string_view to_string(Kind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

Kind kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<Kind>(i);
  }
  fail(ErrorCode::kInvalidArgument, "unknown degradation kind '" + std::string(name) + "'");
}

void DegradationSpec::validate() const {
  switch (kind) {
    case Kind::kMotionBlur:
    case Kind::kBoxBlur:
      require(kernel_px >= 3 && kernel_px % 2 == 1, ErrorCode::kInvalidArgument,
              "blur kernel must be odd and >= 3, got " + std::to_string(kernel_px));
      break;
    case Kind::kBrightness:
      require(factor > 0.0 && factor <= 2.0, ErrorCode::kInvalidArgument, "brightness factor must lie in (0, 2]");
      break;
    case Kind::kDimming:
      if (k) {
        require(*k >= 0.0, ErrorCode::kInvalidArgument, "dimming exponent must be >= 0");
      } else {
        require(factor > 0.0 && factor <= 2.0, ErrorCode::kInvalidArgument, "dimming factor must lie in (0, 2]");
      }
      break;
    case Kind::kGaussianNoise:
      require(sigma >= 0.0, ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
      break;
    case Kind::kShadow:
    case Kind::kRain:
      break;
  }
}

DegradationSpec DegradationSpec::box_blur(int kernel_px) {
  DegradationSpec s;
  s.kind = Kind::kBoxBlur;
  s.kernel_px = kernel_px;
  return s;
}

DegradationSpec DegradationSpec::motion_blur(int kernel_px, double angle_deg) {
  DegradationSpec s;
  s.kind = Kind::kMotionBlur;
  s.kernel_px = kernel_px;
  s.angle_deg = angle_deg;
  return s;
}

DegradationSpec DegradationSpec::brightness(double factor) {
  DegradationSpec s;
  s.kind = Kind::kBrightness;
  s.factor = factor;
  return s;
}

DegradationSpec DegradationSpec::dimming(double k) {
  DegradationSpec s;
  s.kind = Kind::kDimming;
  s.k = k;
  s.factor = dimming_factor(k);
  return s;
}

DegradationSpec DegradationSpec::dimming_by_factor(double factor) {
  DegradationSpec s;
  s.kind = Kind::kDimming;
  s.factor = factor;
  return s;
}

DegradationSpec DegradationSpec::gaussian_noise(double sigma, std::uint64_t seed) {
  DegradationSpec s;
  s.kind = Kind::kGaussianNoise;
  s.sigma = sigma;
  s.seed = seed;
  return s;
}

DegradationSpec DegradationSpec::shadow(std::uint64_t seed) {
  DegradationSpec s;
  s.kind = Kind::kShadow;
  s.seed = seed;
  return s;
}

DegradationSpec DegradationSpec::rain(std::uint64_t seed) {
  DegradationSpec s;
  s.kind = Kind::kRain;
  s.seed = seed;
  return s;
}

double dimming_factor(double k) {
  require(k >= 0.0, ErrorCode::kInvalidArgument, "dimming exponent must be >= 0");
  return std::pow(0.6, k);
}

Image apply(const DegradationSpec& spec, const Image& img) {
  require(!img.empty(), ErrorCode::kInvalidArgument, "cannot degrade an empty image");
  spec.validate();
  switch (spec.kind) {
    case Kind::kBoxBlur: return box_blur(img, spec.kernel_px);
    case Kind::kMotionBlur: return convolve(img, line_kernel(spec.kernel_px, spec.angle_deg), spec.kernel_px);
    case Kind::kBrightness: return scale_intensity(img, spec.factor);
    case Kind::kDimming: return scale_intensity(img, spec.k ? dimming_factor(*spec.k) : spec.factor);
    case Kind::kShadow: return shadow(img, spec.seed);
    case Kind::kRain: return rain(img, spec.seed);
    case Kind::kGaussianNoise: return add_noise(img, spec.sigma, spec.seed);
  }
  return img;
}

Image apply_all(const std::vector<DegradationSpec>& specs, const Image& img) {
  Image out = img;
  for (const auto& s : specs) out = apply(s, out);
  return out;
}

namespace {

int odd_kernel(Rng& rng, int lo, int hi) {
  int k = uniform_int(rng, lo / 2, hi / 2) * 2 + 1;
  return std::max(3, k);
}

}  // namespace

std::vector<DegradationSpec> training_augmentation_stack(Rng& rng, int epoch, int augment_from_epoch,
                                                         const AugmentationRanges& ranges) {
  std::vector<DegradationSpec> stack;
  if (epoch < augment_from_epoch) return stack;
  // Every draw is consumed regardless of the coin so the stream stays aligned.
  bool use_blur = bernoulli(rng, ranges.probability);
  int kernel = odd_kernel(rng, ranges.motion_blur_min_px, ranges.motion_blur_max_px);
  double angle = uniform(rng, 0.0, 180.0);
  bool use_noise = bernoulli(rng, ranges.probability);
  double sigma = uniform(rng, ranges.noise_sigma_min, ranges.noise_sigma_max);
  std::uint64_t noise_seed = rng();
  bool use_shadow = bernoulli(rng, ranges.probability);
  std::uint64_t shadow_seed = rng();
  bool use_rain = bernoulli(rng, ranges.probability);
  std::uint64_t rain_seed = rng();
  if (use_blur) stack.push_back(DegradationSpec::motion_blur(kernel, angle));
  if (use_shadow) stack.push_back(DegradationSpec::shadow(shadow_seed));
  if (use_rain) stack.push_back(DegradationSpec::rain(rain_seed));
  if (use_noise) stack.push_back(DegradationSpec::gaussian_noise(sigma, noise_seed));
  return stack;
}

std::vector<DegradationSpec> synthesis_degradation_stack(Rng& rng, double probability,
                                                         const AugmentationRanges& ranges) {
  std::vector<DegradationSpec> stack;
  bool use_blur = bernoulli(rng, probability);
  int kernel = odd_kernel(rng, ranges.motion_blur_min_px, ranges.motion_blur_max_px);
  double angle = uniform(rng, 0.0, 180.0);
  bool use_brightness = bernoulli(rng, probability);
  double factor = uniform(rng, ranges.brightness_min, ranges.brightness_max);
  bool use_shadow = bernoulli(rng, probability);
  std::uint64_t shadow_seed = rng();
  bool use_rain = bernoulli(rng, probability);
  std::uint64_t rain_seed = rng();
  if (use_blur) stack.push_back(DegradationSpec::motion_blur(kernel, angle));
  if (use_brightness) stack.push_back(DegradationSpec::brightness(factor));
  if (use_shadow) stack.push_back(DegradationSpec::shadow(shadow_seed));
  if (use_rain) stack.push_back(DegradationSpec::rain(rain_seed));
  return stack;
}

void to_json(nlohmann::json& j, const DegradationSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case Kind::kMotionBlur:
      j["kernel_px"] = s.kernel_px;
      j["angle_deg"] = s.angle_deg;
      break;
    case Kind::kBoxBlur: j["kernel_px"] = s.kernel_px; break;
    case Kind::kBrightness: j["factor"] = s.factor; break;
    case Kind::kDimming:
      if (s.k) j["k"] = *s.k;
      j["factor"] = s.factor;
      break;
    case Kind::kGaussianNoise:
      j["sigma"] = s.sigma;
      j["seed"] = s.seed;
      break;
    case Kind::kShadow:
    case Kind::kRain: j["seed"] = s.seed; break;
  }
}

void from_json(const nlohmann::json& j, DegradationSpec& s) {
  s = DegradationSpec{};
  s.kind = kind_from_string(j.at("kind").get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    if (key == "kernel_px") s.kernel_px = value.get<int>();
    else if (key == "angle_deg") s.angle_deg = value.get<double>();
    else if (key == "factor") s.factor = value.get<double>();
    else if (key == "k") s.k = value.get<double>();
    else if (key == "sigma") s.sigma = value.get<double>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else fail(ErrorCode::kInvalidArgument, "unknown degradation field '" + key + "'");
  }
  if (s.kind == Kind::kDimming && s.k) s.factor = dimming_factor(*s.k);
  s.validate();
}

}  // namespace keypatch::degrade
