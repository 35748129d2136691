// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include <Eigen/Core>

#include "keypatch/image.hpp"
#include "keypatch/patch_designs.hpp"
#include "keypatch/random.hpp"

namespace keypatch::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// 3x3 projective transform, always stored with m(2,2) == 1.
class Homography {
 public:
  Homography();  // identity
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography translation(double tx, double ty);
  static Homography from_row_major(const std::array<double, 9>& v);

  const Eigen::Matrix3d& matrix() const { return m_; }
  std::array<double, 9> row_major() const;
  Homography inverse() const;

  friend Homography operator*(const Homography& a, const Homography& b);

 private:
  Eigen::Matrix3d m_;
};

Point apply_homography(const Homography& h, Point p);

// Image of a circle under a homography.
struct Ellipse {
  Point center;
  double semi_major = 0.0;
  double semi_minor = 0.0;

  double geometric_mean_radius() const;
};

// Closed form via the transformed conic. Throws degenerate-projection if
// the circle does not map to a bounded ellipse.
Ellipse warp_circle(const Homography& h, Point center, double radius);

struct WarpConstraints {
  double min_short_axis_px = 10.0;
  double min_axis_ratio = 0.2;  // short / long of the warped bounding circle
  int max_patches_per_image = 10;
  int image_width = 640;
  int image_height = 480;

  void validate() const;
};

// Free parameters of the sampler; the constraints above are hard limits.
struct SamplerOptions {
  double min_scale = 0.75;
  double max_scale = 1.35;
  double max_perspective = 0.12;  // max |1 - w| over the raster footprint
  int rejections_per_scale = 100;
  int max_scale_draws = 50;
};

// Random scale x rotation x tilt x perspective x translation that maps the
// source raster center (R, R) into the image. The bounding circle maps to
// an ellipse satisfying `constraints`, and the center keeps a margin of the
// warped short semi-axis from every image border.
Homography sample_patch_homography(Rng& rng, const WarpConstraints& constraints, int source_radius_px,
                                   const SamplerOptions& options = {});

struct WarpResult {
  Point warped_center;
  double warped_radius = 0.0;
};

// Inverse-mapped bilinear composite. Every canvas pixel whose preimage lies
// in the raster's sampling domain is overwritten (painter's order).
WarpResult warp_raster_onto(const Homography& h, const patch::PatchRaster& raster, Image& canvas);

// Same compositing rule for an arbitrary gray source. Returns the number of
// canvas pixels written; throws out-of-bounds-placement when zero could be.
std::size_t warp_image_onto(const Homography& h, const Image& source, Image& canvas);

// True if p lies inside the warped footprint of a source of the given size.
bool inside_footprint(const Homography& h, int source_width, int source_height, Point p);

}  // namespace keypatch::geometry
