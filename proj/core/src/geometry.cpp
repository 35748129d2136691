// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "keypatch/error.hpp"

namespace keypatch::geometry {

namespace {

constexpr double kDenominatorEps = 1e-12;

Eigen::Matrix3d normalized(const Eigen::Matrix3d& m) {
  if (std::abs(m(2, 2)) < 1e-15) {
    fail(ErrorCode::kDegenerateProjection, "homography has m[2][2] == 0 and cannot be normalized");
  }
  Eigen::Matrix3d n = m / m(2, 2);
  if (std::abs(n.determinant()) <= 1e-9) {
    fail(ErrorCode::kDegenerateProjection, "homography is singular");
  }
  return n;
}

}  // namespace

Homography::Homography() : m_(Eigen::Matrix3d::Identity()) {}

Homography::Homography(const Eigen::Matrix3d& m) : m_(normalized(m)) {}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::from_row_major(const std::array<double, 9>& v) {
  Eigen::Matrix3d m;
  m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return Homography(m);
}

std::array<double, 9> Homography::row_major() const {
  return {m_(0, 0), m_(0, 1), m_(0, 2), m_(1, 0), m_(1, 1), m_(1, 2), m_(2, 0), m_(2, 1), m_(2, 2)};
}

Homography Homography::inverse() const { return Homography(Eigen::Matrix3d(m_.inverse())); }

Homography operator*(const Homography& a, const Homography& b) { return Homography(Eigen::Matrix3d(a.m_ * b.m_)); }

Point apply_homography(const Homography& h, Point p) {
  const Eigen::Matrix3d& m = h.matrix();
  double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) < kDenominatorEps) {
    fail(ErrorCode::kDegenerateProjection, "point maps to infinity");
  }
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w, (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

double Ellipse::geometric_mean_radius() const { return std::sqrt(semi_major * semi_minor); }

Ellipse warp_circle(const Homography& h, Point c, double radius) {
  Eigen::Matrix3d q;
  q << 1.0, 0.0, -c.x,  //
      0.0, 1.0, -c.y,   //
      -c.x, -c.y, c.x * c.x + c.y * c.y - radius * radius;
  Eigen::Matrix3d hinv = h.matrix().inverse();
  Eigen::Matrix3d qw = hinv.transpose() * q * hinv;
  qw = 0.5 * (qw + qw.transpose());
  Eigen::Matrix2d a = qw.topLeftCorner<2, 2>();
  Eigen::Vector2d b = qw.topRightCorner<2, 1>();
  double cc = qw(2, 2);
  if (a.determinant() <= 0.0) {
    fail(ErrorCode::kDegenerateProjection, "circle does not map to an ellipse");
  }
  if (a.trace() < 0.0) {
    a = -a;
    b = -b;
    cc = -cc;
  }
  Eigen::Vector2d x0 = -a.ldlt().solve(b);
  double rhs = -(cc + b.dot(x0));
  if (rhs <= 0.0) fail(ErrorCode::kDegenerateProjection, "imaginary ellipse");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(a);
  Eigen::Vector2d lambda = eig.eigenvalues();  // ascending
  Ellipse e;
  e.center = {x0(0), x0(1)};
  e.semi_major = std::sqrt(rhs / lambda(0));
  e.semi_minor = std::sqrt(rhs / lambda(1));
  return e;
}

void WarpConstraints::validate() const {
  require(min_short_axis_px >= 1.0, ErrorCode::kInvalidArgument, "min_short_axis_px must be >= 1");
  require(min_axis_ratio > 0.0 && min_axis_ratio <= 1.0, ErrorCode::kInvalidArgument,
          "min_axis_ratio must lie in (0, 1]");
  require(max_patches_per_image >= 0, ErrorCode::kInvalidArgument, "max_patches_per_image must be >= 0");
  require(image_width > 0 && image_height > 0, ErrorCode::kInvalidArgument, "image size must be positive");
}

namespace {

// Local transform about the origin: s * R(theta) * R(psi) * diag(1, a) * R(-psi)
// with a projective row (p1, p2, 1). The origin is a fixed point.
Eigen::Matrix3d local_transform(double s, double theta, double psi, double a, double p1, double p2) {
  Eigen::Matrix2d rot_t, rot_p, squash;
  rot_t << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  rot_p << std::cos(psi), -std::sin(psi), std::sin(psi), std::cos(psi);
  squash << 1.0, 0.0, 0.0, a;
  Eigen::Matrix2d lin = s * rot_t * rot_p * squash * rot_p.transpose();
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = lin;
  m(2, 0) = p1;
  m(2, 1) = p2;
  return m;
}

}  // namespace

Homography sample_patch_homography(Rng& rng, const WarpConstraints& constraints, int source_radius_px,
                                   const SamplerOptions& options) {
  constraints.validate();
  require(source_radius_px >= patch::kMinRadiusPx, ErrorCode::kInvalidArgument,
          "source radius below minimum " + std::to_string(patch::kMinRadiusPx));
  const double radius = source_radius_px;
  const double min_semi = 0.5 * constraints.min_short_axis_px;
  const double max_extent = 0.5 * std::min(constraints.image_width, constraints.image_height);
  if (min_semi >= max_extent) {
    fail(ErrorCode::kConstraintInfeasible,
         "minimum short axis " + std::to_string(constraints.min_short_axis_px) + " px does not fit a " +
             std::to_string(constraints.image_width) + "x" + std::to_string(constraints.image_height) + " image");
  }

  const double lo = std::max(options.min_scale, min_semi / radius);
  const double hi = std::min(options.max_scale, max_extent / (radius * 1.25));
  if (lo > hi) {
    fail(ErrorCode::kConstraintInfeasible,
         "no admissible scale for source radius " + std::to_string(source_radius_px));
  }

  const Eigen::Matrix3d to_origin = Homography::translation(-radius, -radius).matrix();
  const double corner = radius * std::numbers::sqrt2;

  for (int draw = 0; draw < options.max_scale_draws; ++draw) {
    const double s = std::exp(uniform(rng, std::log(lo), std::log(hi)));
    const double a_floor = std::min(1.0, std::max(constraints.min_axis_ratio, min_semi / (s * radius)));
    for (int attempt = 0; attempt < options.rejections_per_scale; ++attempt) {
      double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
      double psi = uniform(rng, -std::numbers::pi, std::numbers::pi);
      double tilt = uniform(rng, 0.0, std::acos(a_floor));
      double a = std::cos(tilt);
      double pmag = uniform(rng, 0.0, options.max_perspective) / corner;
      double pdir = uniform(rng, -std::numbers::pi, std::numbers::pi);
      Eigen::Matrix3d local =
          local_transform(s, theta, psi, a, pmag * std::cos(pdir), pmag * std::sin(pdir)) * to_origin;
      Ellipse e;
      try {
        e = warp_circle(Homography(local), {radius, radius}, radius);
      } catch (const Error&) {
        continue;
      }
      if (2.0 * e.semi_minor < constraints.min_short_axis_px) continue;
      if (e.semi_minor / e.semi_major < constraints.min_axis_ratio) continue;
      const double margin = e.semi_minor;
      const double x_hi = constraints.image_width - 1.0 - margin;
      const double y_hi = constraints.image_height - 1.0 - margin;
      if (x_hi < margin || y_hi < margin) continue;
      double tx = uniform(rng, margin, x_hi);
      double ty = uniform(rng, margin, y_hi);
      return Homography(Homography::translation(tx, ty).matrix() * local);
    }
  }
  fail(ErrorCode::kConstraintInfeasible, "homography sampler exhausted its rejection budget");
}

bool inside_footprint(const Homography& h, int source_width, int source_height, Point p) {
  const Eigen::Matrix3d inv = h.matrix().inverse();
  double w = inv(2, 0) * p.x + inv(2, 1) * p.y + inv(2, 2);
  if (w <= kDenominatorEps) return false;
  double sx = (inv(0, 0) * p.x + inv(0, 1) * p.y + inv(0, 2)) / w;
  double sy = (inv(1, 0) * p.x + inv(1, 1) * p.y + inv(1, 2)) / w;
  return sx >= -0.5 && sy >= -0.5 && sx <= source_width - 0.5 && sy <= source_height - 0.5;
}

std::size_t warp_image_onto(const Homography& h, const Image& source, Image& canvas) {
  require(source.channels() == 1, ErrorCode::kInvalidArgument, "warp source must be gray");
  const int sw = source.width();
  const int sh = source.height();

  double min_x = std::numeric_limits<double>::max(), min_y = min_x;
  double max_x = std::numeric_limits<double>::lowest(), max_y = max_x;
  const std::array<Point, 4> corners = {{{0, 0}, {sw - 1.0, 0}, {0, sh - 1.0}, {sw - 1.0, sh - 1.0}}};
  for (Point c : corners) {
    const Eigen::Matrix3d& m = h.matrix();
    double w = m(2, 0) * c.x + m(2, 1) * c.y + m(2, 2);
    if (w <= kDenominatorEps) {
      fail(ErrorCode::kDegenerateProjection, "source footprint crosses the line at infinity");
    }
    Point p = apply_homography(h, c);
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int x1 = std::min(canvas.width() - 1, static_cast<int>(std::ceil(max_x)));
  const int y1 = std::min(canvas.height() - 1, static_cast<int>(std::ceil(max_y)));
  if (x0 > x1 || y0 > y1) {
    fail(ErrorCode::kOutOfBoundsPlacement, "warped footprint lies outside the canvas");
  }

  const Eigen::Matrix3d inv = h.matrix().inverse();
  const double eps = 1e-9;
  std::size_t written = 0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      if (w <= kDenominatorEps) continue;
      double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
      double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
      if (sx < -eps || sy < -eps || sx > sw - 1 + eps || sy > sh - 1 + eps) continue;
      sx = std::clamp(sx, 0.0, sw - 1.0);
      sy = std::clamp(sy, 0.0, sh - 1.0);
      int ix = std::min(static_cast<int>(sx), sw - 2 < 0 ? 0 : sw - 2);
      int iy = std::min(static_cast<int>(sy), sh - 2 < 0 ? 0 : sh - 2);
      double fx = sx - ix;
      double fy = sy - iy;
      int ix1 = std::min(ix + 1, sw - 1);
      int iy1 = std::min(iy + 1, sh - 1);
      double v = (1 - fx) * (1 - fy) * source.at(ix, iy) + fx * (1 - fy) * source.at(ix1, iy) +
                 (1 - fx) * fy * source.at(ix, iy1) + fx * fy * source.at(ix1, iy1);
      std::uint8_t g = clamp_u8(v);
      for (int c = 0; c < canvas.channels(); ++c) canvas.at(x, y, c) = g;
      ++written;
    }
  }
  if (written == 0) fail(ErrorCode::kOutOfBoundsPlacement, "warped footprint covers no canvas pixel");
  return written;
}

WarpResult warp_raster_onto(const Homography& h, const patch::PatchRaster& raster, Image& canvas) {
  warp_image_onto(h, raster.pixels, canvas);
  WarpResult r;
  r.warped_center = apply_homography(h, {raster.center_x, raster.center_y});
  r.warped_radius = warp_circle(h, {raster.center_x, raster.center_y}, raster.radius_px).geometric_mean_radius();
  return r;
}

}  // namespace keypatch::geometry
