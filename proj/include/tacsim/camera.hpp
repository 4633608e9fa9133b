/**
 * Copyright 2026 The tacsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Gel, pinhole and real-camera frames, the ideal pinhole model with the
// sphere-to-ellipse projection, and the polynomial fisheye model.

#include <array>
#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "tacsim/common.hpp"

namespace tacsim {

inline constexpr int kPinholeResolution = 440;
inline constexpr double kLayerWidth = 30.0;  // mm

// Focal length that makes the 30 mm particle layer span the 440 px image at
// camera distance tz.
inline double focal_from_geometry(double tz, int resolution = kPinholeResolution, double layer_width = kLayerWidth) {
  if (!(tz > 0)) throw DomainError("focal_from_geometry requires tz > 0");
  return resolution / layer_width * tz;
}

inline bool is_rotation(const Mat3& r, double tol = 1e-12) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol && std::abs(r.determinant() - 1) <= 1e-9;
}

struct PinholeCamera {
  double f = focal_from_geometry(15.0);
  // Pixel i covers [i - 0.5, i + 0.5], so the layer fills the frame exactly.
  double u0 = (kPinholeResolution - 1) / 2.0;
  double v0 = (kPinholeResolution - 1) / 2.0;
  int width = kPinholeResolution;
  int height = kPinholeResolution;
  Mat3 rotation_gp = Mat3::Identity();
  Vec3 translation_gp = Vec3(-15.0, -15.0, 15.0);

  // Camera centred under the layer, looking along gel +z.
  static PinholeCamera centered(double tz = 15.0) {
    PinholeCamera cam;
    cam.translation_gp = Vec3(-kLayerWidth / 2, -kLayerWidth / 2, tz);
    cam.f = focal_from_geometry(tz);
    return cam;
  }

  void validate() const {
    if (!is_rotation(rotation_gp)) throw DomainError("pinhole rotation is not orthonormal");
    if (!(translation_gp.z() > 0)) throw DomainError("pinhole tz must be > 0");
    if (!(f > 0)) throw DomainError("pinhole focal length must be > 0");
    if (width <= 0 || height <= 0) throw DomainError("pinhole resolution must be positive");
  }

  Vec3 gel_to_pinhole(const Vec3& p) const { return rotation_gp * p + translation_gp; }
  // Displacement vectors rotate but do not translate.
  Vec3 gel_disp_to_pinhole(const Vec3& d) const { return rotation_gp * d; }
  Vec3 pinhole_to_gel(const Vec3& p) const { return rotation_gp.transpose() * (p - translation_gp); }

  Vec2 project(const Vec3& p) const { return {f * p.x() / p.z() + u0, f * p.y() / p.z() + v0}; }

  // Point on the plane at pinhole depth `z` that images to pixel (u, v).
  Vec3 back_project(const Vec2& px, double z) const {
    return {z / f * (px.x() - u0), z / f * (px.y() - v0), z};
  }
};

struct Ellipse {
  Vec2 center = Vec2::Zero();
  double major = 0;  // full axis lengths, px
  double minor = 0;
  double orientation = 0;  // major-axis angle from the image u axis, rad

  // Quadratic form Q with (p - c)^T Q (p - c) <= 1 inside.
  Mat2 shape_matrix() const {
    const double a = major / 2;
    const double b = minor / 2;
    const double c = std::cos(orientation);
    const double s = std::sin(orientation);
    Mat2 rot;
    rot << c, -s, s, c;
    Mat2 d = Mat2::Zero();
    d(0, 0) = 1 / (a * a);
    d(1, 1) = 1 / (b * b);
    return rot * d * rot.transpose();
  }

  // Half extents of the axis-aligned bounding box.
  Vec2 half_extent() const {
    const double a = major / 2;
    const double b = minor / 2;
    const double c = std::cos(orientation);
    const double s = std::sin(orientation);
    return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
  }
};

namespace detail {

// Extreme points of a sphere's image along the radial line, in the plane
// containing the optical axis and the sphere centre. Returns (x_r, z_r,
// x_l, z_l) in that plane's (radial, depth) coordinates.
inline std::array<double, 4> radial_extremes(double radial, double z, double radius) {
  const double alpha = std::atan2(z, radial);
  const double beta = std::asin(radius / std::hypot(radial, z));
  const double gamma = alpha - beta;
  return {radial + radius * std::sin(gamma), z - radius * std::cos(gamma), radial - radius * std::sin(gamma + 2 * beta),
          z + radius * std::cos(gamma + 2 * beta)};
}

}  // namespace detail

// Image of a sphere under the pinhole camera. `center` is in the pinhole frame.
inline Ellipse project_sphere(const Vec3& center, double radius, const PinholeCamera& cam) {
  if (!(radius > 0)) throw GeometryError("sphere radius must be > 0");
  if (!(center.z() > radius)) throw GeometryError("sphere is not fully in front of the camera");
  const double radial = std::hypot(center.x(), center.y());
  const auto [xr, zr, xl, zl] = detail::radial_extremes(radial, center.z(), radius);
  const double omega = std::atan2(center.y(), center.x());
  const double c = std::cos(omega);
  const double s = std::sin(omega);
  Ellipse e;
  e.orientation = omega;
  e.major = std::abs(cam.f * (xr / zr - xl / zl));
  const Vec2 pr(cam.f * xr * c / zr + cam.u0, cam.f * xr * s / zr + cam.v0);
  const Vec2 pl(cam.f * xl * c / zl + cam.u0, cam.f * xl * s / zl + cam.v0);
  e.center = 0.5 * (pr + pl);
  // The minor axis depends on depth only; evaluate it on the optical axis.
  const auto [xr0, zr0, xl0, zl0] = detail::radial_extremes(0.0, center.z(), radius);
  e.minor = std::abs(cam.f * (xr0 / zr0 - xl0 / zl0));
  // Guard against rounding making the two axes cross for near-axial spheres.
  if (e.minor > e.major) e.major = e.minor;
  return e;
}

// Polynomial fisheye: incidence angle theta (or tan(theta) for the
// perspective variant) maps to an image radius rho through a 4th-order
// polynomial with rho(0) = 0, followed by a 2x2 affine stretch.
enum class RadialArgument { Angle, Tangent };

struct FisheyeCamera {
  std::array<double, 5> poly{0.0, 220.0, 0.0, 0.0, 0.0};  // a0..a4
  Mat2 stretch = Mat2::Identity();
  Vec2 center = Vec2(219.5, 219.5);
  Mat3 rotation_gc = Mat3::Identity();
  Vec3 translation_gc = Vec3(-15.0, -15.0, 15.0);
  int width = kPinholeResolution;
  int height = kPinholeResolution;
  double theta_max = 1.3;  // rad, edge of the calibrated field
  RadialArgument argument = RadialArgument::Angle;

  double radius(double t) const {
    double r = 0;
    for (int k = 4; k >= 0; --k) r = r * t + poly[static_cast<std::size_t>(k)];
    return r;
  }
  double radius_derivative(double t) const {
    double r = 0;
    for (int k = 4; k >= 1; --k) r = r * t + k * poly[static_cast<std::size_t>(k)];
    return r;
  }
  double argument_of(double theta) const { return argument == RadialArgument::Angle ? theta : std::tan(theta); }

  // rho must be strictly increasing over [0, theta_max] and vanish at 0.
  bool is_monotone(int samples = 2048) const {
    if (poly[0] != 0) return false;
    const double t_end = argument_of(theta_max);
    double prev = radius(0);
    for (int i = 1; i <= samples; ++i) {
      const double t = t_end * i / samples;
      const double r = radius(t);
      if (!(r > prev) || radius_derivative(t) <= 0) return false;
      prev = r;
    }
    return radius_derivative(0) > 0;
  }

  void validate() const {
    if (!(theta_max > 0 && theta_max < kPi)) throw DomainError("fisheye theta_max out of range");
    if (argument == RadialArgument::Tangent && theta_max >= kPi / 2) {
      throw DomainError("perspective fisheye requires theta_max < pi/2");
    }
    if (!is_rotation(rotation_gc, 1e-9)) throw DomainError("fisheye rotation is not orthonormal");
    if (!is_monotone()) throw DomainError("fisheye projection polynomial is not monotone on [0, theta_max]");
    if (std::abs(stretch.determinant()) < 1e-12) throw DomainError("fisheye stretch is singular");
  }

  Vec3 gel_to_camera(const Vec3& g) const { return rotation_gc * g + translation_gc; }

  // Pixel of a camera-frame point, or nullopt when it lies outside the
  // calibrated field.
  std::optional<Vec2> try_project(const Vec3& p) const {
    if (!(p.z() > 0)) return std::nullopt;
    const double r = std::hypot(p.x(), p.y());
    const double theta = std::atan2(r, p.z());
    if (theta > theta_max) return std::nullopt;
    if (r == 0) return center;
    const double rho = radius(argument_of(theta));
    return Vec2(stretch * Vec2(rho * p.x() / r, rho * p.y() / r) + center);
  }

  Vec2 project(const Vec3& p) const {
    if (!(p.z() > 0)) throw GeometryError("fisheye_project requires z > 0");
    auto px = try_project(p);
    if (!px) throw GeometryError("point lies outside the fisheye field");
    return *px;
  }
};

inline Vec2 fisheye_project(const Vec3& point, const FisheyeCamera& cam) { return cam.project(point); }

// Fisheye that reproduces `pin` exactly: same extrinsics, rho = f tan(theta).
inline FisheyeCamera fisheye_matching_pinhole(const PinholeCamera& pin) {
  FisheyeCamera fe;
  fe.poly = {0.0, pin.f, 0.0, 0.0, 0.0};
  fe.argument = RadialArgument::Tangent;
  fe.center = Vec2(pin.u0, pin.v0);
  fe.rotation_gc = pin.rotation_gp;
  fe.translation_gc = pin.translation_gp;
  fe.width = pin.width;
  fe.height = pin.height;
  fe.theta_max = 1.4;
  return fe;
}

}  // namespace tacsim
