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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tacsim/camera.hpp"
#include "tacsim/common.hpp"
#include "tacsim/image.hpp"
#include "tacsim/particles.hpp"

namespace tacsim {

struct Rgb {
  std::uint8_t r, g, b;
};

// Channels uniform in [64, 255] so no particle renders near-black.
inline Rgb particle_color(std::uint64_t seed, std::uint64_t key) {
  Rng rng(derive_seed(seed, key));
  auto channel = [&] { return static_cast<std::uint8_t>(rng.uniform_int(64, 255)); };
  const auto r = channel();
  const auto g = channel();
  const auto b = channel();
  return {r, g, b};
}

// ITU-R BT.601 luma, rounded to 8 bits.
inline std::uint8_t luma(Rgb c) {
  const double y = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

struct RasterOptions {
  bool anti_alias = false;
  int supersample = 4;  // per axis, only with anti_alias
};

namespace detail {

inline void fill_ellipse(GrayImage& img, const Ellipse& e, std::uint8_t value, const RasterOptions& opt) {
  if (!(e.major > 0 && e.minor > 0)) return;
  const Mat2 q = e.shape_matrix();
  const Vec2 ext = e.half_extent();
  const int x_lo = std::max(0, static_cast<int>(std::floor(e.center.x() - ext.x())) - 1);
  const int x_hi = std::min(img.width() - 1, static_cast<int>(std::ceil(e.center.x() + ext.x())) + 1);
  const int y_lo = std::max(0, static_cast<int>(std::floor(e.center.y() - ext.y())) - 1);
  const int y_hi = std::min(img.height() - 1, static_cast<int>(std::ceil(e.center.y() + ext.y())) + 1);
  if (x_lo > x_hi || y_lo > y_hi) return;
  const double qa = q(0, 0), qb = q(0, 1), qc = q(1, 1);
  if (!opt.anti_alias) {
    // Scanline: solve qa dx^2 + 2 qb dx dy + qc dy^2 <= 1 for dx on each row.
    for (int y = y_lo; y <= y_hi; ++y) {
      const double dy = y - e.center.y();
      const double disc = qb * qb * dy * dy - qa * (qc * dy * dy - 1.0);
      if (disc < 0) continue;
      const double root = std::sqrt(disc);
      const double left = e.center.x() + (-qb * dy - root) / qa;
      const double right = e.center.x() + (-qb * dy + root) / qa;
      const int xa = std::max(x_lo, static_cast<int>(std::ceil(left)));
      const int xb = std::min(x_hi, static_cast<int>(std::floor(right)));
      for (int x = xa; x <= xb; ++x) img(x, y) = value;
    }
    return;
  }
  const int ss = std::max(1, opt.supersample);
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double dx = x - 0.5 + (sx + 0.5) / ss - e.center.x();
          const double dy = y - 0.5 + (sy + 0.5) / ss - e.center.y();
          if (qa * dx * dx + 2 * qb * dx * dy + qc * dy * dy <= 1.0) ++hits;
        }
      }
      if (hits == 0) continue;
      const double cov = static_cast<double>(hits) / (ss * ss);
      img(x, y) = static_cast<std::uint8_t>(std::lround(cov * value + (1 - cov) * img(x, y)));
    }
  }
}

}  // namespace detail

// Draws the ellipses in order onto a black canvas, each filled with a seeded
// random colour converted to grayscale; later ellipses overwrite earlier ones.
// `keys` (default: the draw index) select each ellipse's colour stream.
inline GrayImage rasterize(std::span<const Ellipse> ellipses, int width, int height, std::uint64_t seed,
                           std::span<const std::uint64_t> keys = {}, const RasterOptions& opt = {}) {
  if (!keys.empty() && keys.size() != ellipses.size()) throw DomainError("colour keys do not match ellipse count");
  GrayImage img(width, height, 0);
  for (std::size_t i = 0; i < ellipses.size(); ++i) {
    const std::uint64_t key = keys.empty() ? i : keys[i];
    detail::fill_ellipse(img, ellipses[i], luma(particle_color(seed, key)), opt);
  }
  return img;
}

struct TactileImagePair {
  GrayImage at_rest;
  GrayImage deformed;
  std::uint64_t seed = 0;
  int step_id = 0;
};

inline std::vector<Ellipse> project_particles(const ParticleSet& set, const PinholeCamera& cam, bool displaced) {
  std::vector<Ellipse> out;
  out.reserve(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) {
    Vec3 p = cam.gel_to_pinhole(set.positions[j]);
    if (displaced) p += cam.gel_disp_to_pinhole(set.displacements[j]);
    out.push_back(project_sphere(p, set.radii[j], cam));
  }
  return out;
}

// Rest and deformed renders of the same particles with identical colours.
inline TactileImagePair render_pair(const ParticleSet& set, const PinholeCamera& cam, std::uint64_t seed,
                                    int step_id = 0, const RasterOptions& opt = {}) {
  const auto rest = project_particles(set, cam, false);
  const auto moved = project_particles(set, cam, true);
  TactileImagePair pair;
  pair.at_rest = rasterize(rest, cam.width, cam.height, seed, set.ids, opt);
  pair.deformed = rasterize(moved, cam.width, cam.height, seed, set.ids, opt);
  pair.seed = seed;
  pair.step_id = step_id;
  return pair;
}

// Ellipse through a point set sampled uniformly in parameter around a closed
// curve: for x = c + A (cos t, sin t) the covariance is A A^T / 2.
inline Ellipse fit_ellipse_moments(std::span<const Vec2> pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  const Vec2 evals = es.eigenvalues().cwiseMax(0.0);  // ascending
  Ellipse e;
  e.center = mean;
  e.major = 2 * std::sqrt(2 * evals(1));
  e.minor = 2 * std::sqrt(2 * evals(0));
  const Vec2 axis = es.eigenvectors().col(1);
  e.orientation = std::atan2(axis.y(), axis.x());
  return e;
}

// Silhouette of a sphere as seen from the origin: the circle where the
// tangent cone touches it.
inline std::vector<Vec3> sphere_silhouette(const Vec3& center, double radius, int samples) {
  const double d2 = center.squaredNorm();
  const Vec3 axis = center.normalized();
  const Vec3 circle_center = center * (1 - radius * radius / d2);
  const double circle_radius = radius * std::sqrt(d2 - radius * radius) / std::sqrt(d2);
  Vec3 e1 = axis.cross(std::abs(axis.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX()).normalized();
  const Vec3 e2 = axis.cross(e1);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t = 2 * kPi * i / samples;
    pts.push_back(circle_center + circle_radius * (std::cos(t) * e1 + std::sin(t) * e2));
  }
  return pts;
}

// The particle scene seen through a fisheye camera. Each particle's
// silhouette is projected point-wise and replaced by its moment-fit ellipse.
inline GrayImage render_fisheye(const ParticleSet& set, const FisheyeCamera& cam, std::uint64_t seed,
                                bool displaced = false, const RasterOptions& opt = {}) {
  constexpr int kSilhouetteSamples = 32;
  std::vector<Ellipse> ellipses;
  std::vector<std::uint64_t> keys;
  std::vector<Vec2> px(kSilhouetteSamples);
  for (std::size_t j = 0; j < set.size(); ++j) {
    Vec3 g = set.positions[j];
    if (displaced) g += set.displacements[j];
    const Vec3 c = cam.gel_to_camera(g);
    if (!(c.norm() > set.radii[j])) continue;
    bool visible = true;
    const auto sil = sphere_silhouette(c, set.radii[j], kSilhouetteSamples);
    for (int i = 0; i < kSilhouetteSamples && visible; ++i) {
      auto p = cam.try_project(sil[static_cast<std::size_t>(i)]);
      if (!p) visible = false;
      else px[static_cast<std::size_t>(i)] = *p;
    }
    if (!visible) continue;
    ellipses.push_back(fit_ellipse_moments(px));
    keys.push_back(set.ids.empty() ? j : set.ids[j]);
  }
  return rasterize(ellipses, cam.width, cam.height, seed, keys, opt);
}

}  // namespace tacsim
