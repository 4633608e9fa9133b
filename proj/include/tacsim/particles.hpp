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
#include <limits>
#include <utility>
#include <vector>

#include "tacsim/common.hpp"
#include "tacsim/contact.hpp"

namespace tacsim {

struct ParticleLayer {
  double width = 30.0;  // mm
  double depth = 30.0;
  double thickness = 4.5;  // particle-bearing part of the 6 mm soft stack
  double min_radius = 0.075;  // mm
  double max_radius = 0.090;
  double count_jitter = 0.05;  // relative, uniform
};

struct ParticleSet {
  std::vector<Vec3> positions;  // gel frame, mm
  std::vector<Vec3> displacements;  // gel frame, mm
  std::vector<double> radii;  // mm
  // Stable per-particle identity; render colours are keyed on it.
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return positions.size(); }
};

// Uniform particle positions inside the layer, with the count drawn uniformly
// from nominal +/- jitter.
inline ParticleSet sample_particles(std::uint64_t seed, int nominal_count, const ParticleLayer& layer = {}) {
  if (nominal_count <= 0) throw DomainError("nominal particle count must be > 0");
  Rng rng(seed);
  const auto lo = static_cast<std::int64_t>(std::lround(nominal_count * (1 - layer.count_jitter)));
  const auto hi = static_cast<std::int64_t>(std::lround(nominal_count * (1 + layer.count_jitter)));
  const auto count = static_cast<std::size_t>(rng.uniform_int(std::max<std::int64_t>(lo, 1), hi));
  ParticleSet set;
  set.positions.reserve(count);
  set.radii.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = rng.uniform(0.0, layer.width);
    const double y = rng.uniform(0.0, layer.depth);
    const double z = rng.uniform(0.0, layer.thickness);
    set.positions.emplace_back(x, y, z);
    set.radii.push_back(rng.uniform(layer.min_radius, layer.max_radius));
    set.ids.push_back(i);
  }
  set.displacements.assign(count, Vec3::Zero());
  return set;
}

// Displacement samples at discrete nodes (the role FEM mesh nodes play).
struct NodalField {
  std::vector<Vec3> positions;
  std::vector<Vec3> values;
};

// Bucket grid for k-nearest-neighbour queries over a fixed node set.
class NodeIndex {
 public:
  explicit NodeIndex(const std::vector<Vec3>& points) : points_(&points) {
    if (points.empty()) throw DomainError("node index requires at least one node");
    lo_ = hi_ = points.front();
    for (const auto& p : points) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    const Vec3 ext = (hi_ - lo_).cwiseMax(Vec3::Constant(1e-9));
    // About two nodes per bucket.
    const double vol = ext.prod();
    cell_ = std::cbrt(2.0 * vol / static_cast<double>(points.size()));
    cell_ = std::max(cell_, ext.maxCoeff() / 256.0);
    for (int k = 0; k < 3; ++k) dims_[k] = std::max(1, static_cast<int>(std::ceil(ext[k] / cell_)));
    buckets_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], {});
    for (std::size_t i = 0; i < points.size(); ++i) buckets_[bucket_of(points[i])].push_back(i);
  }

  // Indices of the k nearest nodes, nearest first; ties broken by index.
  std::vector<std::size_t> nearest(const Vec3& q, std::size_t k) const {
    const auto& pts = *points_;
    k = std::min(k, pts.size());
    std::vector<std::pair<double, std::size_t>> best;
    const std::array<int, 3> c = coords_of(q);
    const int max_ring = std::max({dims_[0], dims_[1], dims_[2]}) + 1;
    for (int ring = 0; ring <= max_ring; ++ring) {
      for (int dz = -ring; dz <= ring; ++dz) {
        for (int dy = -ring; dy <= ring; ++dy) {
          for (int dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
            if (x < 0 || y < 0 || z < 0 || x >= dims_[0] || y >= dims_[1] || z >= dims_[2]) continue;
            for (std::size_t i : buckets_[flat(x, y, z)]) best.emplace_back((pts[i] - q).squaredNorm(), i);
          }
        }
      }
      if (best.size() >= k) {
        std::sort(best.begin(), best.end());
        // Anything outside the searched shell is at least `ring * cell_` away
        // from the query's bucket boundary.
        const double safe = ring * cell_;
        if (best[k - 1].first <= safe * safe || ring == max_ring) break;
      }
    }
    std::sort(best.begin(), best.end());
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k && i < best.size(); ++i) out.push_back(best[i].second);
    return out;
  }

 private:
  std::array<int, 3> coords_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(static_cast<int>(std::floor((p[k] - lo_[k]) / cell_)), 0, dims_[k] - 1);
    return c;
  }
  std::size_t flat(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
  }
  std::size_t bucket_of(const Vec3& p) const {
    const auto c = coords_of(p);
    return flat(c[0], c[1], c[2]);
  }

  const std::vector<Vec3>* points_;
  Vec3 lo_, hi_;
  double cell_ = 1;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::vector<std::size_t>> buckets_;
};

struct IdwOptions {
  double power = 2.0;
  std::size_t k = 8;
};

namespace detail {

inline Vec3 shepard(const NodalField& field, const std::vector<std::size_t>& ids, const Vec3& q, double power) {
  Vec3 num = Vec3::Zero();
  double den = 0;
  for (std::size_t i : ids) {
    const double d = (field.positions[i] - q).norm();
    if (d < 1e-12) return field.values[i];
    const double w = std::pow(d, -power);
    num += w * field.values[i];
    den += w;
  }
  return num / den;
}

}  // namespace detail

// Shepard inverse-distance interpolation over the k nearest nodes.
inline Vec3 idw_interpolate(const NodalField& field, const NodeIndex& index, const Vec3& query,
                            const IdwOptions& opt = {}) {
  if (field.positions.empty()) throw DomainError("IDW field is empty");
  if (!(opt.power > 0)) throw DomainError("IDW power must be > 0");
  return detail::shepard(field, index.nearest(query, opt.k), query, opt.power);
}

inline Vec3 idw_interpolate(const NodalField& field, const Vec3& query, const IdwOptions& opt = {}) {
  const NodeIndex index(field.positions);
  return idw_interpolate(field, index, query, opt);
}

enum class DisplacementMode { Idw, Direct };

struct DisplacementOptions {
  DisplacementMode mode = DisplacementMode::Idw;
  double node_spacing = 1.0;  // mm, lattice pitch in x and y
  double node_spacing_z = 0.75;  // mm
  IdwOptions idw;
};

// Regular lattice of sample nodes over the particle layer carrying the
// oracle's displacement field.
inline NodalField sample_displacement_field(const ContactSolution& sol, const ElasticHalfSpace& hs,
                                            const ParticleLayer& layer, const DisplacementOptions& opt = {}) {
  auto axis = [](double extent, double pitch) {
    const int n = std::max(1, static_cast<int>(std::ceil(extent / pitch - 1e-9)));
    std::vector<double> v(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) v[static_cast<std::size_t>(i)] = extent * i / n;
    return v;
  };
  const auto xs = axis(layer.width, opt.node_spacing);
  const auto ys = axis(layer.depth, opt.node_spacing);
  const auto zs = axis(layer.thickness, opt.node_spacing_z);
  NodalField field;
  field.positions.reserve(xs.size() * ys.size() * zs.size());
  for (double z : zs)
    for (double y : ys)
      for (double x : xs) field.positions.emplace_back(x, y, z);
  field.values.resize(field.positions.size());
  for (std::size_t i = 0; i < field.positions.size(); ++i) {
    field.values[i] = displacement_at(sol, field.positions[i], hs);
  }
  return field;
}

// Sets each particle's displacement from the contact solution; positions are
// left unchanged.
inline ParticleSet displace_particles(const ParticleSet& set, const ContactSolution& sol, const ElasticHalfSpace& hs,
                                      const ParticleLayer& layer = {}, const DisplacementOptions& opt = {}) {
  ParticleSet out = set;
  out.displacements.assign(set.size(), Vec3::Zero());
  if (opt.mode == DisplacementMode::Direct) {
    for (std::size_t j = 0; j < set.size(); ++j) out.displacements[j] = displacement_at(sol, set.positions[j], hs);
    return out;
  }
  const NodalField field = sample_displacement_field(sol, hs, layer, opt);
  const NodeIndex index(field.positions);
  for (std::size_t j = 0; j < set.size(); ++j) {
    out.displacements[j] = idw_interpolate(field, index, set.positions[j], opt.idw);
  }
  return out;
}

}  // namespace tacsim
