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
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tacsim/common.hpp"
#include "tacsim/contact.hpp"

namespace tacsim {

// The six test-shape families plus size variants, 21 in total.
inline std::vector<Indenter> default_indenter_library() {
  std::vector<Indenter> lib;
  auto add = [&](IndenterShape shape, std::string name) { lib.push_back({shape, Pose{}, std::move(name)}); };
  add(Sphere{5.0}, "spherical_large");
  add(FlatTriangle{8.0}, "triangular");
  add(FlatSquare{6.0}, "square");
  add(FlatCircle{2.0}, "cylindrical");
  add(Sphere{1.5}, "spherical_small");
  add(TiltedPlane{0.10}, "tilted_plane");
  for (double r : {2.0, 2.5, 3.0, 4.0}) add(Sphere{r}, "sphere_r" + std::to_string(static_cast<int>(r * 10)));
  for (double r : {1.0, 1.5, 3.0, 4.0}) add(FlatCircle{r}, "cylinder_r" + std::to_string(static_cast<int>(r * 10)));
  for (double s : {3.0, 4.0, 5.0}) add(FlatSquare{s}, "square_s" + std::to_string(static_cast<int>(s * 10)));
  for (double s : {5.0, 6.0}) add(FlatTriangle{s}, "triangle_s" + std::to_string(static_cast<int>(s * 10)));
  for (double a : {0.05, 0.15}) add(TiltedPlane{a}, "tilted_a" + std::to_string(static_cast<int>(a * 100)));
  return lib;
}

struct TrajectoryConfig {
  int steps = 50;
  double max_depth = 2.0;  // mm
  double max_lateral = 3.0;  // mm from the first-contact pose
  double max_step = 0.1;  // mm per axis between consecutive steps
  double min_target_depth = 0.2;  // mm, shallowest final depth of a vertical press
  double vertical_fraction = 0.8;
  double surface_width = 30.0;
  double surface_depth = 30.0;
  double region_scale = 1.05;  // must match the solver's region sizing
  std::vector<Indenter> indenters = default_indenter_library();

  // Deepest depth reachable within the step budget.
  double reachable_depth() const { return std::min(max_depth, max_step * steps); }

  void validate() const {
    if (steps < 1) throw DomainError("trajectory steps must be >= 1");
    if (!(max_step > 0 && max_depth > 0 && max_lateral >= 0)) throw DomainError("trajectory limits must be positive");
    if (!(min_target_depth > 0 && min_target_depth <= max_depth)) throw DomainError("min_target_depth out of range");
    if (!(vertical_fraction >= 0 && vertical_fraction <= 1)) throw DomainError("vertical_fraction must be in [0,1]");
    if (indenters.empty()) throw DomainError("indenter set is empty");
    for (const auto& ind : indenters) ind.validate();
  }
};

enum class TrajectoryKind { VerticalThenShear, Random3D };

inline const char* to_string(TrajectoryKind k) {
  return k == TrajectoryKind::VerticalThenShear ? "vertical_shear" : "random_3d";
}

struct TrajectoryStep {
  Pose pose;
  Vec2 lateral_offset = Vec2::Zero();
  int step_index = 0;
};

struct Trajectory {
  std::uint64_t seed = 0;
  TrajectoryKind kind = TrajectoryKind::VerticalThenShear;
  Indenter indenter;  // pose holds the first-contact placement (depth 0)
  std::vector<TrajectoryStep> steps;
};

namespace detail {

// Moves `from` along the segment towards `to`, scaled so no axis moves more
// than `cap`. Staying on the segment keeps the path inside convex limits.
inline Vec3 step_towards(const Vec3& from, const Vec3& to, double cap) {
  const Vec3 d = to - from;
  const double m = d.cwiseAbs().maxCoeff();
  if (m <= cap) return to;
  return from + d * (cap / m);
}

}  // namespace detail

// Draws one indentation trajectory. Vertical-then-shear trajectories press to
// a random depth and then translate along a random direction; the remainder
// wander between random 3D waypoints around the first-contact pose.
inline Trajectory generate_trajectory(std::uint64_t seed, const TrajectoryConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.indenter = cfg.indenters[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.indenters.size()) - 1))];
  const double yaw = rng.uniform(0.0, 2 * kPi);
  const double margin = cfg.region_scale * traj.indenter.footprint_radius(cfg.max_depth) + cfg.max_lateral + 0.05;
  if (2 * margin >= std::min(cfg.surface_width, cfg.surface_depth)) {
    throw DomainError("indenter '" + traj.indenter.name + "' cannot travel within the surface");
  }
  const double x0 = rng.uniform(margin, cfg.surface_width - margin);
  const double y0 = rng.uniform(margin, cfg.surface_depth - margin);
  traj.indenter.pose = Pose{x0, y0, 0.0, yaw};
  traj.kind = rng.bernoulli(cfg.vertical_fraction) ? TrajectoryKind::VerticalThenShear : TrajectoryKind::Random3D;

  // Offsets as (dx, dy, depth) relative to first contact.
  std::vector<Vec3> path;
  path.reserve(static_cast<std::size_t>(cfg.steps));
  // Per-axis caps are applied with a small guard so rounding never breaks them.
  const double cap = cfg.max_step * (1 - 1e-9);

  if (traj.kind == TrajectoryKind::VerticalThenShear) {
    const double deepest = cfg.reachable_depth() * (1 - 1e-9);
    const double target = rng.uniform(std::min(cfg.min_target_depth, deepest), deepest);
    const int min_press = static_cast<int>(std::ceil(target / cap));
    const int max_press = std::max(min_press, cfg.steps / 2);
    const int press = std::min(cfg.steps, static_cast<int>(rng.uniform_int(min_press, max_press)));
    for (int k = 0; k < press; ++k) path.emplace_back(0.0, 0.0, target * (k + 1) / press);
    const int slide = cfg.steps - press;
    if (slide > 0) {
      const double phi = rng.uniform(0.0, 2 * kPi);
      const double reach = std::min(cfg.max_lateral, cap * slide);
      const double length = rng.uniform(0.0, reach);
      for (int k = 1; k <= slide; ++k) {
        const double s = length * k / slide;
        path.emplace_back(s * std::cos(phi), s * std::sin(phi), target);
      }
    }
  } else {
    Vec3 cur(0.0, 0.0, 0.0);
    auto draw_waypoint = [&] {
      const double r = cfg.max_lateral * std::sqrt(rng.uniform());
      const double phi = rng.uniform(0.0, 2 * kPi);
      return Vec3(r * std::cos(phi), r * std::sin(phi), rng.uniform(std::min(cfg.min_target_depth, cfg.max_depth), cfg.max_depth));
    };
    Vec3 goal = draw_waypoint();
    for (int k = 0; k < cfg.steps; ++k) {
      if ((goal - cur).cwiseAbs().maxCoeff() < 1e-9) goal = draw_waypoint();
      cur = detail::step_towards(cur, goal, cap);
      // Keep a sliver of contact so every step carries load.
      cur.z() = std::max(cur.z(), std::min(cap, cfg.max_depth) * 0.5);
      path.push_back(cur);
    }
  }

  traj.steps.reserve(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    TrajectoryStep st;
    st.step_index = static_cast<int>(k);
    st.lateral_offset = Vec2(path[k].x(), path[k].y());
    st.pose = Pose{x0 + path[k].x(), y0 + path[k].y(), path[k].z(), yaw};
    traj.steps.push_back(st);
  }
  return traj;
}

}  // namespace tacsim
