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

// Toolchain configuration and the simulate pipeline: trajectory -> contact
// solve -> particle displacement -> render -> features -> labels -> dataset.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tacsim/camera.hpp"
#include "tacsim/common.hpp"
#include "tacsim/contact.hpp"
#include "tacsim/dataset.hpp"
#include "tacsim/features.hpp"
#include "tacsim/labels.hpp"
#include "tacsim/particles.hpp"
#include "tacsim/png_io.hpp"
#include "tacsim/render.hpp"
#include "tacsim/trajectory.hpp"

namespace tacsim {

struct PipelineConfig {
  ElasticHalfSpace material;
  int grid_n = 32;
  int trajectories = 3300;
  int steps = 50;
  double max_depth = 2.0;
  double max_lateral = 3.0;
  double max_step = 0.1;
  double vertical_fraction = 0.8;
  int indenter_count = 21;
  int particles = 80;
  ParticleLayer layer;
  DisplacementMode displacement = DisplacementMode::Idw;
  double camera_tz = 15.0;
  std::string feature_kind = "raw";
  std::string dataset_path = "dataset";
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 7;
  double force_cap_xy = 5.0;  // N, |total tangential force|
  double force_cap_z = 16.0;  // N, |total normal force|
  bool save_images = false;

  void validate() const {
    material.validate();
    if (grid_n < 16) throw DomainError("grid_n must be >= 16");
    if (trajectories < 1) throw DomainError("trajectories must be >= 1");
    if (particles < 1) throw DomainError("particles must be >= 1");
    if (indenter_count < 1 || indenter_count > 21) throw DomainError("indenter_count must be in [1, 21]");
    if (!(camera_tz > 0)) throw DomainError("camera_tz must be > 0");
    if (!(force_cap_xy > 0 && force_cap_z > 0)) throw DomainError("force caps must be > 0");
    feature_kind_from_string(feature_kind);
    trajectory_config().validate();
  }

  TrajectoryConfig trajectory_config() const {
    TrajectoryConfig t;
    t.steps = steps;
    t.max_depth = max_depth;
    t.max_lateral = max_lateral;
    t.max_step = max_step;
    t.vertical_fraction = vertical_fraction;
    t.surface_width = material.layer_width;
    t.surface_depth = material.layer_depth;
    auto lib = default_indenter_library();
    lib.resize(static_cast<std::size_t>(indenter_count));
    t.indenters = lib;
    return t;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["material"] = {{"young_modulus_pa", material.young_modulus},
                     {"poisson_ratio", material.poisson_ratio},
                     {"friction_mu", material.friction_mu},
                     {"layer_width_mm", material.layer_width},
                     {"layer_depth_mm", material.layer_depth},
                     {"gel_thickness_mm", material.gel_thickness},
                     {"tangential_stiffness", material.tangential_stiffness}};
    j["contact"] = {{"grid_n", grid_n}};
    j["trajectory"] = {{"count", trajectories},     {"steps", steps},
                       {"max_depth_mm", max_depth}, {"max_lateral_mm", max_lateral},
                       {"max_step_mm", max_step},   {"vertical_fraction", vertical_fraction},
                       {"indenter_count", indenter_count}};
    j["particles"] = {{"nominal_count", particles},
                      {"layer_thickness_mm", layer.thickness},
                      {"min_radius_mm", layer.min_radius},
                      {"max_radius_mm", layer.max_radius},
                      {"count_jitter", layer.count_jitter},
                      {"displacement", displacement == DisplacementMode::Idw ? "idw" : "direct"}};
    j["camera"] = {{"tz_mm", camera_tz}};
    j["features"] = {{"kind", feature_kind}};
    j["dataset"] = {{"path", dataset_path}, {"split_seed", split_seed}, {"save_images", save_images}};
    j["limits"] = {{"force_cap_xy_n", force_cap_xy}, {"force_cap_z_n", force_cap_z}};
    j["seed"] = seed;
    return j;
  }

  // Strict reader: every key must be known; missing keys keep defaults.
  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    const auto ref = c.to_json();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!ref.contains(it.key())) throw DomainError("unknown config section '" + it.key() + "'");
      if (it->is_object()) {
        for (auto jt = it->begin(); jt != it->end(); ++jt) {
          if (!ref[it.key()].contains(jt.key())) throw DomainError("unknown config key '" + it.key() + "." + jt.key() + "'");
        }
      }
    }
    auto get = [&](const char* sec, const char* key, auto& out) {
      if (j.contains(sec) && j[sec].contains(key)) out = j[sec][key].get<std::decay_t<decltype(out)>>();
    };
    try {
      get("material", "young_modulus_pa", c.material.young_modulus);
      get("material", "poisson_ratio", c.material.poisson_ratio);
      get("material", "friction_mu", c.material.friction_mu);
      get("material", "layer_width_mm", c.material.layer_width);
      get("material", "layer_depth_mm", c.material.layer_depth);
      get("material", "gel_thickness_mm", c.material.gel_thickness);
      get("material", "tangential_stiffness", c.material.tangential_stiffness);
      get("contact", "grid_n", c.grid_n);
      get("trajectory", "count", c.trajectories);
      get("trajectory", "steps", c.steps);
      get("trajectory", "max_depth_mm", c.max_depth);
      get("trajectory", "max_lateral_mm", c.max_lateral);
      get("trajectory", "max_step_mm", c.max_step);
      get("trajectory", "vertical_fraction", c.vertical_fraction);
      get("trajectory", "indenter_count", c.indenter_count);
      get("particles", "nominal_count", c.particles);
      get("particles", "layer_thickness_mm", c.layer.thickness);
      get("particles", "min_radius_mm", c.layer.min_radius);
      get("particles", "max_radius_mm", c.layer.max_radius);
      get("particles", "count_jitter", c.layer.count_jitter);
      std::string disp = "idw";
      get("particles", "displacement", disp);
      if (disp != "idw" && disp != "direct") throw DomainError("particles.displacement must be 'idw' or 'direct'");
      c.displacement = disp == "idw" ? DisplacementMode::Idw : DisplacementMode::Direct;
      get("camera", "tz_mm", c.camera_tz);
      get("features", "kind", c.feature_kind);
      get("dataset", "path", c.dataset_path);
      get("dataset", "split_seed", c.split_seed);
      get("dataset", "save_images", c.save_images);
      get("limits", "force_cap_xy_n", c.force_cap_xy);
      get("limits", "force_cap_z_n", c.force_cap_z);
      if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw DomainError(std::string("config type error: ") + ex.what());
    }
    c.layer.width = c.material.layer_width;
    c.layer.depth = c.material.layer_depth;
    c.validate();
    return c;
  }

  std::string hash() const { return hex64(fnv1a(to_json().dump())); }

  PinholeCamera camera() const { return PinholeCamera::centered(camera_tz); }
};

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw DomainError(std::string("config parse failure: ") + ex.what());
  }
  return PipelineConfig::from_json(j);
}

struct StepResult {
  Sample sample;
  TactileImagePair images;
};

namespace detail {

// Largest fraction of `x` (by bisection) whose response stays within `cap`.
inline double bisect_cap(const std::function<double(double)>& response, double x, double cap) {
  double lo = 0, hi = x;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (response(mid) <= cap) lo = mid;
    else hi = mid;
  }
  return lo;
}

}  // namespace detail

// Contact forces for one step with the configured force caps enforced by
// backing off depth (normal) and lateral offset (shear).
inline ContactSolution solve_step(const PipelineConfig& cfg, const Indenter& ind, Vec2 lateral) {
  auto normal = [&](double depth) {
    Indenter i = ind;
    i.pose.depth = depth;
    return solve_normal_contact(cfg.material, i, cfg.grid_n);
  };
  ContactSolution sol = normal(ind.pose.depth);
  if (-sol.total_force().z() > cfg.force_cap_z) {
    const double d = detail::bisect_cap([&](double x) { return -normal(x).total_force().z(); }, ind.pose.depth, cfg.force_cap_z);
    sol = normal(d);
  }
  ContactSolution sheared = apply_shear(sol, lateral, cfg.material);
  auto txy = [](const ContactSolution& s) { return s.total_force().head<2>().norm(); };
  if (txy(sheared) > cfg.force_cap_xy) {
    const double f = detail::bisect_cap([&](double x) { return txy(apply_shear(sol, lateral * x, cfg.material)); }, 1.0, cfg.force_cap_xy);
    sheared = apply_shear(sol, lateral * f, cfg.material);
  }
  return sheared;
}

inline StepResult simulate_step(const PipelineConfig& cfg, const Trajectory& traj, std::uint64_t traj_id, int step) {
  const auto& st = traj.steps[static_cast<std::size_t>(step)];
  Indenter ind = traj.indenter;
  ind.pose = st.pose;
  const ContactSolution sol = solve_step(cfg, ind, st.lateral_offset);
  StepResult r;
  r.sample.label = bin_forces(sol.nodal_forces(), cfg.material.layer_width);
  const std::uint64_t step_seed = derive_seed(traj.seed, static_cast<std::uint64_t>(step));
  ParticleLayer layer = cfg.layer;
  layer.width = cfg.material.layer_width;
  layer.depth = cfg.material.layer_depth;
  const ParticleSet rest = sample_particles(derive_seed(step_seed, 1), cfg.particles, layer);
  DisplacementOptions dopt;
  dopt.mode = cfg.displacement;
  const ParticleSet moved = displace_particles(rest, sol, cfg.material, layer, dopt);
  r.images = render_pair(moved, cfg.camera(), derive_seed(step_seed, 2), step);
  if (feature_kind_from_string(cfg.feature_kind) == FeatureKind::OpticalFlow) {
    r.sample.features = pool_flow(dense_flow(r.images.at_rest, r.images.deformed));
  } else {
    r.sample.features = raw_features(r.images.at_rest, r.images.deformed);
  }
  r.sample.meta = {traj_id, step, traj.indenter.name, step_seed};
  return r;
}

struct SimulateSummary {
  std::size_t samples = 0;
  std::array<std::array<double, 2>, 3> force_ranges{};
  std::string config_hash;
  bool complete = true;
};

inline std::string image_name(std::uint64_t traj, int step, const char* role) {
  std::ostringstream os;
  os << "t" << traj << "_s" << step << "_" << role << ".png";
  return os.str();
}

// Runs every trajectory and writes the dataset. Trajectories are spread over
// `workers` threads; output order is trajectory-major regardless.
inline SimulateSummary simulate(const PipelineConfig& cfg, int workers = 1,
                                const std::function<void(int done, int total)>& progress = {}) {
  cfg.validate();
  const auto tcfg = cfg.trajectory_config();
  const int n = cfg.trajectories;
  std::vector<std::vector<Sample>> per_traj(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  const std::filesystem::path root(cfg.dataset_path);
  if (cfg.save_images) std::filesystem::create_directories(root / "images");
  std::atomic<int> next{0}, done{0};
  std::atomic<bool> failed{false};
  std::mutex progress_mu;
  auto worker = [&] {
    for (int t = next++; t < n && !failed; t = next++) {
      const auto id = static_cast<std::uint64_t>(t);
      int step = -1;
      try {
        const Trajectory traj = generate_trajectory(derive_seed(cfg.seed, id), tcfg);
        auto& out = per_traj[static_cast<std::size_t>(t)];
        for (step = 0; step < static_cast<int>(traj.steps.size()); ++step) {
          StepResult r = simulate_step(cfg, traj, id, step);
          if (cfg.save_images) {
            write_png((root / "images" / image_name(id, step, "rest")).string(), r.images.at_rest);
            write_png((root / "images" / image_name(id, step, "deformed")).string(), r.images.deformed);
          }
          out.push_back(std::move(r.sample));
        }
      } catch (const std::exception& ex) {
        std::ostringstream msg;
        msg << "trajectory " << t << (step >= 0 ? " step " + std::to_string(step) : std::string()) << ": " << ex.what();
        errors[static_cast<std::size_t>(t)] = msg.str();
        failed = true;
      }
      const int d = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        progress(d, n);
      }
    }
  };
  const int w = std::clamp(workers, 1, n);
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Keep the longest prefix of fully simulated trajectories.
  std::vector<Sample> samples;
  std::string first_error;
  for (int t = 0; t < n; ++t) {
    if (!errors[static_cast<std::size_t>(t)].empty()) {
      first_error = errors[static_cast<std::size_t>(t)];
      break;
    }
    if (static_cast<int>(per_traj[static_cast<std::size_t>(t)].size()) != cfg.steps) {
      first_error = "trajectory " + std::to_string(t) + " was not simulated";
      break;
    }
    for (auto& s : per_traj[static_cast<std::size_t>(t)]) samples.push_back(std::move(s));
  }
  SimulateSummary sum;
  sum.config_hash = cfg.hash();
  sum.complete = first_error.empty();
  write_dataset(cfg.dataset_path, samples, cfg.split_seed, sum.config_hash, sum.complete);
  {
    std::ofstream out(root / "config.json");
    out << cfg.to_json().dump(2) << "\n";
  }
  if (!sum.complete) throw Error("simulation aborted at " + first_error);
  sum.samples = samples.size();
  for (int c = 0; c < 3; ++c) sum.force_ranges[c] = {0.0, 0.0};
  bool first = true;
  for (const auto& s : samples) {
    const Vec3 f = total_force(s.label);
    for (int c = 0; c < 3; ++c) {
      if (first) sum.force_ranges[c] = {f[c], f[c]};
      sum.force_ranges[c][0] = std::min(sum.force_ranges[c][0], f[c]);
      sum.force_ranges[c][1] = std::max(sum.force_ranges[c][1], f[c]);
    }
    first = false;
  }
  return sum;
}

}  // namespace tacsim
