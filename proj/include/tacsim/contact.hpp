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

// Rigid-indenter contact on a linear-elastic half-space.
//
// Units throughout: millimetres, newtons, N/mm^2 for tractions. The surface
// occupies z = gel_thickness in the gel frame (z up, origin at a bottom corner
// of the particle layer); the half-space extends downwards from there.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "tacsim/common.hpp"

namespace tacsim {

struct ElasticHalfSpace {
  double young_modulus = 50e3;  // Pa
  double poisson_ratio = 0.48;
  double friction_mu = 0.9;
  double layer_width = 30.0;  // mm, x extent of the sensing surface
  double layer_depth = 30.0;  // mm, y extent
  double gel_thickness = 6.0;  // mm, surface height in the gel frame
  // Tangential traction per unit lateral offset (N/mm^3). Non-positive selects
  // the default shear_modulus / gel_thickness.
  double tangential_stiffness = 0.0;

  void validate() const {
    if (!(young_modulus > 0)) throw DomainError("young_modulus must be > 0");
    if (!(poisson_ratio >= 0 && poisson_ratio < 0.5)) throw DomainError("poisson_ratio must be in [0, 0.5)");
    if (!(friction_mu >= 0)) throw DomainError("friction_mu must be >= 0");
    if (!(layer_width > 0 && layer_depth > 0 && gel_thickness > 0)) throw DomainError("layer dimensions must be > 0");
  }

  // Young's modulus in N/mm^2.
  double modulus_mpa() const { return young_modulus * 1e-6; }
  // Plane-strain modulus E* = E / (1 - nu^2), N/mm^2.
  double effective_modulus() const { return modulus_mpa() / (1.0 - poisson_ratio * poisson_ratio); }
  double shear_modulus() const { return modulus_mpa() / (2.0 * (1.0 + poisson_ratio)); }
  double shear_stiffness() const {
    return tangential_stiffness > 0 ? tangential_stiffness : shear_modulus() / gel_thickness;
  }
};

// ---------------------------------------------------------------------------
// Indenters

// Spherical tip. The face follows the Hertzian paraboloid r^2 / 2R, the
// small-slope form consistent with the half-space kernels; `exact_cap`
// switches to the true spherical cap.
struct Sphere {
  double radius;
  bool exact_cap = false;
};
struct FlatCircle {
  double radius;
};
struct FlatSquare {
  double side;
};
// Equilateral triangle, one vertex on the local +y axis.
struct FlatTriangle {
  double side;
};
// Flat square patch tilted about the local y axis; the lowest edge is at
// local x = -side/2.
struct TiltedPlane {
  double angle;  // rad
  double side = 10.0;
};

using IndenterShape = std::variant<Sphere, FlatCircle, FlatSquare, FlatTriangle, TiltedPlane>;

struct Pose {
  double x = 0;  // mm, gel frame
  double y = 0;
  double depth = 0;  // mm below the undeformed surface
  double yaw = 0;  // rad
};

namespace detail {

inline double sdf_box(double x, double y, double half) {
  const double dx = std::abs(x) - half;
  const double dy = std::abs(y) - half;
  const double ox = std::max(dx, 0.0);
  const double oy = std::max(dy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(dx, dy), 0.0);
}

// Equilateral triangle centred at its centroid with a vertex on +y.
inline double sdf_equilateral(double x, double y, double side) {
  const double k = std::sqrt(3.0);
  const double a = side / 2.0;
  double px = std::abs(x) - a;
  double py = y + a / k;
  if (px + k * py > 0.0) {
    const double nx = (px - k * py) / 2.0;
    const double ny = (-k * px - py) / 2.0;
    px = nx;
    py = ny;
  }
  px -= std::clamp(px, -2.0 * a, 0.0);
  return -std::hypot(px, py) * (py < 0 ? -1.0 : 1.0);
}

// Height of a flat face whose plan-view outline has signed distance `sd`
// (negative inside), with its rim rounded by a fillet of radius `fillet`.
inline double flat_profile(double sd, double fillet) {
  if (sd > 0) return std::numeric_limits<double>::infinity();
  if (fillet <= 0 || sd <= -fillet) return 0.0;
  const double t = sd + fillet;  // 0..fillet across the fillet band
  return fillet - std::sqrt(std::max(fillet * fillet - t * t, 0.0));
}

}  // namespace detail

struct Indenter {
  IndenterShape shape;
  Pose pose;
  std::string name;

  void validate() const {
    std::visit(
        [](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Sphere> || std::is_same_v<S, FlatCircle>) {
            if (!(s.radius > 0)) throw DomainError("indenter radius must be > 0");
          } else if constexpr (std::is_same_v<S, TiltedPlane>) {
            if (!(s.angle > 0 && s.angle < kPi / 2)) throw DomainError("tilt angle must be in (0, pi/2)");
            if (!(s.side > 0)) throw DomainError("tilted plane side must be > 0");
          } else {
            if (!(s.side > 0)) throw DomainError("indenter side must be > 0");
          }
        },
        shape);
    if (!(pose.depth >= 0)) throw DomainError("indentation depth must be >= 0");
  }

  // Height of the indenter face above its lowest point at a gel-frame surface
  // location; +inf outside the face. `fillet` rounds the rim of flat faces.
  double face_height(double x, double y, double fillet = 0.0) const {
    const double c = std::cos(pose.yaw);
    const double s = std::sin(pose.yaw);
    const double dx = x - pose.x;
    const double dy = y - pose.y;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::visit(
        [&](const auto& sh) -> double {
          using S = std::decay_t<decltype(sh)>;
          if constexpr (std::is_same_v<S, Sphere>) {
            const double r2 = lx * lx + ly * ly;
            if (!sh.exact_cap) return r2 / (2 * sh.radius);
            if (r2 >= sh.radius * sh.radius) return std::numeric_limits<double>::infinity();
            return sh.radius - std::sqrt(sh.radius * sh.radius - r2);
          } else if constexpr (std::is_same_v<S, FlatCircle>) {
            return detail::flat_profile(std::hypot(lx, ly) - sh.radius, fillet);
          } else if constexpr (std::is_same_v<S, FlatSquare>) {
            return detail::flat_profile(detail::sdf_box(lx, ly, sh.side / 2), fillet);
          } else if constexpr (std::is_same_v<S, FlatTriangle>) {
            return detail::flat_profile(detail::sdf_equilateral(lx, ly, sh.side), fillet);
          } else {
            const double base = detail::flat_profile(detail::sdf_box(lx, ly, sh.side / 2), fillet);
            return base + std::tan(sh.angle) * (lx + sh.side / 2);
          }
        },
        shape);
  }

  // Radius (about the pose centre) of a disc containing every surface point
  // the indenter overlaps at the given depth.
  double footprint_radius(double depth) const {
    return std::visit(
        [&](const auto& sh) -> double {
          using S = std::decay_t<decltype(sh)>;
          if constexpr (std::is_same_v<S, Sphere>) {
            if (!sh.exact_cap) return std::sqrt(2 * sh.radius * depth);
            const double d = std::min(depth, sh.radius);
            return std::sqrt(std::max(2 * sh.radius * d - d * d, 0.0));
          } else if constexpr (std::is_same_v<S, FlatCircle>) {
            return sh.radius;
          } else if constexpr (std::is_same_v<S, FlatSquare>) {
            return sh.side / std::sqrt(2.0);
          } else if constexpr (std::is_same_v<S, FlatTriangle>) {
            return sh.side / std::sqrt(3.0);
          } else {
            return sh.side / std::sqrt(2.0);
          }
        },
        shape);
  }
};

// ---------------------------------------------------------------------------
// Solution

struct ContactGrid {
  int n = 0;
  double x0 = 0;  // lower-left corner of the solved region, gel frame
  double y0 = 0;
  double cell = 0;  // edge length

  double cell_area() const { return cell * cell; }
  double center_x(int i) const { return x0 + (i + 0.5) * cell; }
  double center_y(int j) const { return y0 + (j + 0.5) * cell; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * n + i; }
  std::size_t count() const { return static_cast<std::size_t>(n) * n; }
};

struct NodalForce {
  Vec2 position;  // initial surface position, gel frame (mm)
  Vec3 force;  // force on the gel, N; compressive normal load is negative z
};

struct ContactSolution {
  ContactGrid grid;
  std::vector<double> pressure;  // pz >= 0 into the gel
  std::vector<double> shear_x;
  std::vector<double> shear_y;
  // Interference depth - face_height at each cell (negative where clear of the face).
  std::vector<double> interference;
  // Surface deflection into the gel at each cell centre.
  std::vector<double> deflection;
  int iterations = 0;
  double residual = 0;

  static ContactSolution zeros(const ContactGrid& grid) {
    ContactSolution s;
    s.grid = grid;
    s.pressure.assign(grid.count(), 0.0);
    s.shear_x.assign(grid.count(), 0.0);
    s.shear_y.assign(grid.count(), 0.0);
    s.interference.assign(grid.count(), 0.0);
    s.deflection.assign(grid.count(), 0.0);
    return s;
  }

  // One node per cell centre, nonzero cells only.
  std::vector<NodalForce> nodal_forces() const {
    std::vector<NodalForce> out;
    const double area = grid.cell_area();
    for (int j = 0; j < grid.n; ++j) {
      for (int i = 0; i < grid.n; ++i) {
        const auto k = grid.index(i, j);
        if (pressure[k] == 0 && shear_x[k] == 0 && shear_y[k] == 0) continue;
        out.push_back({Vec2(grid.center_x(i), grid.center_y(j)),
                       Vec3(shear_x[k] * area, shear_y[k] * area, -pressure[k] * area)});
      }
    }
    return out;
  }

  // Component-wise integral of the traction grids, in the same sign
  // convention as nodal_forces.
  Vec3 total_force() const {
    Vec3 sum = Vec3::Zero();
    for (std::size_t k = 0; k < pressure.size(); ++k) {
      sum += Vec3(shear_x[k], shear_y[k], -pressure[k]);
    }
    return sum * grid.cell_area();
  }
};

// ---------------------------------------------------------------------------
// Influence coefficients

namespace detail {

// ln(a + sqrt(a^2 + b^2)), evaluated without cancellation for a < 0.
inline double log_hyp(double a, double b) {
  const double r = std::hypot(a, b);
  if (a >= 0) return std::log(a + r);
  return std::log(b * b / (r - a));
}

// Antiderivative of 1/sqrt(x^2 + y^2) in x and y.
inline double rect_primitive(double x, double y) {
  double v = 0;
  if (x != 0) v += x * log_hyp(y, x);
  if (y != 0) v += y * log_hyp(x, y);
  return v;
}

}  // namespace detail

// Integral of 1/r over the rectangle [-a, a] x [-b, b] seen from (x, y) in the
// rectangle's plane.
inline double rect_inverse_distance_integral(double x, double y, double a, double b) {
  using detail::rect_primitive;
  return rect_primitive(x + a, y + b) - rect_primitive(x - a, y + b) - rect_primitive(x + a, y - b) +
         rect_primitive(x - a, y - b);
}

// Normal surface deflection influence kernel for a square grid: entry
// (di, dj) is the deflection at a cell centre offset by (di, dj) cells from a
// cell carrying unit uniform pressure. Stored as (2n-1)^2, offset n-1.
class InfluenceKernel {
 public:
  InfluenceKernel(int n, double cell, const ElasticHalfSpace& hs) : n_(n), span_(2 * n - 1), k_(span_ * span_) {
    const double scale = (1.0 - hs.poisson_ratio * hs.poisson_ratio) / (kPi * hs.modulus_mpa());
    const double half = cell / 2.0;
    for (int dj = -(n - 1); dj <= n - 1; ++dj) {
      for (int di = -(n - 1); di <= n - 1; ++di) {
        k_[idx(di, dj)] = scale * rect_inverse_distance_integral(di * cell, dj * cell, half, half);
      }
    }
  }

  double operator()(int di, int dj) const { return k_[idx(di, dj)]; }
  double self() const { return (*this)(0, 0); }

 private:
  std::size_t idx(int di, int dj) const {
    return static_cast<std::size_t>(dj + n_ - 1) * span_ + static_cast<std::size_t>(di + n_ - 1);
  }
  int n_;
  int span_;
  std::vector<double> k_;
};

// ---------------------------------------------------------------------------
// Normal contact solver

enum class LcpMethod {
  ProjectedGaussSeidel,
  ConjugateGradient,  // constrained CG on the equivalent QP (active-set projection)
};

struct SolverOptions {
  LcpMethod method = LcpMethod::ProjectedGaussSeidel;
  double tolerance = 1e-10;
  int max_iterations = 10000;
  // Region half-width as a multiple of the indenter footprint radius.
  double region_scale = 1.05;
  bool round_flat_edges = true;
};

namespace detail {

struct Candidates {
  std::vector<int> ci, cj;
  std::vector<std::size_t> flat;
  std::vector<double> interference;
};

// Normalised complementarity residual: max |min(p K0, gap)| / max interference.
inline double lcp_residual(const std::vector<double>& p, const std::vector<double>& u, const Candidates& c,
                           double k0, double scale) {
  double r = 0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    const double gap = u[a] - c.interference[a];
    r = std::max(r, std::abs(std::min(p[a] * k0, gap)));
  }
  return r / scale;
}

inline void convolve(const InfluenceKernel& kernel, const Candidates& c, const std::vector<double>& p,
                     std::vector<double>& out) {
  const std::size_t m = p.size();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t b = 0; b < m; ++b) {
    const double pb = p[b];
    if (pb == 0) continue;
    const int bi = c.ci[b];
    const int bj = c.cj[b];
    for (std::size_t a = 0; a < m; ++a) out[a] += pb * kernel(c.ci[a] - bi, c.cj[a] - bj);
  }
}

inline int solve_pgs(const InfluenceKernel& kernel, const Candidates& c, std::vector<double>& p, std::vector<double>& u,
                     const SolverOptions& opt, double scale, double& residual) {
  const std::size_t m = p.size();
  const double k0 = kernel.self();
  for (int sweep = 1; sweep <= opt.max_iterations; ++sweep) {
    for (std::size_t a = 0; a < m; ++a) {
      const double gap = u[a] - c.interference[a];
      const double next = std::max(0.0, p[a] - gap / k0);
      const double dp = next - p[a];
      if (dp == 0) continue;
      p[a] = next;
      const int ai = c.ci[a];
      const int aj = c.cj[a];
      for (std::size_t b = 0; b < m; ++b) u[b] += dp * kernel(c.ci[b] - ai, c.cj[b] - aj);
    }
    residual = lcp_residual(p, u, c, k0, scale);
    if (residual <= opt.tolerance) return sweep;
  }
  return -1;
}

// Displacement-controlled variant of the Polonsky-Keer constrained conjugate
// gradient iteration.
inline int solve_cg(const InfluenceKernel& kernel, const Candidates& c, std::vector<double>& p, std::vector<double>& u,
                    const SolverOptions& opt, double scale, double& residual) {
  const std::size_t m = p.size();
  const double k0 = kernel.self();
  std::vector<double> gap(m), dir(m, 0.0), kdir(m);
  // Start from the local (diagonal) solution.
  for (std::size_t a = 0; a < m; ++a) p[a] = std::max(0.0, c.interference[a] / k0);
  double g_old = 1.0;
  bool conjugate = false;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    convolve(kernel, c, p, u);
    residual = lcp_residual(p, u, c, k0, scale);
    if (residual <= opt.tolerance) return it;

    double g_norm = 0;
    for (std::size_t a = 0; a < m; ++a) {
      gap[a] = u[a] - c.interference[a];
      if (p[a] > 0) g_norm += gap[a] * gap[a];
    }
    const double beta = conjugate ? g_norm / g_old : 0.0;
    for (std::size_t a = 0; a < m; ++a) dir[a] = p[a] > 0 ? gap[a] + beta * dir[a] : 0.0;
    g_old = g_norm;

    convolve(kernel, c, dir, kdir);
    double num = 0, den = 0;
    for (std::size_t a = 0; a < m; ++a) {
      if (p[a] > 0) {
        num += gap[a] * dir[a];
        den += kdir[a] * dir[a];
      }
    }
    const double tau = den > 0 ? num / den : 0.0;
    conjugate = true;
    for (std::size_t a = 0; a < m; ++a) {
      if (p[a] > 0) p[a] = std::max(0.0, p[a] - tau * dir[a]);
    }
    // Cells with negative gap but no pressure re-enter the contact set.
    for (std::size_t a = 0; a < m; ++a) {
      if (p[a] == 0 && gap[a] < 0) {
        p[a] = -tau * gap[a] > 0 ? -tau * gap[a] : -gap[a] / k0;
        conjugate = false;
      }
    }
  }
  convolve(kernel, c, p, u);
  residual = lcp_residual(p, u, c, k0, scale);
  return residual <= opt.tolerance ? opt.max_iterations : -1;
}

}  // namespace detail

// Square region centred on the indenter that covers its footprint at the
// current depth. Throws DomainError when the region leaves the surface.
inline ContactGrid contact_region(const ElasticHalfSpace& hs, const Indenter& ind, int grid_n,
                                  double region_scale = 1.05) {
  const double half = std::max(region_scale * ind.footprint_radius(ind.pose.depth), 0.25);
  ContactGrid g;
  g.n = grid_n;
  g.cell = 2 * half / grid_n;
  g.x0 = ind.pose.x - half;
  g.y0 = ind.pose.y - half;
  if (g.x0 < 0 || g.y0 < 0 || g.x0 + 2 * half > hs.layer_width || g.y0 + 2 * half > hs.layer_depth) {
    throw DomainError("indenter '" + ind.name + "' footprint leaves the sensing surface at (" +
                      std::to_string(ind.pose.x) + ", " + std::to_string(ind.pose.y) + ")");
  }
  return g;
}

// Frictionless normal contact: p >= 0, gap >= 0, p * gap = 0 under the
// Boussinesq influence matrix of uniform-pressure square cells.
inline ContactSolution solve_normal_contact(const ElasticHalfSpace& hs, const Indenter& ind, int grid_n,
                                            const SolverOptions& opt = {}) {
  hs.validate();
  ind.validate();
  if (grid_n < 16) throw DomainError("grid_n must be >= 16");
  const ContactGrid grid = contact_region(hs, ind, grid_n, opt.region_scale);
  ContactSolution sol = ContactSolution::zeros(grid);
  const double fillet = opt.round_flat_edges ? grid.cell : 0.0;

  detail::Candidates cand;
  double max_interference = 0;
  for (int j = 0; j < grid.n; ++j) {
    for (int i = 0; i < grid.n; ++i) {
      const double h = ind.face_height(grid.center_x(i), grid.center_y(j), fillet);
      const double d = ind.pose.depth - h;
      sol.interference[grid.index(i, j)] = std::isfinite(d) ? d : -std::numeric_limits<double>::infinity();
      // Cells clear of the face cannot carry pressure: deflection is never negative.
      if (d > 0) {
        cand.ci.push_back(i);
        cand.cj.push_back(j);
        cand.flat.push_back(grid.index(i, j));
        cand.interference.push_back(d);
        max_interference = std::max(max_interference, d);
      }
    }
  }
  if (cand.flat.empty()) return sol;

  const InfluenceKernel kernel(grid.n, grid.cell, hs);
  std::vector<double> p(cand.flat.size(), 0.0), u(cand.flat.size(), 0.0);
  double residual = 0;
  const int iters = opt.method == LcpMethod::ProjectedGaussSeidel
                        ? detail::solve_pgs(kernel, cand, p, u, opt, max_interference, residual)
                        : detail::solve_cg(kernel, cand, p, u, opt, max_interference, residual);
  if (iters < 0) throw SolverFailure("normal contact did not converge for '" + ind.name + "'", residual);

  for (std::size_t a = 0; a < cand.flat.size(); ++a) sol.pressure[cand.flat[a]] = p[a];
  // Deflection everywhere on the grid, not only under the face.
  for (int j = 0; j < grid.n; ++j) {
    for (int i = 0; i < grid.n; ++i) {
      double w = 0;
      for (std::size_t a = 0; a < cand.flat.size(); ++a) {
        if (p[a] != 0) w += p[a] * kernel(i - cand.ci[a], j - cand.cj[a]);
      }
      sol.deflection[grid.index(i, j)] = w;
    }
  }
  sol.iterations = iters;
  sol.residual = residual;
  return sol;
}

// Closed-form references.
inline double hertz_force(const ElasticHalfSpace& hs, double radius, double depth) {
  return 4.0 / 3.0 * hs.effective_modulus() * std::sqrt(radius) * std::pow(depth, 1.5);
}

// Exact spherical cap (Sneddon): contact radius a from
// depth = (a/2) ln((R+a)/(R-a)), then F = (E*/2)[(a^2+R^2) ln((R+a)/(R-a)) - 2aR].
inline double spherical_cap_force(const ElasticHalfSpace& hs, double radius, double depth) {
  auto depth_of = [&](double a) { return 0.5 * a * std::log((radius + a) / (radius - a)); };
  double lo = 0, hi = radius * (1 - 1e-12);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (depth_of(mid) < depth ? lo : hi) = mid;
  }
  const double a = 0.5 * (lo + hi);
  const double l = std::log((radius + a) / (radius - a));
  return 0.5 * hs.effective_modulus() * ((a * a + radius * radius) * l - 2 * a * radius);
}

inline double flat_punch_force(const ElasticHalfSpace& hs, double radius, double depth) {
  return 2.0 * hs.effective_modulus() * radius * depth;
}

// ---------------------------------------------------------------------------
// Tangential tractions

// One-step stick-slip: each loaded cell takes a traction along the lateral
// offset of magnitude min(k_t |offset|, mu p). Normal tractions are untouched.
inline ContactSolution apply_shear(const ContactSolution& sol, Vec2 lateral_offset, const ElasticHalfSpace& hs) {
  ContactSolution out = sol;
  std::fill(out.shear_x.begin(), out.shear_x.end(), 0.0);
  std::fill(out.shear_y.begin(), out.shear_y.end(), 0.0);
  const double mag = lateral_offset.norm();
  if (mag == 0) return out;
  const Vec2 dir = lateral_offset / mag;
  const double stick = hs.shear_stiffness() * mag;
  for (std::size_t k = 0; k < sol.pressure.size(); ++k) {
    const double t = std::min(stick, hs.friction_mu * sol.pressure[k]);
    out.shear_x[k] = t * dir.x();
    out.shear_y[k] = t * dir.y();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subsurface displacement

namespace detail {

// Displacement in half-space coordinates (z into the solid) at (x, y, z)
// relative to a surface point load (qx, qy, pz), pz pressing into the solid.
inline Vec3 point_load_displacement(double x, double y, double z, double qx, double qy, double pz, double nu,
                                    double shear_mod) {
  const double rho = std::sqrt(x * x + y * y + z * z);
  const double rz = rho + z;
  const double c = 1.0 / (4.0 * kPi * shear_mod);
  const double a = 1.0 - 2.0 * nu;
  const double r3 = rho * rho * rho;
  Vec3 u = Vec3::Zero();
  // Boussinesq.
  if (pz != 0) {
    u.x() += pz * c * (x * z / r3 - a * x / (rho * rz));
    u.y() += pz * c * (y * z / r3 - a * y / (rho * rz));
    u.z() += pz * c * (z * z / r3 + 2.0 * (1.0 - nu) / rho);
  }
  // Cerruti, load along x then along y (roles of x and y swap).
  if (qx != 0) {
    u.x() += qx * c * (1.0 / rho + x * x / r3 + a * (1.0 / rz - x * x / (rho * rz * rz)));
    u.y() += qx * c * (x * y / r3 - a * x * y / (rho * rz * rz));
    u.z() += qx * c * (x * z / r3 + a * x / (rho * rz));
  }
  if (qy != 0) {
    u.y() += qy * c * (1.0 / rho + y * y / r3 + a * (1.0 / rz - y * y / (rho * rz * rz)));
    u.x() += qy * c * (x * y / r3 - a * x * y / (rho * rz * rz));
    u.z() += qy * c * (y * z / r3 + a * y / (rho * rz));
  }
  return u;
}

}  // namespace detail

// Displacement (gel frame, mm) at a point inside the gel, superposing the
// point-load kernels of every loaded cell. Cells within two cell widths of the
// point are integrated with a 4x4 sub-cell rule so that points on the loaded
// surface stay finite.
inline Vec3 displacement_at(const ContactSolution& sol, const Vec3& point, const ElasticHalfSpace& hs) {
  if (!(point.z() >= 0 && point.z() <= hs.gel_thickness)) {
    throw DomainError("displacement query outside the gel volume");
  }
  const double nu = hs.poisson_ratio;
  const double g = hs.shear_modulus();
  const double depth = hs.gel_thickness - point.z();
  const auto& grid = sol.grid;
  const double area = grid.cell_area();
  const double near2 = 4.0 * grid.cell * grid.cell;
  Vec3 u = Vec3::Zero();
  for (int j = 0; j < grid.n; ++j) {
    for (int i = 0; i < grid.n; ++i) {
      const auto k = grid.index(i, j);
      const double pz = sol.pressure[k];
      const double qx = sol.shear_x[k];
      const double qy = sol.shear_y[k];
      if (pz == 0 && qx == 0 && qy == 0) continue;
      const double dx = point.x() - grid.center_x(i);
      const double dy = point.y() - grid.center_y(j);
      if (dx * dx + dy * dy + depth * depth > near2) {
        u += detail::point_load_displacement(dx, dy, depth, qx * area, qy * area, pz * area, nu, g);
        continue;
      }
      const double w = area / 16.0;
      for (int sj = 0; sj < 4; ++sj) {
        for (int si = 0; si < 4; ++si) {
          const double ox = (si - 1.5) * grid.cell / 4.0;
          const double oy = (sj - 1.5) * grid.cell / 4.0;
          u += detail::point_load_displacement(dx - ox, dy - oy, depth, qx * w, qy * w, pz * w, nu, g);
        }
      }
    }
  }
  // Half-space z points into the solid, i.e. down in the gel frame.
  return {u.x(), u.y(), -u.z()};
}

}  // namespace tacsim
