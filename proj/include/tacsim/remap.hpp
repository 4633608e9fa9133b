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

// Fisheye calibration files, the fisheye-to-pinhole remapping table, and
// sub-millimetre refinement of the real camera's translation.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tacsim/camera.hpp"
#include "tacsim/common.hpp"
#include "tacsim/image.hpp"

namespace tacsim {

struct CameraRig {
  PinholeCamera pinhole;
  FisheyeCamera fisheye;
  double remap_plane_z = 0.0;  // gel-frame z of the plane all pixels are assumed to lie on

  void validate() const {
    pinhole.validate();
    fisheye.validate();
  }
};

// Calibration self-test entry: a gel-frame point and the pixel it must hit.
struct ReprojectionCheck {
  Vec3 point_gel = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
};

struct Calibration {
  FisheyeCamera camera;
  std::vector<ReprojectionCheck> self_test;
};

inline constexpr int kCalibrationVersion = 1;
inline constexpr double kSelfTestTolerancePx = 0.1;

namespace detail {

inline nlohmann::ordered_json vec_json(const auto& v, int n) {
  auto a = nlohmann::ordered_json::array();
  for (int i = 0; i < n; ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::ordered_json mat_json(const auto& m, int rows, int cols) {
  auto a = nlohmann::ordered_json::array();
  for (int r = 0; r < rows; ++r) {
    auto row = nlohmann::ordered_json::array();
    for (int c = 0; c < cols; ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

template <typename V>
V read_vec(const nlohmann::json& j, int n, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) throw ParseError(std::string("'") + what + "' must have " + std::to_string(n) + " entries");
  V v;
  for (int i = 0; i < n; ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

template <typename M>
M read_mat(const nlohmann::json& j, int rows, int cols, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) throw ParseError(std::string("'") + what + "' has the wrong shape");
  M m;
  for (int r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<int>(row.size()) != cols) throw ParseError(std::string("'") + what + "' has the wrong shape");
    for (int c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace detail

inline std::string calibration_to_string(const Calibration& cal) {
  const auto& c = cal.camera;
  nlohmann::ordered_json j;
  j["format"] = "tacsim-fisheye-calibration";
  j["version"] = kCalibrationVersion;
  auto& m = j["model"];
  m["argument"] = c.argument == RadialArgument::Angle ? "angle" : "tangent";
  m["poly"] = detail::vec_json(c.poly, 5);
  m["stretch"] = detail::mat_json(c.stretch, 2, 2);
  m["center"] = detail::vec_json(c.center, 2);
  m["width"] = c.width;
  m["height"] = c.height;
  m["theta_max"] = c.theta_max;
  auto& e = j["extrinsics"];
  e["rotation_gc"] = detail::mat_json(c.rotation_gc, 3, 3);
  e["translation_gc"] = detail::vec_json(c.translation_gc, 3);
  auto tests = nlohmann::ordered_json::array();
  for (const auto& t : cal.self_test) {
    nlohmann::ordered_json r;
    r["point_gel"] = detail::vec_json(t.point_gel, 3);
    r["pixel"] = detail::vec_json(t.pixel, 2);
    tests.push_back(r);
  }
  j["self_test"] = tests;
  return j.dump(2) + "\n";
}

// Parses and validates a calibration document. The model must be monotone and
// every self-test point must reproject within 0.1 px.
inline Calibration calibration_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("calibration parse failure: ") + ex.what());
  }
  Calibration cal;
  try {
    if (j.at("format").get<std::string>() != "tacsim-fisheye-calibration") throw ParseError("unknown calibration format");
    if (j.at("version").get<int>() != kCalibrationVersion) throw ParseError("unsupported calibration version");
    const auto& m = j.at("model");
    const auto arg = m.at("argument").get<std::string>();
    if (arg != "angle" && arg != "tangent") throw ParseError("model.argument must be 'angle' or 'tangent'");
    auto& c = cal.camera;
    c.argument = arg == "angle" ? RadialArgument::Angle : RadialArgument::Tangent;
    c.poly = detail::read_vec<std::array<double, 5>>(m.at("poly"), 5, "model.poly");
    c.stretch = detail::read_mat<Mat2>(m.at("stretch"), 2, 2, "model.stretch");
    c.center = detail::read_vec<Vec2>(m.at("center"), 2, "model.center");
    c.width = m.at("width").get<int>();
    c.height = m.at("height").get<int>();
    c.theta_max = m.at("theta_max").get<double>();
    const auto& e = j.at("extrinsics");
    c.rotation_gc = detail::read_mat<Mat3>(e.at("rotation_gc"), 3, 3, "extrinsics.rotation_gc");
    c.translation_gc = detail::read_vec<Vec3>(e.at("translation_gc"), 3, "extrinsics.translation_gc");
    for (const auto& t : j.at("self_test")) {
      cal.self_test.push_back({detail::read_vec<Vec3>(t.at("point_gel"), 3, "self_test.point_gel"),
                               detail::read_vec<Vec2>(t.at("pixel"), 2, "self_test.pixel")});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("calibration field error: ") + ex.what());
  }
  try {
    cal.camera.validate();
  } catch (const DomainError& ex) {
    throw CalibrationInvalid(ex.what());
  }
  for (std::size_t i = 0; i < cal.self_test.size(); ++i) {
    const auto& t = cal.self_test[i];
    const auto px = cal.camera.try_project(cal.camera.gel_to_camera(t.point_gel));
    const double err = px ? (*px - t.pixel).norm() : std::numeric_limits<double>::infinity();
    if (!(err <= kSelfTestTolerancePx)) {
      std::ostringstream msg;
      msg << "calibration self-test point " << i << " reprojects " << err << " px from its expected pixel (limit "
          << kSelfTestTolerancePx << " px)";
      throw CalibrationInvalid(msg.str());
    }
  }
  return cal;
}

inline Calibration load_calibration(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open calibration file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return calibration_from_string(ss.str());
}

inline void save_calibration(const std::string& path, const Calibration& cal) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write calibration file " + path);
  out << calibration_to_string(cal);
}

// Self-test points on a grid over the gel bottom, reprojected with `cam`.
inline std::vector<ReprojectionCheck> make_self_test(const FisheyeCamera& cam, int per_axis = 3) {
  std::vector<ReprojectionCheck> out;
  for (int j = 0; j < per_axis; ++j)
    for (int i = 0; i < per_axis; ++i) {
      const Vec3 g(kLayerWidth * (i + 0.5) / per_axis, kLayerWidth * (j + 0.5) / per_axis, 0.0);
      if (auto px = cam.try_project(cam.gel_to_camera(g))) out.push_back({g, *px});
    }
  return out;
}

// Per-output-pixel source coordinates in the real image. The output grid may
// extend `margin` pixels past the pinhole frame on every side.
struct RemapTable {
  int width = 0;
  int height = 0;
  int margin = 0;
  std::vector<float> src_x, src_y;
  std::vector<std::uint8_t> valid;
};

namespace detail {

// Gel-frame point on the remap plane seen by pinhole pixel (u, v).
inline Vec3 remap_plane_point(const CameraRig& rig, double u, double v) {
  const auto& p = rig.pinhole;
  const Vec3 dir((u - p.u0) / p.f, (v - p.v0) / p.f, 1.0);
  // gel = R^T (lambda dir - t); solve gel.z = plane.
  const Vec3 rt_dir = p.rotation_gp.transpose() * dir;
  const Vec3 rt_t = p.rotation_gp.transpose() * p.translation_gp;
  const double lambda = (rig.remap_plane_z + rt_t.z()) / rt_dir.z();
  return lambda * rt_dir - rt_t;
}

}  // namespace detail

inline RemapTable build_remap_table(const CameraRig& rig, int margin = 0) {
  rig.validate();
  RemapTable t;
  t.width = rig.pinhole.width + 2 * margin;
  t.height = rig.pinhole.height + 2 * margin;
  t.margin = margin;
  const std::size_t n = static_cast<std::size_t>(t.width) * t.height;
  t.src_x.assign(n, 0.0f);
  t.src_y.assign(n, 0.0f);
  t.valid.assign(n, 0);
  const auto& fe = rig.fisheye;
  for (int y = 0; y < t.height; ++y) {
    for (int x = 0; x < t.width; ++x) {
      const Vec3 g = detail::remap_plane_point(rig, x - margin, y - margin);
      const auto px = fe.try_project(fe.gel_to_camera(g));
      const std::size_t k = static_cast<std::size_t>(y) * t.width + x;
      if (!px) continue;
      // Rounding can put border pixels a hair outside the image.
      constexpr double tol = 1e-6;
      const double xmax = fe.width - 1.0, ymax = fe.height - 1.0;
      if (!(px->x() >= -tol && px->y() >= -tol && px->x() <= xmax + tol && px->y() <= ymax + tol)) continue;
      t.src_x[k] = static_cast<float>(std::clamp(px->x(), 0.0, xmax));
      t.src_y[k] = static_cast<float>(std::clamp(px->y(), 0.0, ymax));
      t.valid[k] = 1;
    }
  }
  return t;
}

// Bilinear resampling through the table; masked pixels are 0.
inline GrayImage remap_image(const GrayImage& real, const RemapTable& t) {
  GrayImage out(t.width, t.height, 0);
  const int w = real.width(), h = real.height();
  const auto& src = real.data();
  auto& dst = out.data();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    if (!t.valid[k]) continue;
    const float sx = t.src_x[k], sy = t.src_y[k];
    if (!(sx >= 0 && sy >= 0 && sx <= w - 1 && sy <= h - 1)) continue;
    const int x0 = std::min(static_cast<int>(sx), w - 2 < 0 ? 0 : w - 2);
    const int y0 = std::min(static_cast<int>(sy), h - 2 < 0 ? 0 : h - 2);
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const float fx = sx - x0, fy = sy - y0;
    const std::size_t r0 = static_cast<std::size_t>(y0) * w, r1 = static_cast<std::size_t>(y1) * w;
    const float top = src[r0 + x0] + fx * (src[r0 + x1] - src[r0 + x0]);
    const float bot = src[r1 + x0] + fx * (src[r1 + x1] - src[r1 + x0]);
    dst[k] = static_cast<std::uint8_t>(std::lround(std::clamp(top + fy * (bot - top), 0.0f, 255.0f)));
  }
  return out;
}

// Otsu threshold over the pixels where `mask` is set (all when empty).
// Foreground is value > threshold. Returns -1 for a single-valued image.
inline int otsu_threshold(const GrayImage& img, const std::vector<std::uint8_t>& mask = {}) {
  std::array<double, 256> hist{};
  double total = 0;
  for (std::size_t k = 0; k < img.size(); ++k) {
    if (!mask.empty() && !mask[k]) continue;
    hist[img.data()[k]] += 1;
    total += 1;
  }
  if (total == 0) return -1;
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[static_cast<std::size_t>(i)];
  double w0 = 0, sum0 = 0, best = -1;
  int thr = -1;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[static_cast<std::size_t>(t)];
    sum0 += t * hist[static_cast<std::size_t>(t)];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      thr = t;
    }
  }
  return thr;
}

using Mask = Image<std::uint8_t>;

namespace detail {

// Separable 3x3 max (dilate) or min (erode). Pixels outside the image do not
// participate, so erosion never eats in from the border.
inline Mask morph3(const Mask& m, bool dilate) {
  const int w = m.width(), h = m.height();
  Mask tmp(w, h), out(w, h);
  auto pick = [dilate](std::uint8_t a, std::uint8_t b) { return dilate ? std::max(a, b) : std::min(a, b); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = m(x, y);
      if (x > 0) v = pick(v, m(x - 1, y));
      if (x + 1 < w) v = pick(v, m(x + 1, y));
      tmp(x, y) = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = tmp(x, y);
      if (y > 0) v = pick(v, tmp(x, y - 1));
      if (y + 1 < h) v = pick(v, tmp(x, y + 1));
      out(x, y) = v;
    }
  return out;
}

}  // namespace detail

inline Mask morphological_close(const Mask& m, int iterations = 2) {
  Mask out = m;
  for (int i = 0; i < iterations; ++i) out = detail::morph3(out, true);
  for (int i = 0; i < iterations; ++i) out = detail::morph3(out, false);
  return out;
}

struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  bool empty() const { return x1 < x0 || y1 < y0; }
  double area() const { return empty() ? 0.0 : static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1); }
};

inline BoundingBox mask_bbox(const Mask& m) {
  BoundingBox b{m.width(), m.height(), -1, -1};
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y)) {
        b.x0 = std::min(b.x0, x);
        b.x1 = std::max(b.x1, x);
        b.y0 = std::min(b.y0, y);
        b.y1 = std::max(b.y1, y);
      }
  return b;
}

inline double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.empty() || b.empty()) return 0.0;
  const int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const double inter = ix1 < ix0 || iy1 < iy0 ? 0.0 : static_cast<double>(ix1 - ix0 + 1) * (iy1 - iy0 + 1);
  return inter / (a.area() + b.area() - inter);
}

struct RefineOptions {
  double half_range = 0.5;  // mm per axis
  double step = 0.05;  // mm
  int close_iterations = 2;
  double margin_fraction = 0.08;  // canvas padding per side, relative to the frame
  int workers = 1;
};

struct RefineResult {
  Vec3 translation_gc = Vec3::Zero();
  Vec3 offset = Vec3::Zero();
  double iou = 0;
  std::size_t candidates = 0;
};

// IoU between the closed particle mask's bounding box and the pinhole frame,
// for a rest image remapped through `table` (which carries its own margin).
inline double frame_iou(const GrayImage& remapped, const RemapTable& table, int close_iterations, bool* found = nullptr) {
  const int thr = otsu_threshold(remapped, table.valid);
  if (found) *found = thr >= 0;
  if (thr < 0) return 0.0;
  Mask m(remapped.width(), remapped.height(), 0);
  for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = table.valid[k] && remapped.data()[k] > thr;
  const BoundingBox bb = mask_bbox(morphological_close(m, close_iterations));
  if (bb.empty()) {
    if (found) *found = false;
    return 0.0;
  }
  const BoundingBox frame{table.margin, table.margin, table.width - table.margin - 1, table.height - table.margin - 1};
  return bbox_iou(bb, frame);
}

// Exhaustive grid search over offsets of the real camera's translation. Each
// candidate remaps the rest image onto a padded canvas, thresholds it, closes
// the mask and scores the particle bounding box against the pinhole frame.
// Ties go to the smallest offset norm.
inline RefineResult refine_translation(const GrayImage& rest, const CameraRig& rig, const RefineOptions& opt = {}) {
  rig.validate();
  if (!(opt.step > 0 && opt.half_range >= 0)) throw DomainError("refinement grid must have step > 0 and range >= 0");
  if (otsu_threshold(rest) < 0) throw RefinementFailed("rest image has no particles (uniform intensity)");
  const int n = static_cast<int>(std::lround(opt.half_range / opt.step));
  const int side = 2 * n + 1;
  const int margin = static_cast<int>(std::lround(opt.margin_fraction * std::max(rig.pinhole.width, rig.pinhole.height)));

  // The remap plane point of every canvas pixel does not depend on the
  // candidate; only the camera translation does.
  const int cw = rig.pinhole.width + 2 * margin, ch = rig.pinhole.height + 2 * margin;
  std::vector<Vec3> rotated(static_cast<std::size_t>(cw) * ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      rotated[static_cast<std::size_t>(y) * cw + x] = rig.fisheye.rotation_gc * detail::remap_plane_point(rig, x - margin, y - margin);

  const std::size_t total = static_cast<std::size_t>(side) * side * side;
  std::vector<double> score(total, -1.0);
  std::vector<std::uint8_t> found(total, 0);
  auto eval = [&](std::size_t idx) {
    const int i = static_cast<int>(idx % side) - n;
    const int j = static_cast<int>((idx / side) % side) - n;
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(side) * side)) - n;
    FisheyeCamera fe = rig.fisheye;
    fe.translation_gc += Vec3(i, j, k) * opt.step;
    RemapTable t;
    t.width = cw;
    t.height = ch;
    t.margin = margin;
    t.src_x.assign(rotated.size(), 0.0f);
    t.src_y.assign(rotated.size(), 0.0f);
    t.valid.assign(rotated.size(), 0);
    for (std::size_t p = 0; p < rotated.size(); ++p) {
      const auto px = fe.try_project(rotated[p] + fe.translation_gc);
      if (!px) continue;
      t.src_x[p] = static_cast<float>(px->x());
      t.src_y[p] = static_cast<float>(px->y());
      t.valid[p] = px->x() >= 0 && px->y() >= 0 && px->x() <= fe.width - 1 && px->y() <= fe.height - 1;
    }
    bool ok = false;
    score[idx] = frame_iou(remap_image(rest, t), t, opt.close_iterations, &ok);
    found[idx] = ok;
  };
  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    for (std::size_t idx = 0; idx < total; ++idx) eval(idx);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t idx = next++; idx < total; idx = next++) eval(idx);
      });
    for (auto& th : pool) th.join();
  }

  RefineResult best;
  best.candidates = total;
  double best_norm = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (!found[idx]) continue;
    any = true;
    const Vec3 off(static_cast<double>(static_cast<int>(idx % side) - n),
                   static_cast<double>(static_cast<int>((idx / side) % side) - n),
                   static_cast<double>(static_cast<int>(idx / (static_cast<std::size_t>(side) * side)) - n));
    const double norm = off.norm();
    if (score[idx] > best.iou || (score[idx] == best.iou && norm < best_norm)) {
      best.iou = score[idx];
      best.offset = off * opt.step;
      best_norm = norm;
    }
  }
  if (!any) throw RefinementFailed("no particles detected in any remapped candidate");
  best.translation_gc = rig.fisheye.translation_gc + best.offset;
  return best;
}

}  // namespace tacsim
