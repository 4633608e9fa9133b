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
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tacsim/common.hpp"
#include "tacsim/contact.hpp"

namespace tacsim {

inline constexpr int kLabelBins = 20;
inline constexpr double kSurfaceWidth = 30.0;  // mm

// 3 x 20 x 20 force distribution, channels (x, y, z), N. Row index follows
// gel y, column index follows gel x.
struct ForceGrid {
  std::vector<float> data = std::vector<float>(3 * kLabelBins * kLabelBins, 0.0f);

  float& at(int c, int row, int col) { return data[(static_cast<std::size_t>(c) * kLabelBins + row) * kLabelBins + col]; }
  float at(int c, int row, int col) const {
    return data[(static_cast<std::size_t>(c) * kLabelBins + row) * kLabelBins + col];
  }
  bool operator==(const ForceGrid&) const = default;
};

// Bin index of a coordinate on [0, width]; interior edges go to the upper bin.
inline int bin_index(double coord, double width = kSurfaceWidth, int bins = kLabelBins) {
  const double pitch = width / bins;
  return std::min(static_cast<int>(std::floor(coord / pitch)), bins - 1);
}

namespace detail {

// Per-bin double-precision sums, laid out like ForceGrid::data.
inline std::vector<double> accumulate_bins(const std::vector<NodalForce>& nodes, double width) {
  std::vector<double> acc(3 * kLabelBins * kLabelBins, 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec2& p = nodes[i].position;
    if (!(p.x() >= 0 && p.x() <= width && p.y() >= 0 && p.y() <= width)) {
      std::ostringstream msg;
      msg << "node " << i << " at (" << p.x() << ", " << p.y() << ") lies outside the sensing surface";
      throw DomainError(msg.str());
    }
    const int col = bin_index(p.x(), width);
    const int row = bin_index(p.y(), width);
    for (int c = 0; c < 3; ++c) acc[(static_cast<std::size_t>(c) * kLabelBins + row) * kLabelBins + col] += nodes[i].force[c];
  }
  return acc;
}

}  // namespace detail

// Sums nodal forces into bins by the nodes' undeformed positions. Positions
// are gel-frame mm; the sum is accumulated in double and stored as float.
inline ForceGrid bin_forces(const std::vector<NodalForce>& nodes, double width = kSurfaceWidth) {
  const auto acc = detail::accumulate_bins(nodes, width);
  ForceGrid g;
  for (std::size_t k = 0; k < acc.size(); ++k) g.data[k] = static_cast<float>(acc[k]);
  return g;
}

// Summed over mirror-symmetric quads of bins, so a flip of the grid changes
// the result by sign only, bit for bit.
inline Vec3 total_force(const ForceGrid& g) {
  constexpr int n = kLabelBins, h = kLabelBins / 2;
  Vec3 s = Vec3::Zero();
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < h; ++r)
      for (int k = 0; k < h; ++k) {
        const double top = static_cast<double>(g.at(c, r, k)) + g.at(c, r, n - 1 - k);
        const double bottom = static_cast<double>(g.at(c, n - 1 - r, k)) + g.at(c, n - 1 - r, n - 1 - k);
        s[c] += top + bottom;
      }
  return s;
}

// Mirror columns and negate x (horizontal), or rows and y (vertical).
inline ForceGrid flip_grid(const ForceGrid& g, bool horizontal) {
  ForceGrid out;
  const int neg = horizontal ? 0 : 1;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < kLabelBins; ++r)
      for (int k = 0; k < kLabelBins; ++k) {
        const float v = horizontal ? g.at(c, r, kLabelBins - 1 - k) : g.at(c, kLabelBins - 1 - r, k);
        out.at(c, r, k) = c == neg ? -v : v;
      }
  return out;
}

struct MetricsReport {
  std::size_t samples = 0;
  std::array<double, 3> rmse{}, rmset{};
  std::array<double, 3> mae_bin{}, sdae_bin{}, mae_total{}, sdae_total{};
  std::array<std::array<double, 2>, 3> force_ranges{};  // (min, max) of truth totals
  std::string rmse_mode = "pooled";

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["samples"] = samples;
    j["rmse_mode"] = rmse_mode;
    const char* names[3] = {"x", "y", "z"};
    for (int c = 0; c < 3; ++c) {
      auto& e = j["components"][names[c]];
      e["range_min"] = force_ranges[c][0];
      e["range_max"] = force_ranges[c][1];
      e["rmse"] = rmse[c];
      e["rmset"] = rmset[c];
      e["mae_bin"] = mae_bin[c];
      e["sdae_bin"] = sdae_bin[c];
      e["mae_total"] = mae_total[c];
      e["sdae_total"] = sdae_total[c];
    }
    return j;
  }

  std::string to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "samples: " << samples << " (RMSE " << rmse_mode << " over bins and samples)\n";
    os << "component  range [N]            RMSE     RMSET    MAE_bin  SDAE_bin MAE_tot  SDAE_tot\n";
    const char* names[3] = {"Fx", "Fy", "Fz"};
    for (int c = 0; c < 3; ++c) {
      std::ostringstream range;
      range.setf(std::ios::fixed);
      range.precision(2);
      range << force_ranges[c][0] << " - " << force_ranges[c][1];
      os << names[c] << "         " << range.str();
      for (std::size_t pad = range.str().size(); pad < 21; ++pad) os << ' ';
      os << rmse[c] << "   " << rmset[c] << "   " << mae_bin[c] << "   " << sdae_bin[c] << "   " << mae_total[c] << "   "
         << sdae_total[c] << "\n";
    }
    return os.str();
  }
};

namespace detail {

struct MeanStd {
  double sum = 0, sum_sq = 0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  // Population standard deviation.
  double std_dev() const {
    if (!n) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(sum_sq / n - m * m, 0.0));
  }
};

}  // namespace detail

inline MetricsReport evaluate(const std::vector<ForceGrid>& predictions, const std::vector<ForceGrid>& truths) {
  if (predictions.size() != truths.size()) throw DomainError("prediction and truth counts differ");
  if (truths.empty()) throw DomainError("evaluate requires at least one sample");
  MetricsReport rep;
  rep.samples = truths.size();
  constexpr std::size_t plane = kLabelBins * kLabelBins;
  for (int c = 0; c < 3; ++c) {
    detail::MeanStd bin_abs, tot_abs;
    double sq_bin = 0, sq_tot = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t s = 0; s < truths.size(); ++s) {
      double tp = 0, tt = 0;
      for (std::size_t k = 0; k < plane; ++k) {
        const double p = predictions[s].data[c * plane + k];
        const double t = truths[s].data[c * plane + k];
        const double e = p - t;
        sq_bin += e * e;
        bin_abs.add(std::abs(e));
        tp += p;
        tt += t;
      }
      const double et = tp - tt;
      sq_tot += et * et;
      tot_abs.add(std::abs(et));
      lo = std::min(lo, tt);
      hi = std::max(hi, tt);
    }
    rep.rmse[c] = std::sqrt(sq_bin / static_cast<double>(bin_abs.n));
    rep.rmset[c] = std::sqrt(sq_tot / static_cast<double>(tot_abs.n));
    rep.mae_bin[c] = bin_abs.mean();
    rep.sdae_bin[c] = bin_abs.std_dev();
    rep.mae_total[c] = tot_abs.mean();
    rep.sdae_total[c] = tot_abs.std_dev();
    rep.force_ranges[c] = {lo, hi};
  }
  return rep;
}

}  // namespace tacsim
