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

// Image-pair features: dense optical flow pooled onto an 88x88 grid, or the
// two area-downsampled images stacked as channels.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tacsim/common.hpp"
#include "tacsim/image.hpp"

namespace tacsim {

inline constexpr int kFeatureBins = 88;

enum class FeatureKind { OpticalFlow, Raw };

inline const char* to_string(FeatureKind k) { return k == FeatureKind::OpticalFlow ? "flow" : "raw"; }

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "flow" || s == "optical_flow") return FeatureKind::OpticalFlow;
  if (s == "raw") return FeatureKind::Raw;
  throw DomainError("unknown feature kind '" + s + "'");
}

// 2 x 88 x 88, channel-major, row-major within a channel.
struct FeatureTensor {
  FeatureKind kind = FeatureKind::Raw;
  int bins = kFeatureBins;
  std::vector<float> data = std::vector<float>(2 * kFeatureBins * kFeatureBins, 0.0f);
  // Scale mapping feature units back to source units (px for flow, 8-bit
  // intensity for raw).
  double normalization = 1.0;

  float& at(int c, int row, int col) { return data[(static_cast<std::size_t>(c) * bins + row) * bins + col]; }
  float at(int c, int row, int col) const { return data[(static_cast<std::size_t>(c) * bins + row) * bins + col]; }
};

struct FlowField {
  FloatImage u;  // horizontal displacement, px
  FloatImage v;
  bool low_confidence = false;
};

struct FlowOptions {
  int patch = 8;
  int stride = 4;
  int levels = 4;  // clamped to [3, 5] and to what the image size allows
  int iterations = 16;
  double min_eigen = 1e-3;  // per-pixel gradient energy floor for a usable patch
};

namespace detail {

inline FloatImage to_float(const GrayImage& g) {
  FloatImage f(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) f.data()[i] = g.data()[i];
  return f;
}

inline FloatImage downsample2(const FloatImage& src) {
  FloatImage dst(std::max(1, src.width() / 2), std::max(1, src.height() / 2));
  for (int y = 0; y < dst.height(); ++y) {
    for (int x = 0; x < dst.width(); ++x) {
      const int sx = std::min(2 * x + 1, src.width() - 1);
      const int sy = std::min(2 * y + 1, src.height() - 1);
      dst(x, y) = 0.25f * (src(2 * x, 2 * y) + src(sx, 2 * y) + src(2 * x, sy) + src(sx, sy));
    }
  }
  return dst;
}

// Bilinear sample with border replication.
inline float sample(const FloatImage& img, double x, double y) {
  x = std::clamp(x, 0.0, img.width() - 1.0);
  y = std::clamp(y, 0.0, img.height() - 1.0);
  const int x0 = std::min(static_cast<int>(x), img.width() - 2 < 0 ? 0 : img.width() - 2);
  const int y0 = std::min(static_cast<int>(y), img.height() - 2 < 0 ? 0 : img.height() - 2);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img(x0, y0) * (1 - fx) + img(x1, y0) * fx;
  const double bot = img(x0, y1) * (1 - fx) + img(x1, y1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

inline FloatImage upsample_flow(const FloatImage& coarse, int width, int height) {
  FloatImage out(width, height);
  const double sx = static_cast<double>(coarse.width()) / width;
  const double sy = static_cast<double>(coarse.height()) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out(x, y) = 2.0f * sample(coarse, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
    }
  }
  return out;
}

// Patch positions along one axis: [0, stride, ...] plus a final patch flush
// with the far edge.
inline std::vector<int> patch_starts(int size, int patch, int stride) {
  std::vector<int> s;
  if (size <= patch) return {0};
  for (int p = 0; p + patch <= size; p += stride) s.push_back(p);
  if (s.back() + patch < size) s.push_back(size - patch);
  return s;
}

struct PatchFlow {
  std::vector<int> xs, ys;
  std::vector<float> u, v;  // row-major over (ys, xs)
};

// Inverse-compositional Lucas-Kanade translation search per patch.
inline PatchFlow inverse_search(const FloatImage& rest, const FloatImage& moved, const FloatImage& init_u,
                                const FloatImage& init_v, const FlowOptions& opt) {
  PatchFlow pf;
  const int P = std::min({opt.patch, rest.width(), rest.height()});
  pf.xs = patch_starts(rest.width(), P, opt.stride);
  pf.ys = patch_starts(rest.height(), P, opt.stride);
  pf.u.resize(pf.xs.size() * pf.ys.size());
  pf.v.resize(pf.u.size());
  const int n = P * P;
  std::vector<float> tmpl(static_cast<std::size_t>(n)), gx(static_cast<std::size_t>(n)), gy(static_cast<std::size_t>(n));
  for (std::size_t py = 0; py < pf.ys.size(); ++py) {
    for (std::size_t px = 0; px < pf.xs.size(); ++px) {
      const int x0 = pf.xs[px];
      const int y0 = pf.ys[py];
      const double cx = x0 + (P - 1) / 2.0;
      const double cy = y0 + (P - 1) / 2.0;
      double u = sample(init_u, cx, cy);
      double v = sample(init_v, cx, cy);
      double hxx = 0, hxy = 0, hyy = 0;
      for (int j = 0; j < P; ++j) {
        for (int i = 0; i < P; ++i) {
          const int x = x0 + i, y = y0 + j;
          const auto k = static_cast<std::size_t>(j * P + i);
          tmpl[k] = rest(x, y);
          const float gxv = 0.5f * (rest(std::min(x + 1, rest.width() - 1), y) - rest(std::max(x - 1, 0), y));
          const float gyv = 0.5f * (rest(x, std::min(y + 1, rest.height() - 1)) - rest(x, std::max(y - 1, 0)));
          gx[k] = gxv;
          gy[k] = gyv;
          hxx += gxv * gxv;
          hxy += gxv * gyv;
          hyy += gyv * gyv;
        }
      }
      const double tr = hxx + hyy;
      const double det = hxx * hyy - hxy * hxy;
      const double lmin = 0.5 * (tr - std::sqrt(std::max(tr * tr - 4 * det, 0.0)));
      auto ssd = [&](double uu, double vv) {
        double e = 0;
        for (int j = 0; j < P; ++j)
          for (int i = 0; i < P; ++i) {
            const double d = sample(moved, x0 + i + uu, y0 + j + vv) - tmpl[static_cast<std::size_t>(j * P + i)];
            e += d * d;
          }
        return e;
      };
      if (lmin > opt.min_eigen * n) {
        const double u_init = u, v_init = v;
        const double err_init = ssd(u, v);
        for (int it = 0; it < opt.iterations; ++it) {
          double bx = 0, by = 0;
          for (int j = 0; j < P; ++j) {
            for (int i = 0; i < P; ++i) {
              const auto k = static_cast<std::size_t>(j * P + i);
              const double e = sample(moved, x0 + i + u, y0 + j + v) - tmpl[k];
              bx += gx[k] * e;
              by += gy[k] * e;
            }
          }
          const double du = (hyy * bx - hxy * by) / det;
          const double dv = (hxx * by - hxy * bx) / det;
          // Inverse compositional update for a pure translation.
          u -= du;
          v -= dv;
          if (du * du + dv * dv < 1e-6) break;
        }
        if (!(std::isfinite(u) && std::isfinite(v)) || ssd(u, v) > err_init) {
          u = u_init;
          v = v_init;
        }
      }
      pf.u[py * pf.xs.size() + px] = static_cast<float>(u);
      pf.v[py * pf.xs.size() + px] = static_cast<float>(v);
    }
  }
  return pf;
}

// Bilinear interpolation of the patch-centre flow grid to every pixel.
inline void densify(const PatchFlow& pf, int patch, FloatImage& u, FloatImage& v) {
  const int nx = static_cast<int>(pf.xs.size());
  const int ny = static_cast<int>(pf.ys.size());
  auto locate = [&](const std::vector<int>& starts, int n, double c, int& i0, double& t) {
    const double half = (patch - 1) / 2.0;
    if (c <= starts.front() + half || n == 1) {
      i0 = 0;
      t = 0;
      return;
    }
    if (c >= starts.back() + half) {
      i0 = n - 2;
      t = 1;
      return;
    }
    i0 = 0;
    while (i0 + 1 < n - 1 && starts[static_cast<std::size_t>(i0 + 1)] + half <= c) ++i0;
    const double a = starts[static_cast<std::size_t>(i0)] + half;
    const double b = starts[static_cast<std::size_t>(i0 + 1)] + half;
    t = (c - a) / (b - a);
  };
  std::vector<int> xi(static_cast<std::size_t>(u.width()));
  std::vector<double> xt(static_cast<std::size_t>(u.width()));
  for (int x = 0; x < u.width(); ++x) locate(pf.xs, nx, x, xi[static_cast<std::size_t>(x)], xt[static_cast<std::size_t>(x)]);
  for (int y = 0; y < u.height(); ++y) {
    int j0;
    double ty;
    locate(pf.ys, ny, y, j0, ty);
    const int j1 = std::min(j0 + 1, ny - 1);
    for (int x = 0; x < u.width(); ++x) {
      const int i0 = xi[static_cast<std::size_t>(x)];
      const int i1 = std::min(i0 + 1, nx - 1);
      const double tx = xt[static_cast<std::size_t>(x)];
      auto lerp2 = [&](const std::vector<float>& f) {
        const auto at = [&](int i, int j) { return static_cast<double>(f[static_cast<std::size_t>(j) * nx + i]); };
        return (1 - ty) * ((1 - tx) * at(i0, j0) + tx * at(i1, j0)) + ty * ((1 - tx) * at(i0, j1) + tx * at(i1, j1));
      };
      u(x, y) = static_cast<float>(lerp2(pf.u));
      v(x, y) = static_cast<float>(lerp2(pf.v));
    }
  }
}

}  // namespace detail

// Coarse-to-fine inverse-search dense flow from `rest` to `deformed`.
inline FlowField dense_flow(const GrayImage& rest, const GrayImage& deformed, const FlowOptions& opt = {}) {
  if (rest.width() != deformed.width() || rest.height() != deformed.height()) {
    throw DomainError("dense_flow requires same-size images");
  }
  FlowField out{FloatImage(rest.width(), rest.height(), 0.0f), FloatImage(rest.width(), rest.height(), 0.0f), false};
  const bool rest_black = std::all_of(rest.data().begin(), rest.data().end(), [](auto p) { return p == 0; });
  const bool def_black = std::all_of(deformed.data().begin(), deformed.data().end(), [](auto p) { return p == 0; });
  if (rest_black || def_black) {
    out.low_confidence = true;
    return out;
  }
  std::vector<FloatImage> pyr_rest{detail::to_float(rest)};
  std::vector<FloatImage> pyr_def{detail::to_float(deformed)};
  const int levels = std::clamp(opt.levels, 3, 5);
  while (static_cast<int>(pyr_rest.size()) < levels && pyr_rest.back().width() / 2 >= 2 * opt.patch &&
         pyr_rest.back().height() / 2 >= 2 * opt.patch) {
    pyr_rest.push_back(detail::downsample2(pyr_rest.back()));
    pyr_def.push_back(detail::downsample2(pyr_def.back()));
  }
  FloatImage fu, fv;
  for (int l = static_cast<int>(pyr_rest.size()) - 1; l >= 0; --l) {
    const auto& r = pyr_rest[static_cast<std::size_t>(l)];
    const auto& d = pyr_def[static_cast<std::size_t>(l)];
    if (fu.empty()) {
      fu = FloatImage(r.width(), r.height(), 0.0f);
      fv = FloatImage(r.width(), r.height(), 0.0f);
    } else {
      fu = detail::upsample_flow(fu, r.width(), r.height());
      fv = detail::upsample_flow(fv, r.width(), r.height());
    }
    const auto pf = detail::inverse_search(r, d, fu, fv, opt);
    detail::densify(pf, std::min({opt.patch, r.width(), r.height()}), fu, fv);
  }
  out.u = std::move(fu);
  out.v = std::move(fv);
  return out;
}

namespace detail {

inline int bin_edge(int i, int size, int bins) {
  return static_cast<int>(static_cast<long long>(i) * size / bins);
}

template <typename T>
void area_pool(const Image<T>& img, float scale, int bins, float* out) {
  for (int by = 0; by < bins; ++by) {
    const int y0 = bin_edge(by, img.height(), bins), y1 = bin_edge(by + 1, img.height(), bins);
    for (int bx = 0; bx < bins; ++bx) {
      const int x0 = bin_edge(bx, img.width(), bins), x1 = bin_edge(bx + 1, img.width(), bins);
      double sum = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) sum += img(x, y);
      const double count = static_cast<double>(x1 - x0) * (y1 - y0);
      out[by * bins + bx] = static_cast<float>(sum / count * scale);
    }
  }
}

}  // namespace detail

// Mean flow per bin of an even 88x88 partition.
inline FeatureTensor pool_flow(const FlowField& flow) {
  if (flow.u.width() < kFeatureBins || flow.u.height() < kFeatureBins) {
    throw DomainError("pool_flow requires at least 88x88 pixels");
  }
  FeatureTensor t;
  t.kind = FeatureKind::OpticalFlow;
  t.normalization = 1.0;
  constexpr std::size_t plane = kFeatureBins * kFeatureBins;
  detail::area_pool(flow.u, 1.0f, kFeatureBins, t.data.data());
  detail::area_pool(flow.v, 1.0f, kFeatureBins, t.data.data() + plane);
  return t;
}

// Area-average downsample of both images to 88x88, scaled to [0, 1].
inline FeatureTensor raw_features(const GrayImage& rest, const GrayImage& deformed) {
  if (rest.width() != deformed.width() || rest.height() != deformed.height()) {
    throw DomainError("raw_features requires same-size images");
  }
  if (rest.width() < kFeatureBins || rest.height() < kFeatureBins) {
    throw DomainError("raw_features requires at least 88x88 pixels");
  }
  FeatureTensor t;
  t.kind = FeatureKind::Raw;
  t.normalization = 255.0;
  constexpr std::size_t plane = kFeatureBins * kFeatureBins;
  detail::area_pool(rest, 1.0f / 255.0f, kFeatureBins, t.data.data());
  detail::area_pool(deformed, 1.0f / 255.0f, kFeatureBins, t.data.data() + plane);
  return t;
}

}  // namespace tacsim
