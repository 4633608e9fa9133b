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

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "tacsim/contact.hpp"
#include "tacsim/labels.hpp"

namespace tacsim {
namespace {

std::vector<NodalForce> random_nodes(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::vector<NodalForce> nodes;
  for (int i = 0; i < n; ++i) {
    nodes.push_back({Vec2(rng.uniform(0, 30), rng.uniform(0, 30)),
                     Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-1, 0))});
  }
  return nodes;
}

ForceGrid random_grid(Rng& rng, double scale) {
  ForceGrid g;
  for (auto& v : g.data) v = static_cast<float>(rng.uniform(-scale, scale));
  return g;
}

// Independent binning: compare against explicit bin edges 1.5 k.
ForceGrid brute_bin(const std::vector<NodalForce>& nodes) {
  std::vector<double> acc(3 * 400, 0.0);
  for (const auto& nd : nodes) {
    int col = 19, row = 19;
    for (int k = 0; k < 20; ++k) {
      if (nd.position.x() < 1.5 * (k + 1)) { col = k; break; }
    }
    for (int k = 0; k < 20; ++k) {
      if (nd.position.y() < 1.5 * (k + 1)) { row = k; break; }
    }
    for (int c = 0; c < 3; ++c) acc[c * 400 + row * 20 + col] += nd.force[c];
  }
  ForceGrid g;
  for (std::size_t k = 0; k < acc.size(); ++k) g.data[k] = static_cast<float>(acc[k]);
  return g;
}

TEST(BinForces, SingleNode) {
  const std::vector<NodalForce> nodes{{Vec2(7 * 1.5 + 0.2, 3 * 1.5 + 0.7), Vec3(0.1, 0, -0.5)}};
  const ForceGrid g = bin_forces(nodes);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 20; ++r)
      for (int k = 0; k < 20; ++k) {
        const float expected = (r == 3 && k == 7) ? static_cast<float>(Vec3(0.1, 0, -0.5)[c]) : 0.0f;
        EXPECT_EQ(g.at(c, r, k), expected);
      }
}

TEST(BinForces, ConservesTotals) {
  const auto nodes = random_nodes(3, 5000);
  const auto acc = detail::accumulate_bins(nodes, kSurfaceWidth);
  Vec3 direct = Vec3::Zero(), binned = Vec3::Zero();
  for (const auto& n : nodes) direct += n.force;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 400; ++k) binned[c] += acc[c * 400 + k];
  EXPECT_LT((direct - binned).cwiseAbs().maxCoeff(), 1e-9);
  const Vec3 stored = total_force(bin_forces(nodes));
  EXPECT_LT((direct - stored).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, direct.norm()));
}

TEST(BinForces, MatchesBruteForceBitwise) {
  const auto nodes = random_nodes(11, 10000);
  EXPECT_EQ(bin_forces(nodes), brute_bin(nodes));
}

TEST(BinForces, EdgesGoToUpperBin) {
  EXPECT_EQ(bin_index(0.0), 0);
  EXPECT_EQ(bin_index(1.5), 1);
  EXPECT_EQ(bin_index(1.4999999), 0);
  EXPECT_EQ(bin_index(15.0), 10);
  EXPECT_EQ(bin_index(30.0), 19);
  const std::vector<NodalForce> nodes{{Vec2(3.0, 4.5), Vec3(0, 0, -1)}};
  EXPECT_EQ(bin_forces(nodes).at(2, 3, 2), -1.0f);
}

TEST(BinForces, OutsideNodeNamed) {
  auto nodes = random_nodes(1, 10);
  nodes[6].position = Vec2(30.01, 2);
  try {
    bin_forces(nodes);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("node 6"), std::string::npos);
  }
  nodes[6].position = Vec2(1, -1e-9);
  EXPECT_THROW(bin_forces(nodes), DomainError);
}

TEST(BinForces, PermutationInvariant) {
  auto nodes = random_nodes(5, 3000);
  const auto a = detail::accumulate_bins(nodes, kSurfaceWidth);
  Rng rng(6);
  for (std::size_t i = nodes.size() - 1; i > 0; --i) std::swap(nodes[i], nodes[rng.uniform_int(0, static_cast<std::int64_t>(i))]);
  const auto b = detail::accumulate_bins(nodes, kSurfaceWidth);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(BinForces, Additive) {
  const auto a = random_nodes(7, 800), b = random_nodes(8, 900);
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto sa = detail::accumulate_bins(a, kSurfaceWidth), sb = detail::accumulate_bins(b, kSurfaceWidth);
  const auto sab = detail::accumulate_bins(ab, kSurfaceWidth);
  for (std::size_t k = 0; k < sab.size(); ++k) EXPECT_NEAR(sab[k], sa[k] + sb[k], 1e-12);
}

TEST(TotalForce, ZeroAndUniform) {
  EXPECT_EQ(total_force(ForceGrid{}), Vec3::Zero());
  ForceGrid g;
  for (int r = 0; r < 20; ++r)
    for (int k = 0; k < 20; ++k) g.at(2, r, k) = -0.01f;
  EXPECT_NEAR(total_force(g).z(), -4.0, 1e-6);
}

TEST(TotalForce, MatchesContactSolution) {
  const ElasticHalfSpace hs;
  const Indenter ind{Sphere{3.0}, Pose{15, 15, 0.5, 0}, "sphere"};
  const auto sol = apply_shear(solve_normal_contact(hs, ind, 48), Vec2(0.05, -0.02), hs);
  const auto nodes = sol.nodal_forces();
  const auto acc = detail::accumulate_bins(nodes, kSurfaceWidth);
  Vec3 binned = Vec3::Zero();
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 400; ++k) binned[c] += acc[c * 400 + k];
  const Vec3 total = sol.total_force();
  EXPECT_LT((binned - total).cwiseAbs().maxCoeff(), 1e-9);
  // Float storage keeps single precision of each bin.
  EXPECT_LT((total_force(bin_forces(nodes)) - total).cwiseAbs().maxCoeff(), 1e-6 * total.norm());
  EXPECT_LT(total.z(), 0.0);
}

TEST(FlipGrid, MirrorsAndNegates) {
  Rng rng(9);
  const ForceGrid g = random_grid(rng, 1);
  const ForceGrid h = flip_grid(g, true);
  for (int r = 0; r < 20; ++r)
    for (int k = 0; k < 20; ++k) {
      EXPECT_EQ(h.at(0, r, k), -g.at(0, r, 19 - k));
      EXPECT_EQ(h.at(1, r, k), g.at(1, r, 19 - k));
      EXPECT_EQ(h.at(2, r, k), g.at(2, r, 19 - k));
    }
  EXPECT_EQ(flip_grid(h, true), g);
  const Vec3 t = total_force(g), th = total_force(h);
  EXPECT_NEAR(th.x(), -t.x(), 1e-6);
  EXPECT_NEAR(th.y(), t.y(), 1e-6);
  EXPECT_NEAR(th.z(), t.z(), 1e-6);
  const ForceGrid v = flip_grid(g, false);
  EXPECT_EQ(v.at(1, 0, 4), -g.at(1, 19, 4));
  EXPECT_EQ(v.at(0, 0, 4), g.at(0, 19, 4));
}

TEST(Evaluate, IdenticalGivesZero) {
  Rng rng(1);
  std::vector<ForceGrid> t{random_grid(rng, 1), random_grid(rng, 1)};
  const auto rep = evaluate(t, t);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(rep.rmse[c], 0);
    EXPECT_EQ(rep.rmset[c], 0);
    EXPECT_EQ(rep.mae_bin[c], 0);
    EXPECT_EQ(rep.sdae_bin[c], 0);
    EXPECT_EQ(rep.mae_total[c], 0);
    EXPECT_EQ(rep.sdae_total[c], 0);
  }
}

TEST(Evaluate, ConstantOffset) {
  ForceGrid truth, pred;
  for (int r = 0; r < 20; ++r)
    for (int k = 0; k < 20; ++k) pred.at(2, r, k) = 0.01f;
  const auto rep = evaluate({pred}, {truth});
  EXPECT_NEAR(rep.rmse[2], 0.01, 1e-8);
  EXPECT_NEAR(rep.rmset[2], 4.0, 1e-6);
  EXPECT_NEAR(rep.mae_bin[2], 0.01, 1e-8);
  EXPECT_NEAR(rep.sdae_bin[2], 0.0, 1e-8);
  EXPECT_EQ(rep.rmse[0], 0);
}

TEST(Evaluate, MatchesDefinitionOracle) {
  Rng rng(21);
  std::vector<ForceGrid> preds, truths;
  for (int s = 0; s < 17; ++s) {
    preds.push_back(random_grid(rng, 0.5));
    truths.push_back(random_grid(rng, 0.5));
  }
  const auto rep = evaluate(preds, truths);
  for (int c = 0; c < 3; ++c) {
    // Two-pass mean and deviation, straight from the definitions.
    std::vector<double> eb, et;
    double lo = 1e300, hi = -1e300;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      double tp = 0, tt = 0;
      for (int r = 0; r < 20; ++r)
        for (int k = 0; k < 20; ++k) {
          const double p = preds[s].at(c, r, k), t = truths[s].at(c, r, k);
          eb.push_back(p - t);
          tp += p;
          tt += t;
        }
      et.push_back(tp - tt);
      lo = std::min(lo, tt);
      hi = std::max(hi, tt);
    }
    auto rms = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x * x;
      return std::sqrt(s / v.size());
    };
    auto mean_abs = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += std::abs(x);
      return s / v.size();
    };
    auto sd_abs = [&](const std::vector<double>& v) {
      const double m = mean_abs(v);
      double s = 0;
      for (double x : v) s += (std::abs(x) - m) * (std::abs(x) - m);
      return std::sqrt(s / v.size());
    };
    EXPECT_NEAR(rep.rmse[c], rms(eb), 1e-9);
    EXPECT_NEAR(rep.rmset[c], rms(et), 1e-9);
    EXPECT_NEAR(rep.mae_bin[c], mean_abs(eb), 1e-9);
    EXPECT_NEAR(rep.sdae_bin[c], sd_abs(eb), 1e-9);
    EXPECT_NEAR(rep.mae_total[c], mean_abs(et), 1e-9);
    EXPECT_NEAR(rep.sdae_total[c], sd_abs(et), 1e-9);
    EXPECT_NEAR(rep.force_ranges[c][0], lo, 1e-9);
    EXPECT_NEAR(rep.force_ranges[c][1], hi, 1e-9);
    EXPECT_LE(rep.rmset[c], 400 * rep.rmse[c]);
  }
}

TEST(Evaluate, RmsetBoundedByBinRmse) {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ForceGrid> preds, truths;
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 8));
    for (int s = 0; s < n; ++s) {
      truths.push_back(random_grid(rng, 1));
      ForceGrid p = truths.back();
      // Correlated errors approach the bound.
      const float off = static_cast<float>(rng.uniform(-0.1, 0.1));
      for (auto& v : p.data) v += off + static_cast<float>(rng.uniform(-0.01, 0.01));
      preds.push_back(p);
    }
    const auto rep = evaluate(preds, truths);
    for (int c = 0; c < 3; ++c) {
      EXPECT_GE(rep.rmse[c], 0);
      EXPECT_LE(rep.rmset[c], 400 * rep.rmse[c] * (1 + 1e-12));
    }
  }
}

TEST(Evaluate, RejectsBadInput) {
  EXPECT_THROW(evaluate({}, {}), DomainError);
  EXPECT_THROW(evaluate({ForceGrid{}}, {ForceGrid{}, ForceGrid{}}), DomainError);
}

TEST(Report, JsonAndText) {
  ForceGrid truth, pred;
  truth.at(2, 4, 4) = -2.0f;
  const auto rep = evaluate({pred}, {truth});
  const auto j = rep.to_json();
  EXPECT_EQ(j["rmse_mode"], "pooled");
  EXPECT_EQ(j["samples"], 1);
  EXPECT_NEAR(j["components"]["z"]["rmset"].get<double>(), 2.0, 1e-12);
  EXPECT_NEAR(j["components"]["z"]["range_min"].get<double>(), -2.0, 1e-12);
  const std::string text = rep.to_text();
  EXPECT_NE(text.find("Fz"), std::string::npos);
  EXPECT_NE(text.find("pooled"), std::string::npos);
}

}  // namespace
}  // namespace tacsim
