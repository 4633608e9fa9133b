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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "tacsim/dataset.hpp"
#include "tacsim/pipeline.hpp"

namespace tacsim {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tacsim_ds_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<Sample> random_samples(std::uint64_t seed, int trajectories, int steps, FeatureKind kind) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int t = 0; t < trajectories; ++t)
    for (int s = 0; s < steps; ++s) {
      Sample smp;
      FeatureTensor f;
      f.kind = kind;
      f.normalization = kind == FeatureKind::Raw ? 255.0 : 1.0;
      for (auto& v : f.data) v = static_cast<float>(kind == FeatureKind::Raw ? rng.uniform(0.1, 0.9) : rng.uniform(-3, 3));
      smp.features = f;
      for (auto& v : smp.label.data) v = static_cast<float>(rng.uniform(-0.5, 0.5));
      smp.meta = {static_cast<std::uint64_t>(t), s, "sphere_r3", rng.next()};
      out.push_back(smp);
    }
  return out;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

TEST(Dataset, RoundTripBitwise) {
  for (auto kind : {FeatureKind::Raw, FeatureKind::OpticalFlow}) {
    const auto dir = scratch(std::string("rt_") + to_string(kind));
    const auto samples = random_samples(1, 5, 3, kind);
    const auto info = write_dataset(dir.string(), samples, 7, "abc123");
    const auto ds = read_dataset(dir.string());
    ASSERT_EQ(ds.samples.size(), samples.size());
    EXPECT_EQ(ds.info.feature_kind, to_string(kind));
    EXPECT_EQ(ds.info.config_hash, "abc123");
    EXPECT_TRUE(ds.info.complete);
    EXPECT_EQ(ds.info.split.validation, info.split.validation);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      EXPECT_TRUE(same_bits(ds.samples[i].features->data, samples[i].features->data));
      EXPECT_TRUE(same_bits(ds.samples[i].label.data, samples[i].label.data));
      EXPECT_EQ(ds.samples[i].meta, samples[i].meta);
      EXPECT_EQ(ds.samples[i].features->kind, kind);
    }
    EXPECT_EQ(fs::file_size(dir / "labels.f32"), samples.size() * kLabelElems * 4);
    EXPECT_EQ(fs::file_size(dir / "features.f32"), samples.size() * kFeatureElems * 4);
    fs::remove_all(dir);
  }
}

TEST(Dataset, LittleEndianLayout) {
  const auto dir = scratch("layout");
  auto samples = random_samples(2, 2, 1, FeatureKind::Raw);
  samples[1].label.at(2, 3, 4) = -1.5f;
  write_dataset(dir.string(), samples, 1);
  std::ifstream in(dir / "labels.f32", std::ios::binary);
  const std::size_t offset = (kLabelElems + (2 * 20 + 3) * 20 + 4) * 4;
  in.seekg(static_cast<std::streamoff>(offset));
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  // -1.5f is 0xBFC00000.
  EXPECT_EQ(b[0], 0x00);
  EXPECT_EQ(b[1], 0x00);
  EXPECT_EQ(b[2], 0xC0);
  EXPECT_EQ(b[3], 0xBF);
  fs::remove_all(dir);
}

TEST(Dataset, LabelOnly) {
  const auto dir = scratch("labels_only");
  auto samples = random_samples(3, 3, 2, FeatureKind::Raw);
  for (auto& s : samples) s.features.reset();
  write_dataset(dir.string(), samples, 1);
  const auto ds = read_dataset(dir.string());
  EXPECT_EQ(ds.info.feature_kind, "none");
  EXPECT_FALSE(fs::exists(dir / "features.f32"));
  for (std::size_t i = 0; i < samples.size(); ++i) EXPECT_TRUE(same_bits(ds.samples[i].label.data, samples[i].label.data));
  fs::remove_all(dir);
}

TEST(Dataset, TruncatedFileNamed) {
  const auto dir = scratch("trunc");
  write_dataset(dir.string(), random_samples(4, 3, 2, FeatureKind::Raw), 1);
  fs::resize_file(dir / "features.f32", fs::file_size(dir / "features.f32") - 4);
  try {
    read_dataset(dir.string());
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("features.f32"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Dataset, ManifestTamperingDetected) {
  const auto dir = scratch("tamper");
  write_dataset(dir.string(), random_samples(5, 5, 2, FeatureKind::Raw), 1);
  auto edit = [&](auto fn) {
    std::ifstream in(dir / "manifest.json");
    auto j = nlohmann::ordered_json::parse(in);
    in.close();
    fn(j);
    std::ofstream(dir / "manifest.json") << j.dump(2);
  };
  const auto original = [&] {
    std::ifstream in(dir / "manifest.json");
    return nlohmann::ordered_json::parse(in);
  }();
  edit([](auto& j) { j["version"] = 99; });
  EXPECT_THROW(read_dataset(dir.string()), IntegrityError);
  edit([&](auto& j) { j = original; j["label_maxima"][2] = 123.0; });
  EXPECT_THROW(read_dataset(dir.string()), IntegrityError);
  edit([&](auto& j) { j = original; j["split"]["train"].push_back(j["split"]["validation"][0]); });
  EXPECT_THROW(read_dataset(dir.string()), IntegrityError);
  edit([&](auto& j) { j = original; });
  EXPECT_NO_THROW(read_dataset(dir.string()));
  fs::remove_all(dir);
}

TEST(Dataset, LabelMaximaOverTrainingOnly) {
  const auto dir = scratch("maxima");
  auto samples = random_samples(6, 10, 2, FeatureKind::Raw);
  const auto split = split_trajectories({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 11);
  // A huge value in a validation trajectory must not leak into the maxima.
  for (auto& s : samples)
    if (s.meta.trajectory == split.validation.front()) s.label.at(0, 0, 0) = 1000.0f;
  const auto info = write_dataset(dir.string(), samples, 11);
  std::array<double, 3> mx{0, 0, 0};
  const std::set<std::uint64_t> train(split.train.begin(), split.train.end());
  for (const auto& s : samples) {
    if (!train.count(s.meta.trajectory)) continue;
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 20; ++r)
        for (int k = 0; k < 20; ++k) mx[c] = std::max(mx[c], static_cast<double>(std::abs(s.label.at(c, r, k))));
  }
  for (int c = 0; c < 3; ++c) EXPECT_EQ(info.label_maxima[c], mx[c]);
  EXPECT_LT(info.label_maxima[0], 1.0);
  EXPECT_EQ(read_dataset(dir.string()).info.label_maxima, info.label_maxima);
  fs::remove_all(dir);
}

TEST(Split, TwentyPercentStableAndDisjoint) {
  std::vector<std::uint64_t> ids;
  for (std::uint64_t i = 0; i < 3300; ++i) ids.push_back(i);
  const auto a = split_trajectories(ids, 42), b = split_trajectories(ids, 42);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.validation.size(), 660u);
  EXPECT_EQ(a.train.size() + a.validation.size(), ids.size());
  const std::set<std::uint64_t> val(a.validation.begin(), a.validation.end());
  for (auto t : a.train) EXPECT_FALSE(val.count(t));
  EXPECT_NE(split_trajectories(ids, 43).validation, a.validation);
}

TEST(Split, SmallCounts) {
  EXPECT_EQ(split_trajectories({5}, 1).validation.size(), 0u);
  EXPECT_EQ(split_trajectories({1, 2}, 1).validation.size(), 1u);
  EXPECT_EQ(split_trajectories({1, 2, 3}, 1).validation.size(), 1u);
  EXPECT_EQ(split_trajectories({1, 2, 3, 4, 5, 6, 7, 8}, 1).validation.size(), 2u);
}

TEST(Flip, DoubleFlipIsIdentity) {
  for (auto kind : {FeatureKind::Raw, FeatureKind::OpticalFlow}) {
    const auto s = random_samples(7, 1, 1, kind).front();
    for (auto axis : {FlipAxis::Horizontal, FlipAxis::Vertical}) {
      const auto twice = augment_flip(augment_flip(s, axis), axis);
      EXPECT_TRUE(same_bits(twice.features->data, s.features->data));
      EXPECT_TRUE(same_bits(twice.label.data, s.label.data));
    }
  }
}

TEST(Flip, HorizontalRules) {
  const auto s = random_samples(8, 1, 1, FeatureKind::OpticalFlow).front();
  const auto h = augment_flip(s, FlipAxis::Horizontal);
  for (int r = 0; r < 88; r += 5)
    for (int k = 0; k < 88; k += 3) {
      EXPECT_EQ(h.features->at(0, r, k), -s.features->at(0, r, 87 - k));
      EXPECT_EQ(h.features->at(1, r, k), s.features->at(1, r, 87 - k));
    }
  const auto raw = random_samples(8, 1, 1, FeatureKind::Raw).front();
  const auto hr = augment_flip(raw, FlipAxis::Horizontal);
  EXPECT_EQ(hr.features->at(0, 4, 0), raw.features->at(0, 4, 87));
  EXPECT_EQ(hr.features->at(1, 4, 0), raw.features->at(1, 4, 87));
  const auto v = augment_flip(s, FlipAxis::Vertical);
  EXPECT_EQ(v.features->at(1, 0, 9), -s.features->at(1, 87, 9));
  EXPECT_EQ(v.features->at(0, 0, 9), s.features->at(0, 87, 9));
}

TEST(Flip, TotalsTransformExactly) {
  // Bin values on a 1/64 lattice keep every float sum exact.
  Rng rng(9);
  Sample s = random_samples(9, 1, 1, FeatureKind::Raw).front();
  for (auto& v : s.label.data) v = static_cast<float>(rng.uniform_int(-256, 256)) / 64.0f;
  const Vec3 t = total_force(s.label);
  const Vec3 h = total_force(augment_flip(s, FlipAxis::Horizontal).label);
  EXPECT_EQ(h.x(), -t.x());
  EXPECT_EQ(h.y(), t.y());
  EXPECT_EQ(h.z(), t.z());
  const Vec3 v = total_force(augment_flip(s, FlipAxis::Vertical).label);
  EXPECT_EQ(v.x(), t.x());
  EXPECT_EQ(v.y(), -t.y());
}

TEST(Flip, ShearSampleStaysConsistent) {
  PipelineConfig cfg;
  cfg.feature_kind = "flow";
  cfg.particles = 1500;
  Trajectory traj;
  traj.seed = 77;
  traj.indenter = default_indenter_library().front();
  traj.indenter.pose = Pose{15, 15, 0, 0};
  TrajectoryStep st;
  st.pose = Pose{15, 15, 0.8, 0};
  st.lateral_offset = Vec2(0.4, 0.0);
  traj.steps.push_back(st);
  const Sample s = simulate_step(cfg, traj, 0, 0).sample;
  auto flow_x = [](const Sample& smp) {
    double sum = 0;
    for (int r = 0; r < 88; ++r)
      for (int k = 0; k < 88; ++k) sum += smp.features->at(0, r, k);
    return sum;
  };
  const double fx = total_force(s.label).x(), ux = flow_x(s);
  ASSERT_GT(std::abs(fx), 1e-3);
  ASSERT_GT(std::abs(ux), 1.0);
  const Sample f = augment_flip(s, FlipAxis::Horizontal);
  const double ffx = total_force(f.label).x(), fux = flow_x(f);
  EXPECT_LT(fx * ffx, 0);
  EXPECT_LT(ux * fux, 0);
  EXPECT_EQ(fx * ux > 0, ffx * fux > 0);
}

TEST(Photometric, IdentityAtUnitBrightnessNoNoise) {
  const auto s = random_samples(10, 1, 1, FeatureKind::Raw).front();
  const auto out = apply_photometric(s, 1.0, 0.0, 5);
  EXPECT_TRUE(same_bits(out.features->data, s.features->data));
}

TEST(Photometric, LabelUntouchedAndRangeKept) {
  const auto s = random_samples(11, 1, 1, FeatureKind::Raw).front();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = augment_photometric(s, seed);
    EXPECT_TRUE(same_bits(out.label.data, s.label.data));
    ASSERT_EQ(out.features->data.size(), kFeatureElems);
    for (float v : out.features->data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Photometric, NoiseCountBinomial) {
  const auto s = random_samples(12, 1, 1, FeatureKind::Raw).front();
  const double n = static_cast<double>(kFeatureElems), p = 0.01;
  const double mean = n * p, sigma = std::sqrt(n * p * (1 - p));
  EXPECT_NEAR(mean, 155, 0.5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = apply_photometric(s, 1.0, p, seed);
    int changed = 0;
    for (std::size_t i = 0; i < out.features->data.size(); ++i) changed += out.features->data[i] != s.features->data[i];
    EXPECT_NEAR(changed, mean, 3 * sigma) << seed;
  }
}

TEST(Photometric, FlowRejected) {
  const auto s = random_samples(13, 1, 1, FeatureKind::OpticalFlow).front();
  EXPECT_THROW(augment_photometric(s, 1), DomainError);
}

}  // namespace
}  // namespace tacsim
