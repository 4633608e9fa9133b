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

#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "tacsim/pipeline.hpp"

namespace tacsim {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PipelineConfig small_config(const std::string& name) {
  PipelineConfig cfg;
  cfg.trajectories = 2;
  cfg.steps = 6;
  cfg.dataset_path = (fs::temp_directory_path() / ("tacsim_pipe_" + name)).string();
  fs::remove_all(cfg.dataset_path);
  return cfg;
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig cfg;
  cfg.trajectories = 12;
  cfg.feature_kind = "flow";
  cfg.material.young_modulus = 61000;
  cfg.seed = 99;
  const auto back = PipelineConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), cfg.to_json().dump());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_NE(PipelineConfig{}.hash(), cfg.hash());
}

TEST(Config, Defaults) {
  const PipelineConfig cfg;
  EXPECT_EQ(cfg.trajectories, 3300);
  EXPECT_EQ(cfg.steps, 50);
  EXPECT_EQ(cfg.material.friction_mu, 0.9);
  EXPECT_EQ(cfg.camera().f, 220.0);
}

TEST(Config, StrictKeys) {
  auto j = nlohmann::json::parse(PipelineConfig{}.to_json().dump());
  j["trajectory"]["cuont"] = 4;
  EXPECT_THROW(PipelineConfig::from_json(j), DomainError);
  j = nlohmann::json::parse(PipelineConfig{}.to_json().dump());
  j["extras"] = {{"a", 1}};
  EXPECT_THROW(PipelineConfig::from_json(j), DomainError);
  j = nlohmann::json::parse(PipelineConfig{}.to_json().dump());
  j["features"]["kind"] = "sift";
  EXPECT_THROW(PipelineConfig::from_json(j), DomainError);
  j = nlohmann::json::parse(PipelineConfig{}.to_json().dump());
  j["trajectory"]["count"] = "many";
  EXPECT_THROW(PipelineConfig::from_json(j), DomainError);
  EXPECT_NO_THROW(PipelineConfig::from_json(nlohmann::json::object()));
}

TEST(SolveStep, ForceCapsHold) {
  PipelineConfig cfg;
  cfg.force_cap_z = 1e9;
  cfg.force_cap_xy = 1e9;
  Indenter ind = default_indenter_library().front();
  ind.pose = Pose{15, 15, 2.0, 0};
  const Vec2 lateral(1.5, 0.5);
  const Vec3 free = solve_step(cfg, ind, lateral).total_force();
  ASSERT_GT(-free.z(), 0.0);
  ASSERT_GT(free.head<2>().norm(), 0.0);
  cfg.force_cap_z = 0.5 * -free.z();
  cfg.force_cap_xy = 0.5 * free.head<2>().norm();
  const Vec3 f = solve_step(cfg, ind, lateral).total_force();
  EXPECT_LE(-f.z(), cfg.force_cap_z + 1e-9);
  EXPECT_GT(-f.z(), 0.9 * cfg.force_cap_z);
  EXPECT_LE(f.head<2>().norm(), cfg.force_cap_xy + 1e-9);
}

TEST(Simulate, SampleCountAndManifest) {
  const auto cfg = small_config("count");
  const auto sum = simulate(cfg);
  EXPECT_EQ(sum.samples, 12u);
  EXPECT_TRUE(sum.complete);
  const auto ds = read_dataset(cfg.dataset_path);
  EXPECT_EQ(ds.samples.size(), 12u);
  EXPECT_EQ(ds.info.config_hash, cfg.hash());
  EXPECT_EQ(ds.info.split.validation.size(), 1u);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(ds.samples[i].meta.trajectory, i / 6);
    EXPECT_EQ(ds.samples[i].meta.step, static_cast<int>(i % 6));
  }
  for (int c = 0; c < 2; ++c) {
    EXPECT_GE(sum.force_ranges[c][0], -cfg.force_cap_xy - 1e-6);
    EXPECT_LE(sum.force_ranges[c][1], cfg.force_cap_xy + 1e-6);
  }
  EXPECT_GE(sum.force_ranges[2][0], -cfg.force_cap_z - 1e-6);
  EXPECT_LE(sum.force_ranges[2][1], 1e-12);
  const auto stored = PipelineConfig::from_json(nlohmann::json::parse(slurp(fs::path(cfg.dataset_path) / "config.json")));
  EXPECT_EQ(stored.hash(), cfg.hash());
  fs::remove_all(cfg.dataset_path);
}

TEST(Simulate, BitwiseDeterministicAcrossRunsAndWorkers) {
  auto a = small_config("det_a"), b = small_config("det_b");
  simulate(a, 1);
  simulate(b, 2);
  for (const char* f : {"manifest.json", "labels.f32", "features.f32", "config.json"}) {
    const std::string fa = slurp(fs::path(a.dataset_path) / f);
    std::string fb = slurp(fs::path(b.dataset_path) / f);
    if (std::string(f) == "config.json" || std::string(f) == "manifest.json") {
      // Only the dataset path differs between the two configs.
      EXPECT_FALSE(fa.empty());
      continue;
    }
    EXPECT_EQ(fa, fb) << f;
  }
  // A second run into the same place reproduces every byte.
  const std::string labels = slurp(fs::path(a.dataset_path) / "labels.f32");
  const std::string manifest = slurp(fs::path(a.dataset_path) / "manifest.json");
  simulate(a, 1);
  EXPECT_EQ(slurp(fs::path(a.dataset_path) / "labels.f32"), labels);
  EXPECT_EQ(slurp(fs::path(a.dataset_path) / "manifest.json"), manifest);
  fs::remove_all(a.dataset_path);
  fs::remove_all(b.dataset_path);
}

TEST(Simulate, SeedChangesData) {
  auto a = small_config("seed_a"), b = small_config("seed_b");
  b.seed = 2;
  simulate(a);
  simulate(b);
  EXPECT_NE(slurp(fs::path(a.dataset_path) / "labels.f32"), slurp(fs::path(b.dataset_path) / "labels.f32"));
  fs::remove_all(a.dataset_path);
  fs::remove_all(b.dataset_path);
}

TEST(Simulate, FlowFeaturesAndImages) {
  auto cfg = small_config("flow");
  cfg.trajectories = 1;
  cfg.steps = 3;
  cfg.feature_kind = "flow";
  cfg.save_images = true;
  simulate(cfg);
  const auto ds = read_dataset(cfg.dataset_path);
  EXPECT_EQ(ds.info.feature_kind, "flow");
  EXPECT_TRUE(fs::exists(fs::path(cfg.dataset_path) / "images" / image_name(0, 2, "deformed")));
  const auto rest = read_png_gray((fs::path(cfg.dataset_path) / "images" / image_name(0, 0, "rest")).string());
  EXPECT_EQ(rest.width(), 440);
  fs::remove_all(cfg.dataset_path);
}

}  // namespace
}  // namespace tacsim
