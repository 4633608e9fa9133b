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

// On-disk dataset: manifest.json plus raw little-endian float32 tensors, the
// trajectory-level train/validation split, and read-time augmentations.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tacsim/common.hpp"
#include "tacsim/features.hpp"
#include "tacsim/labels.hpp"

namespace tacsim {

static_assert(std::endian::native == std::endian::little, "tensor files are written in host byte order");

inline constexpr int kDatasetVersion = 1;
inline constexpr double kValidationFraction = 0.2;

struct SampleMeta {
  std::uint64_t trajectory = 0;
  int step = 0;
  std::string indenter;
  std::uint64_t seed = 0;
  bool operator==(const SampleMeta&) const = default;
};

struct Sample {
  std::optional<FeatureTensor> features;  // absent for label-only datasets
  ForceGrid label;
  SampleMeta meta;
};

struct Split {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> train, validation;  // trajectory ids, ascending
};

// Puts round(fraction * n) trajectories (at least one when n >= 2) into the
// validation split, chosen by a seeded shuffle of the sorted ids.
inline Split split_trajectories(std::vector<std::uint64_t> ids, std::uint64_t seed, double fraction = kValidationFraction) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::size_t n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size())));
  if (ids.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  else n_val = 0;
  std::vector<std::uint64_t> order = ids;
  Rng rng(derive_seed(seed, 0x5b17));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  Split s;
  s.seed = seed;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

// Per-channel max |value| over the labels of training trajectories.
inline std::array<double, 3> label_maxima(const std::vector<Sample>& samples, const std::vector<std::uint64_t>& train) {
  const std::set<std::uint64_t> keep(train.begin(), train.end());
  std::array<double, 3> mx{0, 0, 0};
  constexpr std::size_t plane = kLabelBins * kLabelBins;
  for (const auto& s : samples) {
    if (!keep.count(s.meta.trajectory)) continue;
    for (int c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < plane; ++k) mx[c] = std::max(mx[c], static_cast<double>(std::abs(s.label.data[c * plane + k])));
  }
  return mx;
}

struct DatasetInfo {
  std::string feature_kind = "raw";  // "flow", "raw" or "none"
  double feature_normalization = 1.0;
  std::string config_hash;
  bool complete = true;
  Split split;
  std::array<double, 3> label_maxima{};
};

struct Dataset {
  DatasetInfo info;
  std::vector<Sample> samples;
};

namespace detail {

inline void write_f32(const std::filesystem::path& path, const std::vector<float>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw Error("failed writing " + path.string());
}

inline std::vector<float> read_f32(const std::filesystem::path& path, std::size_t count) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw IntegrityError("missing tensor file " + path.string());
  if (bytes != count * sizeof(float)) {
    throw IntegrityError("tensor file " + path.string() + " has " + std::to_string(bytes) + " bytes, expected " +
                         std::to_string(count * sizeof(float)));
  }
  std::vector<float> v(count);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IntegrityError("short read from tensor file " + path.string());
  return v;
}

}  // namespace detail

inline constexpr std::size_t kFeatureElems = 2 * kFeatureBins * kFeatureBins;
inline constexpr std::size_t kLabelElems = 3 * kLabelBins * kLabelBins;

// Writes `samples` under `dir`. The split is computed from the trajectory ids
// with `split_seed` and label maxima over its training part.
inline DatasetInfo write_dataset(const std::string& dir, const std::vector<Sample>& samples, std::uint64_t split_seed,
                                 const std::string& config_hash = "", bool complete = true) {
  namespace fs = std::filesystem;
  DatasetInfo info;
  info.config_hash = config_hash;
  info.complete = complete;
  const bool has_features = !samples.empty() && samples.front().features.has_value();
  info.feature_kind = has_features ? to_string(samples.front().features->kind) : "none";
  if (has_features) info.feature_normalization = samples.front().features->normalization;
  std::vector<std::uint64_t> ids;
  for (const auto& s : samples) {
    if (s.features.has_value() != has_features) throw DomainError("samples mix feature and label-only entries");
    if (has_features) {
      if (s.features->kind != samples.front().features->kind) throw DomainError("feature kind differs within dataset");
      if (s.features->data.size() != kFeatureElems) throw DomainError("feature tensor has the wrong shape");
    }
    if (s.label.data.size() != kLabelElems) throw DomainError("label grid has the wrong shape");
    ids.push_back(s.meta.trajectory);
  }
  info.split = split_trajectories(ids, split_seed);
  info.label_maxima = label_maxima(samples, info.split.train);

  fs::create_directories(dir);
  const fs::path root(dir);
  std::vector<float> feats, labels;
  labels.reserve(samples.size() * kLabelElems);
  for (const auto& s : samples) {
    labels.insert(labels.end(), s.label.data.begin(), s.label.data.end());
    if (has_features) feats.insert(feats.end(), s.features->data.begin(), s.features->data.end());
  }
  detail::write_f32(root / "labels.f32", labels);
  if (has_features) detail::write_f32(root / "features.f32", feats);

  nlohmann::ordered_json m;
  m["format"] = "tacsim-dataset";
  m["version"] = kDatasetVersion;
  m["feature_kind"] = info.feature_kind;
  m["sample_count"] = samples.size();
  m["dtype"] = "float32-le";
  m["complete"] = complete;
  m["config_hash"] = config_hash;
  auto& t = m["tensors"];
  if (has_features) {
    t["features"]["file"] = "features.f32";
    t["features"]["shape"] = {samples.size(), 2, kFeatureBins, kFeatureBins};
    t["features"]["normalization"] = info.feature_normalization;
  }
  t["labels"]["file"] = "labels.f32";
  t["labels"]["shape"] = {samples.size(), 3, kLabelBins, kLabelBins};
  t["labels"]["channels"] = {"x", "y", "z"};
  t["labels"]["units"] = "N";
  m["label_maxima"] = info.label_maxima;
  m["split"]["seed"] = split_seed;
  m["split"]["validation_fraction"] = kValidationFraction;
  m["split"]["train"] = info.split.train;
  m["split"]["validation"] = info.split.validation;
  auto arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& meta = samples[i].meta;
    arr.push_back({{"id", i}, {"trajectory", meta.trajectory}, {"step", meta.step}, {"indenter", meta.indenter}, {"seed", meta.seed}});
  }
  m["samples"] = arr;
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write manifest in " + dir);
  out << m.dump(2) << "\n";
  return info;
}

inline Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json", std::ios::binary);
  if (!in) throw IntegrityError("missing manifest " + (root / "manifest.json").string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("manifest parse failure: ") + ex.what());
  }
  Dataset ds;
  try {
    if (m.at("format").get<std::string>() != "tacsim-dataset") throw IntegrityError("not a tacsim dataset: " + dir);
    if (m.at("version").get<int>() != kDatasetVersion) {
      throw IntegrityError("dataset version " + std::to_string(m.at("version").get<int>()) + " is not supported");
    }
    if (m.at("dtype").get<std::string>() != "float32-le") throw IntegrityError("unsupported dtype");
    const auto n = m.at("sample_count").get<std::size_t>();
    auto& info = ds.info;
    info.feature_kind = m.at("feature_kind").get<std::string>();
    info.complete = m.at("complete").get<bool>();
    info.config_hash = m.at("config_hash").get<std::string>();
    info.split.seed = m.at("split").at("seed").get<std::uint64_t>();
    info.split.train = m.at("split").at("train").get<std::vector<std::uint64_t>>();
    info.split.validation = m.at("split").at("validation").get<std::vector<std::uint64_t>>();
    info.label_maxima = m.at("label_maxima").get<std::array<double, 3>>();
    const auto& meta = m.at("samples");
    if (meta.size() != n) throw IntegrityError("manifest lists " + std::to_string(meta.size()) + " samples, expected " + std::to_string(n));
    const bool has_features = info.feature_kind != "none";
    std::optional<FeatureKind> kind;
    if (has_features) {
      kind = feature_kind_from_string(info.feature_kind);
      info.feature_normalization = m.at("tensors").at("features").at("normalization").get<double>();
    }
    const auto labels = detail::read_f32(root / m.at("tensors").at("labels").at("file").get<std::string>(), n * kLabelElems);
    std::vector<float> feats;
    if (has_features) feats = detail::read_f32(root / m.at("tensors").at("features").at("file").get<std::string>(), n * kFeatureElems);
    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = ds.samples[i];
      s.label.data.assign(labels.begin() + static_cast<std::ptrdiff_t>(i * kLabelElems),
                          labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * kLabelElems));
      if (has_features) {
        FeatureTensor f;
        f.kind = *kind;
        f.normalization = info.feature_normalization;
        f.data.assign(feats.begin() + static_cast<std::ptrdiff_t>(i * kFeatureElems),
                      feats.begin() + static_cast<std::ptrdiff_t>((i + 1) * kFeatureElems));
        s.features = std::move(f);
      }
      const auto& e = meta.at(i);
      s.meta.trajectory = e.at("trajectory").get<std::uint64_t>();
      s.meta.step = e.at("step").get<int>();
      s.meta.indenter = e.at("indenter").get<std::string>();
      s.meta.seed = e.at("seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IntegrityError(std::string("manifest field error: ") + ex.what());
  }
  const std::set<std::uint64_t> val(ds.info.split.validation.begin(), ds.info.split.validation.end());
  for (auto id : ds.info.split.train)
    if (val.count(id)) throw IntegrityError("trajectory " + std::to_string(id) + " is in both splits");
  const auto mx = label_maxima(ds.samples, ds.info.split.train);
  if (mx != ds.info.label_maxima) throw IntegrityError("manifest label maxima do not match the label tensor");
  return ds;
}

enum class FlipAxis { Horizontal, Vertical };

// Mirrors features and label; flow features and labels also negate the
// component along the flip axis.
inline Sample augment_flip(const Sample& s, FlipAxis axis) {
  const bool h = axis == FlipAxis::Horizontal;
  Sample out = s;
  out.label = flip_grid(s.label, h);
  if (s.features) {
    const auto& f = *s.features;
    auto& g = *out.features;
    const int neg = f.kind == FeatureKind::OpticalFlow ? (h ? 0 : 1) : -1;
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < f.bins; ++r)
        for (int k = 0; k < f.bins; ++k) {
          const float v = h ? f.at(c, r, f.bins - 1 - k) : f.at(c, f.bins - 1 - r, k);
          g.at(c, r, k) = c == neg ? -v : v;
        }
  }
  return out;
}

struct PhotometricOptions {
  double brightness_min = 0.8;
  double brightness_max = 1.2;
  double noise_max = 0.01;  // upper bound of the salt-and-pepper cell fraction
};

// Brightness scaling (clamped to [0, 1]) followed by salt-and-pepper noise:
// each cell is independently set to 0 or 1 with probability `noise_fraction`.
inline Sample apply_photometric(const Sample& s, double brightness, double noise_fraction, std::uint64_t seed) {
  if (!s.features || s.features->kind != FeatureKind::Raw) throw DomainError("photometric augmentation requires raw features");
  Sample out = s;
  Rng rng(derive_seed(seed, 0x5a17));
  for (auto& v : out.features->data) {
    v = static_cast<float>(std::clamp(static_cast<double>(v) * brightness, 0.0, 1.0));
    if (noise_fraction > 0 && rng.bernoulli(noise_fraction)) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  }
  return out;
}

inline Sample augment_photometric(const Sample& s, std::uint64_t seed, const PhotometricOptions& opt = {}) {
  Rng rng(seed);
  const double brightness = rng.uniform(opt.brightness_min, opt.brightness_max);
  const double fraction = rng.uniform(0.0, opt.noise_max);
  return apply_photometric(s, brightness, fraction, rng.next());
}

}  // namespace tacsim
