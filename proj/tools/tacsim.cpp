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
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tacsim/dataset.hpp"
#include "tacsim/features.hpp"
#include "tacsim/labels.hpp"
#include "tacsim/pipeline.hpp"
#include "tacsim/png_io.hpp"
#include "tacsim/remap.hpp"

namespace fs = std::filesystem;
using namespace tacsim;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

struct Globals {
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string feature_kind;
};

PipelineConfig resolve_config(const std::string& path, const Globals& g) {
  PipelineConfig cfg;
  if (!path.empty()) {
    require_file(path, "config");
    cfg = load_config(path);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.feature_kind.empty()) cfg.feature_kind = g.feature_kind;
  return cfg;
}

CameraRig rig_from(const Calibration& cal, double tz) {
  CameraRig rig;
  rig.pinhole = PinholeCamera::centered(tz);
  rig.fisheye = cal.camera;
  return rig;
}

// Blue-white-red for signed values in [-1, 1].
std::array<std::uint8_t, 3> diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  const auto lerp = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
  if (t < 0) return {lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t)};
  return {lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t)};
}

// White to dark for magnitudes in [0, 1].
std::array<std::uint8_t, 3> sequential(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const auto lerp = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
  return {lerp(255, 8, t), lerp(255, 48, t), lerp(255, 107, t)};
}

void write_heatmap(const std::string& path, const std::vector<const ForceGrid*>& grids, int channel, double scale) {
  constexpr int kCell = 12, kGap = 12;
  const int panels = static_cast<int>(grids.size());
  const int w = panels * kLabelBins * kCell + (panels - 1) * kGap;
  const int h = kLabelBins * kCell;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 255);
  for (int p = 0; p < panels; ++p) {
    for (int r = 0; r < kLabelBins; ++r)
      for (int c = 0; c < kLabelBins; ++c) {
        const double v = grids[static_cast<std::size_t>(p)]->at(channel, r, c);
        const auto col = channel == 2 ? sequential(scale > 0 ? -v / scale : 0) : diverging(scale > 0 ? v / scale : 0);
        for (int y = 0; y < kCell; ++y)
          for (int x = 0; x < kCell; ++x) {
            // Row 0 is gel y = 0; draw it at the bottom like a plot axis.
            const int py = (kLabelBins - 1 - r) * kCell + y;
            const int px = p * (kLabelBins * kCell + kGap) + c * kCell + x;
            const std::size_t k = (static_cast<std::size_t>(py) * w + px) * 3;
            rgb[k] = col[0];
            rgb[k + 1] = col[1];
            rgb[k + 2] = col[2];
          }
      }
  }
  write_png_rgb(path, w, h, rgb);
}

using SampleKey = std::pair<std::uint64_t, int>;

std::map<SampleKey, const Sample*> index_samples(const Dataset& ds) {
  std::map<SampleKey, const Sample*> m;
  for (const auto& s : ds.samples) m[{s.meta.trajectory, s.meta.step}] = &s;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tacsim: tactile sensor simulation and dataset toolchain"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Base seed (overrides the config)");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::Range(1, 1024));
  app.add_option("--feature-kind", g.feature_kind, "Feature variant")->check(CLI::IsMember({"flow", "raw"}));

  auto* config = app.add_subcommand("config", "Configuration utilities");
  config->require_subcommand(1);
  auto* config_init = config->add_subcommand("init", "Print the default configuration");
  std::string init_out;
  config_init->add_option("-o,--out", init_out, "Write to this file instead of stdout");

  auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset");
  std::string sim_config, sim_out;
  std::optional<int> sim_traj, sim_steps;
  bool sim_images = false;
  sim->add_option("-c,--config", sim_config, "Config file (defaults when omitted)");
  sim->add_option("-o,--out", sim_out, "Dataset directory (overrides the config)");
  sim->add_option("--trajectories", sim_traj, "Trajectory count (overrides the config)");
  sim->add_option("--steps", sim_steps, "Steps per trajectory (overrides the config)");
  sim->add_flag("--save-images", sim_images, "Also write rest/deformed PNGs");

  auto* feat = app.add_subcommand("featurize", "Compute the feature tensor of an image pair");
  std::string feat_rest, feat_def, feat_out;
  feat->add_option("--rest", feat_rest, "Rest image PNG")->required();
  feat->add_option("--deformed", feat_def, "Deformed image PNG")->required();
  feat->add_option("-o,--out", feat_out, "Output .f32 tensor (2x88x88)")->required();

  auto* rmp = app.add_subcommand("remap", "Remap a real-camera image to the pinhole frame");
  std::string rmp_image, rmp_cal, rmp_out, rmp_rest;
  double rmp_tz = 15.0;
  bool rmp_refine = false;
  rmp->add_option("--image", rmp_image, "Real-camera image PNG")->required();
  rmp->add_option("--calibration", rmp_cal, "Calibration file")->required();
  rmp->add_option("-o,--out", rmp_out, "Output PNG")->required();
  rmp->add_option("--pinhole-tz", rmp_tz, "Pinhole camera distance (mm)");
  rmp->add_flag("--refine", rmp_refine, "Refine the camera translation first");
  rmp->add_option("--rest", rmp_rest, "Rest image used for refinement (default: --image)");

  auto* ref = app.add_subcommand("calibrate-refine", "Refine the real camera translation from a rest image");
  std::string ref_image, ref_cal, ref_out;
  double ref_tz = 15.0, ref_range = 0.5, ref_step = 0.05;
  ref->add_option("--image", ref_image, "Rest image PNG")->required();
  ref->add_option("--calibration", ref_cal, "Calibration file")->required();
  ref->add_option("-o,--out", ref_out, "Write the refined calibration here");
  ref->add_option("--pinhole-tz", ref_tz, "Pinhole camera distance (mm)");
  ref->add_option("--range", ref_range, "Search half-range per axis (mm)");
  ref->add_option("--step", ref_step, "Search step (mm)");

  auto* ev = app.add_subcommand("eval", "Compare a prediction dataset with ground truth");
  std::string ev_pred, ev_truth, ev_out;
  ev->add_option("--pred", ev_pred, "Prediction dataset directory")->required();
  ev->add_option("--truth", ev_truth, "Ground-truth dataset directory")->required();
  ev->add_option("-o,--out", ev_out, "Metrics JSON output");

  auto* plot = app.add_subcommand("plot", "Render force-distribution heatmaps");
  std::string plot_ds, plot_pred, plot_out;
  std::size_t plot_sample = 0;
  plot->add_option("--dataset", plot_ds, "Ground-truth dataset directory")->required();
  plot->add_option("--pred", plot_pred, "Optional prediction dataset shown alongside");
  plot->add_option("--sample", plot_sample, "Sample index");
  plot->add_option("-o,--out", plot_out, "Output prefix (writes <prefix>_{x,y,z}.png)")->required();

  auto* bench = app.add_subcommand("bench", "Time remap + raw-feature extraction per frame");
  std::string bench_ds, bench_cal;
  int bench_iters = 1000;
  double bench_tz = 15.0;
  bench->add_option("--dataset", bench_ds, "Dataset directory with saved images")->required();
  bench->add_option("--calibration", bench_cal, "Calibration file (identity-equivalent camera when omitted)");
  bench->add_option("--iterations", bench_iters, "Timed frames")->check(CLI::Range(1, 10000000));
  bench->add_option("--pinhole-tz", bench_tz, "Pinhole camera distance (mm)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (config_init->parsed()) {
      PipelineConfig cfg;
      if (g.seed) cfg.seed = *g.seed;
      if (!g.feature_kind.empty()) cfg.feature_kind = g.feature_kind;
      const std::string text = cfg.to_json().dump(2) + "\n";
      if (init_out.empty()) std::cout << text;
      else std::ofstream(init_out) << text;
      return 0;
    }

    if (sim->parsed()) {
      PipelineConfig cfg = resolve_config(sim_config, g);
      if (!sim_out.empty()) cfg.dataset_path = sim_out;
      if (sim_traj) cfg.trajectories = *sim_traj;
      if (sim_steps) cfg.steps = *sim_steps;
      if (sim_images) cfg.save_images = true;
      cfg.validate();
      std::cout << "simulate: " << cfg.trajectories << " trajectories x " << cfg.steps << " steps, features "
                << cfg.feature_kind << ", seed " << cfg.seed << ", config " << cfg.hash() << "\n";
      const auto sum = simulate(cfg, g.workers, [](int done, int total) {
        std::cout << "  trajectory " << done << "/" << total << "\n" << std::flush;
      });
      std::cout << "samples: " << sum.samples << "\n";
      const char* names[3] = {"Fx", "Fy", "Fz"};
      for (int c = 0; c < 3; ++c) {
        std::cout << names[c] << " range: [" << sum.force_ranges[c][0] << ", " << sum.force_ranges[c][1] << "] N\n";
      }
      std::cout << "dataset: " << cfg.dataset_path << "\n";
      return 0;
    }

    if (feat->parsed()) {
      require_file(feat_rest, "rest image");
      require_file(feat_def, "deformed image");
      const auto rest = read_png_gray(feat_rest);
      const auto def = read_png_gray(feat_def);
      const auto kind = feature_kind_from_string(g.feature_kind.empty() ? "raw" : g.feature_kind);
      FeatureTensor t;
      bool low_conf = false;
      if (kind == FeatureKind::OpticalFlow) {
        const auto flow = dense_flow(rest, def);
        low_conf = flow.low_confidence;
        t = pool_flow(flow);
      } else {
        t = raw_features(rest, def);
      }
      std::ofstream out(feat_out, std::ios::binary);
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
      const auto [lo, hi] = std::minmax_element(t.data.begin(), t.data.end());
      std::cout << "features: " << to_string(kind) << " 2x88x88, min " << *lo << ", max " << *hi
                << (low_conf ? ", low confidence" : "") << "\n";
      return 0;
    }

    if (rmp->parsed()) {
      require_file(rmp_image, "image");
      require_file(rmp_cal, "calibration");
      const auto cal = load_calibration(rmp_cal);
      CameraRig rig = rig_from(cal, rmp_tz);
      const auto img = read_png_gray(rmp_image);
      if (img.width() != rig.fisheye.width || img.height() != rig.fisheye.height) {
        throw DomainError("image size does not match the calibrated camera resolution");
      }
      if (rmp_refine) {
        const std::string rest_path = rmp_rest.empty() ? rmp_image : rmp_rest;
        require_file(rest_path, "rest image");
        RefineOptions opt;
        opt.workers = g.workers;
        const auto r = refine_translation(read_png_gray(rest_path), rig, opt);
        rig.fisheye.translation_gc = r.translation_gc;
        std::cout << "refined offset: " << r.offset.transpose() << " mm (IoU " << r.iou << ")\n";
      }
      write_png(rmp_out, remap_image(img, build_remap_table(rig)));
      std::cout << "translation_gc: " << rig.fisheye.translation_gc.transpose() << "\nwrote " << rmp_out << "\n";
      return 0;
    }

    if (ref->parsed()) {
      require_file(ref_image, "image");
      require_file(ref_cal, "calibration");
      auto cal = load_calibration(ref_cal);
      const CameraRig rig = rig_from(cal, ref_tz);
      RefineOptions opt;
      opt.half_range = ref_range;
      opt.step = ref_step;
      opt.workers = g.workers;
      const auto r = refine_translation(read_png_gray(ref_image), rig, opt);
      std::cout << "candidates: " << r.candidates << "\noffset: " << r.offset.transpose() << " mm\nIoU: " << r.iou
                << "\ntranslation_gc: " << r.translation_gc.transpose() << "\n";
      if (!ref_out.empty()) {
        cal.camera.translation_gc = r.translation_gc;
        cal.self_test = make_self_test(cal.camera);
        save_calibration(ref_out, cal);
        std::cout << "wrote " << ref_out << "\n";
      }
      return 0;
    }

    if (ev->parsed()) {
      const auto pred = read_dataset(ev_pred);
      const auto truth = read_dataset(ev_truth);
      const auto pm = index_samples(pred);
      std::vector<ForceGrid> p, t;
      std::vector<std::string> missing;
      for (const auto& s : truth.samples) {
        auto it = pm.find({s.meta.trajectory, s.meta.step});
        if (it == pm.end()) {
          missing.push_back(std::to_string(s.meta.trajectory) + ":" + std::to_string(s.meta.step));
          continue;
        }
        p.push_back(it->second->label);
        t.push_back(s.label);
      }
      if (!missing.empty() || pred.samples.size() != truth.samples.size()) {
        std::string msg = "datasets are misaligned; prediction is missing trajectory:step ids";
        for (const auto& m : missing) msg += " " + m;
        if (missing.empty()) msg = "datasets are misaligned: prediction has extra samples";
        throw DomainError(msg);
      }
      const auto rep = evaluate(p, t);
      std::cout << rep.to_text();
      if (!ev_out.empty()) {
        auto j = rep.to_json();
        j["truth_config_hash"] = truth.info.config_hash;
        std::ofstream(ev_out) << j.dump(2) << "\n";
      }
      return 0;
    }

    if (plot->parsed()) {
      const auto ds = read_dataset(plot_ds);
      if (plot_sample >= ds.samples.size()) throw DomainError("sample index out of range");
      const Sample& s = ds.samples[plot_sample];
      std::vector<const ForceGrid*> grids{&s.label};
      std::optional<Dataset> pred;
      if (!plot_pred.empty()) {
        pred = read_dataset(plot_pred);
        const auto pm = index_samples(*pred);
        auto it = pm.find({s.meta.trajectory, s.meta.step});
        if (it == pm.end()) throw DomainError("prediction has no sample for this trajectory/step");
        grids.push_back(&it->second->label);
      }
      const char* names[3] = {"x", "y", "z"};
      for (int c = 0; c < 3; ++c) {
        double scale = 0;
        for (const auto* gr : grids)
          for (int r = 0; r < kLabelBins; ++r)
            for (int k = 0; k < kLabelBins; ++k) scale = std::max(scale, static_cast<double>(std::abs(gr->at(c, r, k))));
        const std::string path = plot_out + "_" + names[c] + ".png";
        write_heatmap(path, grids, c, scale);
        std::cout << "wrote " << path << " (scale " << scale << " N)\n";
      }
      return 0;
    }

    if (bench->parsed()) {
      const auto ds = read_dataset(bench_ds);
      std::vector<std::pair<GrayImage, GrayImage>> frames;
      for (const auto& s : ds.samples) {
        const fs::path dir = fs::path(bench_ds) / "images";
        const auto rest = dir / image_name(s.meta.trajectory, s.meta.step, "rest");
        const auto def = dir / image_name(s.meta.trajectory, s.meta.step, "deformed");
        if (fs::exists(rest) && fs::exists(def)) frames.emplace_back(read_png_gray(rest.string()), read_png_gray(def.string()));
        if (frames.size() >= 64) break;
      }
      if (frames.empty()) throw DomainError("dataset has no saved image frames (simulate with --save-images)");
      CameraRig rig;
      rig.pinhole = PinholeCamera::centered(bench_tz);
      if (!bench_cal.empty()) {
        require_file(bench_cal, "calibration");
        rig.fisheye = load_calibration(bench_cal).camera;
      } else {
        rig.fisheye = fisheye_matching_pinhole(rig.pinhole);
      }
      const RemapTable table = build_remap_table(rig);
      std::vector<GrayImage> rests;
      for (const auto& f : frames) rests.push_back(remap_image(f.first, table));
      std::vector<double> ms;
      ms.reserve(static_cast<std::size_t>(bench_iters));
      double sink = 0;
      for (int i = 0; i < bench_iters; ++i) {
        const auto k = static_cast<std::size_t>(i) % frames.size();
        const auto t0 = std::chrono::steady_clock::now();
        const auto t = raw_features(rests[k], remap_image(frames[k].second, table));
        const auto t1 = std::chrono::steady_clock::now();
        sink += t.data[static_cast<std::size_t>(i) % t.data.size()];
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      std::sort(ms.begin(), ms.end());
      const double median = ms[ms.size() / 2];
      const double p95 = ms[std::min(ms.size() - 1, static_cast<std::size_t>(std::ceil(0.95 * ms.size())) - 1)];
      std::cout << "frames: " << frames.size() << " (440x440), iterations: " << ms.size() << "\n"
                << "median: " << median << " ms/frame\np95: " << p95 << " ms/frame\nthroughput: " << 1000.0 / median
                << " Hz (median)\ntarget median <= 8 ms: " << (median <= 8.0 ? "met" : "not met") << "\n";
      if (sink < -1) std::cout << "";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CalibrationInvalid& e) {
    std::cerr << "calibration invalid: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
