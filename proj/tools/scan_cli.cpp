#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "scan/check/suites.hpp"
#include "scan/config.hpp"
#include "scan/io.hpp"
#include "scan/metrics.hpp"
#include "scan/pipeline.hpp"
#include "scan/synth.hpp"

namespace fs = std::filesystem;
using namespace scan;

namespace {

std::vector<fs::path> frames_in(const fs::path& dir, const char* ext) {
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig config_from(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

int cmd_synth(const std::string& spec_path, const fs::path& out_dir, int frames) {
  SceneSpec spec = load_scene_spec(spec_path);
  fs::create_directories(out_dir);
  for (int f = 0; f < frames; ++f) {
    SceneSpec s = spec;
    s.seed = spec.seed + static_cast<std::uint64_t>(f);
    const Scene scene = synth_scene(s);
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06d", f);
    write_point_bin(out_dir / (std::string(stem) + ".bin"), scene.points);
    write_labels(out_dir / (std::string(stem) + ".label"), scene.labels);
    std::cout << stem << ": " << scene.points.size() << " points, " << s.instances.size() << " instances\n";
  }
  return 0;
}

int cmd_weights(const std::string& config, std::uint64_t seed, const fs::path& out) {
  const RunConfig cfg = config_from(config);
  const ModelWeights w = init_weights(cfg.pipeline, seed);
  write_weights(out, w);
  std::cout << "wrote " << w.size() << " tensors to " << out.string() << "\n";
  return 0;
}

int cmd_infer(const std::string& config, const std::string& weights_path, std::optional<std::uint64_t> seed,
              const fs::path& in, const fs::path& out, bool oracle) {
  const RunConfig cfg = config_from(config);
  std::optional<NetworkWeights> w;
  if (!oracle) {
    if (weights_path.empty() == !seed.has_value()) throw ConfigError("give exactly one of --weights and --seed");
    const ModelWeights raw = seed ? init_weights(cfg.pipeline, *seed) : read_weights(weights_path);
    w = NetworkWeights::from(raw, cfg.pipeline);
  }
  fs::create_directories(out);
  const auto frames = frames_in(in, ".bin");
  std::vector<std::string> errors(frames.size());
  const auto n = static_cast<std::int64_t>(frames.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t f = 0; f < n; ++f) {
    try {
      const PointCloud p = read_point_bin(frames[f]);
      PanopticPrediction pred;
      if (oracle) {
        const auto gt = read_labels(fs::path(frames[f]).replace_extension(".label"), p.size());
        pred = run_pipeline_oracle(p, gt, cfg.pipeline);
      } else {
        pred = run_pipeline(p, *w, cfg.pipeline);
      }
      write_labels(out / frames[f].filename().replace_extension(".label"), pred.labels());
    } catch (const std::exception& e) {
      errors[f] = frames[f].string() + ": " + e.what();
    }
  }
  int failed = 0;
  for (const auto& e : errors) {
    if (e.empty()) continue;
    std::cerr << e << "\n";
    ++failed;
  }
  std::cout << frames.size() - failed << " of " << frames.size() << " frames written to " << out.string() << "\n";
  return failed ? 1 : 0;
}

int cmd_eval(const fs::path& gt_dir, const fs::path& pred_dir, const std::string& classes, const std::string& csv,
             std::size_t min_points) {
  const ClassSpec spec = load_class_file(classes);
  const auto gts = frames_in(gt_dir, ".label");
  if (gts.empty()) throw ConfigError("no .label files in " + gt_dir.string());
  std::vector<PanopticStats> per(gts.size(), PanopticStats(spec.n_classes()));
  std::vector<std::string> errors(gts.size());
  const auto n = static_cast<std::int64_t>(gts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t f = 0; f < n; ++f) {
    try {
      const auto gt = read_labels(gts[f]);
      const auto pred = read_labels(pred_dir / gts[f].filename(), gt.size());
      per[f] = accumulate_frame(pred, gt, spec, min_points);
    } catch (const std::exception& e) {
      errors[f] = gts[f].string() + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) {
      std::cerr << e << "\n";
      return 1;
    }
  }
  PanopticStats total(spec.n_classes());
  for (const auto& s : per) total.merge(s);
  const PanopticReport r = finalize(total, spec);
  std::cout << gts.size() << " frames\n" << format_report(r, spec);
  const fs::path csv_path = csv.empty() ? pred_dir / "metrics.csv" : fs::path(csv);
  std::ofstream os(csv_path);
  if (!os) throw ConfigError("cannot write " + csv_path.string());
  os << format_report_csv(r, spec);
  std::cout << "csv: " << csv_path.string() << "\n";
  return 0;
}

int cmd_check(bool all) {
  std::vector<suites::Criterion> selected;
  for (const auto& c : suites::acceptance_criteria()) {
    if (all || c.quick) selected.push_back(c);
  }
  const int failures = suites::run_criteria(selected, std::cout);
  std::cout << selected.size() - failures << " of " << selected.size() << " passed\n";
  return failures ? 1 : 0;
}

int cmd_bench(std::size_t points, std::uint64_t seed, const std::string& config, int repeat) {
  const RunConfig cfg = config_from(config);
  const NetworkWeights w = NetworkWeights::from(init_weights(cfg.pipeline, seed), cfg.pipeline);
  const Scene scene = synth_bench_scene(points, seed);
  const BlockSupports sup = block_supports(scene.points, cfg.pipeline);
  std::cout << points << " points, " << omp_get_max_threads() << " thread(s); voxels per block";
  for (const auto& c : sup.coords) std::cout << " " << c.size();
  std::cout << "\n";
  for (int r = 0; r < repeat; ++r) {
    std::vector<StageTiming> t;
    const auto t0 = std::chrono::steady_clock::now();
    const auto pred = run_pipeline(scene.points, w, cfg.pipeline, &t);
    const double total = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::printf("run %d\n", r + 1);
    for (const auto& s : t) std::printf("  %-16s %10.2f ms\n", s.stage.c_str(), s.ms);
    std::printf("  %-16s %10.2f ms  (%zu centroids)\n", "total", total, pred.centroids.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse cross-scale attention panoptic segmentation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");

  auto* synth = app.add_subcommand("synth", "generate synthetic .bin/.label frames");
  std::string spec_path, out_dir;
  int frames = 1;
  synth->add_option("--spec", spec_path, "scene spec file")->required();
  synth->add_option("--out-dir", out_dir, "output directory")->required();
  synth->add_option("--frames", frames, "frames to emit, seeds spec.seed + k")->check(CLI::PositiveNumber);

  auto* weights = app.add_subcommand("weights", "write seeded initial weights");
  std::string config, weights_out;
  std::uint64_t seed = 0;
  weights->add_option("--config", config, "config file");
  weights->add_option("--seed", seed, "weight seed")->required();
  weights->add_option("--out", weights_out, "weight file")->required();

  auto* infer = app.add_subcommand("infer", "run the pipeline over a directory of .bin frames");
  std::string weights_path, in_dir, pred_dir;
  std::optional<std::uint64_t> weight_seed;
  bool oracle = false;
  infer->add_option("--config", config, "config file");
  infer->add_option("--weights", weights_path, "weight file");
  infer->add_option("--seed", weight_seed, "use seeded initial weights instead of a file");
  infer->add_option("--in", in_dir, "input directory")->required();
  infer->add_option("--out", pred_dir, "output directory")->required();
  infer->add_flag("--oracle", oracle, "decode from ground-truth heads (reads .label next to each .bin)");

  auto* eval = app.add_subcommand("eval", "panoptic and semantic metrics");
  std::string gt_dir, classes, csv;
  std::size_t min_points = 0;
  eval->add_option("--gt", gt_dir, "ground-truth .label directory")->required();
  eval->add_option("--pred", pred_dir, "predicted .label directory")->required();
  eval->add_option("--classes", classes, "class file")->required();
  eval->add_option("--csv", csv, "CSV output (default <pred>/metrics.csv)");
  eval->add_option("--min-points", min_points, "drop segments with fewer points");

  auto* check = app.add_subcommand("check", "oracle and gradient suites");
  bool all = false;
  check->add_flag("--all", all, "also run the determinism and timing criteria");

  auto* bench = app.add_subcommand("bench", "per-stage timing on a synthetic cloud");
  std::size_t points = 100000;
  int repeat = 1;
  bench->add_option("--points", points, "cloud size")->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed, "scene and weight seed");
  bench->add_option("--config", config, "config file");
  bench->add_option("--repeat", repeat, "runs")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);
  try {
    if (*synth) return cmd_synth(spec_path, out_dir, frames);
    if (*weights) return cmd_weights(config, seed, weights_out);
    if (*infer) return cmd_infer(config, weights_path, weight_seed, in_dir, pred_dir, oracle);
    if (*eval) return cmd_eval(gt_dir, pred_dir, classes, csv, min_points);
    if (*check) return cmd_check(all);
    if (*bench) return cmd_bench(points, seed, config, repeat);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
