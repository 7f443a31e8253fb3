#include "scan/check/suites.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "scan/attention.hpp"
#include "scan/check/oracles.hpp"
#include "scan/io.hpp"
#include "scan/losses.hpp"
#include "scan/metrics.hpp"
#include "scan/pipeline.hpp"
#include "scan/synth.hpp"

namespace scan::suites {

namespace {

constexpr std::uint64_t kSeed = 20240611;

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1 ---------------------------------------------------------------------

Outcome dense_oracles() {
  constexpr int kInstances = 200;
  constexpr double kConvTol = 1e-5;
  constexpr double kBudgetSeconds = 30.0;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(kSeed);
  std::uniform_int_distribution<int> origin(-20, 0);
  std::uniform_int_distribution<int> count(1, 300);
  std::uniform_int_distribution<int> factor(1, 4);
  std::uniform_int_distribution<int> chans(1, 6);
  std::uniform_int_distribution<int> level(0, 8);
  int bad_align = 0, bad_bev = 0, bad_peaks = 0, bad_ssc = 0;
  double worst_conv = 0.0;
  for (int k = 0; k < kInstances; ++k) {
    const int lo = origin(rng);
    // Alternate sparse 32^3 grids with dense 8^3 ones so kernels see neighbours.
    const int hi = k % 2 ? lo + 31 : lo + 7;
    const auto t = oracle::random_tensor(rng, count(rng), chans(rng), lo, hi, {0.2, 0.2, 0.1});

    const Vec3 to{0.2 * factor(rng), 0.2 * factor(rng), 0.1 * factor(rng)};
    if (!(sparse_align(t, to) == oracle::dense_sparse_align(t, to))) ++bad_align;
    if (!(flatten_bev(t) == oracle::dense_flatten_bev(t))) ++bad_bev;

    auto flat = oracle::random_coords(rng, count(rng), lo, lo + 31, true);
    Matrix act(flat.size(), 1);
    for (double& v : act.data()) v = level(rng) / 8.0;  // coarse levels force ties
    const CentroidHeatmap hm(SparseTensor(std::move(flat), std::move(act), {0.8, 0.8, 0.4}));
    const int window = 1 + 2 * (k % 3);
    if (sparse_max_pool_peaks(hm, window) != oracle::dense_peaks(hm, window)) ++bad_peaks;

    const int ks = k % 7 == 0 ? 5 : (k % 11 == 0 ? 1 : 3);
    const auto w = oracle::random_ssc(rng, t.channels(), chans(rng), ks);
    const Activation a = k % 2 ? Activation::kRelu : Activation::kNone;
    const auto got = ssc_forward(t, w, a);
    const auto want = oracle::dense_ssc(t, w, a);
    const double err = max_abs_diff(got.feats(), want.feats());
    worst_conv = std::max(worst_conv, err);
    if (got.coords() != want.coords() || !(err <= kConvTol)) ++bad_ssc;
  }
  const double secs = seconds_since(t0);
  const bool pass = bad_align + bad_bev + bad_peaks + bad_ssc == 0 && secs < kBudgetSeconds;
  return {pass, std::to_string(kInstances) + " instances per op; mismatches align " + std::to_string(bad_align) +
                    ", bev " + std::to_string(bad_bev) + ", peaks " + std::to_string(bad_peaks) + ", ssc " +
                    std::to_string(bad_ssc) + "; max conv err " + num(worst_conv) + "; " + num(secs) + " s"};
}

// --- 2 ---------------------------------------------------------------------

Outcome rearrange_round_trip() {
  constexpr int kTensors = 100;
  std::mt19937_64 rng(kSeed + 2);
  std::uniform_int_distribution<int> count(0, 500);
  int failures = 0;
  for (int k = 0; k < kTensors; ++k) {
    const auto t = oracle::random_tensor(rng, count(rng), 1 + k % 5, -1000, 1000);
    const SparseTensor same = rearrange(t, hash_query(t.coords(), build_index(t.coords())));
    auto shuffled = t.coords();
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const SparseTensor moved = rearrange(t, hash_query(shuffled, build_index(t.coords())));
    const SparseTensor back = rearrange(moved, hash_query(t.coords(), build_index(moved.coords())));
    if (!(same == t) || !(back == t) || moved.coords() != shuffled) ++failures;
  }
  return {failures == 0, std::to_string(kTensors) + " tensors, " + std::to_string(failures) + " not bit-identical"};
}

// --- 3 ---------------------------------------------------------------------

Outcome gka_convergence() {
  constexpr int kInstances = 20;
  constexpr std::size_t kTokens = 64;
  constexpr std::size_t kDim = 16;
  constexpr double kQkSigma = 0.4;
  constexpr double kBound = 0.15;
  constexpr double kDegenerateTol = 1e-9;
  const std::size_t ms[] = {16, 64, 256};
  std::mt19937_64 rng(kSeed + 3);
  double mean[3] = {0, 0, 0};
  for (int k = 0; k < kInstances; ++k) {
    const Matrix q = oracle::random_matrix(rng, kTokens, kDim, kQkSigma);
    const Matrix key = oracle::random_matrix(rng, kTokens, kDim, kQkSigma);
    const Matrix v = oracle::random_matrix(rng, kTokens, kDim, 1.0);
    const Matrix exact = exact_attention(q, key, v);
    for (int j = 0; j < 3; ++j) {
      const Matrix approx = gka_attention(q, key, v, ms[j], derive_seed(kSeed, k, j));
      Matrix diff = approx;
      for (std::size_t i = 0; i < diff.data().size(); ++i) diff.data()[i] -= exact.data()[i];
      mean[j] += frobenius(diff) / frobenius(exact) / kInstances;
    }
  }
  // Degenerate cases: one key, and many copies of the same key.
  double worst = 0.0;
  for (int k = 0; k < kInstances; ++k) {
    const Matrix q = oracle::random_matrix(rng, kTokens, kDim, kQkSigma);
    const Matrix one = oracle::random_matrix(rng, 1, kDim, kQkSigma);
    const Matrix v1 = oracle::random_matrix(rng, 1, kDim, 1.0);
    worst = std::max(worst, max_abs_diff(gka_attention(q, one, v1, 64, k), exact_attention(q, one, v1)));
    Matrix same(kTokens, kDim);
    for (std::size_t r = 0; r < kTokens; ++r) std::copy(one.row(0).begin(), one.row(0).end(), same.row(r).begin());
    const Matrix v = oracle::random_matrix(rng, kTokens, kDim, 1.0);
    worst = std::max(worst, max_abs_diff(gka_attention(q, same, v, 64, k), exact_attention(q, same, v)));
  }
  const bool monotone = mean[0] > mean[1] && mean[1] > mean[2];
  const bool pass = monotone && mean[2] <= kBound && worst <= kDegenerateTol;
  return {pass, "mean rel err m=16 " + num(mean[0]) + ", m=64 " + num(mean[1]) + ", m=256 " + num(mean[2]) +
                    " (bound " + num(kBound) + "); degenerate max err " + num(worst)};
}

// --- 4 ---------------------------------------------------------------------

double grad_error(const Matrix& analytic, const Matrix& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.data().size(); ++i) {
    worst = std::max(worst, std::abs(analytic.data()[i] - numeric.data()[i]));
  }
  return worst;
}

// Rows whose sorted Lovasz errors sit closer than `gap` make the loss kink
// under a finite difference; redraw such inputs.
bool lovasz_well_separated(const Matrix& logits, const std::vector<std::uint16_t>& labels, double gap) {
  const Matrix p = softmax_rows(logits);
  for (std::size_t c = 0; c < logits.cols(); ++c) {
    std::vector<double> e;
    for (std::size_t i = 0; i < labels.size(); ++i) e.push_back(std::abs((labels[i] == c ? 1.0 : 0.0) - p(i, c)));
    std::sort(e.begin(), e.end());
    for (std::size_t i = 1; i < e.size(); ++i) {
      if (e[i] - e[i - 1] < gap) return false;
    }
  }
  return true;
}

Outcome gradient_checks() {
  constexpr int kInstances = 50;
  constexpr double kStep = 1e-5;
  constexpr double kTol = 1e-4;
  constexpr double kLovaszTol = 1e-3;
  constexpr double kLovaszGap = 1e-3;
  constexpr double kBruteTol = 1e-12;
  std::mt19937_64 rng(kSeed + 4);
  std::uniform_int_distribution<int> rows(1, 12);
  std::uniform_int_distribution<int> cls(2, 6);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  double e_hm = 0, e_sem = 0, e_l1 = 0, e_lov = 0, e_brute = 0;
  for (int k = 0; k < kInstances; ++k) {
    {
      const std::size_t n = rows(rng);
      Matrix pred(n, 1), target(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        pred(i, 0) = unit(rng);
        target(i, 0) = i % 3 == 0 ? 1.0 : unit(rng);
      }
      auto f = [&](const Matrix& x) { return heatmap_focal_loss(x, target).loss; };
      e_hm = std::max(e_hm, grad_error(heatmap_focal_loss(pred, target).grad, oracle::numeric_gradient(f, pred, kStep)));
    }
    {
      const std::size_t n = rows(rng), c = cls(rng);
      const Matrix logits = oracle::random_matrix(rng, n, c, 1.5);
      std::vector<std::uint16_t> labels(n);
      std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
      for (auto& l : labels) l = static_cast<std::uint16_t>(lab(rng));
      auto f = [&](const Matrix& x) { return semantic_focal_loss(x, labels).loss; };
      e_sem = std::max(e_sem, grad_error(semantic_focal_loss(logits, labels).grad,
                                         oracle::numeric_gradient(f, logits, kStep)));
    }
    {
      const std::size_t n = rows(rng);
      Matrix pred = oracle::random_matrix(rng, n, 3), target = oracle::random_matrix(rng, n, 3);
      for (std::size_t i = 0; i < pred.data().size(); ++i) {
        if (std::abs(pred.data()[i] - target.data()[i]) < 1e-3) pred.data()[i] += 0.01;  // away from the kink
      }
      std::vector<char> mask(n);
      for (std::size_t i = 0; i < n; ++i) mask[i] = i % 4 != 3;
      auto f = [&](const Matrix& x) { return l1_loss(x, target, mask).loss; };
      e_l1 = std::max(e_l1, grad_error(l1_loss(pred, target, mask).grad, oracle::numeric_gradient(f, pred, kStep)));
    }
    {
      const std::size_t c = cls(rng);
      const std::size_t n = rows(rng) + 1;
      std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
      Matrix logits;
      std::vector<std::uint16_t> labels(n);
      do {
        logits = oracle::random_matrix(rng, n, c, 1.5);
        for (auto& l : labels) l = static_cast<std::uint16_t>(lab(rng));
      } while (!lovasz_well_separated(logits, labels, kLovaszGap));
      auto f = [&](const Matrix& x) { return lovasz_softmax_loss(x, labels, std::nullopt).loss; };
      const auto lg = lovasz_softmax_loss(logits, labels, std::nullopt);
      e_lov = std::max(e_lov, grad_error(lg.grad, oracle::numeric_gradient(f, logits, kStep)));
      e_brute = std::max(e_brute, std::abs(lg.loss - oracle::lovasz_softmax_bruteforce(logits, labels, std::nullopt)));
    }
  }
  const bool pass = e_hm <= kTol && e_sem <= kTol && e_l1 <= kTol && e_lov <= kLovaszTol && e_brute <= kBruteTol;
  return {pass, std::to_string(kInstances) + " each; max |analytic - numeric| heatmap focal " + num(e_hm) +
                    ", semantic focal " + num(e_sem) + ", L1 " + num(e_l1) + ", Lovasz " + num(e_lov) +
                    " (loss vs definition " + num(e_brute) + ")"};
}

// --- 5 ---------------------------------------------------------------------

Outcome soft_labels() {
  constexpr int kFrames = 100;
  constexpr double kRowTol = 1e-6;
  constexpr double kOracleTol = 1e-12;
  std::mt19937_64 rng(kSeed + 5);
  std::uniform_int_distribution<int> npts(1, 400);
  std::uniform_int_distribution<int> ncls(2, 20);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  std::uniform_real_distribution<double> sc(0.2, 1.5);
  double worst_row = 0.0, worst_oracle = 0.0;
  for (int k = 0; k < kFrames; ++k) {
    const std::size_t n = npts(rng), c = ncls(rng);
    Matrix m(n, 4);
    for (double& v : m.data()) v = coord(rng);
    const PointCloud p(std::move(m));
    PointLabels labels;
    std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
    for (std::size_t i = 0; i < n; ++i) {
      labels.semantic.push_back(static_cast<std::uint16_t>(lab(rng)));
      labels.instance.push_back(0);
    }
    const Range3 range{{-2.5, -2.5, -2.5}, {2.5, 2.5, 2.5}};  // some points cropped
    const Vec3 scale{sc(rng), sc(rng), sc(rng)};
    const Point2Voxel v = voxelize(p, scale, range);
    const Matrix got = soft_voxel_labels(labels, v.voxel, v.tensor.size(), c);
    const Matrix want = oracle::soft_labels_counting(labels, v.voxel, v.tensor.size(), c);
    for (std::size_t r = 0; r < got.rows(); ++r) {
      double s = 0.0;
      for (double x : got.row(r)) s += x;
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
    worst_oracle = std::max(worst_oracle, max_abs_diff(got, want));
  }
  return {worst_row <= kRowTol && worst_oracle <= kOracleTol,
          std::to_string(kFrames) + " frames; max |row sum - 1| " + num(worst_row) + ", max oracle diff " +
              num(worst_oracle)};
}

// --- 6 ---------------------------------------------------------------------

Outcome metric_cases() {
  constexpr double kTol = 1e-9;
  constexpr int kRandomScenes = 300;
  const ClassSpec spec = ClassSpec::semantic_kitti();
  std::vector<std::string> failed;

  // Perfect prediction.
  {
    PointLabels gt{{1, 1, 1, 2, 2, 9, 9, 0}, {1, 1, 1, 2, 2, 0, 0, 0}};
    const auto r = finalize(accumulate_frame(gt, gt, spec), spec);
    if (r.pq != 1.0 || r.sq != 1.0 || r.rq != 1.0 || r.miou != 1.0) failed.push_back("perfect");
  }
  // One gt instance split 50/50 into two predicted instances.
  {
    PointLabels gt{{1, 1, 1, 1}, {1, 1, 1, 1}};
    PointLabels pred{{1, 1, 1, 1}, {1, 1, 2, 2}};
    const auto s = accumulate_frame(pred, gt, spec);
    const auto r = finalize(s, spec);
    if (s.tp[1] != 0 || s.fp[1] != 2 || s.fn[1] != 1 || r.classes[1].pq != 0.0) failed.push_back("split");
  }
  // One exact match plus one false positive.
  {
    PointLabels gt{{1, 1, 9, 9}, {1, 1, 0, 0}};
    PointLabels pred{{1, 1, 1, 9}, {1, 1, 2, 0}};
    const auto r = finalize(accumulate_frame(pred, gt, spec), spec);
    if (std::abs(r.classes[1].pq - 2.0 / 3.0) > kTol || std::abs(r.classes[1].sq - 1.0) > kTol ||
        std::abs(r.classes[1].rq - 2.0 / 3.0) > kTol) {
      failed.push_back("tp+fp");
    }
  }
  // Random small scenes against exhaustive matching.
  std::mt19937_64 rng(kSeed + 6);
  int mismatches = 0;
  for (int k = 0; k < kRandomScenes; ++k) {
    std::uniform_int_distribution<int> npts(0, 60);
    std::uniform_int_distribution<int> cls(0, 11);  // things 1..8, stuff 9..11
    std::uniform_int_distribution<int> inst(0, 3);
    const std::size_t n = npts(rng);
    PointLabels gt, pred;
    for (std::size_t i = 0; i < n; ++i) {
      gt.semantic.push_back(static_cast<std::uint16_t>(cls(rng) % 4 == 0 ? 0 : cls(rng)));
      gt.instance.push_back(static_cast<std::uint16_t>(inst(rng)));
      // Predictions mostly follow the ground truth so that matches happen.
      const bool copy = (rng() % 4) != 0;
      pred.semantic.push_back(copy ? gt.semantic.back() : static_cast<std::uint16_t>(cls(rng)));
      pred.instance.push_back(copy && rng() % 3 ? gt.instance.back() : static_cast<std::uint16_t>(inst(rng)));
    }
    if (!(accumulate_frame(pred, gt, spec) == oracle::match_bruteforce(pred, gt, spec))) ++mismatches;
  }
  if (mismatches) failed.push_back(std::to_string(mismatches) + " random scenes");
  std::string detail = "hand cases perfect, 50/50 split, tp+fp; " + std::to_string(kRandomScenes) +
                       " random scenes vs exhaustive matching";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

// --- 7 ---------------------------------------------------------------------

Outcome oracle_decode() {
  constexpr int kScenes = 50;
  constexpr double kSeparation = 2.0;
  const PipelineConfig cfg;
  const ClassSpec spec = ClassSpec::from_things(cfg.n_classes, cfg.thing_classes);
  std::mt19937_64 rng(kSeed + 7);
  std::uniform_int_distribution<int> ninst(1, 12);
  int failures = 0;
  double worst_pq = 1.0, worst_miou = 1.0;
  for (int k = 0; k < kScenes; ++k) {
    const SceneSpec s = random_scene_spec(derive_seed(kSeed, 7, k), ninst(rng), kSeparation, cfg.thing_classes);
    const Scene scene = synth_scene(s);
    const PanopticPrediction pred = run_pipeline_oracle(scene.points, scene.labels, cfg);
    const auto r = finalize(accumulate_frame(pred.labels(), scene.labels, spec), spec);
    worst_pq = std::min(worst_pq, r.pq);
    worst_miou = std::min(worst_miou, r.miou);
    if (r.pq != 1.0 || r.miou != 1.0) ++failures;
  }
  return {failures == 0, std::to_string(kScenes) + " scenes, instances > " + num(kSeparation) + " m apart; min PQ " +
                             num(worst_pq) + ", min mIoU " + num(worst_miou)};
}

// --- 8 ---------------------------------------------------------------------

Outcome determinism() {
  constexpr int kFrames = 4;
  constexpr int kRuns = 3;
  PipelineConfig cfg;
  const NetworkWeights w = NetworkWeights::from(init_weights(cfg, kSeed), cfg);
  std::vector<Scene> frames;
  for (int f = 0; f < kFrames; ++f) frames.push_back(synth_bench_scene(4000, derive_seed(kSeed, 8, f)));
  using Bytes = std::vector<std::vector<std::uint8_t>>;
  auto serial = [&] {
    Bytes out;
    for (const auto& f : frames) out.push_back(serialize_labels(run_pipeline(f.points, w, cfg).labels()));
    return out;
  };
  auto parallel = [&] {
    Bytes out(frames.size());
#pragma omp parallel for schedule(dynamic)
    for (int f = 0; f < kFrames; ++f) out[f] = serialize_labels(run_pipeline(frames[f].points, w, cfg).labels());
    return out;
  };
  const Bytes reference = serial();
  int diffs = 0;
  for (int r = 1; r < kRuns; ++r) diffs += serial() != reference;
  diffs += parallel() != reference;
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  diffs += serial() != reference;
  omp_set_num_threads(threads);
  std::size_t points = 0;
  for (const auto& b : reference) points += b.size() / 4;
  return {diffs == 0, std::to_string(kRuns) + " serial runs, frame-parallel run and single-thread run over " +
                          std::to_string(kFrames) + " frames (" + std::to_string(points) + " points); " +
                          std::to_string(diffs) + " differing"};
}

// --- 9 ---------------------------------------------------------------------

Outcome grid_arithmetic() {
  const PipelineConfig cfg;
  const auto g = cfg.bev_grid();
  const auto s = cfg.bev_scale();
  return {g[0] == 120 && g[1] == 120,
          "BEV grid " + std::to_string(g[0]) + "x" + std::to_string(g[1]) + " at scale " + num(s[0]) + " m"};
}

// --- 10 --------------------------------------------------------------------

Outcome performance() {
  constexpr std::size_t kPoints = 100000;
  constexpr double kBudgetSeconds = 5.0;
  const PipelineConfig cfg;
  const NetworkWeights w = NetworkWeights::from(init_weights(cfg, kSeed), cfg);
  const Scene scene = synth_bench_scene(kPoints, kSeed);
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  std::vector<StageTiming> timings;
  const auto t0 = std::chrono::steady_clock::now();
  const auto pred = run_pipeline(scene.points, w, cfg, &timings);
  const double secs = seconds_since(t0);
  omp_set_num_threads(threads);
  std::string detail = std::to_string(kPoints) + " points, 1 thread: " + num(secs) + " s (budget " +
                       num(kBudgetSeconds) + " s);";
  for (const auto& t : timings) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s %.1f ms", t.stage.c_str(), t.ms);
    detail += buf;
  }
  return {secs < kBudgetSeconds && pred.semantic.size() == kPoints, detail};
}

// --- 11 --------------------------------------------------------------------

template <typename F>
FormatErrc error_of(F&& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.code();
  }
  return FormatErrc::kIo;  // sentinel: nothing thrown
}

Outcome format_round_trips() {
  constexpr int kPayloads = 100;
  std::mt19937_64 rng(kSeed + 11);
  int failures = 0;
  for (int k = 0; k < kPayloads; ++k) {
    const std::size_t n = rng() % 300;
    Matrix m(n, 4);
    for (double& v : m.data()) v = static_cast<float>(std::bit_cast<float>(static_cast<std::uint32_t>(rng())));
    for (double& v : m.data()) {
      if (!std::isfinite(v)) v = 0.0;
    }
    const PointCloud p(std::move(m));
    const auto pb = serialize_point_bin(p);
    if (!(parse_point_bin(pb) == p) || serialize_point_bin(parse_point_bin(pb)) != pb) ++failures;

    PointLabels l;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [s, in] = decode_label(static_cast<std::uint32_t>(rng()));
      l.semantic.push_back(s);
      l.instance.push_back(in);
    }
    const auto lb = serialize_labels(l);
    if (!(parse_labels(lb) == l) || lb.size() != 4 * n) ++failures;

    ModelWeights w;
    const std::size_t tensors = rng() % 6;
    for (std::size_t t = 0; t < tensors; ++t) {
      NamedTensor nt;
      const std::size_t rank = rng() % 4;
      for (std::size_t d = 0; d < rank; ++d) nt.dims.push_back(1 + rng() % 5);
      nt.values.resize(nt.numel());
      for (float& v : nt.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0xBF7FFFFFu);
      w.add("t" + std::to_string(t) + "." + std::to_string(rng() % 1000), std::move(nt));
    }
    const auto wb = serialize_weights(w);
    if (serialize_weights(parse_weights(wb)) != wb) ++failures;
  }

  // Malformed inputs.
  std::vector<std::string> wrong;
  ModelWeights w;
  w.add("a", {{2}, {1.0f, 2.0f}});
  w.add("b", {{1}, {3.0f}});
  auto bytes = serialize_weights(w);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  if (error_of([&] { parse_weights(bad_magic); }) != FormatErrc::kBadMagic) wrong.push_back("magic");
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  if (error_of([&] { parse_weights(truncated); }) != FormatErrc::kTruncated) wrong.push_back("truncated");
  auto dup = bytes;
  // Rename tensor "b" to "a": name bytes sit after the first tensor record.
  const std::size_t second = 8 + 4 + (2 + 1 + 1 + 4 + 8);
  dup[second + 2] = 'a';
  if (error_of([&] { parse_weights(dup); }) != FormatErrc::kDuplicateName) wrong.push_back("duplicate");
  auto trailing = bytes;
  trailing.push_back(0);
  if (error_of([&] { parse_weights(trailing); }) != FormatErrc::kBadLength) wrong.push_back("trailing");
  if (error_of([] { parse_point_bin(std::vector<std::uint8_t>(17)); }) != FormatErrc::kTruncated) {
    wrong.push_back("bin");
  }
  if (error_of([] { parse_labels(std::vector<std::uint8_t>(6)); }) != FormatErrc::kBadLength) wrong.push_back("label");

  std::string detail = std::to_string(kPayloads) + " payloads per format, " + std::to_string(failures) +
                       " round-trip failures; malformed inputs: magic, truncated, duplicate, trailing, bin, label";
  if (!wrong.empty()) {
    detail += "; wrong error for:";
    for (const auto& s : wrong) detail += " " + s;
  }
  return {failures == 0 && wrong.empty(), detail};
}

}  // namespace

const std::vector<Criterion>& acceptance_criteria() {
  static const std::vector<Criterion> all = {
      {1, "dense-oracle equivalence", true, dense_oracles},
      {2, "rearrangement round trip", true, rearrange_round_trip},
      {3, "GKA convergence", true, gka_convergence},
      {4, "gradient checks", true, gradient_checks},
      {5, "soft voxel labels", true, soft_labels},
      {6, "metric hand-cases and matching oracle", true, metric_cases},
      {7, "end-to-end oracle decode", true, oracle_decode},
      {8, "determinism", false, determinism},
      {9, "BEV grid arithmetic", true, grid_arithmetic},
      {10, "performance smoke", false, performance},
      {11, "format round trips", true, format_round_trips},
  };
  return all;
}

int run_criteria(const std::vector<Criterion>& selected, std::ostream& out) {
  int failures = 0;
  for (const auto& c : selected) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    out << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  return failures;
}

}  // namespace scan::suites
