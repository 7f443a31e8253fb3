#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "scan/check/oracles.hpp"
#include "scan/metrics.hpp"
#include "scan/pipeline.hpp"
#include "scan/synth.hpp"

using namespace scan;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.channels = 8;
  cfg.attention.heads = 2;
  cfg.attention.head_dim = 4;
  cfg.attention.features = 16;
  return cfg;
}

PointCloud cloud(const std::vector<std::array<double, 3>>& xyz) {
  Matrix m(xyz.size(), 4);
  for (std::size_t i = 0; i < xyz.size(); ++i) {
    for (int a = 0; a < 3; ++a) m(i, a) = xyz[i][a];
  }
  return PointCloud(std::move(m));
}

Scene small_scene(std::uint64_t seed, std::size_t instances = 4) {
  SceneSpec s = random_scene_spec(seed, instances, 3.0);
  for (auto& inst : s.instances) inst.points = 60;
  s.ground_density = 0.02;
  return synth_scene(s);
}

}  // namespace

TEST(TopK, OrderThresholdAndCellCentres) {
  const std::vector<Peak> peaks{{{1, 1, 0}, 0.9}, {{2, 2, 0}, 0.05}, {{3, 3, 0}, 0.5}, {{0, 5, 0}, 0.9},
                                {{4, 4, 0}, 0.1}};
  const Vec3 s{0.8, 0.8, 0.4};
  const Range3 r;
  const auto two = top_k_centroids(peaks, 2, 0.1, s, r);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_DOUBLE_EQ(two[0].x, -48.0 + 0.5 * 0.8);
  EXPECT_DOUBLE_EQ(two[0].y, -48.0 + 5.5 * 0.8);
  EXPECT_DOUBLE_EQ(two[1].x, -48.0 + 1.5 * 0.8);
  const auto all = top_k_centroids(peaks, 10, 0.1, s, r);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[3].score, 0.1);
  EXPECT_TRUE(top_k_centroids(peaks, 10, 0.95, s, r).empty());
  EXPECT_TRUE(top_k_centroids({}, 10, 0.0, s, r).empty());
}

TEST(AssignInstances, Examples) {
  const auto p = cloud({{0, 0, 0}, {10, 0, 0}, {0.5, 0, 0}, {5, 5, 0}, {9, 1, 0}});
  const std::vector<std::uint16_t> sem{1, 1, 2, 9, 1};
  const std::vector<char> things{0, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<Centroid> cents{{20, 20, 0.9}, {0, 0, 0.8}, {10, 0, 0.7}};
  const auto ids = assign_instances(p, sem, Matrix(5, 2), cents, things);
  EXPECT_EQ(ids, (std::vector<std::uint16_t>{1, 2, 1, 0, 2}));

  Matrix shift(5, 2);
  shift(0, 0) = 9.0;
  EXPECT_EQ(assign_instances(p, sem, shift, cents, things)[0], 2);
  EXPECT_EQ(assign_instances(p, sem, Matrix(5, 2), {}, things), std::vector<std::uint16_t>(5, 0));
  EXPECT_THROW(assign_instances(p, sem, Matrix(4, 2), cents, things), ShapeError);
}

TEST(AssignInstances, RandomInvariants) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-20, 20);
  std::uniform_int_distribution<int> cls(0, 9);
  const std::vector<char> things{0, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 300;
    Matrix m(n, 4);
    std::vector<std::uint16_t> sem(n);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, 0) = u(rng);
      m(i, 1) = u(rng);
      sem[i] = static_cast<std::uint16_t>(cls(rng));
    }
    const PointCloud p(m);
    std::vector<Centroid> cents(1 + trial % 7);
    for (auto& c : cents) c = {u(rng), u(rng), 0.5};
    const auto ids = assign_instances(p, sem, Matrix(n, 2), cents, things);
    std::set<std::uint16_t> used;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(ids[i] != 0, things[sem[i]] != 0);
      if (ids[i] != 0) used.insert(ids[i]);
    }
    ASSERT_FALSE(used.empty());
    EXPECT_EQ(*used.rbegin(), used.size());
    EXPECT_LE(used.size(), cents.size());
  }
}

TEST(MajorityVote, MatchesHistogramOracle) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> cls(0, 5), inst(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint16_t> sem(200), ids(200);
    for (std::size_t i = 0; i < 200; ++i) {
      sem[i] = static_cast<std::uint16_t>(cls(rng));
      ids[i] = static_cast<std::uint16_t>(inst(rng));
    }
    EXPECT_EQ(majority_vote_refine(sem, ids), oracle::histogram_vote(sem, ids));
  }
  EXPECT_EQ(majority_vote_refine({3, 2, 2, 3, 7}, {1, 1, 1, 1, 0}), (std::vector<std::uint16_t>{2, 2, 2, 2, 7}));
  EXPECT_THROW(majority_vote_refine({1}, {}), ShapeError);
}

TEST(SemanticArgmax, NeverPredictsVoid) {
  const Matrix logits(2, 3, {10.0, 1.0, 2.0, 10.0, 5.0, 5.0});
  EXPECT_EQ(semantic_argmax(logits), (std::vector<std::uint16_t>{2, 1}));
}

TEST(BlockSupports, SinglePointAndCropping) {
  const PipelineConfig cfg;
  const auto s = block_supports(cloud({{1.0, 2.0, -1.0}, {100.0, 0.0, 0.0}}), cfg);
  for (int b = 0; b < 4; ++b) {
    EXPECT_EQ(s.coords[b].size(), 1u);
    EXPECT_EQ(s.p2v[b][0], 0u);
    EXPECT_EQ(s.p2v[b][1], kCropped);
  }
  EXPECT_EQ(s.coords[0][0], (VoxelCoord{245, 250, 20}));
  EXPECT_EQ(s.coords[1][0], (VoxelCoord{122, 125, 10}));
  EXPECT_EQ(s.coords[3][0], (VoxelCoord{61, 62, 5}));
}

TEST(BlockSupports, NestedDownscaling) {
  const PipelineConfig cfg;
  const Scene scene = small_scene(3);
  const auto s = block_supports(scene.points, cfg);
  for (int b = 1; b < 4; ++b) {
    EXPECT_EQ(s.coords[b], downscale_unique(s.coords[0], PipelineConfig::kBlockFactor[b]).coords);
    for (std::size_t i = 0; i < scene.points.size(); ++i) {
      const VoxelCoord c0 = s.coords[0][s.p2v[0][i]];
      const VoxelCoord cb = s.coords[b][s.p2v[b][i]];
      const auto f = PipelineConfig::kBlockFactor[b];
      EXPECT_EQ(cb, (VoxelCoord{floor_div(c0.x, f), floor_div(c0.y, f), floor_div(c0.z, f)}));
    }
  }
}

TEST(Weights, ManifestShape) {
  PipelineConfig cfg;
  const auto m = weight_manifest(cfg);
  EXPECT_EQ(m.size(), 52u);
  std::set<std::string> names;
  for (const auto& w : m) names.insert(w.name);
  EXPECT_EQ(names.size(), m.size());
  EXPECT_EQ(m.front().name, "backbone.b1.ssc1.weight");
  EXPECT_EQ(m.front().dims, (std::vector<std::uint32_t>{27, 4, 64}));
  EXPECT_TRUE(names.count("attention.shared.query.weight"));
  EXPECT_TRUE(names.count("semantic.fc1.weight"));
  cfg.attention.share_weights = false;
  const auto unshared = weight_manifest(cfg);
  EXPECT_EQ(unshared.size(), 76u);
  EXPECT_TRUE(std::any_of(unshared.begin(), unshared.end(),
                          [](const WeightSpec& w) { return w.name == "attention.stage2.layer2.out.bias"; }));
}

TEST(Weights, InitIsDeterministicAndBounded) {
  const PipelineConfig cfg = small_config();
  const ModelWeights a = init_weights(cfg, 1);
  EXPECT_EQ(a, init_weights(cfg, 1));
  EXPECT_NE(a, init_weights(cfg, 2));
  for (const auto& spec : weight_manifest(cfg)) {
    const auto& t = a.at(spec.name);
    EXPECT_EQ(t.dims, spec.dims);
    const double bound = spec.fan_out == 0 ? 0.0 : std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
    for (float v : t.values) EXPECT_LE(std::abs(v), bound + 1e-7) << spec.name;
  }
}

TEST(Weights, FromErrorsAndSharing) {
  PipelineConfig cfg = small_config();
  const ModelWeights good = init_weights(cfg, 3);
  const NetworkWeights n = NetworkWeights::from(good, cfg);
  for (int s = 0; s < 2; ++s) {
    for (const auto& p : n.attention.stages[s]) EXPECT_EQ(p.get(), n.attention.stages[0][0].get());
  }

  ModelWeights missing;
  for (const auto& [name, t] : good.tensors()) {
    if (name != "heatmap.proj.bias") missing.add(name, t);
  }
  EXPECT_THROW(NetworkWeights::from(missing, cfg), ConsistencyError);
  ModelWeights bad = good;
  bad.at("offset.fc2.weight").dims = {8, 3};
  EXPECT_THROW(NetworkWeights::from(bad, cfg), ShapeError);

  cfg.attention.share_weights = false;
  EXPECT_THROW(NetworkWeights::from(good, cfg), ConsistencyError);
  const NetworkWeights u = NetworkWeights::from(init_weights(cfg, 3), cfg);
  EXPECT_NE(u.attention.stages[0][0].get(), u.attention.stages[1][1].get());
}

TEST(Backbone, ZeroWeightsGiveZeroFeatures) {
  const PipelineConfig cfg = small_config();
  ModelWeights zero = init_weights(cfg, 4);
  for (const auto& spec : weight_manifest(cfg)) {
    auto& v = zero.at(spec.name).values;
    std::fill(v.begin(), v.end(), 0.0f);
  }
  const NetworkWeights w = NetworkWeights::from(zero, cfg);
  const Scene scene = small_scene(4);
  const auto b = backbone_forward(scene.points, w, cfg);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(b.blocks[k].size(), b.supports.coords[k].size());
    EXPECT_EQ(b.blocks[k].scale(), cfg.block_scale(k));
    const Matrix pf = b.point_features(k);
    for (double v : pf.data()) EXPECT_EQ(v, 0.0);
  }
  const auto fwd = network_forward(scene.points, w, cfg);
  for (std::size_t i = 0; i < fwd.heads.heatmap.size(); ++i) EXPECT_EQ(fwd.heads.heatmap.activation(i), 0.5);
  for (double v : fwd.heads.offsets.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pipeline, EmptyAndCroppedClouds) {
  const PipelineConfig cfg = small_config();
  const NetworkWeights w = NetworkWeights::from(init_weights(cfg, 5), cfg);
  const auto empty = run_pipeline(PointCloud(), w, cfg);
  EXPECT_TRUE(empty.semantic.empty());
  EXPECT_TRUE(empty.centroids.empty());
  const auto cropped = run_pipeline(cloud({{100, 0, 0}, {0, 0, 50}}), w, cfg);
  EXPECT_EQ(cropped.semantic, (std::vector<std::uint16_t>{0, 0}));
  EXPECT_EQ(cropped.instance, (std::vector<std::uint16_t>{0, 0}));
}

TEST(Pipeline, DeterministicWithTimings) {
  const PipelineConfig cfg = small_config();
  const NetworkWeights w = NetworkWeights::from(init_weights(cfg, 6), cfg);
  const Scene scene = small_scene(6);
  std::vector<StageTiming> t;
  const auto a = run_pipeline(scene.points, w, cfg, &t);
  const auto b = run_pipeline(scene.points, w, cfg);
  EXPECT_EQ(a.labels(), b.labels());
  std::vector<std::string> stages;
  for (const auto& s : t) stages.push_back(s.stage);
  EXPECT_EQ(stages, (std::vector<std::string>{"backbone", "attention", "heatmap_head", "point_heads", "centroids",
                                              "panoptic_decode"}));
  for (auto s : a.semantic) EXPECT_NE(s, 0);
  std::set<std::uint16_t> ids(a.instance.begin(), a.instance.end());
  ids.erase(0);
  EXPECT_LE(ids.size(), cfg.max_centroids);
}

TEST(Pipeline, OracleDecodeRecoversScene) {
  const PipelineConfig cfg;
  const ClassSpec spec = ClassSpec::from_things(cfg.n_classes, cfg.thing_classes);
  const Scene scene = synth_scene(random_scene_spec(11, 5, 3.0, cfg.thing_classes));
  const auto pred = run_pipeline_oracle(scene.points, scene.labels, cfg);
  const auto r = finalize(accumulate_frame(pred.labels(), scene.labels, spec), spec);
  EXPECT_EQ(r.pq, 1.0);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(pred.centroids.size(), 5u);
  EXPECT_THROW(run_pipeline_oracle(scene.points, PointLabels{}, cfg), ShapeError);
}

TEST(InstanceTargets, CentroidsAndOffsets) {
  const auto p = cloud({{0, 0, 0}, {2, 0, 0}, {5, 5, 5}, {1, 1, 1}});
  const PointLabels gt{{1, 1, 9, 1}, {3, 3, 0, 4}};
  const auto t = instance_targets(p, gt, PipelineConfig{}.thing_mask());
  ASSERT_EQ(t.centers.size(), 2u);
  EXPECT_EQ(t.centers[0].x, 1.0);
  EXPECT_EQ(t.centers[0].cls, 1);
  EXPECT_EQ(t.offsets(0, 0), 1.0);
  EXPECT_EQ(t.offsets(1, 0), -1.0);
  EXPECT_EQ(t.offsets(3, 0), 0.0);
  EXPECT_EQ(t.thing, (std::vector<char>{1, 1, 0, 1}));
}

TEST(FrameLoss, ComponentsRecompute) {
  const PipelineConfig cfg = small_config();
  const NetworkWeights w = NetworkWeights::from(init_weights(cfg, 7), cfg);
  const Scene scene = small_scene(7, 3);
  const LossReport r = frame_loss(scene.points, scene.labels, w, cfg);
  for (double v : {r.l_d, r.l_o, r.l_s, r.l_v}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
  }
  EXPECT_DOUBLE_EQ(r.total, r.l_d + r.l_o + r.l_s + r.l_v);

  const auto fwd = network_forward(scene.points, w, cfg);
  const auto& sup = fwd.backbone.supports;
  std::vector<AuxBlock> aux(3);
  for (int k = 0; k < 3; ++k) {
    aux[k] = {&fwd.backbone.blocks[k + 1], &w.aux[k], sup.coords[k + 1],
              soft_voxel_labels(scene.labels, sup.p2v[k + 1], sup.coords[k + 1].size(), cfg.n_classes)};
  }
  EXPECT_EQ(r.l_v, multi_scale_sparse_loss(aux));
  EXPECT_EQ(frame_loss(PointCloud(), PointLabels{}, w, cfg).total, 0.0);
}
