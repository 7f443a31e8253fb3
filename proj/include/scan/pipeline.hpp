#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scan/attention.hpp"
#include "scan/heads.hpp"
#include "scan/io.hpp"
#include "scan/kernels.hpp"
#include "scan/losses.hpp"
#include "scan/sparse.hpp"
#include "scan/voxelizer.hpp"

namespace scan {

struct PipelineConfig {
  Vec3 scale{0.2, 0.2, 0.1};
  Range3 range;
  std::size_t max_centroids = 100;
  double score_threshold = 0.1;
  int pool_window = 3;
  std::size_t n_classes = 20;
  std::vector<std::uint16_t> thing_classes{1, 2, 3, 4, 5, 6, 7, 8};
  std::size_t channels = 64;
  AttentionConfig attention;
  GaussianTargetParams target;
  HeatmapFocalParams heatmap_focal;
  SemanticFocalParams semantic_focal;

  // Block b (0-based) voxel size is scale * block_factor(b): s, 2s, 4s, 4s.
  static constexpr std::array<std::int32_t, 4> kBlockFactor{1, 2, 4, 4};

  Vec3 block_scale(int block) const;
  Vec3 bev_scale() const { return block_scale(3); }
  // BEV centroid grid extent (cells in x, y) at scale 4s.
  std::array<std::int32_t, 2> bev_grid() const;
  std::vector<char> thing_mask() const;  // indexed by class id
  void validate() const;
};

// --- weights ---------------------------------------------------------------

struct WeightSpec {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;  // 0 for biases
};

// Every tensor the network reads, in a fixed order.
std::vector<WeightSpec> weight_manifest(const PipelineConfig& cfg);

// Uniform in [-b, b], b = sqrt(6 / (fan_in + fan_out)); biases zero. Each
// tensor has its own stream derived from (seed, name).
ModelWeights init_weights(const PipelineConfig& cfg, std::uint64_t seed);

struct BlockWeights {
  SscWeights ssc1;
  SscWeights ssc2;
  Linear mlp;  // voxel -> point projection, C -> C, ReLU
};

struct NetworkWeights {
  std::array<BlockWeights, 4> blocks;
  AttentionWeights attention;
  HeatmapHeadWeights heatmap;
  std::array<SscWeights, 3> aux;   // blocks 2..4, C -> n_classes
  std::vector<Linear> semantic;    // 4C -> C -> n_classes
  std::vector<Linear> offset;      // 4C -> C -> 2

  // Throws ConsistencyError on missing tensors and ShapeError on wrong shapes.
  static NetworkWeights from(const ModelWeights& w, const PipelineConfig& cfg);
};

// --- forward ---------------------------------------------------------------

// Per-block voxel supports and point maps without features.
struct BlockSupports {
  std::array<std::vector<VoxelCoord>, 4> coords;
  std::array<std::vector<std::size_t>, 4> p2v;  // per input point, kCropped when outside the range
};

BlockSupports block_supports(const PointCloud& p, const PipelineConfig& cfg);

struct BackboneOutput {
  BlockSupports supports;
  std::array<SparseTensor, 4> blocks;      // R^{b1..b4}
  std::array<Matrix, 4> point_voxel_feats;  // point features, one row per voxel of the block

  // N x C point features of block b: point_voxel_feats[b] gathered to points.
  Matrix point_features(int block) const;
};

BackboneOutput backbone_forward(const PointCloud& p, const NetworkWeights& w, const PipelineConfig& cfg);

struct HeadOutputs {
  CentroidHeatmap heatmap;
  Matrix offsets;          // N x 2, meters
  Matrix semantic_logits;  // N x n_classes
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>* sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  void lap(const char* stage);

 private:
  std::vector<StageTiming>* sink_;
  std::chrono::steady_clock::time_point start_;
};

struct ForwardResult {
  BackboneOutput backbone;
  SparseTensor attention;  // A on the block-4 support
  HeadOutputs heads;
};

ForwardResult network_forward(const PointCloud& p, const NetworkWeights& w, const PipelineConfig& cfg,
                              std::vector<StageTiming>* timings = nullptr);

// Per-block auxiliary voxel semantics (blocks 2..4), training only.
std::array<SparseTensor, 3> aux_predictions(const BackboneOutput& b, const NetworkWeights& w);

// --- decoding --------------------------------------------------------------

struct Centroid {
  double x = 0.0;  // meters, BEV cell centre
  double y = 0.0;
  double score = 0.0;
};

std::vector<Centroid> top_k_centroids(const std::vector<Peak>& peaks, std::size_t k, double threshold,
                                      const Vec3& bev_scale, const Range3& range);

// Nearest-centroid assignment of offset-shifted thing points. Returns ids in
// {0} U {1..n}, contiguous, in original centroid order.
std::vector<std::uint16_t> assign_instances(const PointCloud& points, const std::vector<std::uint16_t>& semantics,
                                            const Matrix& offsets, const std::vector<Centroid>& centroids,
                                            const std::vector<char>& thing_mask);

// Relabels every instance to its majority semantic class (ties to the
// smaller id). Instance 0 is untouched.
std::vector<std::uint16_t> majority_vote_refine(const std::vector<std::uint16_t>& semantics,
                                                const std::vector<std::uint16_t>& instances);

struct PanopticPrediction {
  std::vector<std::uint16_t> semantic;
  std::vector<std::uint16_t> instance;
  std::vector<Centroid> centroids;

  PointLabels labels() const { return {semantic, instance}; }
};

// Ground-truth head outputs, for decoding without trained weights.
HeadOutputs oracle_heads(const PointCloud& p, const PointLabels& gt, const std::vector<VoxelCoord>& bev_support,
                         const PipelineConfig& cfg);

// Argmax over classes 1..n-1 (class 0 is never predicted).
std::vector<std::uint16_t> semantic_argmax(const Matrix& logits);

PanopticPrediction decode(const PointCloud& p, const HeadOutputs& heads, const std::vector<std::size_t>& base_p2v,
                          const PipelineConfig& cfg, std::vector<StageTiming>* timings = nullptr);

PanopticPrediction run_pipeline(const PointCloud& p, const NetworkWeights& w, const PipelineConfig& cfg,
                                std::vector<StageTiming>* timings = nullptr);

// Decoder driven by ground-truth heads.
PanopticPrediction run_pipeline_oracle(const PointCloud& p, const PointLabels& gt, const PipelineConfig& cfg);

// --- training-side losses --------------------------------------------------

struct InstanceTargets {
  std::vector<InstanceCenter> centers;  // one per (thing class, instance id)
  Matrix offsets;                       // N x 2, centroid - point
  std::vector<char> thing;              // per point
};

// Centroid = mean xyz of the instance's points.
InstanceTargets instance_targets(const PointCloud& p, const PointLabels& gt, const std::vector<char>& thing_mask);

// L_d + L_o + L_s + L_v for one frame.
LossReport frame_loss(const PointCloud& p, const PointLabels& gt, const NetworkWeights& w, const PipelineConfig& cfg);

}  // namespace scan
