#pragma once

// Cross-scale global attention over sparse voxel features.
//
// One attention layer (per depth iteration) computes
//   Q = Wq (x + PE),  K = Wk (ctx + PE),  V = Wv ctx
//   x <- x + Wo concat_h GKA(Q_h, K_h, V_h)
// where PE is the 3D sinusoidal encoding of the (shared) voxel coordinates
// and GKA is positive-random-feature linear attention. The module runs two
// such stages bottom-up: block-2 features aligned to 4s attend into block 3,
// and that result attends into block 4.

#include <cstdint>
#include <memory>
#include <vector>

#include "scan/core.hpp"
#include "scan/kernels.hpp"
#include "scan/sparse.hpp"

namespace scan {

struct AttentionConfig {
  int heads = 8;
  int head_dim = 16;
  int depth = 2;
  int features = 64;  // random features per head
  std::uint64_t seed = 0;
  bool share_weights = true;
  bool positional_encoding = true;

  int embed_dim() const { return heads * head_dim; }
  void validate() const;
};

// Sinusoidal 3D encoding, M x width. Channels [0, d) encode x, [d, 2d) y and
// the remaining width - 2d encode z, with d = width / 3. Within a span of
// length L, channel 2i is sin(v / 10000^(2i/L)) and 2i+1 the matching cos.
Matrix pos_encode(const std::vector<VoxelCoord>& coords, std::size_t width);

// softmax(Q K^T / sqrt(d)) V with row-max stabilisation.
Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Unit-normal random projection, features x dim, drawn from `seed`.
Matrix draw_random_features(std::size_t features, std::size_t dim, std::uint64_t seed);

// Linear attention with positive random features
//   phi(u) = exp(W u - |u|^2 / 2) / sqrt(m),  u = x * d^(-1/4)
//   out = diag(phi(Q) phi(K)^T 1)^-1 phi(Q) (phi(K)^T V).
// Per-query and global-key max shifts are applied inside the exponent; both
// cancel in the normalisation.
Matrix gka_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& random_features);
inline Matrix gka_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t m, std::uint64_t seed) {
  return gka_attention(q, k, v, draw_random_features(m, q.cols(), seed));
}

namespace serial {
Matrix gka_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& random_features);
}

struct AttentionLayerWeights {
  Linear query;  // C -> heads * head_dim
  Linear key;    // C -> heads * head_dim
  Linear value;  // C -> heads * head_dim
  Linear out;    // heads * head_dim -> C
};

using LayerWeightsPtr = std::shared_ptr<const AttentionLayerWeights>;

// stages[s][d] holds the weights of stage s (0 or 1), depth iteration d. With
// shared weights every entry points at the same object.
struct AttentionWeights {
  std::array<std::vector<LayerWeightsPtr>, 2> stages;
};

// One stage, `depth` iterations. Query and context must share coordinates
// (in order); otherwise AlignmentError.
SparseTensor cross_scale_attention_layer(const SparseTensor& query, const SparseTensor& context,
                                         const std::vector<LayerWeightsPtr>& layers, const AttentionConfig& cfg,
                                         int stage);

// A1 = layer(b3, SA(b2) on b3 support); A = layer(b4, A1 on b4 support).
SparseTensor cross_scale_attention(const SparseTensor& r_b2, const SparseTensor& r_b3, const SparseTensor& r_b4,
                                   const AttentionWeights& weights, const AttentionConfig& cfg);

// Seed of the random-feature matrix used by (stage, depth, head).
std::uint64_t random_feature_seed(const AttentionConfig& cfg, int stage, int depth, int head);

}  // namespace scan
