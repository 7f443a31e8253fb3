#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "scan/attention.hpp"
#include "scan/check/oracles.hpp"

using namespace scan;

namespace {

Linear random_linear(std::mt19937_64& rng, std::size_t in, std::size_t out, double sigma = 0.2) {
  Linear l{in, out, {}, {}, Activation::kNone};
  l.weight = oracle::random_matrix(rng, in, out, sigma).data();
  l.bias = oracle::random_matrix(rng, 1, out, sigma).data();
  return l;
}

LayerWeightsPtr random_layer(std::mt19937_64& rng, std::size_t c, std::size_t ca) {
  auto w = std::make_shared<AttentionLayerWeights>();
  w->query = random_linear(rng, c, ca);
  w->key = random_linear(rng, c, ca);
  w->value = random_linear(rng, c, ca);
  w->out = random_linear(rng, ca, c);
  return w;
}

AttentionConfig small_config() {
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.depth = 2;
  cfg.features = 32;
  cfg.seed = 9;
  return cfg;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix o = a;
  for (std::size_t i = 0; i < o.data().size(); ++i) o.data()[i] += b.data()[i];
  return o;
}

}  // namespace

TEST(PosEncode, OriginAndFirstChannel) {
  const Matrix pe = pos_encode({{0, 0, 0}, {5, 1, 2}}, 24);
  for (std::size_t c = 0; c < 24; ++c) EXPECT_EQ(pe(0, c), c % 2 == 0 ? 0.0 : 1.0);
  EXPECT_EQ(pe(1, 0), std::sin(5.0));
  EXPECT_EQ(pe(1, 8), std::sin(1.0));
  EXPECT_EQ(pe(1, 16), std::sin(2.0));
}

TEST(PosEncode, WidthTooSmall) { EXPECT_THROW(pos_encode({{0, 0, 0}}, 5), ConfigError); }

TEST(PosEncode, GridCoordinatesAreDistinct) {
  // The three axis spans are disjoint, so distinct rows over the 480x480x45
  // grid follow from each axis encoding being injective over its own range.
  constexpr std::size_t kWidth = 384;
  const std::size_t d = kWidth / 3;
  const int extent[3] = {480, 480, 45};
  for (int a = 0; a < 3; ++a) {
    std::vector<VoxelCoord> coords;
    for (int v = 0; v < extent[a]; ++v) {
      VoxelCoord c{0, 0, 0};
      (a == 0 ? c.x : a == 1 ? c.y : c.z) = v;
      coords.push_back(c);
    }
    const Matrix pe = pos_encode(coords, kWidth);
    const std::size_t begin = a * d;
    const std::size_t end = a == 2 ? kWidth : begin + d;
    std::set<std::vector<double>> rows;
    for (std::size_t r = 0; r < pe.rows(); ++r) {
      rows.insert(std::vector<double>(pe.row(r).begin() + begin, pe.row(r).begin() + end));
    }
    EXPECT_EQ(rows.size(), static_cast<std::size_t>(extent[a])) << "axis " << a;
  }
}

TEST(ExactAttention, SingleKeyAndUniform) {
  std::mt19937_64 rng(1);
  const Matrix q = oracle::random_matrix(rng, 5, 4);
  const Matrix k = oracle::random_matrix(rng, 1, 4);
  const Matrix v = oracle::random_matrix(rng, 1, 3);
  const Matrix out = exact_attention(q, k, v);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(i, c), v(0, c), 1e-15);
  }
  const Matrix v4 = oracle::random_matrix(rng, 4, 3);
  const Matrix u = exact_attention(Matrix(2, 4), oracle::random_matrix(rng, 4, 4), v4);
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = (v4(0, c) + v4(1, c) + v4(2, c) + v4(3, c)) / 4;
    EXPECT_NEAR(u(0, c), mean, 1e-15);
  }
  EXPECT_THROW(exact_attention(q, oracle::random_matrix(rng, 2, 3), v), ShapeError);
}

TEST(ExactAttention, MatchesDirectFormula) {
  std::mt19937_64 rng(2);
  const Matrix q = oracle::random_matrix(rng, 4, 4), k = oracle::random_matrix(rng, 4, 4),
               v = oracle::random_matrix(rng, 4, 4);
  const Matrix out = exact_attention(q, k, v);
  for (std::size_t i = 0; i < 4; ++i) {
    double w[4], z = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += q(i, c) * k(j, c);
      w[j] = std::exp(s / 2.0);
      z += w[j];
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < 4; ++j) o += w[j] / z * v(j, c);
      EXPECT_NEAR(out(i, c), o, 1e-6);
    }
  }
}

TEST(Gka, SingleKeyAndIdenticalKeys) {
  std::mt19937_64 rng(3);
  const Matrix q = oracle::random_matrix(rng, 10, 8);
  const Matrix k = oracle::random_matrix(rng, 1, 8);
  const Matrix v = oracle::random_matrix(rng, 1, 5);
  const Matrix out = gka_attention(q, k, v, 16, 7);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(out(i, c), v(0, c), 1e-12);
  }
  Matrix same(6, 8);
  for (std::size_t r = 0; r < 6; ++r) std::copy(k.row(0).begin(), k.row(0).end(), same.row(r).begin());
  const Matrix v6 = oracle::random_matrix(rng, 6, 5);
  const Matrix o6 = gka_attention(q, same, v6, 16, 7);
  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < 6; ++r) mean += v6(r, c) / 6;
    EXPECT_NEAR(o6(3, c), mean, 1e-12);
  }
}

TEST(Gka, ParallelMatchesSerialAndIsDeterministic) {
  std::mt19937_64 rng(4);
  const Matrix q = oracle::random_matrix(rng, 700, 16, 0.4), k = oracle::random_matrix(rng, 500, 16, 0.4),
               v = oracle::random_matrix(rng, 500, 16);
  const Matrix rf = draw_random_features(64, 16, 11);
  EXPECT_EQ(gka_attention(q, k, v, rf), serial::gka_attention(q, k, v, rf));
  EXPECT_EQ(draw_random_features(64, 16, 11), rf);
  EXPECT_NE(draw_random_features(64, 16, 12), rf);
}

TEST(Gka, LargeLogitsStayFinite) {
  std::mt19937_64 rng(5);
  const Matrix q = oracle::random_matrix(rng, 20, 16, 8.0), k = oracle::random_matrix(rng, 20, 16, 8.0),
               v = oracle::random_matrix(rng, 20, 4);
  const Matrix out = gka_attention(q, k, v, 64, 1);
  for (double x : out.data()) EXPECT_TRUE(std::isfinite(x));
}

TEST(AttentionLayer, ZeroValuePathKeepsQuery) {
  std::mt19937_64 rng(6);
  const AttentionConfig cfg = small_config();
  auto lw = std::make_shared<AttentionLayerWeights>(*random_layer(rng, 6, 8));
  lw->value.weight.assign(lw->value.weight.size(), 0.0);
  lw->value.bias.assign(lw->value.bias.size(), 0.0);
  lw->out.bias.assign(lw->out.bias.size(), 0.0);
  const std::vector<LayerWeightsPtr> layers(2, lw);
  const auto q = oracle::random_tensor(rng, 30, 6, 0, 5);
  const SparseTensor ctx(q.coords(), oracle::random_matrix(rng, q.size(), 6), q.scale());
  EXPECT_EQ(cross_scale_attention_layer(q, ctx, layers, cfg, 0).feats(), q.feats());
}

TEST(AttentionLayer, SingleVoxelDepthOne) {
  std::mt19937_64 rng(7);
  AttentionConfig cfg = small_config();
  cfg.depth = 1;
  const auto lw = random_layer(rng, 6, 8);
  const auto q = oracle::random_tensor(rng, 1, 6, 0, 0);
  const SparseTensor ctx(q.coords(), oracle::random_matrix(rng, 1, 6), q.scale());
  const auto out = cross_scale_attention_layer(q, ctx, {lw}, cfg, 0);
  const Matrix want = add(q.feats(), linear_forward(linear_forward(ctx.feats(), lw->value), lw->out));
  EXPECT_LE(max_abs_diff(out.feats(), want), 1e-12);
}

TEST(AttentionLayer, MatchesManualComposition) {
  std::mt19937_64 rng(8);
  const AttentionConfig cfg = small_config();
  const std::vector<LayerWeightsPtr> layers{random_layer(rng, 6, 8), random_layer(rng, 6, 8)};
  const auto q = oracle::random_tensor(rng, 40, 6, 0, 6);
  const SparseTensor ctx(q.coords(), oracle::random_matrix(rng, q.size(), 6), q.scale());
  const auto got = cross_scale_attention_layer(q, ctx, layers, cfg, 1);

  const Matrix pe = pos_encode(q.coords(), 6);
  Matrix x = q.feats();
  for (int d = 0; d < cfg.depth; ++d) {
    const Matrix qm = linear_forward(add(x, pe), layers[d]->query);
    const Matrix km = linear_forward(add(ctx.feats(), pe), layers[d]->key);
    const Matrix vm = linear_forward(ctx.feats(), layers[d]->value);
    Matrix heads(q.size(), 8);
    for (int h = 0; h < cfg.heads; ++h) {
      auto slice = [&](const Matrix& m) {
        Matrix s(m.rows(), 4);
        for (std::size_t r = 0; r < m.rows(); ++r) {
          for (std::size_t c = 0; c < 4; ++c) s(r, c) = m(r, h * 4 + c);
        }
        return s;
      };
      const Matrix o = gka_attention(slice(qm), slice(km), slice(vm), 32, random_feature_seed(cfg, 1, d, h));
      for (std::size_t r = 0; r < o.rows(); ++r) {
        for (std::size_t c = 0; c < 4; ++c) heads(r, h * 4 + c) = o(r, c);
      }
    }
    x = add(x, linear_forward(heads, layers[d]->out));
  }
  EXPECT_EQ(got.feats(), x);
}

TEST(AttentionLayer, Errors) {
  std::mt19937_64 rng(9);
  const AttentionConfig cfg = small_config();
  const std::vector<LayerWeightsPtr> layers{random_layer(rng, 6, 8), random_layer(rng, 6, 8)};
  const auto q = oracle::random_tensor(rng, 10, 6, 0, 4);
  const auto other = oracle::random_tensor(rng, 10, 6, 10, 14);
  EXPECT_THROW(cross_scale_attention_layer(q, other, layers, cfg, 0), AlignmentError);
  EXPECT_THROW(cross_scale_attention_layer(q, q, {layers[0]}, cfg, 0), ConfigError);
  AttentionConfig bad = cfg;
  bad.heads = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(CrossScaleAttention, ZeroFeaturesGiveZero) {
  std::mt19937_64 rng(10);
  const AttentionConfig cfg = small_config();
  AttentionWeights w;
  for (int s = 0; s < 2; ++s) {
    for (int d = 0; d < cfg.depth; ++d) {
      auto lw = std::make_shared<AttentionLayerWeights>(*random_layer(rng, 6, 8));
      for (Linear* l : {&lw->query, &lw->key, &lw->value, &lw->out}) l->bias.assign(l->bias.size(), 0.0);
      w.stages[s].push_back(lw);
    }
  }
  const auto c2 = oracle::random_coords(rng, 40, 0, 15);
  const auto b3 = downscale_unique(c2, 2).coords;
  const SparseTensor r2(c2, Matrix(c2.size(), 6), {0.4, 0.4, 0.2});
  const SparseTensor r3(b3, Matrix(b3.size(), 6), {0.8, 0.8, 0.4});
  const auto a = cross_scale_attention(r2, r3, r3, w, cfg);
  for (double v : a.feats().data()) EXPECT_EQ(v, 0.0);

  const SparseTensor empty2({}, Matrix(0, 6), {0.4, 0.4, 0.2});
  const SparseTensor r3f(b3, oracle::random_matrix(rng, b3.size(), 6), {0.8, 0.8, 0.4});
  const auto e = cross_scale_attention(empty2, r3f, r3f, w, cfg);
  EXPECT_EQ(e.size(), b3.size());
}

TEST(CrossScaleAttention, MatchesTwoStageComposition) {
  std::mt19937_64 rng(11);
  const AttentionConfig cfg = small_config();
  AttentionWeights w;
  for (int s = 0; s < 2; ++s) {
    for (int d = 0; d < cfg.depth; ++d) w.stages[s].push_back(random_layer(rng, 6, 8));
  }
  const auto c2 = oracle::random_coords(rng, 60, 0, 15);
  const auto b3 = downscale_unique(c2, 2).coords;
  const SparseTensor r2(c2, oracle::random_matrix(rng, c2.size(), 6), {0.4, 0.4, 0.2});
  const SparseTensor r3(b3, oracle::random_matrix(rng, b3.size(), 6), {0.8, 0.8, 0.4});
  const SparseTensor r4(b3, oracle::random_matrix(rng, b3.size(), 6), {0.8, 0.8, 0.4});
  const auto a = cross_scale_attention(r2, r3, r4, w, cfg);
  const auto a1 = cross_scale_attention_layer(r3, align_to_support(sparse_align(r2, r3.scale()), b3), w.stages[0], cfg, 0);
  const auto want = cross_scale_attention_layer(r4, align_to_support(a1, b3), w.stages[1], cfg, 1);
  EXPECT_EQ(a, want);
  EXPECT_EQ(cross_scale_attention(r2, r3, r4, w, cfg), a);
}
