#include "scan/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace scan {

void AttentionConfig::validate() const {
  if (heads < 1 || head_dim < 1 || features < 1 || depth < 0) {
    throw ConfigError("attention config requires heads, head_dim, features >= 1 and depth >= 0");
  }
}

Matrix pos_encode(const std::vector<VoxelCoord>& coords, std::size_t width) {
  if (width < 6) throw ConfigError("positional encoding width must be >= 6");
  const std::size_t d = width / 3;
  const std::array<std::size_t, 3> begin{0, d, 2 * d};
  const std::array<std::size_t, 3> len{d, d, width - 2 * d};

  // Per-channel inverse frequencies, identical for every row.
  std::vector<double> inv_freq(width);
  for (int a = 0; a < 3; ++a) {
    for (std::size_t j = 0; j < len[a]; ++j) {
      const double two_i = static_cast<double>(j - (j % 2));
      inv_freq[begin[a] + j] = 1.0 / std::pow(10000.0, two_i / static_cast<double>(len[a]));
    }
  }
  Matrix pe(coords.size(), width);
  const auto n = static_cast<std::int64_t>(coords.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    const std::array<double, 3> v{static_cast<double>(coords[r].x), static_cast<double>(coords[r].y),
                                  static_cast<double>(coords[r].z)};
    for (int a = 0; a < 3; ++a) {
      for (std::size_t j = 0; j < len[a]; ++j) {
        const std::size_t ch = begin[a] + j;
        const double arg = v[a] * inv_freq[ch];
        pe(r, ch) = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
      }
    }
  }
  return pe;
}

Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw ShapeError("exact_attention: dimension mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix out(q.rows(), v.cols());
  std::vector<double> logits(k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      logits[j] = s * scale;
      mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    for (std::size_t j = 0; j < k.rows(); ++j) {
      const double w = logits[j] / z;
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += w * v(j, c);
    }
  }
  return out;
}

Matrix draw_random_features(std::size_t features, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(features, dim);
  for (double& x : w.data()) x = normal(rng);
  return w;
}

namespace {

// Row r of the result holds W u_r - |u_r|^2 / 2 with u_r = x_r * d^(-1/4).
// `wt` is W transposed (d x m); each logit still sums over c in order.
void feature_logits_row(std::span<const double> x, const Matrix& wt, double scale, std::span<double> out) {
  thread_local std::vector<double> u;
  u.resize(x.size());
  double sq = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    u[c] = x[c] * scale;
    sq += u[c] * u[c];
  }
  const std::size_t m = wt.cols();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < u.size(); ++c) {
    const double* wc = wt.row(c).data();
    const double uc = u[c];
    for (std::size_t f = 0; f < m; ++f) out[f] += wc[f] * uc;
  }
  for (std::size_t f = 0; f < m; ++f) out[f] -= 0.5 * sq;
}

Matrix transpose(const Matrix& w) {
  Matrix t(w.cols(), w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) t(c, r) = w(r, c);
  }
  return t;
}

struct KeySummary {
  Matrix kv;                // m x d_v: phi(K)^T V
  std::vector<double> sum;  // m: phi(K)^T 1
};

void check_dims(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& w) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || w.cols() != q.cols()) {
    throw ShapeError("gka_attention: dimension mismatch");
  }
  if (w.rows() == 0) throw ConfigError("gka_attention: need at least one random feature");
}

// Sequential reduction over keys; shared by both implementations so the
// summation order is fixed.
KeySummary reduce_keys(const Matrix& key_logits, const Matrix& v, double inv_sqrt_m) {
  const std::size_t m = key_logits.cols();
  double shift = -std::numeric_limits<double>::infinity();
  for (double l : key_logits.data()) shift = std::max(shift, l);
  KeySummary ks{Matrix(m, v.cols()), std::vector<double>(m, 0.0)};
  std::vector<double> phi(m);
  for (std::size_t j = 0; j < key_logits.rows(); ++j) {
    for (std::size_t f = 0; f < m; ++f) phi[f] = std::exp(key_logits(j, f) - shift) * inv_sqrt_m;
    for (std::size_t f = 0; f < m; ++f) {
      ks.sum[f] += phi[f];
      auto dst = ks.kv.row(f);
      for (std::size_t c = 0; c < v.cols(); ++c) dst[c] += phi[f] * v(j, c);
    }
  }
  return ks;
}

void query_row(std::span<const double> logits, const KeySummary& ks, double inv_sqrt_m, std::span<double> phi,
               std::span<double> out) {
  double shift = -std::numeric_limits<double>::infinity();
  for (double l : logits) shift = std::max(shift, l);
  for (std::size_t f = 0; f < logits.size(); ++f) phi[f] = std::exp(logits[f] - shift) * inv_sqrt_m;
  double den = 0.0;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t f = 0; f < logits.size(); ++f) {
    den += phi[f] * ks.sum[f];
    auto src = ks.kv.row(f);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += phi[f] * src[c];
  }
  den = std::max(den, 1e-9);
  for (double& o : out) o /= den;
}

}  // namespace

Matrix gka_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& w) {
  check_dims(q, k, v, w);
  const std::size_t m = w.rows();
  const double scale = std::pow(static_cast<double>(q.cols()), -0.25);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  const Matrix wt = transpose(w);

  Matrix key_logits(k.rows(), m);
  const auto nk = static_cast<std::int64_t>(k.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < nk; ++j) feature_logits_row(k.row(j), wt, scale, key_logits.row(j));
  const KeySummary ks = reduce_keys(key_logits, v, inv_sqrt_m);

  Matrix out(q.rows(), v.cols());
  const auto nq = static_cast<std::int64_t>(q.rows());
#pragma omp parallel
  {
    std::vector<double> logits(m);
    std::vector<double> phi(m);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < nq; ++i) {
      feature_logits_row(q.row(i), wt, scale, logits);
      query_row(logits, ks, inv_sqrt_m, phi, out.row(i));
    }
  }
  return out;
}

namespace serial {

Matrix gka_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& w) {
  check_dims(q, k, v, w);
  const std::size_t m = w.rows();
  const double scale = std::pow(static_cast<double>(q.cols()), -0.25);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  const Matrix wt = transpose(w);
  Matrix key_logits(k.rows(), m);
  for (std::size_t j = 0; j < k.rows(); ++j) feature_logits_row(k.row(j), wt, scale, key_logits.row(j));
  const KeySummary ks = reduce_keys(key_logits, v, inv_sqrt_m);
  Matrix out(q.rows(), v.cols());
  std::vector<double> logits(m);
  std::vector<double> phi(m);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    feature_logits_row(q.row(i), wt, scale, logits);
    query_row(logits, ks, inv_sqrt_m, phi, out.row(i));
  }
  return out;
}

}  // namespace serial

std::uint64_t random_feature_seed(const AttentionConfig& cfg, int stage, int depth, int head) {
  return derive_seed(cfg.seed, 0x6b61ULL, stage, depth, head);
}

namespace {

Matrix columns(const Matrix& x, std::size_t begin, std::size_t count) {
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

}  // namespace

SparseTensor cross_scale_attention_layer(const SparseTensor& query, const SparseTensor& context,
                                         const std::vector<LayerWeightsPtr>& layers, const AttentionConfig& cfg,
                                         int stage) {
  cfg.validate();
  if (query.coords() != context.coords()) {
    throw AlignmentError("cross-scale attention: query and context supports differ");
  }
  if (static_cast<int>(layers.size()) != cfg.depth) {
    throw ConfigError("cross-scale attention: expected " + std::to_string(cfg.depth) + " layer weight sets");
  }
  if (query.empty()) return query;
  const std::size_t c = query.channels();
  if (context.channels() != c) throw ShapeError("cross-scale attention: context channels != query channels");

  Matrix pe = cfg.positional_encoding ? pos_encode(query.coords(), c) : Matrix(query.size(), c);
  const Matrix ctx_pe = add(context.feats(), pe);
  const auto hd = static_cast<std::size_t>(cfg.head_dim);
  Matrix x = query.feats();
  for (int d = 0; d < cfg.depth; ++d) {
    const AttentionLayerWeights& lw = *layers[d];
    const Matrix qm = linear_forward(add(x, pe), lw.query);
    const Matrix km = linear_forward(ctx_pe, lw.key);
    const Matrix vm = linear_forward(context.feats(), lw.value);
    Matrix heads(query.size(), static_cast<std::size_t>(cfg.embed_dim()));
    for (int h = 0; h < cfg.heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * hd;
      const Matrix rf = draw_random_features(static_cast<std::size_t>(cfg.features), hd,
                                             random_feature_seed(cfg, stage, d, h));
      const Matrix o = gka_attention(columns(qm, off, hd), columns(km, off, hd), columns(vm, off, hd), rf);
      for (std::size_t r = 0; r < o.rows(); ++r) {
        for (std::size_t cc = 0; cc < hd; ++cc) heads(r, off + cc) = o(r, cc);
      }
    }
    x = add(x, linear_forward(heads, lw.out));
  }
  return SparseTensor(query.coords(), std::move(x), query.scale());
}

SparseTensor cross_scale_attention(const SparseTensor& r_b2, const SparseTensor& r_b3, const SparseTensor& r_b4,
                                   const AttentionWeights& weights, const AttentionConfig& cfg) {
  SparseTensor aligned;
  if (r_b2.empty()) {
    aligned = SparseTensor({}, Matrix(0, r_b3.channels()), r_b3.scale());
  } else {
    aligned = sparse_align(r_b2, r_b3.scale());
  }
  const SparseTensor ctx1 = align_to_support(aligned, r_b3.coords());
  const SparseTensor a1 = cross_scale_attention_layer(r_b3, ctx1, weights.stages[0], cfg, 0);
  const SparseTensor ctx2 = align_to_support(a1, r_b4.coords());
  return cross_scale_attention_layer(r_b4, ctx2, weights.stages[1], cfg, 1);
}

}  // namespace scan
