#include "scan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace scan {

// --- config ----------------------------------------------------------------

Vec3 PipelineConfig::block_scale(int block) const {
  const double f = kBlockFactor.at(static_cast<std::size_t>(block));
  return {scale[0] * f, scale[1] * f, scale[2] * f};
}

std::array<std::int32_t, 2> PipelineConfig::bev_grid() const {
  const auto e = grid_extent(bev_scale(), range);
  return {e[0], e[1]};
}

std::vector<char> PipelineConfig::thing_mask() const {
  std::vector<char> mask(n_classes, 0);
  for (auto c : thing_classes) mask.at(c) = 1;
  return mask;
}

void PipelineConfig::validate() const {
  if (max_centroids < 1) throw ConfigError("max_centroids must be >= 1");
  if (score_threshold < 0.0 || score_threshold > 1.0) throw ConfigError("score_threshold must lie in [0, 1]");
  if (pool_window < 1 || pool_window % 2 == 0) throw ConfigError("pool_window must be odd and >= 1");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  for (auto c : thing_classes) {
    if (c == 0 || c >= n_classes) throw ConfigError("thing classes must lie in 1..n_classes-1");
  }
  if (channels < 6) throw ConfigError("channels must be >= 6 for the positional encoding");
  for (int a = 0; a < 3; ++a) {
    if (!(scale[a] > 0.0)) throw ConfigError("voxel scale must be positive");
    if (!(range.min[a] < range.max[a])) throw ConfigError("range min must be < max");
  }
  attention.validate();
  // Voxel indices of every block must fit the coordinate packing.
  const auto e = grid_extent(scale, range);
  for (auto v : e) {
    if (v > kCoordMax) throw ConfigError("voxel grid exceeds the coordinate packing range");
  }
}

// --- weights ---------------------------------------------------------------

namespace {

std::string attention_prefix(const PipelineConfig& cfg, int stage, int depth) {
  if (cfg.attention.share_weights) return "attention.shared";
  return "attention.stage" + std::to_string(stage + 1) + ".layer" + std::to_string(depth + 1);
}

void add_ssc(std::vector<WeightSpec>& m, const std::string& name, std::size_t cin, std::size_t cout) {
  const std::size_t k3 = 27;
  m.push_back({name + ".weight", {27, static_cast<std::uint32_t>(cin), static_cast<std::uint32_t>(cout)}, k3 * cin,
               k3 * cout});
  m.push_back({name + ".bias", {static_cast<std::uint32_t>(cout)}, cin, 0});
}

void add_linear(std::vector<WeightSpec>& m, const std::string& name, std::size_t cin, std::size_t cout) {
  m.push_back({name + ".weight", {static_cast<std::uint32_t>(cin), static_cast<std::uint32_t>(cout)}, cin, cout});
  m.push_back({name + ".bias", {static_cast<std::uint32_t>(cout)}, cin, 0});
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> widen(const NamedTensor& t) { return {t.values.begin(), t.values.end()}; }

const NamedTensor& fetch(const ModelWeights& w, const std::string& name, const std::vector<std::uint32_t>& dims) {
  const NamedTensor& t = w.at(name);
  if (t.dims != dims) {
    std::string want;
    for (auto d : dims) want += std::to_string(d) + " ";
    throw ShapeError("weight " + name + " has unexpected shape (expected " + want + ")");
  }
  return t;
}

SscWeights load_ssc(const ModelWeights& w, const std::string& name, std::size_t cin, std::size_t cout) {
  SscWeights s;
  s.kernel_size = 3;
  s.c_in = cin;
  s.c_out = cout;
  s.weight = widen(fetch(w, name + ".weight", {27, static_cast<std::uint32_t>(cin), static_cast<std::uint32_t>(cout)}));
  s.bias = widen(fetch(w, name + ".bias", {static_cast<std::uint32_t>(cout)}));
  return s;
}

Linear load_linear(const ModelWeights& w, const std::string& name, std::size_t cin, std::size_t cout,
                   Activation act) {
  Linear l;
  l.c_in = cin;
  l.c_out = cout;
  l.weight = widen(fetch(w, name + ".weight", {static_cast<std::uint32_t>(cin), static_cast<std::uint32_t>(cout)}));
  l.bias = widen(fetch(w, name + ".bias", {static_cast<std::uint32_t>(cout)}));
  l.activation = act;
  return l;
}

}  // namespace

std::vector<WeightSpec> weight_manifest(const PipelineConfig& cfg) {
  const std::size_t c = cfg.channels;
  const auto ca = static_cast<std::size_t>(cfg.attention.embed_dim());
  std::vector<WeightSpec> m;
  for (int b = 0; b < 4; ++b) {
    const std::string p = "backbone.b" + std::to_string(b + 1);
    add_ssc(m, p + ".ssc1", b == 0 ? 4 : c, c);
    add_ssc(m, p + ".ssc2", c, c);
    add_linear(m, p + ".mlp", c, c);
  }
  const int sets = cfg.attention.share_weights ? 1 : 2 * cfg.attention.depth;
  for (int s = 0; s < sets; ++s) {
    const std::string p = attention_prefix(cfg, s / std::max(cfg.attention.depth, 1), s % std::max(cfg.attention.depth, 1));
    add_linear(m, p + ".query", c, ca);
    add_linear(m, p + ".key", c, ca);
    add_linear(m, p + ".value", c, ca);
    add_linear(m, p + ".out", ca, c);
  }
  add_ssc(m, "heatmap.ssc1", c, c);
  add_ssc(m, "heatmap.ssc2", c, c);
  add_linear(m, "heatmap.proj", c, 1);
  for (int b = 2; b <= 4; ++b) add_ssc(m, "aux.b" + std::to_string(b) + ".ssc", c, cfg.n_classes);
  add_linear(m, "semantic.fc1", 4 * c, c);
  add_linear(m, "semantic.fc2", c, cfg.n_classes);
  add_linear(m, "offset.fc1", 4 * c, c);
  add_linear(m, "offset.fc2", c, 2);
  return m;
}

ModelWeights init_weights(const PipelineConfig& cfg, std::uint64_t seed) {
  ModelWeights out;
  for (const auto& spec : weight_manifest(cfg)) {
    NamedTensor t;
    t.dims = spec.dims;
    t.values.assign(t.numel(), 0.0f);
    if (spec.fan_out != 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
      std::mt19937_64 rng(derive_seed(seed, name_hash(spec.name)));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (float& v : t.values) v = static_cast<float>(u(rng));
    }
    out.add(spec.name, std::move(t));
  }
  return out;
}

NetworkWeights NetworkWeights::from(const ModelWeights& w, const PipelineConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  const auto ca = static_cast<std::size_t>(cfg.attention.embed_dim());
  NetworkWeights n;
  for (int b = 0; b < 4; ++b) {
    const std::string p = "backbone.b" + std::to_string(b + 1);
    n.blocks[b].ssc1 = load_ssc(w, p + ".ssc1", b == 0 ? 4 : c, c);
    n.blocks[b].ssc2 = load_ssc(w, p + ".ssc2", c, c);
    n.blocks[b].mlp = load_linear(w, p + ".mlp", c, c, Activation::kRelu);
  }
  auto load_layer = [&](const std::string& p) {
    auto lw = std::make_shared<AttentionLayerWeights>();
    lw->query = load_linear(w, p + ".query", c, ca, Activation::kNone);
    lw->key = load_linear(w, p + ".key", c, ca, Activation::kNone);
    lw->value = load_linear(w, p + ".value", c, ca, Activation::kNone);
    lw->out = load_linear(w, p + ".out", ca, c, Activation::kNone);
    return LayerWeightsPtr(std::move(lw));
  };
  LayerWeightsPtr shared;
  if (cfg.attention.share_weights) shared = load_layer(attention_prefix(cfg, 0, 0));
  for (int s = 0; s < 2; ++s) {
    for (int d = 0; d < cfg.attention.depth; ++d) {
      n.attention.stages[s].push_back(shared ? shared : load_layer(attention_prefix(cfg, s, d)));
    }
  }
  n.heatmap.ssc1 = load_ssc(w, "heatmap.ssc1", c, c);
  n.heatmap.ssc2 = load_ssc(w, "heatmap.ssc2", c, c);
  n.heatmap.proj = load_linear(w, "heatmap.proj", c, 1, Activation::kNone);
  for (int b = 0; b < 3; ++b) n.aux[b] = load_ssc(w, "aux.b" + std::to_string(b + 2) + ".ssc", c, cfg.n_classes);
  n.semantic = {load_linear(w, "semantic.fc1", 4 * c, c, Activation::kRelu),
                load_linear(w, "semantic.fc2", c, cfg.n_classes, Activation::kNone)};
  n.offset = {load_linear(w, "offset.fc1", 4 * c, c, Activation::kRelu),
              load_linear(w, "offset.fc2", c, 2, Activation::kNone)};
  return n;
}

// --- forward ---------------------------------------------------------------

void StageClock::lap(const char* stage) {
  const auto now = std::chrono::steady_clock::now();
  if (sink_) sink_->push_back({stage, std::chrono::duration<double, std::milli>(now - start_).count()});
  start_ = now;
}

BlockSupports block_supports(const PointCloud& p, const PipelineConfig& cfg) {
  BlockSupports s;
  const Point2Voxel base = voxelize(p, cfg.scale, cfg.range);
  s.coords[0] = base.tensor.coords();
  s.p2v[0] = base.voxel;
  for (int b = 1; b < 4; ++b) {
    if (PipelineConfig::kBlockFactor[b] == PipelineConfig::kBlockFactor[b - 1]) {
      s.coords[b] = s.coords[b - 1];
      s.p2v[b] = s.p2v[b - 1];
      continue;
    }
    auto ds = downscale_unique(s.coords[0], PipelineConfig::kBlockFactor[b]);
    s.coords[b] = std::move(ds.coords);
    s.p2v[b].resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.p2v[b][i] = s.p2v[0][i] == kCropped ? kCropped : ds.inverse[s.p2v[0][i]];
    }
  }
  return s;
}

Matrix BackboneOutput::point_features(int block) const {
  return gather_rows(point_voxel_feats.at(static_cast<std::size_t>(block)), supports.p2v.at(static_cast<std::size_t>(block)));
}

namespace {

// Mean over the points of each target voxel of the source voxel rows those
// points carry. Equivalent to scatter_mean(gather_rows(src, from), to).
Matrix pool_through_points(const Matrix& src, const std::vector<std::size_t>& from,
                           const std::vector<std::size_t>& to, std::size_t groups) {
  Matrix out(groups, src.cols());
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (to[i] == kCropped) continue;
    ++count[to[i]];
    auto dst = out.row(to[i]);
    auto s = src.row(from[i]);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += s[c];
  }
  for (std::size_t k = 0; k < groups; ++k) {
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(count[k], 1));
    for (double& v : out.row(k)) v *= inv;
  }
  return out;
}

}  // namespace

BackboneOutput backbone_forward(const PointCloud& p, const NetworkWeights& w, const PipelineConfig& cfg) {
  BackboneOutput out;
  const Point2Voxel base = voxelize(p, cfg.scale, cfg.range);
  out.supports = block_supports(p, cfg);
  for (int b = 0; b < 4; ++b) {
    Matrix in_feats = b == 0 ? base.tensor.feats()
                             : pool_through_points(out.point_voxel_feats[b - 1], out.supports.p2v[b - 1],
                                                   out.supports.p2v[b], out.supports.coords[b].size());
    const SparseTensor t(out.supports.coords[b], std::move(in_feats), cfg.block_scale(b));
    const NeighborMap nm = build_neighbor_map(t.coords(), 3);
    const SparseTensor h1 = ssc_forward(t, w.blocks[b].ssc1, Activation::kRelu, &nm);
    out.blocks[b] = ssc_forward(h1, w.blocks[b].ssc2, Activation::kRelu, &nm);
    out.point_voxel_feats[b] = linear_forward(out.blocks[b].feats(), w.blocks[b].mlp);
  }
  return out;
}

std::array<SparseTensor, 3> aux_predictions(const BackboneOutput& b, const NetworkWeights& w) {
  std::array<SparseTensor, 3> out;
  for (int k = 0; k < 3; ++k) out[k] = ssc_forward(b.blocks[k + 1], w.aux[k], Activation::kNone);
  return out;
}

ForwardResult network_forward(const PointCloud& p, const NetworkWeights& w, const PipelineConfig& cfg,
                              std::vector<StageTiming>* timings) {
  StageClock clock(timings);
  ForwardResult r;
  r.backbone = backbone_forward(p, w, cfg);
  clock.lap("backbone");
  const auto& blocks = r.backbone.blocks;
  r.attention = cross_scale_attention(blocks[1], blocks[2], blocks[3], w.attention, cfg.attention);
  clock.lap("attention");
  r.heads.heatmap = heatmap_head(r.attention, w.heatmap);
  clock.lap("heatmap_head");

  // Every input of the point heads is constant over a block-2 voxel, so the
  // heads run once per block-2 voxel and are gathered to points.
  const auto& sup = r.backbone.supports;
  const auto down = downscale_unique(sup.coords[1], 2);
  const CoordIndex idx3(sup.coords[2]);
  const CoordIndex idx4(sup.coords[3]);
  const auto to3 = hash_query(down.coords, idx3);
  const auto to4 = hash_query(down.coords, idx4);
  std::vector<std::size_t> b2_to_3(sup.coords[1].size());
  std::vector<std::size_t> b2_to_4(sup.coords[1].size());
  for (std::size_t i = 0; i < b2_to_3.size(); ++i) {
    b2_to_3[i] = to3[down.inverse[i]];
    b2_to_4[i] = to4[down.inverse[i]];
  }
  const Matrix p3 = gather_rows(r.backbone.point_voxel_feats[2], b2_to_3);
  const Matrix p4 = gather_rows(r.backbone.point_voxel_feats[3], b2_to_4);
  const Matrix pa = gather_rows(r.attention.feats(), b2_to_4);
  const Matrix* parts[] = {&r.backbone.point_voxel_feats[1], &p3, &p4, &pa};
  const Matrix fused = sup.coords[1].empty() ? Matrix(0, 4 * cfg.channels) : hconcat(parts);
  r.heads.semantic_logits = gather_rows(mlp_forward(fused, w.semantic), sup.p2v[1]);
  r.heads.offsets = gather_rows(mlp_forward(fused, w.offset), sup.p2v[1]);
  if (fused.rows() == 0) {
    r.heads.semantic_logits = Matrix(p.size(), cfg.n_classes);
    r.heads.offsets = Matrix(p.size(), 2);
  }
  clock.lap("point_heads");
  return r;
}

// --- decoding --------------------------------------------------------------

std::vector<Centroid> top_k_centroids(const std::vector<Peak>& peaks, std::size_t k, double threshold,
                                      const Vec3& bev_scale, const Range3& range) {
  std::vector<Peak> kept;
  for (const auto& pk : peaks) {
    if (pk.score >= threshold) kept.push_back(pk);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) {
    return a.score != b.score ? a.score > b.score : a.coord < b.coord;
  });
  if (kept.size() > k) kept.resize(k);
  std::vector<Centroid> out;
  out.reserve(kept.size());
  for (const auto& pk : kept) {
    out.push_back({range.min[0] + (pk.coord.x + 0.5) * bev_scale[0], range.min[1] + (pk.coord.y + 0.5) * bev_scale[1],
                   pk.score});
  }
  return out;
}

std::vector<std::uint16_t> assign_instances(const PointCloud& points, const std::vector<std::uint16_t>& semantics,
                                            const Matrix& offsets, const std::vector<Centroid>& centroids,
                                            const std::vector<char>& thing_mask) {
  const std::size_t n = points.size();
  if (semantics.size() != n || offsets.rows() != n || offsets.cols() != 2) {
    throw ShapeError("assign_instances: points, semantics and offsets disagree in length");
  }
  std::vector<std::size_t> nearest(n, kMiss);
  const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < nn; ++i) {
    const auto s = semantics[i];
    if (centroids.empty() || s >= thing_mask.size() || !thing_mask[s]) continue;
    const double sx = points.x(i) + offsets(i, 0);
    const double sy = points.y(i) + offsets(i, 1);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double dx = sx - centroids[c].x;
      const double dy = sy - centroids[c].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        nearest[i] = c;
      }
    }
  }
  std::vector<std::size_t> count(centroids.size(), 0);
  for (auto c : nearest) {
    if (c != kMiss) ++count[c];
  }
  std::vector<std::uint16_t> id(centroids.size(), 0);
  std::uint16_t next = 0;
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (count[c] > 0) id[c] = ++next;
  }
  std::vector<std::uint16_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (nearest[i] != kMiss) out[i] = id[nearest[i]];
  }
  return out;
}

std::vector<std::uint16_t> majority_vote_refine(const std::vector<std::uint16_t>& semantics,
                                                const std::vector<std::uint16_t>& instances) {
  if (semantics.size() != instances.size()) throw ShapeError("majority_vote_refine: length mismatch");
  std::map<std::uint16_t, std::map<std::uint16_t, std::size_t>> votes;
  for (std::size_t i = 0; i < semantics.size(); ++i) {
    if (instances[i] != 0) ++votes[instances[i]][semantics[i]];
  }
  std::map<std::uint16_t, std::uint16_t> winner;
  for (const auto& [inst, hist] : votes) {
    std::uint16_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [cls, cnt] : hist) {  // ascending class id: ties keep the smaller
      if (cnt > best_count) {
        best = cls;
        best_count = cnt;
      }
    }
    winner[inst] = best;
  }
  std::vector<std::uint16_t> out = semantics;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (instances[i] != 0) out[i] = winner[instances[i]];
  }
  return out;
}

std::vector<std::uint16_t> semantic_argmax(const Matrix& logits) {
  std::vector<std::uint16_t> out(logits.rows(), 0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 1;
    for (std::size_t c = 2; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[i] = logits.cols() > 1 ? static_cast<std::uint16_t>(best) : 0;
  }
  return out;
}

InstanceTargets instance_targets(const PointCloud& p, const PointLabels& gt, const std::vector<char>& thing_mask) {
  if (gt.size() != p.size()) throw ShapeError("instance_targets: label count != point count");
  struct Acc {
    double x = 0, y = 0, z = 0;
    std::size_t n = 0;
  };
  auto key = [&](std::size_t i) { return (static_cast<std::uint32_t>(gt.semantic[i]) << 16) | gt.instance[i]; };
  auto is_thing = [&](std::size_t i) {
    const auto s = gt.semantic[i];
    return gt.instance[i] != 0 && s < thing_mask.size() && thing_mask[s];
  };
  std::map<std::uint32_t, Acc> groups;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!is_thing(i)) continue;
    auto& a = groups[key(i)];
    a.x += p.x(i);
    a.y += p.y(i);
    a.z += p.z(i);
    ++a.n;
  }
  InstanceTargets t;
  t.offsets = Matrix(p.size(), 2);
  t.thing.assign(p.size(), 0);
  for (const auto& [k, a] : groups) {
    const double n = static_cast<double>(a.n);
    t.centers.push_back({a.x / n, a.y / n, a.z / n, static_cast<int>(k >> 16)});
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!is_thing(i)) continue;
    const auto& a = groups[key(i)];
    const double n = static_cast<double>(a.n);
    t.offsets(i, 0) = a.x / n - p.x(i);
    t.offsets(i, 1) = a.y / n - p.y(i);
    t.thing[i] = 1;
  }
  return t;
}

HeadOutputs oracle_heads(const PointCloud& p, const PointLabels& gt, const std::vector<VoxelCoord>& support_4s,
                         const PipelineConfig& cfg) {
  const InstanceTargets t = instance_targets(p, gt, cfg.thing_mask());
  std::vector<VoxelCoord> bev(support_4s);
  for (auto& c : bev) c.z = 0;
  bev = downscale_unique(bev, 1).coords;
  HeadOutputs h;
  h.heatmap = gaussian_heatmap_target(t.centers, bev, cfg.bev_scale(), cfg.range, cfg.target, support_4s);
  h.offsets = t.offsets;
  h.semantic_logits = Matrix(p.size(), cfg.n_classes);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (gt.semantic[i] >= cfg.n_classes) throw RangeError("oracle_heads: semantic id out of range");
    h.semantic_logits(i, gt.semantic[i]) = 1.0;
  }
  return h;
}

PanopticPrediction decode(const PointCloud& p, const HeadOutputs& heads, const std::vector<std::size_t>& base_p2v,
                          const PipelineConfig& cfg, std::vector<StageTiming>* timings) {
  StageClock clock(timings);
  PanopticPrediction out;
  const auto peaks = sparse_max_pool_peaks(heads.heatmap, cfg.pool_window);
  out.centroids = top_k_centroids(peaks, cfg.max_centroids, cfg.score_threshold, cfg.bev_scale(), cfg.range);
  clock.lap("centroids");
  std::vector<std::uint16_t> sem = semantic_argmax(heads.semantic_logits);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (base_p2v[i] == kCropped) sem[i] = 0;
  }
  out.instance = assign_instances(p, sem, heads.offsets, out.centroids, cfg.thing_mask());
  out.semantic = majority_vote_refine(sem, out.instance);
  clock.lap("panoptic_decode");
  return out;
}

PanopticPrediction run_pipeline(const PointCloud& p, const NetworkWeights& w, const PipelineConfig& cfg,
                                std::vector<StageTiming>* timings) {
  std::vector<std::size_t> p2v(p.size(), kCropped);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (cfg.range.contains(p.x(i), p.y(i), p.z(i))) p2v[i] = 0;
  }
  if (std::none_of(p2v.begin(), p2v.end(), [](std::size_t v) { return v != kCropped; })) {
    return {std::vector<std::uint16_t>(p.size(), 0), std::vector<std::uint16_t>(p.size(), 0), {}};
  }
  const ForwardResult fwd = network_forward(p, w, cfg, timings);
  return decode(p, fwd.heads, fwd.backbone.supports.p2v[0], cfg, timings);
}

PanopticPrediction run_pipeline_oracle(const PointCloud& p, const PointLabels& gt, const PipelineConfig& cfg) {
  if (gt.size() != p.size()) throw ShapeError("oracle pipeline: label count != point count");
  const BlockSupports s = block_supports(p, cfg);
  if (s.coords[0].empty()) {
    return {std::vector<std::uint16_t>(p.size(), 0), std::vector<std::uint16_t>(p.size(), 0), {}};
  }
  const HeadOutputs h = oracle_heads(p, gt, s.coords[3], cfg);
  return decode(p, h, s.p2v[0], cfg);
}

// --- losses ----------------------------------------------------------------

LossReport frame_loss(const PointCloud& p, const PointLabels& gt, const NetworkWeights& w, const PipelineConfig& cfg) {
  if (gt.size() != p.size()) throw ShapeError("frame_loss: label count != point count");
  const ForwardResult fwd = network_forward(p, w, cfg);
  const auto& sup = fwd.backbone.supports;
  if (sup.coords[0].empty()) return total_loss(0, 0, 0, 0);

  const InstanceTargets t = instance_targets(p, gt, cfg.thing_mask());
  const auto& d = fwd.heads.heatmap.tensor();
  const CentroidHeatmap target =
      gaussian_heatmap_target(t.centers, d.coords(), cfg.bev_scale(), cfg.range, cfg.target, sup.coords[3]);
  const double l_d = heatmap_focal_loss(d.feats(), target.tensor().feats(), cfg.heatmap_focal).loss;

  std::vector<char> offset_mask(p.size(), 0);
  PointLabels masked = gt;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool in_range = sup.p2v[0][i] != kCropped;
    offset_mask[i] = t.thing[i] && in_range;
    if (!in_range) masked.semantic[i] = 0;
  }
  const double l_o = l1_loss(fwd.heads.offsets, t.offsets, offset_mask).loss;

  double l_s = 0.0;
  if (std::any_of(masked.semantic.begin(), masked.semantic.end(), [](auto s) { return s != 0; })) {
    l_s = lovasz_softmax_loss(fwd.heads.semantic_logits, masked.semantic, 0).loss +
          semantic_focal_loss(fwd.heads.semantic_logits, masked.semantic, cfg.semantic_focal).loss;
  }

  std::vector<AuxBlock> aux(3);
  for (int k = 0; k < 3; ++k) {
    aux[k].features = &fwd.backbone.blocks[k + 1];
    aux[k].head = &w.aux[k];
    aux[k].label_coords = sup.coords[k + 1];
    aux[k].soft_labels = soft_voxel_labels(gt, sup.p2v[k + 1], sup.coords[k + 1].size(), cfg.n_classes);
  }
  const double l_v = multi_scale_sparse_loss(aux);
  return total_loss(l_d, l_o, l_s, l_v);
}

}  // namespace scan
