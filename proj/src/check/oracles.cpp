#include "scan/check/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace scan::oracle {

DenseGrid::DenseGrid(const std::vector<VoxelCoord>& coords, std::size_t channels, int pad) : channels_(channels) {
  if (coords.empty()) {
    lo_ = hi_ = {0, 0, 0};
  } else {
    lo_ = hi_ = coords[0];
    for (const auto& c : coords) {
      lo_ = {std::min(lo_.x, c.x), std::min(lo_.y, c.y), std::min(lo_.z, c.z)};
      hi_ = {std::max(hi_.x, c.x), std::max(hi_.y, c.y), std::max(hi_.z, c.z)};
    }
  }
  lo_ = {lo_.x - pad, lo_.y - pad, lo_.z - pad};
  hi_ = {hi_.x + pad, hi_.y + pad, hi_.z + pad};
  nx_ = std::int64_t{hi_.x} - lo_.x + 1;
  ny_ = std::int64_t{hi_.y} - lo_.y + 1;
  nz_ = std::int64_t{hi_.z} - lo_.z + 1;
  const auto cells = static_cast<std::size_t>(nx_ * ny_ * nz_);
  occ_.assign(cells, 0);
  vals_.assign(cells * channels_, 0.0);
}

bool DenseGrid::inside(VoxelCoord c) const {
  return c.x >= lo_.x && c.y >= lo_.y && c.z >= lo_.z && c.x <= hi_.x && c.y <= hi_.y && c.z <= hi_.z;
}

std::size_t DenseGrid::cell(VoxelCoord c) const {
  return static_cast<std::size_t>(((std::int64_t{c.x} - lo_.x) * ny_ + (c.y - lo_.y)) * nz_ + (c.z - lo_.z));
}

void DenseGrid::set(VoxelCoord c, std::span<const double> v) {
  occ_[cell(c)] = 1;
  std::copy(v.begin(), v.end(), at(c));
}

namespace {

std::int32_t ratio(double to, double from) {
  const double r = to / from;
  const auto k = static_cast<std::int32_t>(std::llround(r));
  if (k < 1 || std::abs(r - k) > 1e-9 * r) throw ScaleError("dense oracle: non-integer scale ratio");
  return k;
}

// Groups by coarse coordinate, scanning the dense fine grid cell by cell.
SparseTensor dense_pool(const SparseTensor& t, std::array<std::int32_t, 3> f, bool flatten, const Vec3& scale) {
  DenseGrid g(t.coords(), t.channels());
  for (std::size_t i = 0; i < t.size(); ++i) g.set(t.coords()[i], t.feats().row(i));
  std::map<VoxelCoord, std::vector<double>> out;
  const auto lo = g.lo(), hi = g.hi();
  for (std::int32_t x = lo.x; x <= hi.x; ++x) {
    for (std::int32_t y = lo.y; y <= hi.y; ++y) {
      for (std::int32_t z = lo.z; z <= hi.z; ++z) {
        if (!g.occupied({x, y, z})) continue;
        VoxelCoord key{floor_div(x, f[0]), floor_div(y, f[1]), flatten ? 0 : floor_div(z, f[2])};
        const double* v = g.at({x, y, z});
        auto [it, fresh] = out.try_emplace(key, std::vector<double>(v, v + t.channels()));
        if (!fresh) {
          for (std::size_t c = 0; c < t.channels(); ++c) it->second[c] = std::max(it->second[c], v[c]);
        }
      }
    }
  }
  std::vector<VoxelCoord> coords;
  Matrix feats(out.size(), t.channels());
  std::size_t r = 0;
  for (const auto& [c, v] : out) {
    coords.push_back(c);
    std::copy(v.begin(), v.end(), feats.row(r++).begin());
  }
  return SparseTensor(std::move(coords), std::move(feats), scale);
}

}  // namespace

SparseTensor dense_sparse_align(const SparseTensor& t, const Vec3& to_scale) {
  const std::array<std::int32_t, 3> f{ratio(to_scale[0], t.scale()[0]), ratio(to_scale[1], t.scale()[1]),
                                      ratio(to_scale[2], t.scale()[2])};
  return dense_pool(t, f, false, to_scale);
}

SparseTensor dense_flatten_bev(const SparseTensor& t) { return dense_pool(t, {1, 1, 1}, true, t.scale()); }

std::vector<Peak> dense_peaks(const CentroidHeatmap& d, int window) {
  const int r = window / 2;
  const auto& t = d.tensor();
  DenseGrid g(t.coords(), 1, r);
  for (std::size_t i = 0; i < t.size(); ++i) g.set(t.coords()[i], t.feats().row(i));
  std::vector<Peak> peaks;
  const auto lo = g.lo(), hi = g.hi();
  constexpr double kPad = -std::numeric_limits<double>::infinity();
  for (std::int32_t x = lo.x + r; x <= hi.x - r; ++x) {
    for (std::int32_t y = lo.y + r; y <= hi.y - r; ++y) {
      if (!g.occupied({x, y, 0})) continue;
      double best = kPad;
      for (int dx = -r; dx <= r; ++dx) {
        for (int dy = -r; dy <= r; ++dy) {
          const VoxelCoord n{x + dx, y + dy, 0};
          best = std::max(best, g.occupied(n) ? *g.at(n) : kPad);
        }
      }
      const double own = *g.at({x, y, 0});
      if (own == best) peaks.push_back({{x, y, 0}, own});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.score != b.score ? a.score > b.score : a.coord < b.coord;
  });
  return peaks;
}

SparseTensor dense_ssc(const SparseTensor& t, const SscWeights& w, Activation act) {
  const int r = w.kernel_size / 2;
  const int k = w.kernel_size;
  DenseGrid g(t.coords(), t.channels(), r);
  for (std::size_t i = 0; i < t.size(); ++i) g.set(t.coords()[i], t.feats().row(i));
  Matrix out(t.size(), w.c_out);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto c = t.coords()[i];
    auto acc = out.row(i);
    for (std::size_t co = 0; co < w.c_out; ++co) acc[co] = w.bias[co];
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz) {
          const VoxelCoord n{c.x + dx, c.y + dy, c.z + dz};
          if (!g.occupied(n)) continue;
          const std::size_t o = (static_cast<std::size_t>(dx + r) * k + (dy + r)) * k + (dz + r);
          const double* f = g.at(n);
          for (std::size_t ci = 0; ci < w.c_in; ++ci) {
            for (std::size_t co = 0; co < w.c_out; ++co) {
              acc[co] += f[ci] * w.weight[(o * w.c_in + ci) * w.c_out + co];
            }
          }
        }
      }
    }
    if (act == Activation::kRelu) {
      for (double& v : acc) v = std::max(v, 0.0);
    }
  }
  return SparseTensor(t.coords(), std::move(out), t.scale());
}

double lovasz_softmax_bruteforce(const Matrix& logits, const std::vector<std::uint16_t>& labels,
                                 std::optional<std::uint16_t> ignore) {
  const std::size_t n_cls = logits.cols();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!ignore || labels[i] != *ignore) rows.push_back(i);
  }
  // Softmax written out directly.
  std::vector<std::vector<double>> prob(rows.size(), std::vector<double>(n_cls));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    double z = 0.0;
    for (std::size_t c = 0; c < n_cls; ++c) z += std::exp(logits(rows[a], c));
    for (std::size_t c = 0; c < n_cls; ++c) prob[a][c] = std::exp(logits(rows[a], c)) / z;
  }
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_cls; ++c) {
    std::vector<char> fg(rows.size());
    bool any = false;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      fg[a] = labels[rows[a]] == c;
      any = any || fg[a];
    }
    if (!any) continue;
    ++present;
    std::vector<std::pair<double, std::size_t>> err;
    for (std::size_t a = 0; a < rows.size(); ++a) err.push_back({std::abs((fg[a] ? 1.0 : 0.0) - prob[a][c]), a});
    std::sort(err.begin(), err.end(), [](auto& l, auto& r) { return l.first > r.first; });
    auto jaccard_loss = [&](std::size_t k) {
      std::set<std::size_t> mis;
      for (std::size_t j = 0; j < k; ++j) mis.insert(err[j].second);
      std::size_t inter = 0, uni = 0;
      for (std::size_t a = 0; a < rows.size(); ++a) {
        const bool m = mis.count(a) != 0;
        if (fg[a] && !m) ++inter;
        if (fg[a] || m) ++uni;
      }
      return uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
    };
    double prev = 0.0;
    for (std::size_t k = 1; k <= err.size(); ++k) {
      const double j = jaccard_loss(k);
      total += err[k - 1].first * (j - prev);
      prev = j;
    }
  }
  return present ? total / static_cast<double>(present) : 0.0;
}

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace {

using Segment = std::vector<std::size_t>;

std::map<std::pair<std::uint16_t, std::uint16_t>, Segment> segments(const PointLabels& l,
                                                                      const std::vector<std::size_t>& keep,
                                                                      const ClassSpec& spec) {
  std::map<std::pair<std::uint16_t, std::uint16_t>, Segment> out;
  for (auto i : keep) {
    const auto c = l.semantic[i];
    if (spec.is_stuff(c)) out[{c, 0}].push_back(i);
    if (spec.is_thing(c) && l.instance[i] != 0) out[{c, l.instance[i]}].push_back(i);
  }
  return out;
}

double iou(const Segment& a, const Segment& b) {
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(a.size() + b.size() - both.size());
}

struct Best {
  std::size_t pairs = 0;
  double iou_sum = 0.0;
};

// Assigns gt segment g (and every later one) to an unused pred or to nothing.
void enumerate(std::size_t g, const std::vector<std::vector<double>>& m, std::vector<char>& used, std::size_t pairs,
               double sum, Best& best) {
  if (g == m.size()) {
    if (pairs > best.pairs || (pairs == best.pairs && sum > best.iou_sum)) best = {pairs, sum};
    return;
  }
  enumerate(g + 1, m, used, pairs, sum, best);
  for (std::size_t p = 0; p < used.size(); ++p) {
    if (used[p] || !(m[g][p] > 0.5)) continue;
    used[p] = 1;
    enumerate(g + 1, m, used, pairs + 1, sum + m[g][p], best);
    used[p] = 0;
  }
}

}  // namespace

PanopticStats match_bruteforce(const PointLabels& pred, const PointLabels& gt, const ClassSpec& spec) {
  const std::size_t n = spec.n_classes();
  PanopticStats s(n);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.semantic[i] != 0) keep.push_back(i);
  }
  for (auto i : keep) ++s.confusion[gt.semantic[i] * n + pred.semantic[i]];
  const auto gs = segments(gt, keep, spec);
  const auto ps = segments(pred, keep, spec);
  for (std::size_t c = 1; c < n; ++c) {
    std::vector<const Segment*> g, p;
    for (const auto& [k, seg] : gs) {
      if (k.first == c) g.push_back(&seg);
    }
    for (const auto& [k, seg] : ps) {
      if (k.first == c) p.push_back(&seg);
    }
    std::vector<std::vector<double>> m(g.size(), std::vector<double>(p.size()));
    for (std::size_t a = 0; a < g.size(); ++a) {
      for (std::size_t b = 0; b < p.size(); ++b) m[a][b] = iou(*g[a], *p[b]);
    }
    std::vector<char> used(p.size(), 0);
    Best best;
    enumerate(0, m, used, 0, 0.0, best);
    s.tp[c] = best.pairs;
    s.iou_sum[c] = best.iou_sum;
    s.fn[c] = g.size() - best.pairs;
    s.fp[c] = p.size() - best.pairs;
  }
  return s;
}

Matrix soft_labels_counting(const PointLabels& labels, const std::vector<std::size_t>& p2v, std::size_t voxels,
                            std::size_t n_classes) {
  Matrix out(voxels, n_classes);
  for (std::size_t v = 0; v < voxels; ++v) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::size_t members = 0, hits = 0;
      for (std::size_t i = 0; i < p2v.size(); ++i) {
        if (p2v[i] != v) continue;
        ++members;
        if (labels.semantic[i] == c) ++hits;
      }
      out(v, c) = static_cast<double>(hits) / static_cast<double>(members);
    }
  }
  return out;
}

std::vector<std::uint16_t> histogram_vote(const std::vector<std::uint16_t>& semantics,
                                          const std::vector<std::uint16_t>& instances) {
  std::vector<std::uint16_t> out = semantics;
  std::set<std::uint16_t> ids(instances.begin(), instances.end());
  ids.erase(0);
  for (auto id : ids) {
    std::vector<std::size_t> hist(65536, 0);
    for (std::size_t i = 0; i < semantics.size(); ++i) {
      if (instances[i] == id) ++hist[semantics[i]];
    }
    const auto best = static_cast<std::uint16_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
    for (std::size_t i = 0; i < semantics.size(); ++i) {
      if (instances[i] == id) out[i] = best;
    }
  }
  return out;
}

std::vector<VoxelCoord> random_coords(std::mt19937_64& rng, std::size_t n, std::int32_t lo, std::int32_t hi,
                                      bool flat) {
  std::uniform_int_distribution<std::int32_t> u(lo, hi);
  std::set<VoxelCoord> seen;
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo + 1);
  const std::uint64_t cap = flat ? span * span : span * span * span;
  n = std::min<std::uint64_t>(n, cap);
  std::vector<VoxelCoord> out;
  while (out.size() < n) {
    VoxelCoord c{u(rng), u(rng), flat ? 0 : u(rng)};
    if (seen.insert(c).second) out.push_back(c);
  }
  return out;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = g(rng);
  return m;
}

SparseTensor random_tensor(std::mt19937_64& rng, std::size_t n, std::size_t channels, std::int32_t lo,
                           std::int32_t hi, Vec3 scale) {
  auto coords = random_coords(rng, n, lo, hi);
  Matrix f = random_matrix(rng, coords.size(), channels);
  return SparseTensor(std::move(coords), std::move(f), scale);
}

SscWeights random_ssc(std::mt19937_64& rng, std::size_t c_in, std::size_t c_out, int kernel_size) {
  SscWeights w;
  w.kernel_size = kernel_size;
  w.c_in = c_in;
  w.c_out = c_out;
  std::normal_distribution<double> g(0.0, 0.3);
  w.weight.resize(w.offsets() * c_in * c_out);
  for (double& v : w.weight) v = g(rng);
  w.bias.resize(c_out);
  for (double& v : w.bias) v = g(rng);
  return w;
}

}  // namespace scan::oracle
