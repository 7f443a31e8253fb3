#include "scan/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace scan {

namespace {

constexpr std::uint64_t kBias = 1ULL << 20;
constexpr std::uint64_t kMask21 = (1ULL << 21) - 1;

void check_component(std::int32_t v, const char* axis) {
  if (v < kCoordMin || v > kCoordMax) {
    throw RangeError(std::string("voxel coordinate ") + axis + " = " + std::to_string(v) +
                     " outside packing range");
  }
}

std::int32_t integer_ratio(double to, double from, int axis) {
  if (!(from > 0.0) || !(to > 0.0)) throw ScaleError("scales must be positive");
  const double r = to / from;
  const double rounded = std::round(r);
  if (rounded < 1.0 || std::abs(r - rounded) > 1e-9 * rounded) {
    throw ScaleError("scale ratio on axis " + std::to_string(axis) + " is " + std::to_string(r) +
                     ", not a positive integer");
  }
  return static_cast<std::int32_t>(rounded);
}

}  // namespace

std::uint64_t pack_coord(VoxelCoord c) {
  check_component(c.x, "x");
  check_component(c.y, "y");
  check_component(c.z, "z");
  return ((static_cast<std::uint64_t>(c.x) + kBias) << 42) |
         ((static_cast<std::uint64_t>(c.y) + kBias) << 21) | (static_cast<std::uint64_t>(c.z) + kBias);
}

VoxelCoord unpack_coord(std::uint64_t key) {
  auto axis = [](std::uint64_t bits) {
    return static_cast<std::int32_t>(static_cast<std::int64_t>(bits & kMask21) - static_cast<std::int64_t>(kBias));
  };
  return {axis(key >> 42), axis(key >> 21), axis(key)};
}

SparseTensor::SparseTensor(std::vector<VoxelCoord> coords, Matrix feats, Vec3 scale)
    : coords_(std::move(coords)), feats_(std::move(feats)), scale_(scale) {
  if (feats_.rows() != coords_.size()) {
    throw ShapeError("sparse tensor: " + std::to_string(coords_.size()) + " coords but " +
                     std::to_string(feats_.rows()) + " feature rows");
  }
  for (double v : feats_.data()) {
    if (!std::isfinite(v)) throw RangeError("sparse tensor: non-finite feature");
  }
  std::vector<std::uint64_t> keys(coords_.size());
  for (std::size_t i = 0; i < coords_.size(); ++i) keys[i] = pack_coord(coords_[i]);
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw DuplicateKeyError("sparse tensor: duplicate coordinate");
  }
}

CoordIndex::CoordIndex(const std::vector<VoxelCoord>& coords) {
  map_.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto [it, inserted] = map_.emplace(pack_coord(coords[i]), i);
    if (!inserted) {
      const auto& c = coords[i];
      throw DuplicateKeyError("duplicate coordinate (" + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                              std::to_string(c.z) + ") at rows " + std::to_string(it->second) + " and " +
                              std::to_string(i));
    }
  }
}

std::size_t CoordIndex::find(VoxelCoord c) const {
  if (c.x < kCoordMin || c.x > kCoordMax || c.y < kCoordMin || c.y > kCoordMax || c.z < kCoordMin ||
      c.z > kCoordMax) {
    return kMiss;
  }
  auto it = map_.find(pack_coord(c));
  return it == map_.end() ? kMiss : it->second;
}

std::vector<std::size_t> hash_query(const std::vector<VoxelCoord>& targets, const CoordIndex& index) {
  std::vector<std::size_t> e(targets.size());
  const auto n = static_cast<std::int64_t>(targets.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) e[j] = index.find(targets[j]);
  return e;
}

SparseTensor rearrange(const SparseTensor& t, const std::vector<std::size_t>& mask) {
  std::vector<VoxelCoord> coords(mask.size());
  Matrix feats(mask.size(), t.channels());
  for (std::size_t j = 0; j < mask.size(); ++j) {
    const std::size_t i = mask[j];
    if (i == kMiss || i >= t.size()) {
      throw AlignmentError("rearrange: mask entry " + std::to_string(j) + " has no matching voxel");
    }
    coords[j] = t.coords()[i];
    auto src = t.feats().row(i);
    std::copy(src.begin(), src.end(), feats.row(j).begin());
  }
  return SparseTensor(std::move(coords), std::move(feats), t.scale());
}

SparseTensor align_to_support(const SparseTensor& t, const std::vector<VoxelCoord>& support) {
  const CoordIndex index(t.coords());
  const auto mask = hash_query(support, index);
  Matrix feats(support.size(), t.channels());
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (mask[j] == kMiss) continue;
    auto src = t.feats().row(mask[j]);
    std::copy(src.begin(), src.end(), feats.row(j).begin());
  }
  return SparseTensor(support, std::move(feats), t.scale());
}

Downscaled downscale_unique(const std::vector<VoxelCoord>& coords, std::array<std::int32_t, 3> factor) {
  for (auto f : factor) {
    if (f < 1) throw ScaleError("downscale factor must be >= 1");
  }
  const std::size_t n = coords.size();
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = coords[i];
    keys[i] = pack_coord({floor_div(c.x, factor[0]), floor_div(c.y, factor[1]), floor_div(c.z, factor[2])});
  }
  // Packing is monotone in (x, y, z) lexicographic order, so sorting keys
  // sorts coordinates.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  Downscaled out;
  out.inverse.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (k == 0 || keys[i] != keys[order[k - 1]]) out.coords.push_back(unpack_coord(keys[i]));
    out.inverse[i] = out.coords.size() - 1;
  }
  return out;
}

Matrix scatter_max(const Matrix& feats, const std::vector<std::size_t>& inverse, std::size_t groups) {
  if (inverse.size() != feats.rows()) throw ShapeError("scatter_max: inverse length != feature rows");
  const std::size_t c = feats.cols();
  Matrix out(groups, c, -std::numeric_limits<double>::infinity());
  std::vector<char> seen(groups, 0);
  for (std::size_t i = 0; i < inverse.size(); ++i) {
    const std::size_t k = inverse[i];
    if (k >= groups) throw ConsistencyError("scatter_max: inverse entry out of range");
    seen[k] = 1;
    auto dst = out.row(k);
    auto src = feats.row(i);
    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ConsistencyError("scatter_max: output group received no input");
  }
  return out;
}

Matrix scatter_mean(const Matrix& feats, const std::vector<std::size_t>& inverse, std::size_t groups) {
  if (inverse.size() != feats.rows()) throw ShapeError("scatter_mean: inverse length != feature rows");
  const std::size_t c = feats.cols();
  Matrix out(groups, c);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < inverse.size(); ++i) {
    const std::size_t k = inverse[i];
    if (k == kMiss) continue;
    if (k >= groups) throw ConsistencyError("scatter_mean: inverse entry out of range");
    ++count[k];
    auto dst = out.row(k);
    auto src = feats.row(i);
    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
  }
  for (std::size_t k = 0; k < groups; ++k) {
    if (count[k] == 0) continue;
    const double inv = 1.0 / static_cast<double>(count[k]);
    for (double& v : out.row(k)) v *= inv;
  }
  return out;
}

SparseTensor sparse_align(const SparseTensor& t, const Vec3& to_scale) {
  const std::array<std::int32_t, 3> factor{integer_ratio(to_scale[0], t.scale()[0], 0),
                                           integer_ratio(to_scale[1], t.scale()[1], 1),
                                           integer_ratio(to_scale[2], t.scale()[2], 2)};
  auto ds = downscale_unique(t.coords(), factor);
  Matrix feats = scatter_max(t.feats(), ds.inverse, ds.coords.size());
  return SparseTensor(std::move(ds.coords), std::move(feats), to_scale);
}

SparseTensor flatten_bev(const SparseTensor& t) {
  std::vector<VoxelCoord> flat(t.coords());
  for (auto& c : flat) c.z = 0;
  auto ds = downscale_unique(flat, 1);
  Matrix feats = scatter_max(t.feats(), ds.inverse, ds.coords.size());
  return SparseTensor(std::move(ds.coords), std::move(feats), t.scale());
}

CentroidHeatmap::CentroidHeatmap(SparseTensor t) : t_(std::move(t)) {
  if (!t_.empty() && t_.channels() != 1) throw ShapeError("centroid heatmap must have one channel");
  for (const auto& c : t_.coords()) {
    if (c.z != 0) throw ConsistencyError("centroid heatmap voxel with z != 0");
  }
  for (double v : t_.feats().data()) {
    if (v < 0.0 || v > 1.0) throw RangeError("centroid heatmap activation outside [0, 1]");
  }
}

std::vector<Peak> sparse_max_pool_peaks(const CentroidHeatmap& d, int window) {
  if (window < 1 || window % 2 == 0) throw ConfigError("peak window must be odd and >= 1");
  const auto& coords = d.tensor().coords();
  const CoordIndex index(coords);
  const int r = window / 2;
  const auto n = static_cast<std::int64_t>(coords.size());
  std::vector<char> is_peak(coords.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double own = d.activation(i);
    bool peak = true;
    for (int dx = -r; dx <= r && peak; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        const std::size_t j = index.find({coords[i].x + dx, coords[i].y + dy, 0});
        if (j != kMiss && d.activation(j) > own) {
          peak = false;
          break;
        }
      }
    }
    is_peak[i] = peak;
  }
  std::vector<Peak> peaks;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (is_peak[i]) peaks.push_back({coords[i], d.activation(i)});
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.score != b.score ? a.score > b.score : a.coord < b.coord;
  });
  return peaks;
}

}  // namespace scan
