#pragma once

// Coordinate-indexed sparse voxel tensors and the operators over them:
// packing/indexing, downscale + max aggregation (alignment), voxel-wise
// rearrangement, BEV flattening and peak extraction.

#include <compare>
#include <cstdint>
#include <limits>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "scan/core.hpp"

namespace scan {

struct VoxelCoord {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelCoord&) const = default;
};

inline constexpr std::int32_t kCoordMin = -(1 << 20);
inline constexpr std::int32_t kCoordMax = (1 << 20) - 1;

// Injective 21-bit-per-axis packing. Throws RangeError outside
// [kCoordMin, kCoordMax].
std::uint64_t pack_coord(VoxelCoord c);
VoxelCoord unpack_coord(std::uint64_t key);

// Floor division rounding toward negative infinity.
constexpr std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  std::int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

class SparseTensor {
 public:
  SparseTensor() = default;
  // Validates: row count matches, entries finite, coords duplicate-free.
  SparseTensor(std::vector<VoxelCoord> coords, Matrix feats, Vec3 scale);

  std::size_t size() const { return coords_.size(); }
  std::size_t channels() const { return feats_.cols(); }
  bool empty() const { return coords_.empty(); }

  const std::vector<VoxelCoord>& coords() const { return coords_; }
  const Matrix& feats() const { return feats_; }
  const Vec3& scale() const { return scale_; }

  bool operator==(const SparseTensor&) const = default;

 private:
  std::vector<VoxelCoord> coords_;
  Matrix feats_;
  Vec3 scale_{1.0, 1.0, 1.0};
};

inline constexpr std::size_t kMiss = std::numeric_limits<std::size_t>::max();

// Packed-key -> row lookup. Read-only after build, safe for concurrent use.
class CoordIndex {
 public:
  CoordIndex() = default;
  // Throws DuplicateKeyError when a coordinate repeats.
  explicit CoordIndex(const std::vector<VoxelCoord>& coords);

  std::size_t size() const { return map_.size(); }
  std::size_t find(VoxelCoord c) const;

 private:
  absl::flat_hash_map<std::uint64_t, std::size_t> map_;
};

inline CoordIndex build_index(const std::vector<VoxelCoord>& coords) { return CoordIndex(coords); }

// E[j] = row of targets[j] in the index, or kMiss.
std::vector<std::size_t> hash_query(const std::vector<VoxelCoord>& targets, const CoordIndex& index);

// Output row j is input row mask[j]. Throws AlignmentError on kMiss.
SparseTensor rearrange(const SparseTensor& t, const std::vector<std::size_t>& mask);

// Restricts `t` onto `support`: rows of `support` present in `t` copy their
// features, rows absent from `t` get zeros; extra rows of `t` are dropped.
SparseTensor align_to_support(const SparseTensor& t, const std::vector<VoxelCoord>& support);

struct Downscaled {
  std::vector<VoxelCoord> coords;    // unique, lexicographically sorted
  std::vector<std::size_t> inverse;  // input row -> unique row
};

Downscaled downscale_unique(const std::vector<VoxelCoord>& coords, std::array<std::int32_t, 3> factor);
inline Downscaled downscale_unique(const std::vector<VoxelCoord>& coords, std::int32_t factor) {
  return downscale_unique(coords, {factor, factor, factor});
}

// Per-channel max over rows sharing an inverse target.
Matrix scatter_max(const Matrix& feats, const std::vector<std::size_t>& inverse, std::size_t groups);

// Per-channel mean over rows sharing an inverse target. Inverse entries equal
// to kMiss are skipped.
Matrix scatter_mean(const Matrix& feats, const std::vector<std::size_t>& inverse, std::size_t groups);

// Downscale to `to_scale` (integer multiple of t.scale per axis) and
// max-aggregate. Throws ScaleError for non-integer ratios.
SparseTensor sparse_align(const SparseTensor& t, const Vec3& to_scale);

// Sets z = 0 and max-aggregates voxels that share (x, y).
SparseTensor flatten_bev(const SparseTensor& t);

// BEV activation map: one channel, z = 0, values in [0, 1].
class CentroidHeatmap {
 public:
  CentroidHeatmap() = default;
  explicit CentroidHeatmap(SparseTensor t);

  const SparseTensor& tensor() const { return t_; }
  std::size_t size() const { return t_.size(); }
  double activation(std::size_t i) const { return t_.feats()(i, 0); }

 private:
  SparseTensor t_;
};

struct Peak {
  VoxelCoord coord;
  double score = 0.0;
  bool operator==(const Peak&) const = default;
};

// Voxels whose activation equals the max over the window x window BEV
// neighbourhood of valid voxels. Ties are all kept. Sorted by score
// descending, then coordinate.
std::vector<Peak> sparse_max_pool_peaks(const CentroidHeatmap& d, int window = 3);

}  // namespace scan
