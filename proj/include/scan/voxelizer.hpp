#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "scan/core.hpp"
#include "scan/sparse.hpp"

namespace scan {

// N x 4 rows of (x, y, z, intensity).
class PointCloud {
 public:
  PointCloud() : data_(0, 4) {}
  explicit PointCloud(Matrix data);

  std::size_t size() const { return data_.rows(); }
  bool empty() const { return data_.rows() == 0; }
  const Matrix& data() const { return data_; }
  double x(std::size_t i) const { return data_(i, 0); }
  double y(std::size_t i) const { return data_(i, 1); }
  double z(std::size_t i) const { return data_(i, 2); }
  double intensity(std::size_t i) const { return data_(i, 3); }

  bool operator==(const PointCloud&) const = default;

 private:
  Matrix data_;
};

struct PointLabels {
  std::vector<std::uint16_t> semantic;
  std::vector<std::uint16_t> instance;

  std::size_t size() const { return semantic.size(); }
  bool operator==(const PointLabels&) const = default;
};

struct Range3 {
  Vec3 min{-48.0, -48.0, -3.0};
  Vec3 max{48.0, 48.0, 1.5};

  bool contains(double x, double y, double z) const {
    return x >= min[0] && x < max[0] && y >= min[1] && y < max[1] && z >= min[2] && z < max[2];
  }
};

inline constexpr std::size_t kCropped = kMiss;

struct Point2Voxel {
  std::vector<std::size_t> voxel;  // per point; kCropped when outside the range
  SparseTensor tensor;
};

struct Cropped {
  PointCloud points;
  std::vector<std::size_t> kept;  // original index of each kept point
};

// Half-open [min, max) on every axis.
Cropped crop_points(const PointCloud& p, const Range3& range);

// Voxel coordinate of a point: floor((coord - range.min) / scale).
VoxelCoord voxel_of(double x, double y, double z, const Vec3& scale, const Range3& range);

// Grid extent (cells per axis) of `range` at `scale`.
std::array<std::int32_t, 3> grid_extent(const Vec3& scale, const Range3& range);

// Voxelizes every in-range point; voxel features are per-channel means of the
// member points' (x, y, z, intensity) rows. Coordinates are sorted
// lexicographically.
Point2Voxel voxelize(const PointCloud& p, const Vec3& scale, const Range3& range);

// Row i = voxel feature of point i; cropped points get a zero row. Throws
// ConsistencyError when the map references a voxel the tensor does not have.
Matrix gather_voxel_to_point(const SparseTensor& t, const std::vector<std::size_t>& p2v);
inline Matrix gather_voxel_to_point(const Point2Voxel& p2v) { return gather_voxel_to_point(p2v.tensor, p2v.voxel); }

// Per-voxel class proportions, M x n_classes. Rows sum to 1.
Matrix soft_voxel_labels(const PointLabels& labels, const std::vector<std::size_t>& p2v, std::size_t voxels,
                         std::size_t n_classes);

enum class Flip : unsigned { kNone = 0, kX = 1, kY = 2, kXY = 4 };

constexpr unsigned operator|(Flip a, Flip b) { return static_cast<unsigned>(a) | static_cast<unsigned>(b); }
constexpr unsigned operator|(unsigned a, Flip b) { return a | static_cast<unsigned>(b); }

struct AugmentParams {
  double angle = 0.0;  // radians, rotation about z
  unsigned flips = 0;  // bitwise-or of Flip values
};

// Flip semantics mirror across the plane containing the named axis: X negates
// y, Y negates x, XY swaps x and y. Applied after rotation in X, Y, XY order.
PointCloud augment(const PointCloud& p, const AugmentParams& params);

// Draws angle ~ U[-pi, pi] and each flip independently with p = 0.5; the
// rotation itself is also applied with p = 0.5.
AugmentParams sample_augment(std::uint64_t seed);

}  // namespace scan
