#include "scan/voxelizer.hpp"

#include "scan/kernels.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace scan {

PointCloud::PointCloud(Matrix data) : data_(std::move(data)) {
  if (data_.cols() != 4 && !(data_.rows() == 0)) throw ShapeError("point cloud must have 4 columns");
  if (data_.rows() == 0) data_ = Matrix(0, 4);
  for (double v : data_.data()) {
    if (!std::isfinite(v)) throw RangeError("point cloud contains a non-finite value");
  }
}

Cropped crop_points(const PointCloud& p, const Range3& range) {
  for (int a = 0; a < 3; ++a) {
    if (!(range.min[a] < range.max[a])) throw ConfigError("crop range min must be < max on every axis");
  }
  Cropped out;
  std::vector<double> rows;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!range.contains(p.x(i), p.y(i), p.z(i))) continue;
    out.kept.push_back(i);
    auto r = p.data().row(i);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  out.points = PointCloud(Matrix(out.kept.size(), 4, std::move(rows)));
  return out;
}

VoxelCoord voxel_of(double x, double y, double z, const Vec3& scale, const Range3& range) {
  return {static_cast<std::int32_t>(std::floor((x - range.min[0]) / scale[0])),
          static_cast<std::int32_t>(std::floor((y - range.min[1]) / scale[1])),
          static_cast<std::int32_t>(std::floor((z - range.min[2]) / scale[2]))};
}

std::array<std::int32_t, 3> grid_extent(const Vec3& scale, const Range3& range) {
  std::array<std::int32_t, 3> e{};
  for (int a = 0; a < 3; ++a) {
    // Tolerate representation error in ratios such as 96 / 0.8.
    e[a] = static_cast<std::int32_t>(std::ceil((range.max[a] - range.min[a]) / scale[a] - 1e-9));
  }
  return e;
}

Point2Voxel voxelize(const PointCloud& p, const Vec3& scale, const Range3& range) {
  for (double s : scale) {
    if (!(s > 0.0)) throw ScaleError("voxel scale must be positive");
  }
  std::vector<std::size_t> kept;
  std::vector<VoxelCoord> point_coords;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!range.contains(p.x(i), p.y(i), p.z(i))) continue;
    kept.push_back(i);
    point_coords.push_back(voxel_of(p.x(i), p.y(i), p.z(i), scale, range));
  }
  auto ds = downscale_unique(point_coords, 1);

  Point2Voxel out;
  out.voxel.assign(p.size(), kCropped);
  for (std::size_t k = 0; k < kept.size(); ++k) out.voxel[kept[k]] = ds.inverse[k];
  Matrix feats = scatter_mean(p.data(), out.voxel, ds.coords.size());
  out.tensor = SparseTensor(std::move(ds.coords), std::move(feats), scale);
  return out;
}

Matrix gather_voxel_to_point(const SparseTensor& t, const std::vector<std::size_t>& p2v) {
  for (std::size_t i = 0; i < p2v.size(); ++i) {
    if (p2v[i] != kCropped && p2v[i] >= t.size()) {
      throw ConsistencyError("point " + std::to_string(i) + " maps to voxel " + std::to_string(p2v[i]) +
                             " but the tensor has " + std::to_string(t.size()) + " voxels");
    }
  }
  return gather_rows(t.feats(), p2v);
}

Matrix soft_voxel_labels(const PointLabels& labels, const std::vector<std::size_t>& p2v, std::size_t voxels,
                         std::size_t n_classes) {
  if (labels.size() != p2v.size()) throw ShapeError("soft labels: label count != point map length");
  Matrix hist(voxels, n_classes);
  std::vector<std::size_t> count(voxels, 0);
  for (std::size_t i = 0; i < p2v.size(); ++i) {
    if (p2v[i] == kCropped) continue;
    if (p2v[i] >= voxels) throw ConsistencyError("soft labels: point map references a missing voxel");
    if (labels.semantic[i] >= n_classes) throw RangeError("soft labels: semantic id out of range");
    hist(p2v[i], labels.semantic[i]) += 1.0;
    ++count[p2v[i]];
  }
  for (std::size_t k = 0; k < voxels; ++k) {
    if (count[k] == 0) throw ConsistencyError("soft labels: voxel without points");
    const double inv = 1.0 / static_cast<double>(count[k]);
    for (double& v : hist.row(k)) v *= inv;
  }
  return hist;
}

PointCloud augment(const PointCloud& p, const AugmentParams& params) {
  const double c = std::cos(params.angle);
  const double s = std::sin(params.angle);
  Matrix out = p.data();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double x = out(i, 0);
    double y = out(i, 1);
    const double rx = c * x - s * y;
    const double ry = s * x + c * y;
    x = rx;
    y = ry;
    if (params.flips & static_cast<unsigned>(Flip::kX)) y = -y;
    if (params.flips & static_cast<unsigned>(Flip::kY)) x = -x;
    if (params.flips & static_cast<unsigned>(Flip::kXY)) std::swap(x, y);
    out(i, 0) = x;
    out(i, 1) = y;
  }
  return PointCloud(std::move(out));
}

AugmentParams sample_augment(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::bernoulli_distribution coin(0.5);
  AugmentParams a;
  const double drawn = angle(rng);
  if (coin(rng)) a.angle = drawn;
  if (coin(rng)) a.flips |= static_cast<unsigned>(Flip::kX);
  if (coin(rng)) a.flips |= static_cast<unsigned>(Flip::kY);
  if (coin(rng)) a.flips |= static_cast<unsigned>(Flip::kXY);
  return a;
}

}  // namespace scan
