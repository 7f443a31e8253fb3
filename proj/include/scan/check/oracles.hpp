#pragma once

// Independent reference implementations used by the test suites. They favour
// obviousness over speed: dense grids, direct enumeration, finite differences.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "scan/kernels.hpp"
#include "scan/metrics.hpp"
#include "scan/sparse.hpp"
#include "scan/voxelizer.hpp"

namespace scan::oracle {

// Dense voxel grid covering the bounding box of a coordinate set, padded by
// `pad` cells on every side.
class DenseGrid {
 public:
  DenseGrid(const std::vector<VoxelCoord>& coords, std::size_t channels, int pad = 0);

  bool inside(VoxelCoord c) const;
  bool occupied(VoxelCoord c) const { return inside(c) && occ_[cell(c)]; }
  double* at(VoxelCoord c) { return vals_.data() + cell(c) * channels_; }
  const double* at(VoxelCoord c) const { return vals_.data() + cell(c) * channels_; }
  void set(VoxelCoord c, std::span<const double> v);

  VoxelCoord lo() const { return lo_; }
  VoxelCoord hi() const { return hi_; }

 private:
  std::size_t cell(VoxelCoord c) const;
  VoxelCoord lo_{}, hi_{};
  std::int64_t nx_ = 0, ny_ = 0, nz_ = 0;
  std::size_t channels_;
  std::vector<char> occ_;
  std::vector<double> vals_;
};

SparseTensor dense_sparse_align(const SparseTensor& t, const Vec3& to_scale);
SparseTensor dense_flatten_bev(const SparseTensor& t);
std::vector<Peak> dense_peaks(const CentroidHeatmap& d, int window);
SparseTensor dense_ssc(const SparseTensor& t, const SscWeights& w, Activation act);

// Lovasz-softmax evaluated from the definition: per class, the Jaccard loss
// of every top-k error set is recomputed by counting.
double lovasz_softmax_bruteforce(const Matrix& logits, const std::vector<std::uint16_t>& labels,
                                 std::optional<std::uint16_t> ignore);

// Central differences, one coordinate at a time.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h);

// Every one-to-one pairing of same-class segments is enumerated; the one with
// the most IoU > 0.5 pairs (then the largest IoU sum) wins.
PanopticStats match_bruteforce(const PointLabels& pred, const PointLabels& gt, const ClassSpec& spec);

Matrix soft_labels_counting(const PointLabels& labels, const std::vector<std::size_t>& p2v, std::size_t voxels,
                            std::size_t n_classes);

// Most frequent class per instance, ties to the smaller id; instance 0 kept.
std::vector<std::uint16_t> histogram_vote(const std::vector<std::uint16_t>& semantics,
                                          const std::vector<std::uint16_t>& instances);

// --- random inputs ---------------------------------------------------------

std::vector<VoxelCoord> random_coords(std::mt19937_64& rng, std::size_t n, std::int32_t lo, std::int32_t hi,
                                      bool flat = false);
Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sigma = 1.0);
SparseTensor random_tensor(std::mt19937_64& rng, std::size_t n, std::size_t channels, std::int32_t lo,
                           std::int32_t hi, Vec3 scale = {1, 1, 1});
SscWeights random_ssc(std::mt19937_64& rng, std::size_t c_in, std::size_t c_out, int kernel_size = 3);

}  // namespace scan::oracle
