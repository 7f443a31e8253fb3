#pragma once

// Data-parallel kernels. Each kernel has an OpenMP implementation used by the
// pipeline and a plain serial reference in `scan::serial` kept for testing
// and benchmarking. Both accumulate in the same order, so outputs are
// bit-identical for any thread count.

#include <cstdint>
#include <vector>

#include "scan/core.hpp"
#include "scan/sparse.hpp"

namespace scan {

enum class Activation { kNone, kRelu };

// Submanifold sparse convolution weights. Offsets are enumerated with dx
// outermost and dz innermost, each in [-K/2, K/2]; `weight` is laid out as
// [offset][c_in][c_out].
struct SscWeights {
  int kernel_size = 3;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  std::size_t offsets() const { return static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size; }
  void validate() const;
};

// Affine layer y = x W + b, W stored row-major [c_in][c_out].
struct Linear {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  Activation activation = Activation::kNone;

  void validate() const;
};

// For every active site and kernel offset, the row of the neighbour or kMiss.
// Built once per support and shared by every SSC layer over it.
struct NeighborMap {
  int kernel_size = 0;
  std::size_t sites = 0;
  std::vector<std::size_t> rows;  // sites x offsets

  std::size_t at(std::size_t site, std::size_t offset) const {
    return rows[site * static_cast<std::size_t>(kernel_size * kernel_size * kernel_size) + offset];
  }
};

NeighborMap build_neighbor_map(const std::vector<VoxelCoord>& coords, int kernel_size);

SparseTensor ssc_forward(const SparseTensor& t, const SscWeights& w, Activation act,
                         const NeighborMap* neighbors = nullptr);

Matrix linear_forward(const Matrix& x, const Linear& layer);
Matrix mlp_forward(const Matrix& x, const std::vector<Linear>& layers);

// out[i] = src[index[i]], rows with index kMiss become zero.
Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& index);

namespace serial {

SparseTensor ssc_forward(const SparseTensor& t, const SscWeights& w, Activation act);
Matrix linear_forward(const Matrix& x, const Linear& layer);

}  // namespace serial

}  // namespace scan
