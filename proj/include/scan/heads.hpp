#pragma once

#include <cstdint>
#include <vector>

#include "scan/core.hpp"
#include "scan/kernels.hpp"
#include "scan/sparse.hpp"
#include "scan/voxelizer.hpp"

namespace scan {

struct HeatmapHeadWeights {
  SscWeights ssc1;  // C -> C, K = 3
  SscWeights ssc2;  // C -> C, K = 3
  Linear proj;      // C -> 1
};

double logistic(double x);

// flatten_bev -> SSC + ReLU -> SSC + ReLU -> 1x1 projection -> logistic.
CentroidHeatmap heatmap_head(const SparseTensor& a, const HeatmapHeadWeights& w);

// Dense-grid variant: the BEV projection is densified onto a w x h grid and
// convolved with the dz = 0 slice of each kernel everywhere, including empty
// cells. Returns w*h activations, row index = x * h + y.
std::vector<double> heatmap_head_dense(const SparseTensor& a, const HeatmapHeadWeights& w, std::int32_t width,
                                       std::int32_t height);

// 3D sparse variant: the SSC stack runs on the 3D attention support; the
// activations are then max-flattened to BEV.
CentroidHeatmap heatmap_head_3d(const SparseTensor& a, const HeatmapHeadWeights& w);

struct InstanceCenter {
  double x = 0.0;  // meters
  double y = 0.0;
  double z = 0.0;
  int cls = 0;
};

enum class GaussianWindow { kBev3x3, kVolume3x3x3 };

struct GaussianTargetParams {
  double sigma = 1.0;  // grid cells
  GaussianWindow window = GaussianWindow::kBev3x3;
};

// Class-agnostic centroid target over `bev_support` (sorted, z = 0). Each
// instance centre cell gets 1, the cells of its 3x3 window
// exp(-(dx^2 + dy^2) / (2 sigma^2)); overlaps take the max; cells outside the
// support are dropped and support cells outside every window are 0.
//
// The volumetric window instead places the Gaussian on the 3x3x3 neighbours
// of the centre voxel that exist in `volume_support` and max-flattens.
CentroidHeatmap gaussian_heatmap_target(const std::vector<InstanceCenter>& instances,
                                        const std::vector<VoxelCoord>& bev_support, const Vec3& scale,
                                        const Range3& range, const GaussianTargetParams& params = {},
                                        const std::vector<VoxelCoord>& volume_support = {});

struct AuxBlock {
  const SparseTensor* features = nullptr;
  const SscWeights* head = nullptr;     // C -> n_classes, K = 3
  std::vector<VoxelCoord> label_coords;  // support of the soft labels
  Matrix soft_labels;                    // rows ordered as label_coords
};

// sum over blocks of L1(Rearrange(SSC(R)), S). Throws AlignmentError when a
// label voxel has no prediction.
double multi_scale_sparse_loss(const std::vector<AuxBlock>& blocks);

}  // namespace scan
