#include "scan/heads.hpp"

#include <algorithm>
#include <cmath>

#include "scan/losses.hpp"

namespace scan {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

SparseTensor squash(const SparseTensor& t, const Linear& proj) {
  Matrix logits = linear_forward(t.feats(), proj);
  for (double& v : logits.data()) v = logistic(v);
  return SparseTensor(t.coords(), std::move(logits), t.scale());
}

// Dense 2D convolution over the dz = 0 slice of an SSC kernel. Zero padding.
std::vector<double> dense_conv(const std::vector<double>& in, std::size_t c_in, const SscWeights& w,
                               std::int32_t width, std::int32_t height, Activation act) {
  w.validate();
  const int k = w.kernel_size;
  const int r = k / 2;
  std::vector<double> out(static_cast<std::size_t>(width) * height * w.c_out);
  for (std::int32_t x = 0; x < width; ++x) {
    for (std::int32_t y = 0; y < height; ++y) {
      double* acc = out.data() + (static_cast<std::size_t>(x) * height + y) * w.c_out;
      std::copy(w.bias.begin(), w.bias.end(), acc);
      for (int dx = -r; dx <= r; ++dx) {
        for (int dy = -r; dy <= r; ++dy) {
          const std::int32_t nx = x + dx;
          const std::int32_t ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          const std::size_t o = (static_cast<std::size_t>(dx + r) * k + (dy + r)) * k + r;
          const double* f = in.data() + (static_cast<std::size_t>(nx) * height + ny) * c_in;
          const double* wo = w.weight.data() + o * w.c_in * w.c_out;
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            if (f[ci] == 0.0) continue;
            for (std::size_t co = 0; co < w.c_out; ++co) acc[co] += f[ci] * wo[ci * w.c_out + co];
          }
        }
      }
      if (act == Activation::kRelu) {
        for (std::size_t co = 0; co < w.c_out; ++co) acc[co] = std::max(acc[co], 0.0);
      }
    }
  }
  return out;
}

}  // namespace

CentroidHeatmap heatmap_head(const SparseTensor& a, const HeatmapHeadWeights& w) {
  if (a.empty()) return CentroidHeatmap(SparseTensor({}, Matrix(0, 1), a.scale()));
  const SparseTensor bev = flatten_bev(a);
  const NeighborMap nm = build_neighbor_map(bev.coords(), w.ssc1.kernel_size);
  const SparseTensor h1 = ssc_forward(bev, w.ssc1, Activation::kRelu, &nm);
  const SparseTensor h2 = ssc_forward(h1, w.ssc2, Activation::kRelu, &nm);
  return CentroidHeatmap(squash(h2, w.proj));
}

std::vector<double> heatmap_head_dense(const SparseTensor& a, const HeatmapHeadWeights& w, std::int32_t width,
                                       std::int32_t height) {
  const std::size_t c = w.ssc1.c_in;
  std::vector<double> grid(static_cast<std::size_t>(width) * height * c, 0.0);
  if (!a.empty()) {
    const SparseTensor bev = flatten_bev(a);
    for (std::size_t i = 0; i < bev.size(); ++i) {
      const auto& v = bev.coords()[i];
      if (v.x < 0 || v.y < 0 || v.x >= width || v.y >= height) throw RangeError("dense heatmap: voxel outside grid");
      auto src = bev.feats().row(i);
      std::copy(src.begin(), src.end(), grid.begin() + static_cast<std::ptrdiff_t>((v.x * height + v.y) * c));
    }
  }
  const auto h1 = dense_conv(grid, c, w.ssc1, width, height, Activation::kRelu);
  const auto h2 = dense_conv(h1, w.ssc1.c_out, w.ssc2, width, height, Activation::kRelu);
  w.proj.validate();
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (std::size_t cell = 0; cell < out.size(); ++cell) {
    double acc = w.proj.bias[0];
    for (std::size_t ci = 0; ci < w.proj.c_in; ++ci) {
      const double f = h2[cell * w.proj.c_in + ci];
      if (f == 0.0) continue;
      acc += f * w.proj.weight[ci];
    }
    out[cell] = logistic(acc);
  }
  return out;
}

CentroidHeatmap heatmap_head_3d(const SparseTensor& a, const HeatmapHeadWeights& w) {
  if (a.empty()) return CentroidHeatmap(SparseTensor({}, Matrix(0, 1), a.scale()));
  const NeighborMap nm = build_neighbor_map(a.coords(), w.ssc1.kernel_size);
  const SparseTensor h1 = ssc_forward(a, w.ssc1, Activation::kRelu, &nm);
  const SparseTensor h2 = ssc_forward(h1, w.ssc2, Activation::kRelu, &nm);
  return CentroidHeatmap(flatten_bev(squash(h2, w.proj)));
}

CentroidHeatmap gaussian_heatmap_target(const std::vector<InstanceCenter>& instances,
                                        const std::vector<VoxelCoord>& bev_support, const Vec3& scale,
                                        const Range3& range, const GaussianTargetParams& params,
                                        const std::vector<VoxelCoord>& volume_support) {
  if (!(params.sigma > 0.0)) throw ConfigError("gaussian target sigma must be positive");
  const CoordIndex bev_index(bev_support);
  Matrix act(bev_support.size(), 1);
  const double denom = 2.0 * params.sigma * params.sigma;
  auto raise = [&](std::int32_t x, std::int32_t y, double v) {
    const std::size_t j = bev_index.find({x, y, 0});
    if (j != kMiss) act(j, 0) = std::max(act(j, 0), v);
  };

  if (params.window == GaussianWindow::kBev3x3) {
    for (const auto& inst : instances) {
      const VoxelCoord c = voxel_of(inst.x, inst.y, inst.z, scale, range);
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) raise(c.x + dx, c.y + dy, std::exp(-(dx * dx + dy * dy) / denom));
      }
    }
  } else {
    const CoordIndex vol_index(volume_support);
    for (const auto& inst : instances) {
      const VoxelCoord c = voxel_of(inst.x, inst.y, inst.z, scale, range);
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dz = -1; dz <= 1; ++dz) {
            if (vol_index.find({c.x + dx, c.y + dy, c.z + dz}) == kMiss) continue;
            raise(c.x + dx, c.y + dy, std::exp(-(dx * dx + dy * dy + dz * dz) / denom));
          }
        }
      }
    }
  }
  return CentroidHeatmap(SparseTensor(bev_support, std::move(act), scale));
}

double multi_scale_sparse_loss(const std::vector<AuxBlock>& blocks) {
  double total = 0.0;
  for (const auto& b : blocks) {
    const SparseTensor pred = ssc_forward(*b.features, *b.head, Activation::kNone);
    const CoordIndex index(pred.coords());
    const SparseTensor aligned = rearrange(pred, hash_query(b.label_coords, index));
    total += l1_loss(aligned.feats(), b.soft_labels).loss;
  }
  return total;
}

}  // namespace scan
