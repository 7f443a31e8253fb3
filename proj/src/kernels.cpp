#include "scan/kernels.hpp"

#include <algorithm>
#include <string>

namespace scan {

namespace {

void apply(Activation act, std::span<double> row) {
  if (act == Activation::kRelu) {
    for (double& v : row) v = v > 0.0 ? v : 0.0;
  }
}

// acc[c_out] += sum_cin in[cin] * w[cin][c_out]; zero inputs are skipped in
// every implementation so the summation order is shared.
inline void accumulate(std::span<const double> in, const double* w, std::size_t c_out, double* acc) {
  for (std::size_t ci = 0; ci < in.size(); ++ci) {
    const double f = in[ci];
    if (f == 0.0) continue;
    const double* wr = w + ci * c_out;
    for (std::size_t co = 0; co < c_out; ++co) acc[co] += f * wr[co];
  }
}

std::vector<VoxelCoord> kernel_offsets(int k) {
  const int r = k / 2;
  std::vector<VoxelCoord> offs;
  offs.reserve(static_cast<std::size_t>(k) * k * k);
  for (int dx = -r; dx <= r; ++dx)
    for (int dy = -r; dy <= r; ++dy)
      for (int dz = -r; dz <= r; ++dz) offs.push_back({dx, dy, dz});
  return offs;
}

}  // namespace

void SscWeights::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("SSC kernel size must be odd and >= 1");
  if (weight.size() != offsets() * c_in * c_out) {
    throw ShapeError("SSC weight has " + std::to_string(weight.size()) + " entries, expected " +
                     std::to_string(offsets() * c_in * c_out));
  }
  if (bias.size() != c_out) throw ShapeError("SSC bias length != c_out");
}

void Linear::validate() const {
  if (weight.size() != c_in * c_out) throw ShapeError("linear weight size != c_in * c_out");
  if (bias.size() != c_out) throw ShapeError("linear bias length != c_out");
}

NeighborMap build_neighbor_map(const std::vector<VoxelCoord>& coords, int kernel_size) {
  const CoordIndex index(coords);
  const auto offs = kernel_offsets(kernel_size);
  NeighborMap nm;
  nm.kernel_size = kernel_size;
  nm.sites = coords.size();
  nm.rows.resize(coords.size() * offs.size());
  const auto n = static_cast<std::int64_t>(coords.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& c = coords[i];
    for (std::size_t o = 0; o < offs.size(); ++o) {
      nm.rows[i * offs.size() + o] = index.find({c.x + offs[o].x, c.y + offs[o].y, c.z + offs[o].z});
    }
  }
  return nm;
}

SparseTensor ssc_forward(const SparseTensor& t, const SscWeights& w, Activation act, const NeighborMap* neighbors) {
  w.validate();
  if (!t.empty() && t.channels() != w.c_in) throw ShapeError("ssc_forward: input channels != kernel c_in");
  NeighborMap local;
  if (neighbors == nullptr || neighbors->kernel_size != w.kernel_size || neighbors->sites != t.size()) {
    local = build_neighbor_map(t.coords(), w.kernel_size);
    neighbors = &local;
  }
  const std::size_t n_off = w.offsets();
  Matrix out(t.size(), w.c_out);
  const auto n = static_cast<std::int64_t>(t.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) {
    auto acc = out.row(i);
    std::copy(w.bias.begin(), w.bias.end(), acc.begin());
    for (std::size_t o = 0; o < n_off; ++o) {
      const std::size_t j = neighbors->at(i, o);
      if (j == kMiss) continue;
      accumulate(t.feats().row(j), w.weight.data() + o * w.c_in * w.c_out, w.c_out, acc.data());
    }
    apply(act, acc);
  }
  return SparseTensor(t.coords(), std::move(out), t.scale());
}

Matrix linear_forward(const Matrix& x, const Linear& layer) {
  layer.validate();
  if (x.cols() != layer.c_in && !x.empty()) {
    throw ShapeError("linear: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                     std::to_string(layer.c_in));
  }
  Matrix out(x.rows(), layer.c_out);
  const auto n = static_cast<std::int64_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    auto acc = out.row(i);
    std::copy(layer.bias.begin(), layer.bias.end(), acc.begin());
    accumulate(x.row(i), layer.weight.data(), layer.c_out, acc.data());
    apply(layer.activation, acc);
  }
  return out;
}

Matrix mlp_forward(const Matrix& x, const std::vector<Linear>& layers) {
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].c_in != layers[l - 1].c_out) {
      throw ShapeError("mlp: layer " + std::to_string(l) + " expects " + std::to_string(layers[l].c_in) +
                       " inputs but previous layer produces " + std::to_string(layers[l - 1].c_out));
    }
  }
  Matrix h = x;
  for (const auto& layer : layers) h = linear_forward(h, layer);
  return h;
}

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& index) {
  Matrix out(index.size(), src.cols());
  const auto n = static_cast<std::int64_t>(index.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    if (index[i] == kMiss) continue;
    auto s = src.row(index[i]);
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

namespace serial {

SparseTensor ssc_forward(const SparseTensor& t, const SscWeights& w, Activation act) {
  w.validate();
  if (!t.empty() && t.channels() != w.c_in) throw ShapeError("ssc_forward: input channels != kernel c_in");
  const CoordIndex index(t.coords());
  const auto offs = kernel_offsets(w.kernel_size);
  Matrix out(t.size(), w.c_out);
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto acc = out.row(i);
    std::copy(w.bias.begin(), w.bias.end(), acc.begin());
    const auto& c = t.coords()[i];
    for (std::size_t o = 0; o < offs.size(); ++o) {
      const std::size_t j = index.find({c.x + offs[o].x, c.y + offs[o].y, c.z + offs[o].z});
      if (j == kMiss) continue;
      accumulate(t.feats().row(j), w.weight.data() + o * w.c_in * w.c_out, w.c_out, acc.data());
    }
    apply(act, acc);
  }
  return SparseTensor(t.coords(), std::move(out), t.scale());
}

Matrix linear_forward(const Matrix& x, const Linear& layer) {
  layer.validate();
  if (x.cols() != layer.c_in && !x.empty()) throw ShapeError("linear: input width mismatch");
  Matrix out(x.rows(), layer.c_out);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto acc = out.row(i);
    std::copy(layer.bias.begin(), layer.bias.end(), acc.begin());
    accumulate(x.row(i), layer.weight.data(), layer.c_out, acc.data());
    apply(layer.activation, acc);
  }
  return out;
}

}  // namespace serial

}  // namespace scan
