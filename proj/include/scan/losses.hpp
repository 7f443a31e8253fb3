#pragma once

// Loss functions with analytic gradients. Every loss returns its scalar value
// together with the gradient with respect to its first argument.

#include <cstdint>
#include <optional>
#include <vector>

#include "scan/core.hpp"

namespace scan {

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

inline constexpr double kProbEps = 1e-7;

// Penalty-reduced focal loss on probabilities against soft (Gaussian) targets.
// Elements with target == 1 contribute -(1-p)^gamma log p, the rest
// -(1-t)^beta p^gamma log(1-p). Mean over all elements. Predictions are
// clamped to [kProbEps, 1 - kProbEps]; the gradient is zero where clamping
// is active.
struct HeatmapFocalParams {
  double gamma = 2.0;
  double beta = 4.0;
};
LossGrad heatmap_focal_loss(const Matrix& pred, const Matrix& target, const HeatmapFocalParams& params = {});

// Multi-class focal loss on logits with hard labels:
// -alpha (1 - p_y)^gamma log p_y, mean over non-ignored rows. Gradient is
// with respect to the logits.
struct SemanticFocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
  std::optional<std::uint16_t> ignore = 0;
};
LossGrad semantic_focal_loss(const Matrix& logits, const std::vector<std::uint16_t>& labels,
                             const SemanticFocalParams& params = {});

// Mean |pred - target| over the elements of rows whose mask entry is nonzero
// (all rows when `row_mask` is empty). Subgradient 0 at ties. A fully masked
// input yields loss 0 with a zero gradient.
LossGrad l1_loss(const Matrix& pred, const Matrix& target, const std::vector<char>& row_mask = {});

// Lovasz-softmax over softmax probabilities of `logits`, averaged over the
// classes present among the non-ignored labels. Gradient with respect to the
// logits. Throws ConsistencyError when every point is ignored.
LossGrad lovasz_softmax_loss(const Matrix& logits, const std::vector<std::uint16_t>& labels,
                             std::optional<std::uint16_t> ignore = 0);

// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

struct LossReport {
  double l_d = 0.0;  // centroid heatmap
  double l_o = 0.0;  // point offsets
  double l_s = 0.0;  // point semantics
  double l_v = 0.0;  // multi-scale voxel semantics
  double total = 0.0;
};

LossReport total_loss(double l_d, double l_o, double l_s, double l_v);

}  // namespace scan
