#include "scan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace scan {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(who) + ": shape mismatch");
}

void check_labels(const Matrix& logits, const std::vector<std::uint16_t>& labels, const char* who) {
  if (labels.size() != logits.rows()) throw ShapeError(std::string(who) + ": label count != rows");
  for (auto l : labels) {
    if (l >= logits.cols()) throw RangeError(std::string(who) + ": label " + std::to_string(l) + " out of range");
  }
}

}  // namespace

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      z += out[c];
    }
    for (double& v : out) v /= z;
  }
  return p;
}

LossGrad heatmap_focal_loss(const Matrix& pred, const Matrix& target, const HeatmapFocalParams& params) {
  require_same_shape(pred, target, "heatmap_focal_loss");
  LossGrad out{0.0, Matrix(pred.rows(), pred.cols())};
  const std::size_t n = pred.data().size();
  if (n == 0) return out;
  const double g = params.gamma;
  const double b = params.beta;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = pred.data()[i];
    const double p = std::clamp(raw, kProbEps, 1.0 - kProbEps);
    const bool live = raw == p;
    const double t = target.data()[i];
    double l;
    double dl;
    if (t == 1.0) {
      const double q = 1.0 - p;
      l = -std::pow(q, g) * std::log(p);
      dl = g * std::pow(q, g - 1.0) * std::log(p) - std::pow(q, g) / p;
    } else {
      const double w = std::pow(1.0 - t, b);
      l = -w * std::pow(p, g) * std::log(1.0 - p);
      dl = -w * (g * std::pow(p, g - 1.0) * std::log(1.0 - p) - std::pow(p, g) / (1.0 - p));
    }
    sum += l;
    out.grad.data()[i] = live ? dl / static_cast<double>(n) : 0.0;
  }
  out.loss = sum / static_cast<double>(n);
  return out;
}

LossGrad semantic_focal_loss(const Matrix& logits, const std::vector<std::uint16_t>& labels,
                             const SemanticFocalParams& params) {
  check_labels(logits, labels, "semantic_focal_loss");
  const Matrix p = softmax_rows(logits);
  LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  std::size_t valid = 0;
  for (auto l : labels) valid += (params.ignore && l == *params.ignore) ? 0 : 1;
  if (valid == 0) return out;
  const double g = params.gamma;
  const double a = params.alpha;
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const std::uint16_t y = labels[i];
    if (params.ignore && y == *params.ignore) continue;
    const double py = std::clamp(p(i, y), kProbEps, 1.0);
    const double q = 1.0 - py;
    sum += -a * std::pow(q, g) * std::log(py);
    // d/dp_y, then through softmax: dp_y/dz_k = p_y (delta_yk - p_k).
    const double dpy = -a * (-g * std::pow(q, g - 1.0) * std::log(py) + std::pow(q, g) / py);
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      const double dz = dpy * p(i, y) * ((k == y ? 1.0 : 0.0) - p(i, k));
      out.grad(i, k) = dz / static_cast<double>(valid);
    }
  }
  out.loss = sum / static_cast<double>(valid);
  return out;
}

LossGrad l1_loss(const Matrix& pred, const Matrix& target, const std::vector<char>& row_mask) {
  require_same_shape(pred, target, "l1_loss");
  if (!row_mask.empty() && row_mask.size() != pred.rows()) throw ShapeError("l1_loss: mask length != rows");
  LossGrad out{0.0, Matrix(pred.rows(), pred.cols())};
  std::size_t rows = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) rows += (row_mask.empty() || row_mask[i]) ? 1 : 0;
  const std::size_t count = rows * pred.cols();
  if (count == 0) return out;
  double sum = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    if (!row_mask.empty() && !row_mask[i]) continue;
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double d = pred(i, c) - target(i, c);
      sum += std::abs(d);
      out.grad(i, c) = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
  }
  out.loss = sum * inv;
  return out;
}

LossGrad lovasz_softmax_loss(const Matrix& logits, const std::vector<std::uint16_t>& labels,
                             std::optional<std::uint16_t> ignore) {
  check_labels(logits, labels, "lovasz_softmax_loss");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(ignore && labels[i] == *ignore)) valid.push_back(i);
  }
  if (valid.empty()) throw ConsistencyError("lovasz_softmax_loss: every point is ignored");

  const Matrix p = softmax_rows(logits);
  const std::size_t n = valid.size();
  const std::size_t classes = logits.cols();
  Matrix dp(logits.rows(), classes);  // dL/dp before the softmax chain
  std::vector<double> errors(n);
  std::vector<std::size_t> order(n);
  std::vector<double> jgrad(n);
  double total = 0.0;
  std::size_t present = 0;

  for (std::size_t c = 0; c < classes; ++c) {
    double gts = 0.0;
    for (std::size_t k = 0; k < n; ++k) gts += labels[valid[k]] == c ? 1.0 : 0.0;
    if (gts == 0.0) continue;
    ++present;
    for (std::size_t k = 0; k < n; ++k) {
      const double fg = labels[valid[k]] == c ? 1.0 : 0.0;
      errors[k] = std::abs(fg - p(valid[k], c));
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });

    // Jaccard-gradient of the sorted ground truth: successive differences of
    // 1 - intersection / union along the sorted order.
    double cum_fg = 0.0;
    double cum_bg = 0.0;
    double prev = 0.0;
    double loss_c = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double fg = labels[valid[order[r]]] == c ? 1.0 : 0.0;
      cum_fg += fg;
      cum_bg += 1.0 - fg;
      const double jac = 1.0 - (gts - cum_fg) / (gts + cum_bg);
      jgrad[r] = jac - prev;
      prev = jac;
      loss_c += errors[order[r]] * jgrad[r];
    }
    total += loss_c;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t row = valid[order[r]];
      const double fg = labels[row] == c ? 1.0 : 0.0;
      dp(row, c) = jgrad[r] * (fg == 1.0 ? -1.0 : 1.0);
    }
  }

  const double inv = 1.0 / static_cast<double>(present);
  LossGrad out{total * inv, Matrix(logits.rows(), classes)};
  for (std::size_t i : valid) {
    double dot = 0.0;
    for (std::size_t c = 0; c < classes; ++c) dot += dp(i, c) * p(i, c);
    for (std::size_t k = 0; k < classes; ++k) out.grad(i, k) = inv * p(i, k) * (dp(i, k) - dot);
  }
  return out;
}

LossReport total_loss(double l_d, double l_o, double l_s, double l_v) {
  return {l_d, l_o, l_s, l_v, l_d + l_o + l_s + l_v};
}

}  // namespace scan
