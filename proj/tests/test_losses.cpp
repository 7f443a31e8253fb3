#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scan/check/oracles.hpp"
#include "scan/losses.hpp"

using namespace scan;

namespace {

Matrix col(std::vector<double> v) {
  const std::size_t n = v.size();
  return Matrix(n, 1, std::move(v));
}

}  // namespace

TEST(HeatmapFocal, Examples) {
  const auto perfect = heatmap_focal_loss(col({1.0, 0.0}), col({1.0, 0.0}));
  EXPECT_LE(perfect.loss, 1e-12);
  const auto half = heatmap_focal_loss(col({0.5}), col({1.0}));
  EXPECT_NEAR(half.loss, 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(half.loss, 0.17329, 1e-5);
  // Soft targets are discounted by (1 - t)^beta.
  const auto soft = heatmap_focal_loss(col({0.5}), col({0.5}));
  EXPECT_NEAR(soft.loss, std::pow(0.5, 4) * 0.25 * std::log(2.0), 1e-12);
  EXPECT_THROW(heatmap_focal_loss(col({0.5}), col({1.0, 0.0})), ShapeError);
}

TEST(HeatmapFocal, ClampedGradientIsZero) {
  const auto g = heatmap_focal_loss(col({1.0, 0.0}), col({0.0, 1.0}));
  EXPECT_TRUE(std::isfinite(g.loss));
  EXPECT_EQ(g.grad(0, 0), 0.0);
  EXPECT_EQ(g.grad(1, 0), 0.0);
}

TEST(HeatmapFocal, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Matrix p(12, 1), t(12, 1);
  for (std::size_t i = 0; i < 12; ++i) {
    p(i, 0) = u(rng);
    t(i, 0) = i % 4 == 0 ? 1.0 : u(rng);
  }
  const auto f = [&](const Matrix& x) { return heatmap_focal_loss(x, t).loss; };
  EXPECT_LE(max_abs_diff(heatmap_focal_loss(p, t).grad, oracle::numeric_gradient(f, p, 1e-5)), 1e-6);
}

TEST(SemanticFocal, IgnoreAndGradient) {
  std::mt19937_64 rng(2);
  const Matrix logits = oracle::random_matrix(rng, 8, 4);
  const std::vector<std::uint16_t> labels{0, 1, 2, 3, 1, 0, 2, 3};
  const auto r = semantic_focal_loss(logits, labels);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(r.grad(0, c), 0.0);
    EXPECT_EQ(r.grad(5, c), 0.0);
  }
  const auto f = [&](const Matrix& x) { return semantic_focal_loss(x, labels).loss; };
  EXPECT_LE(max_abs_diff(r.grad, oracle::numeric_gradient(f, logits, 1e-5)), 1e-6);

  // Single row, uniform logits over two classes: -alpha (1/2)^2 log(1/2).
  const auto u = semantic_focal_loss(Matrix(1, 2), {1});
  EXPECT_NEAR(u.loss, 0.25 * 0.25 * std::log(2.0), 1e-12);
}

TEST(L1, Examples) {
  const auto r = l1_loss(Matrix(1, 2, {1.0, 3.0}), Matrix(1, 2));
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_EQ(r.grad(0, 0), 0.5);
  EXPECT_EQ(r.grad(0, 1), 0.5);
  const auto masked = l1_loss(Matrix(2, 2, 1.0), Matrix(2, 2), {0, 0});
  EXPECT_EQ(masked.loss, 0.0);
  for (double g : masked.grad.data()) EXPECT_EQ(g, 0.0);
  const auto partial = l1_loss(Matrix(2, 1, {4.0, 100.0}), Matrix(2, 1), {1, 0});
  EXPECT_DOUBLE_EQ(partial.loss, 4.0);
  EXPECT_EQ(l1_loss(Matrix(1, 1, 2.0), Matrix(1, 1, 2.0)).grad(0, 0), 0.0);
}

TEST(Lovasz, Examples) {
  const Matrix confident(2, 2, {60.0, 0.0, 0.0, 60.0});
  EXPECT_LE(lovasz_softmax_loss(confident, {0, 1}, std::nullopt).loss, 1e-12);
  EXPECT_NEAR(lovasz_softmax_loss(confident, {1, 0}, std::nullopt).loss, 1.0, 1e-12);
  EXPECT_THROW(lovasz_softmax_loss(confident, {0, 0}), ConsistencyError);
}

TEST(Lovasz, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix logits = oracle::random_matrix(rng, 7, 4, 2.0);
    std::vector<std::uint16_t> labels(7);
    for (auto& l : labels) l = static_cast<std::uint16_t>(cls(rng));
    if (std::all_of(labels.begin(), labels.end(), [](auto l) { return l == 0; })) labels[0] = 1;
    EXPECT_NEAR(lovasz_softmax_loss(logits, labels).loss, oracle::lovasz_softmax_bruteforce(logits, labels, 0), 1e-12);
    EXPECT_NEAR(lovasz_softmax_loss(logits, labels, std::nullopt).loss,
                oracle::lovasz_softmax_bruteforce(logits, labels, std::nullopt), 1e-12);
  }
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(4);
  const Matrix s = softmax_rows(oracle::random_matrix(rng, 10, 5, 30.0));
  for (std::size_t r = 0; r < 10; ++r) {
    double sum = 0;
    for (double v : s.row(r)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(TotalLoss, Sum) {
  const LossReport r = total_loss(1, 2, 3, 4);
  EXPECT_EQ(r.total, 10.0);
  EXPECT_EQ(r.l_o, 2.0);
}
