#include "tcnet/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "tcnet/errors.hpp"
#include "test_util.hpp"

namespace tcnet {
namespace {

using testing::max_gradient_error;
using testing::numeric_gradient;
using testing::random_tensor;

TEST(Matmul, IdentityAndRowSelector) {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()),
            (std::vector<double>{1, 2, 3, 4}));

  auto sel = Tensor::from({2, 2}, {1, 0, 0, 0});
  auto rhs = Tensor::from({2, 2}, {5, 6, 7, 8});
  out = matmul(sel, rhs);
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()),
            (std::vector<double>{5, 6, 0, 0}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(7);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (std::size_t p = 0; p < 4; ++p) ref += a.at(i, p) * b.at(p, j);
      EXPECT_NEAR(c.at(i, j), ref, 1e-12);
    }
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  auto a = random_tensor({2, 3, 4}, rng, true);
  auto b = random_tensor({4, 5}, rng, true);
  auto w = random_tensor({2, 3, 5}, rng);
  auto f = [&] { return sum(mul(matmul(a, b), w)).item(); };
  backward(sum(mul(matmul(a, b), w)));
  EXPECT_LT(max_gradient_error(a.grad(), numeric_gradient(a, f)), 1e-7);
  EXPECT_LT(max_gradient_error(b.grad(), numeric_gradient(b, f)), 1e-7);
}

TEST(BatchedMatmul, BothLayoutsGradients) {
  std::mt19937_64 rng(5);
  for (auto tr : {Transpose::kNone, Transpose::kSecond}) {
    auto a = random_tensor({2, 3, 4}, rng, true);
    auto b = tr == Transpose::kNone ? random_tensor({2, 4, 3}, rng, true)
                                    : random_tensor({2, 3, 4}, rng, true);
    auto w = random_tensor({2, 3, 3}, rng);
    auto f = [&] { return sum(mul(batched_matmul(a, b, tr), w)).item(); };
    backward(sum(mul(batched_matmul(a, b, tr), w)));
    EXPECT_LT(max_gradient_error(a.grad(), numeric_gradient(a, f)), 1e-7);
    EXPECT_LT(max_gradient_error(b.grad(), numeric_gradient(b, f)), 1e-7);
  }
}

TEST(MaskedSoftmax, UniformAndMasked) {
  auto x = Tensor::from({1, 3}, {0, 0, 0});
  auto y = masked_softmax(x, Mask({1, 3}, true));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);

  const double a = 0.3, b = -1.2;
  x = Tensor::from({1, 3}, {a, b, 50.0});
  y = masked_softmax(x, Mask({1, 3}, {1, 1, 0}));
  const double z = std::exp(a) + std::exp(b);
  EXPECT_NEAR(y[0], std::exp(a) / z, 1e-15);
  EXPECT_NEAR(y[1], std::exp(b) / z, 1e-15);
  EXPECT_EQ(y[2], 0.0);
}

TEST(MaskedSoftmax, DirectFormula) {
  auto y = masked_softmax(Tensor::from({1, 3}, {1, 2, 3}), Mask({1, 3}, true));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(y[j], std::exp(j + 1.0) / z, 1e-12);
}

TEST(MaskedSoftmax, FullyMaskedRowThrows) {
  auto x = Tensor::zeros({2, 2});
  EXPECT_THROW(masked_softmax(x, Mask({2, 2}, {1, 0, 0, 0})),
               DegenerateRowError);
}

TEST(MaskedSoftmax, RowsSumToOneProperty) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor({4, 7}, rng, false, -30, 30);
    std::vector<unsigned char> live(28);
    for (auto& l : live) l = coin(rng);
    for (int r = 0; r < 4; ++r) live[r * 7 + trial % 7] = 1;
    Mask mask({4, 7}, live);
    auto y = masked_softmax(x, mask);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        if (mask.live(r * 7 + j)) {
          s += y[r * 7 + j];
        } else {
          EXPECT_EQ(y[r * 7 + j], 0.0);
        }
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(MaskedSoftmax, GradientRestrictedToLiveEntries) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({2, 2, 4}, rng, true);
  Mask mask({2, 2, 4}, {1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 0});
  auto w = random_tensor({2, 2, 4}, rng);
  auto f = [&] { return sum(mul(masked_softmax(x, mask), w)).item(); };
  backward(sum(mul(masked_softmax(x, mask), w)));
  EXPECT_LT(max_gradient_error(x.grad(), numeric_gradient(x, f)), 1e-7);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.live(i)) EXPECT_EQ(x.grad()[i], 0.0);
  }
}

TEST(Elementwise, ReluAndOnePlusRelu) {
  auto r = relu(Tensor::from({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()),
            (std::vector<double>{0, 0, 2}));
  auto o = one_plus_relu(Tensor::from({2}, {-3, 0.5}));
  EXPECT_EQ(std::vector<double>(o.data().begin(), o.data().end()),
            (std::vector<double>{1, 1.5}));
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  auto x = Tensor::from({3}, {-1, 0, 2}, true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Elementwise, AddBackwardIsOne) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 2}, rng, true);
  auto b = random_tensor({3, 2}, rng, true);
  auto f = [&] { return sum(add(a, b)).item(); };
  backward(sum(add(a, b)));
  auto na = numeric_gradient(a, f);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.grad()[i], 1.0);
    EXPECT_NEAR(na[i], 1.0, 1e-8);
  }
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(Elementwise, ComposedGradients) {
  std::mt19937_64 rng(21);
  auto x = random_tensor({2, 3, 4}, rng, true);
  auto bias = random_tensor({4}, rng, true);
  auto s = Tensor::scalar(0.7, true);
  auto w = random_tensor({2, 3, 6}, rng);
  auto f = [&] {
    auto h = add(scale(one_plus_relu(add_row(x, bias)), 1.5), s);
    auto parts = concat_last({slice_last(h, 1, 2), h});
    return sum(mul(reshape(parts, {2, 3, 6}), w)).item();
  };
  {
    auto h = add(scale(one_plus_relu(add_row(x, bias)), 1.5), s);
    auto parts = concat_last({slice_last(h, 1, 2), h});
    backward(sum(mul(reshape(parts, {2, 3, 6}), w)));
  }
  EXPECT_LT(max_gradient_error(x.grad(), numeric_gradient(x, f)), 1e-6);
  EXPECT_LT(max_gradient_error(bias.grad(), numeric_gradient(bias, f)), 1e-6);
  EXPECT_LT(max_gradient_error(s.grad(), numeric_gradient(s, f)), 1e-6);
}

TEST(LayerNorm, ConstantRowCollapsesToBias) {
  auto y = layer_norm(Tensor::from({1, 4}, {5, 5, 5, 5}), Tensor::full({4}, 1),
                      Tensor::zeros({4}), 1e-5);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedRowUnchanged) {
  auto y = layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1),
                      Tensor::zeros({2}), 1e-14);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], -1.0, 1e-12);
}

TEST(LayerNorm, RowStatistics) {
  std::mt19937_64 rng(4);
  const double eps = 1e-5;
  auto x = random_tensor({2, 8}, rng, false, -3, 3);
  auto y = layer_norm(x, Tensor::full({8}, 1), Tensor::zeros({8}), eps);
  for (int r = 0; r < 2; ++r) {
    double mean = 0, var = 0, raw_mean = 0, raw_var = 0;
    for (int j = 0; j < 8; ++j) {
      mean += y[r * 8 + j] / 8;
      raw_mean += x[r * 8 + j] / 8;
    }
    for (int j = 0; j < 8; ++j) {
      var += (y[r * 8 + j] - mean) * (y[r * 8 + j] - mean) / 8;
      raw_var += (x[r * 8 + j] - raw_mean) * (x[r * 8 + j] - raw_mean) / 8;
    }
    EXPECT_LT(std::abs(mean), 1e-10);
    // Normalized variance is var/(var+eps), not exactly 1.
    EXPECT_NEAR(var, raw_var / (raw_var + eps), 1e-8);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(LayerNorm, Gradients) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({2, 3, 5}, rng, true);
  auto g = random_tensor({5}, rng, true, 0.5, 1.5);
  auto b = random_tensor({5}, rng, true);
  auto w = random_tensor({2, 3, 5}, rng);
  auto f = [&] { return sum(mul(layer_norm(x, g, b, 1e-5), w)).item(); };
  backward(sum(mul(layer_norm(x, g, b, 1e-5), w)));
  EXPECT_LT(max_gradient_error(x.grad(), numeric_gradient(x, f)), 1e-6);
  EXPECT_LT(max_gradient_error(g.grad(), numeric_gradient(g, f)), 1e-6);
  EXPECT_LT(max_gradient_error(b.grad(), numeric_gradient(b, f)), 1e-6);
}

TEST(Dropout, IdentityCases) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({10}, rng);
  auto y = dropout(x, 0.0, true, rng);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
  y = dropout(x, 0.5, false, rng);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
}

TEST(Dropout, MeanPreservedWithinBinomialBounds) {
  std::mt19937_64 rng(2024);
  const std::size_t n = 100000;
  const double rate = 0.1;
  auto y = dropout(Tensor::full({n}, 1.0), rate, true, rng);
  const double mean =
      std::accumulate(y.data().begin(), y.data().end(), 0.0) / n;
  // Each entry is 0 or 1/(1-p): variance p/(1-p).
  const double sigma = std::sqrt(rate / (1 - rate) / n);
  EXPECT_NEAR(mean, 1.0, 3 * sigma);
}

TEST(Dropout, RateOutOfRangeThrows) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, true, rng), ValidationError);
  EXPECT_THROW(dropout(Tensor::zeros({2}), -0.1, true, rng), ValidationError);
}

TEST(Backward, SumAndQuadratic) {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  auto v = Tensor::from({2}, {1, 2}, true);
  backward(sum(mul(v, v)));
  EXPECT_EQ(v.grad()[0], 2.0);
  EXPECT_EQ(v.grad()[1], 4.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
  auto x = Tensor::from({2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Backward, NonScalarLossThrows) {
  auto x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), DimensionError);
}

TEST(Backward, SharedSubexpressionCountedOnce) {
  auto x = Tensor::from({1}, {3.0}, true);
  auto y = mul(x, x);
  backward(sum(add(y, y)));  // 2x² → 4x
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(Tape, TopologicalOrder) {
  std::mt19937_64 rng(6);
  auto a = random_tensor({2, 2}, rng, true);
  auto b = random_tensor({2, 2}, rng, true);
  auto loss = sum(add(matmul(a, b), mul(a, b)));
  Tape tape(loss);
  EXPECT_TRUE(tape.is_topological());
  EXPECT_EQ(tape.nodes().back(), loss.node().get());
}

TEST(Tensor, NonFiniteForwardThrows) {
  auto x = Tensor::from({1}, {1e308});
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(Tensor, NoGradGuardSkipsRecording) {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = scale(x, 2.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Tensor, Determinism) {
  auto run = [] {
    std::mt19937_64 rng(99);
    auto a = random_tensor({3, 4}, rng, true);
    auto b = random_tensor({4, 4}, rng, true);
    auto h = dropout(relu(matmul(a, b)), 0.3, true, rng);
    backward(sum(mul(h, h)));
    std::vector<double> out(h.data().begin(), h.data().end());
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, RankAndLengthChecked) {
  EXPECT_THROW(Tensor::zeros({1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
}

}  // namespace
}  // namespace tcnet
