#include "tcnet/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <tuple>

#include "model_fixtures.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/training.hpp"
#include "test_util.hpp"

namespace tcnet {
namespace {

using testing::max_gradient_error;
using testing::numeric_gradient;
using testing::permute_positions;
using testing::random_catalog;
using testing::random_observations;
using testing::random_tensor;

TCNetConfig small_config(std::size_t d) {
  TCNetConfig c;
  c.input_dim = d;
  c.hidden_dim = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.seed = 5;
  return c;
}

TEST(Config, Validation) {
  TCNetConfig c = small_config(3);
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(3);
  c.n_layers = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(3);
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(3);
  c.use_embedding = false;
  EXPECT_THROW(c.validate(), ValidationError);
  c.input_dim = 8;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, EmbeddingDefaultFollowsWidths) {
  TCNetConfig c;
  c.input_dim = 8;
  c.hidden_dim = 8;
  EXPECT_FALSE(c.embedding());
  c.input_dim = 5;
  EXPECT_TRUE(c.embedding());
}

Mask all_live(std::size_t b, std::size_t n) { return Mask({b, n}, true); }

TEST(Attention, SoftmaxZeroQueryAveragesLiveValues) {
  std::mt19937_64 rng(1);
  auto q = Tensor::zeros({1, 2, 4});
  auto k = random_tensor({1, 3, 4}, rng);
  auto v = random_tensor({1, 3, 4}, rng);
  Mask mask({1, 3}, std::vector<unsigned char>{1, 0, 1});
  auto out = attention(q, k, v, mask, Activation::kSoftmax, true);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(out.at(0, r, c), (v.at(0, 0, c) + v.at(0, 2, c)) / 2, 1e-15);
}

TEST(Attention, OnePlusReluZeroQuerySumsLiveValues) {
  std::mt19937_64 rng(2);
  auto q = Tensor::zeros({1, 2, 4});
  auto k = random_tensor({1, 3, 4}, rng);
  auto v = random_tensor({1, 3, 4}, rng);
  Mask mask({1, 3}, std::vector<unsigned char>{1, 1, 0});
  auto out = attention(q, k, v, mask, Activation::kOnePlusRelu, false);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(out.at(0, r, c), v.at(0, 0, c) + v.at(0, 1, c), 1e-15);
}

TEST(Attention, SingleKeyReturnsItsValue) {
  std::mt19937_64 rng(3);
  auto q = random_tensor({2, 3, 4}, rng);
  auto k = random_tensor({2, 1, 4}, rng);
  auto v = random_tensor({2, 1, 4}, rng);
  auto out = attention(q, k, v, all_live(2, 1), Activation::kSoftmax, true);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out.at(b, r, c), v.at(b, 0, c));
}

TEST(Attention, ErrorsOnMismatchAndDeadRow) {
  std::mt19937_64 rng(4);
  auto q = random_tensor({1, 2, 4}, rng);
  auto k = random_tensor({1, 3, 3}, rng);
  EXPECT_THROW(attention(q, k, k, all_live(1, 3), Activation::kSoftmax, true),
               DimensionError);
  auto k4 = random_tensor({1, 3, 4}, rng);
  EXPECT_THROW(attention(q, k4, k4, Mask({1, 3}, false), Activation::kSoftmax, true),
               DegenerateRowError);
}

TEST(Ffn, ZeroSecondLayerGivesBias) {
  std::mt19937_64 rng(5);
  FfnParams p{{random_tensor({3, 4}, rng), random_tensor({4}, rng)},
              {Tensor::zeros({4, 4}), Tensor::from({4}, {1, 2, 3, 4})}};
  auto out = ffn(random_tensor({2, 5, 3}, rng), p);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.at(b, r, c), c + 1.0);
}

TEST(Ffn, IdentityOnPositiveInputIsAffine) {
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  FfnParams p{{Tensor::from({3, 3}, eye), Tensor::zeros({3})},
              {Tensor::from({3, 3}, eye), Tensor::from({3}, {0.5, 0.5, 0.5})}};
  auto x = Tensor::from({1, 1, 3}, {1.0, 2.0, 3.0});
  auto out = ffn(x, p);
  EXPECT_EQ(out.at(0, 0, 0), 1.5);
  EXPECT_EQ(out.at(0, 0, 2), 3.5);
}

TEST(Ffn, RowsAreIndependent) {
  std::mt19937_64 rng(6);
  FfnParams p{{random_tensor({3, 4}, rng), random_tensor({4}, rng)},
              {random_tensor({4, 4}, rng), random_tensor({4}, rng)}};
  auto x = random_tensor({1, 4, 3}, rng);
  auto base = ffn(x, p);
  auto edited = x.clone(false);
  edited.mutable_data()[2 * 3 + 1] += 0.7;  // row 2
  auto out = ffn(edited, p);
  for (std::size_t r = 0; r < 4; ++r) {
    bool same = true;
    for (std::size_t c = 0; c < 4; ++c) same &= out.at(0, r, c) == base.at(0, r, c);
    EXPECT_EQ(same, r != 2) << r;
  }
}

class ForwardTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng{11};
  ItemCatalog catalog = random_catalog(9, 5, rng);
};

TEST_F(ForwardTest, ProbabilitiesNormalizedAndPaddedZero) {
  TCNet net(small_config(5));
  auto obs = random_observations(6, 9, 1, 7, rng);
  auto b = make_batch(catalog, obs, 0);
  auto r = net.forward(b);
  const std::size_t w = b.candidates.dim(1);
  for (std::size_t row = 0; row < b.size; ++row) {
    double s = 0;
    for (std::size_t p = 0; p < w; ++p) {
      const double v = r.probabilities[row * w + p];
      if (!b.candidate_mask.live(row * w + p)) EXPECT_EQ(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
}

TEST_F(ForwardTest, ZeroDecoderGivesUniform) {
  TCNet net(small_config(5));
  for (auto& l : net.params().decoder) {
    auto w = l.w.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
  }
  auto obs = random_observations(4, 9, 2, 6, rng);
  auto b = make_batch(catalog, obs, 0);
  auto r = net.forward(b);
  const std::size_t w = b.candidates.dim(1);
  for (std::size_t row = 0; row < b.size; ++row) {
    const double n = static_cast<double>(obs[row].candidates.size());
    for (std::size_t p = 0; p < obs[row].candidates.size(); ++p)
      EXPECT_NEAR(r.probabilities[row * w + p], 1.0 / n, 1e-15);
  }
}

TEST_F(ForwardTest, CandidatePermutationEquivariance) {
  TCNet net(small_config(5));
  for (int trial = 0; trial < 20; ++trial) {
    auto obs = random_observations(3, 9, 2, 8, rng);
    auto b = make_batch(catalog, obs, 0);
    std::vector<std::size_t> perm(b.candidates.dim(1));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto pb = permute_positions(b, perm, true);
    auto p0 = net.forward(b).probabilities;
    auto p1 = net.forward(pb).probabilities;
    const std::size_t w = perm.size();
    for (std::size_t row = 0; row < 3; ++row)
      for (std::size_t p = 0; p < w; ++p)
        EXPECT_NEAR(p1[row * w + p], p0[row * w + perm[p]], 1e-12);
  }
}

TEST_F(ForwardTest, AssortmentOrderInvariance) {
  TCNet net(small_config(5));
  for (int trial = 0; trial < 20; ++trial) {
    auto obs = random_observations(3, 9, 2, 8, rng);
    auto b = make_batch(catalog, obs, 0);
    std::vector<std::size_t> perm(b.assortment.dim(1));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto p0 = net.forward(b).probabilities;
    auto p1 = net.forward(permute_positions(b, perm, false)).probabilities;
    for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_NEAR(p1[i], p0[i], 1e-12);
  }
}

TEST_F(ForwardTest, PaddingIsInert) {
  auto cfg = small_config(5);
  for (auto act : {Activation::kSoftmax, Activation::kOnePlusRelu}) {
    cfg.attention_activation = act;
    TCNet net(cfg);
    auto obs = random_observations(4, 9, 1, 9, rng);
    auto b = make_batch(catalog, obs, 0);
    auto before = net.forward(b).probabilities;
    auto perturbed = b;
    auto xs = b.assortment.clone(false);
    auto xc = b.candidates.clone(false);
    std::normal_distribution<double> g(0.0, 5.0);
    auto fill_dead = [&](Tensor& x, const Mask& m) {
      auto data = x.mutable_data();
      const std::size_t d = x.dim(2);
      for (std::size_t pos = 0; pos < m.size(); ++pos)
        if (!m.live(pos))
          for (std::size_t k = 0; k < d; ++k) data[pos * d + k] = g(rng);
    };
    fill_dead(xs, b.assortment_mask);
    fill_dead(xc, b.candidate_mask);
    perturbed.assortment = xs;
    perturbed.candidates = xc;
    auto after = net.forward(perturbed).probabilities;
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
  }
}

TEST_F(ForwardTest, BatchedMatchesUnbatched) {
  TCNet net(small_config(5));
  auto obs = random_observations(7, 9, 1, 9, rng);
  auto b = make_batch(catalog, obs, 0);
  auto all = net.forward(b).probabilities;
  const std::size_t w = b.candidates.dim(1);
  for (std::size_t row = 0; row < obs.size(); ++row) {
    std::vector<ChoiceObservation> one{obs[row]};
    auto single = net.forward(make_batch(catalog, one, 0)).probabilities;
    for (std::size_t p = 0; p < obs[row].candidates.size(); ++p)
      EXPECT_NEAR(single[p], all[row * w + p], 1e-10);
  }
}

TEST_F(ForwardTest, HeadCountKeepsShapes) {
  auto cfg = small_config(5);
  auto obs = random_observations(2, 9, 2, 5, rng);
  auto b = make_batch(catalog, obs, 0);
  for (std::size_t h : {1u, 2u, 4u, 8u}) {
    cfg.n_heads = h;
    auto r = TCNet(cfg).forward(b);
    EXPECT_EQ(r.candidate_latent.shape(), (Shape{2, b.candidates.dim(1), 8}));
    EXPECT_EQ(r.assortment_latent.shape(), (Shape{2, b.assortment.dim(1), 8}));
  }
}

TEST_F(ForwardTest, AttentionRecordsNormalized) {
  auto cfg = small_config(5);
  TCNet net(cfg);
  auto obs = random_observations(3, 9, 3, 6, rng);
  auto b = make_batch(catalog, obs, 0);
  ForwardOptions opt;
  opt.capture_attention = true;
  auto r = net.forward(b, opt);
  // 2 layers × 2 heads × 3 attention kinds
  EXPECT_EQ(r.attention.size(), 12u);
  for (std::size_t row = 0; row < 3; ++row) {
    for (const auto& rec : attention_records(r, b, row)) {
      for (std::size_t i = 0; i < rec.row_items.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < rec.column_items.size(); ++j) s += rec.at(i, j);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST_F(ForwardTest, DropoutOnlyWhenTraining) {
  auto cfg = small_config(5);
  cfg.dropout_rate = 0.3;
  TCNet net(cfg);
  auto obs = random_observations(3, 9, 3, 6, rng);
  auto b = make_batch(catalog, obs, 0);
  auto a = net.forward(b).probabilities;
  auto a2 = net.forward(b).probabilities;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], a2[i]);
  std::mt19937_64 drng(1);
  ForwardOptions opt;
  opt.training = true;
  opt.rng = &drng;
  auto t = net.forward(b, opt).probabilities;
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i] != t[i];
  EXPECT_TRUE(differs);
}

// Zero-initialized biases can leave a row exactly on a ReLU kink, where
// central differences average the two one-sided slopes.
void jitter(const ChoiceModel& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto p : net.parameters())
    for (double& x : p.tensor.mutable_data()) x += u(rng);
}

// Every trainable parameter against central differences of the CE loss.
void check_gradients(const ChoiceModel& net, const PaddedBatch& b) {
  jitter(net, 99);
  auto loss_value = [&] {
    NoGradGuard guard;
    return ce_loss(net.forward(b).probabilities, b.labels).item();
  };
  for (auto p : net.parameters()) p.tensor.zero_grad();
  backward(ce_loss(net.forward(b).probabilities, b.labels));
  for (const auto& p : net.parameters()) {
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto numeric = numeric_gradient(p.tensor, loss_value, 1e-5);
    EXPECT_LT(max_gradient_error(analytic, numeric), 1e-4) << p.name;
  }
}

TEST_F(ForwardTest, GradientsMatchFiniteDifferences) {
  auto cfg = small_config(5);
  cfg.hidden_dim = 4;
  auto obs = random_observations(3, 9, 2, 6, rng);
  auto b = make_batch(catalog, obs, 0);
  check_gradients(TCNet(cfg), b);

  cfg.attention_activation = Activation::kOnePlusRelu;
  cfg.decoder_hidden = {5};
  cfg.n_layers = 1;
  check_gradients(TCNet(cfg), b);

  check_gradients(LinearMnl(5, 1), b);
  check_gradients(DeepMnl(5, {6}, 2), b);
}

TEST(ParameterCount, MatchesFormulaAndIgnoresCatalogSize) {
  for (auto [d, dv, L] : {std::tuple{8u, 32u, 1u}, std::tuple{8u, 32u, 2u},
                          std::tuple{8u, 64u, 1u}}) {
    TCNetConfig c;
    c.input_dim = d;
    c.hidden_dim = dv;
    c.n_layers = L;
    c.n_heads = 4;
    TCNet net(c);
    EXPECT_EQ(net.parameter_count(), tcnet_parameter_formula(d, dv, L));
  }
  EXPECT_EQ(tcnet_parameter_formula(8, 32, 1), 16481u);
  // Forward on catalogs of different sizes with the same feature width.
  TCNetConfig c;
  c.input_dim = 8;
  c.hidden_dim = 32;
  c.n_heads = 4;
  TCNet net(c);
  std::mt19937_64 rng(0);
  for (std::size_t n : {5u, 50u}) {
    auto cat = random_catalog(n, 8, rng);
    auto obs = random_observations(2, n, 1, std::min<std::size_t>(n, 6), rng);
    EXPECT_NO_THROW(net.forward(make_batch(cat, obs, 0)));
    EXPECT_EQ(net.parameter_count(), 16481u);
  }
}

TEST(Baselines, MnlIgnoresAssortment) {
  std::mt19937_64 rng(3);
  auto cat = random_catalog(6, 4, rng);
  LinearMnl mnl(4, 0);
  std::vector<ChoiceObservation> a{ChoiceObservation::sequential(0, {0, 1}, {0, 1})};
  std::vector<ChoiceObservation> b{
      ChoiceObservation::sequential(0, {0, 1}, {0, 1, 2, 3, 4, 5})};
  auto pa = mnl.forward(make_batch(cat, a, 0)).probabilities;
  auto pb = mnl.forward(make_batch(cat, b, 0)).probabilities;
  EXPECT_DOUBLE_EQ(pa[0], pb[0]);
  // u_i = βᵀx_i
  const double u0 = [&] {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += mnl.beta()[k] * cat.features(0)[k];
    return s;
  }();
  const double u1 = [&] {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += mnl.beta()[k] * cat.features(1)[k];
    return s;
  }();
  EXPECT_NEAR(pa[0], 1.0 / (1.0 + std::exp(u1 - u0)), 1e-14);
}

TEST(Checkpoint, RoundTripsEveryModelType) {
  std::mt19937_64 rng(8);
  auto cat = random_catalog(6, 5, rng);
  auto obs = random_observations(3, 6, 2, 5, rng);
  auto b = make_batch(cat, obs, 0);
  auto cfg = small_config(5);
  cfg.attention_activation = Activation::kOnePlusRelu;
  cfg.overrides[static_cast<std::size_t>(Sublayer::kCrossAttention)].activation =
      Activation::kSoftmax;
  cfg.overrides[static_cast<std::size_t>(Sublayer::kAssortmentFfn)].layer_norm = false;
  cfg.decoder_hidden = {3};
  std::vector<std::unique_ptr<ChoiceModel>> models;
  models.push_back(std::make_unique<TCNet>(cfg));
  models.push_back(std::make_unique<LinearMnl>(5, 1));
  models.push_back(std::make_unique<DeepMnl>(5, std::vector<std::size_t>{4, 3}, 2));
  const auto dir = std::filesystem::temp_directory_path() / "tcnet_ckpt_test";
  for (const auto& m : models) {
    const auto path = dir / (m->type_name() + ".ckpt");
    save_checkpoint(*m, path);
    auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded->type_name(), m->type_name());
    EXPECT_EQ(loaded->parameter_count(), m->parameter_count());
    auto p0 = m->forward(b).probabilities;
    auto p1 = loaded->forward(b).probabilities;
    for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_EQ(p0[i], p1[i]);
  }
  std::ofstream(dir / "bad.ckpt") << "{\"format\": \"other\"}";
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), ValidationError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), ValidationError);
}

TEST(Clone, IsDeep) {
  TCNet net(small_config(5));
  auto copy = net.clone();
  auto p = net.parameters().front().tensor;
  p.mutable_data()[0] += 1.0;
  EXPECT_NE(copy->parameters().front().tensor[0], p[0]);
}

}  // namespace
}  // namespace tcnet
