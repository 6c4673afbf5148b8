#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "shapecon/error.hpp"
#include "shapecon/objective.hpp"

using namespace shapecon;

namespace {

std::vector<double> unit_rows(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> z(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      z[i * d + k] = rng.normal();
      s += z[i * d + k] * z[i * d + k];
    }
    for (std::size_t k = 0; k < d; ++k) z[i * d + k] /= std::sqrt(s);
  }
  return z;
}

std::vector<double> near_identity(Rng& rng, std::size_t d) {
  std::vector<double> w(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) w[i * d + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.3, 0.3);
  }
  return w;
}

// Fourth-order central difference of f along every entry of x, compared to g.
template <class F>
void expect_gradient(std::vector<double>& x, const std::vector<double>& g, F f, const char* what) {
  const double h = 1e-4;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double o = x[k];
    double v[4];
    const double off[4] = {2, 1, -1, -2};
    for (int s = 0; s < 4; ++s) {
      x[k] = o + off[s] * h;
      v[s] = f();
    }
    x[k] = o;
    const double num = (-v[0] + 8 * v[1] - 8 * v[2] + v[3]) / (12 * h);
    ASSERT_NEAR(g[k], num, 1e-7 * std::max(1.0, std::abs(num))) << what << "[" << k << "]";
  }
}

}  // namespace

TEST(Critic, HandValue) {
  const std::vector<double> a{1, 0}, b{0.6, 0.8}, w{1, 2, 3, 4};
  // a^T W b = [1 2] . [0.6 0.8] = 2.2
  EXPECT_NEAR(critic(a, b, w, 0.5), std::exp(4.4), 1e-9);
  EXPECT_THROW(critic(a, b, w, 0.0), Error);
  EXPECT_THROW(critic(a, b, w, -1.0), Error);
}

TEST(InfoNce, ZeroCriticGivesLogN) {
  Rng rng(1);
  for (std::size_t n : {2u, 8u, 32u}) {
    const std::size_t d = 16;
    const auto za = unit_rows(rng, n, d), zb = unit_rows(rng, n, d);
    const std::vector<double> w(d * d, 0.0);
    EXPECT_NEAR(info_nce_loss(za, zb, d, w, 0.07).loss, std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(InfoNce, PerfectAlignmentDrivesLossToZero) {
  // Orthogonal embeddings, identity critic, small temperature.
  const std::size_t n = 4, d = 4;
  std::vector<double> z(n * d, 0.0), w(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    z[i * d + i] = 1.0;
    w[i * d + i] = 1.0;
  }
  EXPECT_LT(info_nce_loss(z, z, d, w, 0.01).loss, 1e-40);
}

TEST(InfoNce, RequiresTwoSamples) {
  std::vector<double> z{1, 0}, w{1, 0, 0, 1};
  EXPECT_THROW(info_nce_loss(z, z, 2, w, 0.07), Error);
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  const std::size_t n = 5, d = 6;
  auto za = unit_rows(rng, n, d), zb = unit_rows(rng, n, d), w = near_identity(rng, d);
  const auto r = info_nce_loss(za, zb, d, w, 0.07);
  auto f = [&] { return info_nce_loss(za, zb, d, w, 0.07).loss; };
  expect_gradient(za, r.grad_a, f, "a");
  expect_gradient(zb, r.grad_b, f, "b");
  expect_gradient(w, r.grad_critic, f, "W");
}

TEST(Nce, HandComputedLoss) {
  // d = 2, M = 4, one anchor, k = 2 negatives, W = I, tau = 1.
  MemoryBank bank;
  bank.rows = 4;
  bank.dim = 2;
  bank.data = {0.6, 0.8, 0, 1, -1, 0, 0, -1};
  bank.z = 2.0;
  const std::vector<double> a{1, 0}, w{1, 0, 0, 1};
  const std::vector<std::size_t> idx{0};
  const std::vector<std::vector<std::size_t>> neg{{1, 2}};
  const double c = 2.0 / 4.0;
  const double s_pos = std::exp(0.6) / 2.0;
  const double s1 = std::exp(0.0) / 2.0, s2 = std::exp(-1.0) / 2.0;
  const double expected = -std::log(s_pos / (s_pos + c)) - std::log(1 - s1 / (s1 + c)) - std::log(1 - s2 / (s2 + c));
  EXPECT_NEAR(nce_loss(a, idx, 2, bank, neg, w, 1.0).loss, expected, 1e-12);
}

TEST(Nce, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  const std::size_t n = 4, d = 6, m = 10, k = 7;
  auto za = unit_rows(rng, n, d), w = near_identity(rng, d);
  const std::vector<std::size_t> idx{0, 3, 5, 9};
  auto bank = bank_init(m, d, rng);
  std::vector<std::vector<std::size_t>> neg;
  for (std::size_t i = 0; i < n; ++i) neg.push_back(sample_negatives(m, k, idx[i], rng));
  bank_calibrate_z(bank, raw_negative_scores(za, d, bank, neg, w, 0.07));
  const auto r = nce_loss(za, idx, d, bank, neg, w, 0.07);
  auto f = [&] { return nce_loss(za, idx, d, bank, neg, w, 0.07).loss; };
  expect_gradient(za, r.grad_a, f, "a");
  EXPECT_TRUE(r.grad_b.empty());
  expect_gradient(w, r.grad_critic, f, "W");
}

TEST(Nce, RequiresCalibratedBank) {
  Rng rng(4);
  auto bank = bank_init(4, 2, rng);
  const std::vector<double> a{1, 0}, w{1, 0, 0, 1};
  const std::vector<std::size_t> idx{0};
  const std::vector<std::vector<std::size_t>> neg{{1}};
  EXPECT_THROW(nce_loss(a, idx, 2, bank, neg, w, 0.07), Error);
}

TEST(MemoryBank, CalibrationSetsPartitionOnce) {
  Rng rng(5);
  auto bank = bank_init(10, 3, rng);
  const std::vector<double> scores{1.0, 2.0, 3.0};
  bank_calibrate_z(bank, scores);
  ASSERT_TRUE(bank.z.has_value());
  EXPECT_DOUBLE_EQ(*bank.z, 20.0);
  EXPECT_THROW(bank_calibrate_z(bank, scores), Error);
  auto fresh = bank_init(10, 3, rng);
  EXPECT_THROW(bank_calibrate_z(fresh, std::vector<double>{}), Error);
}

TEST(MemoryBank, UpdateFormulaAndUnitNorm) {
  Rng rng(6);
  auto bank = bank_init(50, 8, rng);
  for (std::size_t i = 0; i < bank.rows; ++i) {
    double s = 0.0;
    for (double v : bank.row(i)) s += v * v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const std::vector<double> old(bank.row(3).begin(), bank.row(3).end());
  const auto e = unit_rows(rng, 1, 8);
  bank_update(bank, 3, e, 0.5);
  std::vector<double> mix(8);
  double s = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    mix[k] = 0.5 * old[k] + 0.5 * e[k];
    s += mix[k] * mix[k];
  }
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(bank.row(3)[k], mix[k] / std::sqrt(s), 1e-15);

  for (int t = 0; t < 1000; ++t) {
    const auto z = unit_rows(rng, 1, 8);
    bank_update(bank, rng.uniform_index(50), z, rng.uniform(0.0, 0.99));
  }
  for (std::size_t i = 0; i < bank.rows; ++i) {
    double q = 0.0;
    for (double v : bank.row(i)) q += v * v;
    EXPECT_NEAR(std::sqrt(q), 1.0, 1e-6);
  }
  EXPECT_THROW(bank_update(bank, 50, e), Error);
  EXPECT_THROW(bank_update(bank, 0, e, 1.0), Error);
  // Momentum 0 replaces the row outright.
  bank_update(bank, 0, e, 0.0);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(bank.row(0)[k], e[k], 1e-15);
}

TEST(Negatives, NeverThePositiveAndUniformOverTheRest) {
  Rng rng(7);
  const std::size_t m = 5;
  std::vector<std::size_t> counts(m, 0);
  const auto neg = sample_negatives(m, 40000, 2, rng);
  EXPECT_EQ(neg.size(), 40000u);
  for (std::size_t i : neg) ++counts[i];
  EXPECT_EQ(counts[2], 0u);
  for (std::size_t i : {0u, 1u, 3u, 4u}) EXPECT_NEAR(counts[i] / 40000.0, 0.25, 0.01);
  EXPECT_THROW(sample_negatives(1, 3, 0, rng), Error);
  EXPECT_THROW(sample_negatives(5, 0, 0, rng), Error);
}
