#include <algorithm>
#include <gtest/gtest.h>

#include "shapecon/kernels.hpp"
#include "shapecon/rng.hpp"

using namespace shapecon;

namespace {

DenseLayer random_layer(Rng& rng, std::size_t in, std::size_t out) {
  DenseLayer l(in, out);
  for (double& w : l.weight) w = rng.uniform(-1, 1);
  for (double& b : l.bias) b = rng.uniform(-0.5, 0.5);
  return l;
}

std::vector<double> random_rows(Rng& rng, std::size_t rows, std::size_t in) {
  std::vector<double> x(rows * in);
  for (double& v : x) v = rng.normal();
  return x;
}

}  // namespace

// The blocked kernels accumulate in the same order as the triple loop, so
// results agree bit for bit, including every tail path.
TEST(Kernels, DenseForwardMatchesReference) {
  Rng rng(1);
  for (std::size_t rows : {1u, 3u, 4u, 5u, 9u, 64u}) {
    for (std::size_t in : {1u, 3u, 64u}) {
      for (std::size_t out : {1u, 31u, 32u, 33u, 100u}) {
        const auto layer = random_layer(rng, in, out);
        const auto x = random_rows(rng, rows, in);
        for (bool rectify : {false, true}) {
          std::vector<double> y(rows * out), yr(rows * out);
          kernels::dense_forward(x, rows, layer, y, rectify);
          kernels::reference::dense_forward(x, rows, layer, yr, rectify);
          ASSERT_EQ(y, yr) << rows << "x" << in << "->" << out;
        }
      }
    }
  }
}

TEST(Kernels, DenseMaxForwardMatchesReference) {
  Rng rng(2);
  for (std::size_t rows : {1u, 2u, 4u, 7u, 64u, 257u}) {
    for (std::size_t out : {1u, 32u, 45u, 1024u}) {
      const auto layer = random_layer(rng, 16, out);
      const auto x = random_rows(rng, rows, 16);
      std::vector<double> p(out), pr(out);
      std::vector<std::uint32_t> a(out), ar(out);
      kernels::dense_max_forward(x, rows, layer, p, a);
      kernels::reference::dense_max_forward(x, rows, layer, pr, ar);
      ASSERT_EQ(p, pr);
      ASSERT_EQ(a, ar);
    }
  }
}

TEST(Kernels, MaxPoolTiesGoToLowestRow) {
  Rng rng(3);
  const auto layer = random_layer(rng, 3, 40);
  // Rows 2, 5 and 6 are identical; a later copy may never beat the first.
  std::vector<double> x(9 * 3);
  for (double& v : x) v = rng.normal();
  for (std::size_t r : {5u, 6u}) std::copy_n(x.begin() + 6, 3, x.begin() + static_cast<std::ptrdiff_t>(r * 3));
  std::vector<double> p(40), pr(40);
  std::vector<std::uint32_t> a(40), ar(40);
  kernels::dense_max_forward(x, 9, layer, p, a);
  kernels::reference::dense_max_forward(x, 9, layer, pr, ar);
  EXPECT_EQ(a, ar);
  EXPECT_EQ(p, pr);
  for (std::size_t o = 0; o < 40; ++o) EXPECT_TRUE(a[o] != 5u && a[o] != 6u) << o;
  // All rows identical: every channel picks row 0.
  std::vector<double> same(9 * 3);
  for (std::size_t r = 0; r < 9; ++r) std::copy_n(x.begin(), 3, same.begin() + static_cast<std::ptrdiff_t>(r * 3));
  kernels::dense_max_forward(same, 9, layer, p, a);
  EXPECT_EQ(a, std::vector<std::uint32_t>(40, 0u));
}

TEST(Kernels, BackwardInputAndOuterProduct) {
  Rng rng(4);
  const auto layer = random_layer(rng, 5, 7);
  std::vector<double> dy(7), x(5), dx(5);
  for (double& v : dy) v = rng.normal();
  for (double& v : x) v = rng.normal();
  kernels::dense_backward_input(dy, layer, dx);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t o = 0; o < 7; ++o) s += layer.weight[i * 7 + o] * dy[o];
    EXPECT_NEAR(dx[i], s, 1e-14);
  }
  std::vector<double> gw(35, 1.0), gb(7, 2.0);
  kernels::accumulate_outer(x, dy, gw, gb);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t o = 0; o < 7; ++o) EXPECT_DOUBLE_EQ(gw[i * 7 + o], 1.0 + x[i] * dy[o]);
  }
  for (std::size_t o = 0; o < 7; ++o) EXPECT_DOUBLE_EQ(gb[o], 2.0 + dy[o]);
}
