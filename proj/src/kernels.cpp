#include "shapecon/kernels.hpp"

#include <algorithm>
#include <limits>

#include "shapecon/error.hpp"

namespace shapecon::kernels {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 32;

void check_shapes(std::span<const double> x, std::size_t rows, const DenseLayer& layer) {
  if (x.size() != rows * layer.in) throw Error("dense layer: input shape mismatch");
  if (layer.weight.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
    throw Error("dense layer: parameter shape mismatch");
  }
}

// Full 4 x 32 tile: accumulators stay in registers across the input loop.
inline void tile(const double* x, std::size_t in, const double* w, std::size_t out, const double* b,
                 double (&acc)[kRowBlock][kColBlock]) {
  for (std::size_t q = 0; q < kRowBlock; ++q) {
    for (std::size_t o = 0; o < kColBlock; ++o) acc[q][o] = b[o];
  }
  for (std::size_t i = 0; i < in; ++i) {
    const double* wi = w + i * out;
    for (std::size_t q = 0; q < kRowBlock; ++q) {
      const double xv = x[q * in + i];
#pragma omp simd
      for (std::size_t o = 0; o < kColBlock; ++o) acc[q][o] += xv * wi[o];
    }
  }
}

// Any single row, any column range.
inline void row_range(const double* x, std::size_t in, const double* w, std::size_t out, const double* b,
                      std::size_t o0, std::size_t o1, double* y) {
  for (std::size_t o = o0; o < o1; ++o) y[o - o0] = b[o];
  for (std::size_t i = 0; i < in; ++i) {
    const double xv = x[i];
    const double* wi = w + i * out;
#pragma omp simd
    for (std::size_t o = o0; o < o1; ++o) y[o - o0] += xv * wi[o];
  }
}

// Rectify and fold one row of outputs into the running max; the earlier row
// keeps ties. Loop vectorization is off here because GCC 11 crashes
// if-converting this loop under -O3 -march=native.
[[gnu::optimize("no-tree-loop-vectorize")]] void merge_row(const double* v, std::size_t count, std::size_t row, double* pooled, std::uint32_t* argmax) {
  for (std::size_t o = 0; o < count; ++o) {
    const double x = std::max(v[o], 0.0);
    if (x > pooled[o]) {
      pooled[o] = x;
      argmax[o] = static_cast<std::uint32_t>(row);
    }
  }
}

}  // namespace

void dense_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer, std::span<double> y,
                   bool rectify) {
  check_shapes(x, rows, layer);
  const std::size_t in = layer.in, out = layer.out;
  if (y.size() != rows * out) throw Error("dense layer: output shape mismatch");
  const double* w = layer.weight.data();
  const double* b = layer.bias.data();
  const std::size_t full_rows = rows - rows % kRowBlock;
  const std::size_t full_cols = out - out % kColBlock;
  for (std::size_t r = 0; r < full_rows; r += kRowBlock) {
    for (std::size_t o0 = 0; o0 < full_cols; o0 += kColBlock) {
      double acc[kRowBlock][kColBlock];
      tile(x.data() + r * in, in, w + o0, out, b + o0, acc);
      for (std::size_t q = 0; q < kRowBlock; ++q) {
        double* yr = y.data() + (r + q) * out + o0;
        for (std::size_t o = 0; o < kColBlock; ++o) yr[o] = rectify ? std::max(acc[q][o], 0.0) : acc[q][o];
      }
    }
    if (full_cols < out) {
      for (std::size_t q = 0; q < kRowBlock; ++q) {
        double* yr = y.data() + (r + q) * out;
        row_range(x.data() + (r + q) * in, in, w, out, b, full_cols, out, yr + full_cols);
        if (rectify) {
          for (std::size_t o = full_cols; o < out; ++o) yr[o] = std::max(yr[o], 0.0);
        }
      }
    }
  }
  for (std::size_t r = full_rows; r < rows; ++r) {
    double* yr = y.data() + r * out;
    row_range(x.data() + r * in, in, w, out, b, 0, out, yr);
    if (rectify) {
      for (std::size_t o = 0; o < out; ++o) yr[o] = std::max(yr[o], 0.0);
    }
  }
}

void dense_max_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer,
                       std::span<double> pooled, std::span<std::uint32_t> argmax) {
  check_shapes(x, rows, layer);
  if (rows == 0) throw Error("max pool over zero rows");
  const std::size_t in = layer.in, out = layer.out;
  if (pooled.size() != out || argmax.size() != out) throw Error("max pool: output shape mismatch");
  std::fill(pooled.begin(), pooled.end(), -std::numeric_limits<double>::infinity());
  std::fill(argmax.begin(), argmax.end(), 0u);
  const double* w = layer.weight.data();
  const double* b = layer.bias.data();
  const std::size_t full_rows = rows - rows % kRowBlock;
  const std::size_t full_cols = out - out % kColBlock;


  // Column blocks outermost so a block of pooled values stays hot.
  for (std::size_t o0 = 0; o0 < full_cols; o0 += kColBlock) {
    for (std::size_t r = 0; r < full_rows; r += kRowBlock) {
      double acc[kRowBlock][kColBlock];
      tile(x.data() + r * in, in, w + o0, out, b + o0, acc);
      for (std::size_t q = 0; q < kRowBlock; ++q) merge_row(acc[q], kColBlock, r + q, pooled.data() + o0, argmax.data() + o0);
    }
  }
  std::vector<double> tmp(out);
  for (std::size_t r = 0; r < rows; ++r) {
    const bool tail_row = r >= full_rows;
    const std::size_t o0 = tail_row ? 0 : full_cols;
    if (o0 == out) continue;
    row_range(x.data() + r * in, in, w, out, b, o0, out, tmp.data());
    merge_row(tmp.data(), out - o0, r, pooled.data() + o0, argmax.data() + o0);
  }
}

void dense_backward_input(std::span<const double> dy, const DenseLayer& layer, std::span<double> dx) {
  if (dy.size() != layer.out || dx.size() != layer.in) throw Error("dense backward: shape mismatch");
  const std::size_t out = layer.out;
  for (std::size_t i = 0; i < layer.in; ++i) {
    const double* wi = layer.weight.data() + i * out;
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t o = 0; o < out; ++o) s += wi[o] * dy[o];
    dx[i] = s;
  }
}

void accumulate_outer(std::span<const double> x, std::span<const double> dy, std::span<double> grad_w,
                      std::span<double> grad_b) {
  const std::size_t in = x.size(), out = dy.size();
  if (grad_w.size() != in * out || grad_b.size() != out) throw Error("outer product: shape mismatch");
  for (std::size_t i = 0; i < in; ++i) {
    const double xv = x[i];
    if (xv == 0.0) continue;
    double* gi = grad_w.data() + i * out;
#pragma omp simd
    for (std::size_t o = 0; o < out; ++o) gi[o] += xv * dy[o];
  }
  for (std::size_t o = 0; o < out; ++o) grad_b[o] += dy[o];
}

namespace reference {

void dense_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer, std::span<double> y,
                   bool rectify) {
  check_shapes(x, rows, layer);
  if (y.size() != rows * layer.out) throw Error("dense layer: output shape mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < layer.out; ++o) {
      double s = layer.bias[o];
      for (std::size_t i = 0; i < layer.in; ++i) s += x[r * layer.in + i] * layer.weight[i * layer.out + o];
      y[r * layer.out + o] = rectify ? std::max(s, 0.0) : s;
    }
  }
}

void dense_max_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer,
                       std::span<double> pooled, std::span<std::uint32_t> argmax) {
  if (rows == 0) throw Error("max pool over zero rows");
  std::vector<double> y(rows * layer.out);
  dense_forward(x, rows, layer, y, true);
  for (std::size_t o = 0; o < layer.out; ++o) {
    pooled[o] = y[o];
    argmax[o] = 0;
    for (std::size_t r = 1; r < rows; ++r) {
      if (y[r * layer.out + o] > pooled[o]) {
        pooled[o] = y[r * layer.out + o];
        argmax[o] = static_cast<std::uint32_t>(r);
      }
    }
  }
}

}  // namespace reference
}  // namespace shapecon::kernels
