#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace shapecon {

// Affine map shared by every row it is applied to.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // in x out, row i holds the weights leaving input unit i
  std::vector<double> bias;    // out

  DenseLayer() = default;
  DenseLayer(std::size_t in_, std::size_t out_) : in(in_), out(out_), weight(in_ * out_, 0.0), bias(out_, 0.0) {}
};

namespace kernels {

// y[r] = x[r] * W + b for every row, optionally rectified. x is rows x in,
// y is rows x out, both row-major. Register-blocked over 4 rows x 32 columns.
void dense_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer, std::span<double> y,
                   bool rectify);

// Fused rectified affine map + column-wise max over rows, without storing
// the rows x out activation. argmax[o] is the lowest row attaining pooled[o].
void dense_max_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer,
                       std::span<double> pooled, std::span<std::uint32_t> argmax);

// dx = W * dy for a single row (dx has layer.in entries).
void dense_backward_input(std::span<const double> dy, const DenseLayer& layer, std::span<double> dx);

// grad_w += x (outer) dy, grad_b += dy for a single row.
void accumulate_outer(std::span<const double> x, std::span<const double> dy, std::span<double> grad_w,
                      std::span<double> grad_b);

// Textbook triple loops kept as the reference the blocked kernels are tested
// and benchmarked against.
namespace reference {

void dense_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer, std::span<double> y,
                   bool rectify);

void dense_max_forward(std::span<const double> x, std::size_t rows, const DenseLayer& layer,
                       std::span<double> pooled, std::span<std::uint32_t> argmax);

}  // namespace reference

}  // namespace kernels
}  // namespace shapecon
