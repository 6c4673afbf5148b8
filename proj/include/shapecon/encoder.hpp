#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shapecon/geometry.hpp"
#include "shapecon/kernels.hpp"
#include "shapecon/rng.hpp"

namespace shapecon {

// Seven affine layers: five shared per-point layers, a max-pool over points,
// one rectified global layer and one linear global layer.
struct EncoderArch {
  static constexpr std::size_t kLayers = 7;
  static constexpr std::size_t kPointLayers = 5;
  // widths[0] is the input (3); widths[l] is the output of layer l.
  std::array<std::size_t, kLayers + 1> widths{3, 64, 64, 64, 128, 1024, 512, 128};

  std::size_t embedding_dim() const { return widths[kLayers]; }
  std::size_t tap_dim(int layer) const;
  void validate() const;
  bool operator==(const EncoderArch&) const = default;
};

// Trainable tensors of the encoder plus the bilinear critic matrix.
struct EncoderParams {
  EncoderArch arch;
  std::array<DenseLayer, EncoderArch::kLayers> layers;
  std::vector<double> critic;  // d x d row-major, d = arch.embedding_dim()

  // Zero-filled tensors with the shapes of `arch`.
  static EncoderParams zeros(const EncoderArch& arch);

  std::size_t parameter_count() const;

  // Visits every tensor in a fixed order (w1, b1, ..., w7, b7, critic).
  void for_each_tensor(const std::function<void(const std::string&, std::span<double>)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, std::span<const double>)>& fn) const;

  bool operator==(const EncoderParams& other) const;
};

// Gradient accumulators share the parameter layout.
using Gradients = EncoderParams;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, identity critic.
EncoderParams init_params(Rng& rng, const EncoderArch& arch = {});

// Activations retained by a forward pass.
struct ForwardPass {
  std::size_t points = 0;
  std::vector<double> input;                                    // points x 3
  std::array<std::vector<double>, 4> point_acts;                // layers 1-4, points x width, rectified
  std::vector<double> pooled;                                   // layer 5 rectified, max over points
  std::vector<std::uint32_t> argmax;                            // winning point per pooled channel
  std::vector<double> layer6;                                   // rectified
  std::vector<double> layer7;                                   // affine output, no rectifier

  // Post-layer activation used as an embedding tap (6 or 7).
  std::span<const double> tap(int layer) const;

  // Hash of every branch decision (rectifier signs, max-pool winners); two
  // passes with equal signatures lie on the same linear piece.
  std::uint64_t branch_signature() const;
};

ForwardPass forward(const EncoderParams& params, const PointCloud& cloud);

// Per-point layer-5 features of a single point (no pooling); reference helper.
std::vector<double> point_features(const EncoderParams& params, const Vec3& p);

// Unit-normalized tap. Throws Error("degenerate embedding") on a zero vector.
std::vector<double> embed(const EncoderParams& params, const PointCloud& cloud, int layer_tap = 7);
std::vector<double> normalize_tap(std::span<const double> tap);

// Forward passes over a batch, data-parallel across clouds.
std::vector<ForwardPass> forward_batch(const EncoderParams& params, std::span<const PointCloud> clouds);

// Unit-normalized layer-7 embeddings of a batch of passes, row-major N x d.
std::vector<double> embeddings_of(std::span<const ForwardPass> passes, int layer_tap = 7);

// Accumulates into `grads` the exact gradient of a scalar loss with respect to
// every encoder tensor, given dL/dz for each unit-normalized layer-7
// embedding (row-major N x d). Max-pool subgradients go to the recorded
// winner. The critic entry of `grads` is left untouched. Per-sample signals
// are computed in parallel; each parameter row then sums samples in order,
// so the result does not depend on the thread count.
void backward(const EncoderParams& params, std::span<const ForwardPass> passes, std::span<const double> upstream,
              Gradients& grads);

namespace reference {

// Straightforward dense backward for one sample: materializes every layer-5
// activation and routes the pooled gradient through an explicit mask.
void backward_one(const EncoderParams& params, const PointCloud& cloud, std::span<const double> upstream,
                  Gradients& grads);

}  // namespace reference

}  // namespace shapecon
