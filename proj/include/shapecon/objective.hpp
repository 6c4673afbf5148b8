#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "shapecon/rng.hpp"

namespace shapecon {

// exp(a^T W b / tau). Throws Error when tau <= 0.
double critic(std::span<const double> a, std::span<const double> b, std::span<const double> w, double tau);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad_a;       // N x d, gradient wrt each anchor embedding
  std::vector<double> grad_b;       // N x d, gradient wrt each view embedding (InfoNCE only)
  std::vector<double> grad_critic;  // d x d
};

// In-batch softmax contrastive loss: mean over i of
//   -log( h(a_i, b_i) / sum_j h(a_i, b_j) )
// evaluated in log-space. Embeddings are row-major N x d. Requires N >= 2.
LossResult info_nce_loss(std::span<const double> za, std::span<const double> zb, std::size_t d,
                         std::span<const double> w, double tau);

// Per-instance store of unit-norm view embeddings used as NCE noise samples.
struct MemoryBank {
  std::size_t rows = 0;
  std::size_t dim = 0;
  double momentum = 0.5;
  std::optional<double> z;      // NCE partition constant, frozen once set
  std::vector<double> data;     // rows x dim

  std::span<const double> row(std::size_t i) const { return std::span<const double>(data).subspan(i * dim, dim); }
  double noise_probability() const { return 1.0 / static_cast<double>(rows); }
  bool operator==(const MemoryBank&) const = default;
};

// Rows drawn uniformly on the unit sphere; partition constant unset.
MemoryBank bank_init(std::size_t rows, std::size_t dim, Rng& rng, double momentum = 0.5);

// Z = rows * mean(raw_scores). Throws when already calibrated or given no scores.
void bank_calibrate_z(MemoryBank& bank, std::span<const double> raw_scores);

// row <- normalize(momentum * row + (1 - momentum) * embedding).
void bank_update(MemoryBank& bank, std::size_t index, std::span<const double> embedding, double momentum);
void bank_update(MemoryBank& bank, std::size_t index, std::span<const double> embedding);

// k uniform bank indices, redrawing any that equal `positive`.
std::vector<std::size_t> sample_negatives(std::size_t bank_rows, std::size_t k, std::size_t positive, Rng& rng);

// Raw critic scores of each anchor against its own negatives, in order.
std::vector<double> raw_negative_scores(std::span<const double> za, std::size_t d, const MemoryBank& bank,
                                        std::span<const std::vector<std::size_t>> negatives,
                                        std::span<const double> w, double tau);

// Noise-contrastive loss against the memory bank. The positive for anchor i is
// the bank row of its instance, indices[i]; negatives are other bank rows.
// With s = h(a, b) / Z and P(D=1|s) = s / (s + k/M):
//   L = mean_i [ -log P(D=1|s(a_i, bank_{indices_i})) - sum_j log(1 - P(D=1|s(a_i, bank_j))) ].
// Gradients flow to anchors and W; grad_b is left empty.
LossResult nce_loss(std::span<const double> za, std::span<const std::size_t> indices, std::size_t d,
                    const MemoryBank& bank, std::span<const std::vector<std::size_t>> negatives,
                    std::span<const double> w, double tau);

}  // namespace shapecon
