#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "shapecon/encoder.hpp"
#include "shapecon/training.hpp"

namespace shapecon {

struct GradcheckOptions {
  LossKind loss = LossKind::nce;
  std::size_t batch = 4;
  std::size_t points = 64;
  std::size_t coordinates = 200;  // checked coordinates, cycling over the tensors
  std::size_t negatives = 8;
  std::size_t bank_rows = 16;
  // With the fourth-order stencil truncation error is negligible at this
  // step; smaller steps only amplify rounding noise in the loss.
  double step = 1e-4;
  // Denominator floor of the relative error, so that gradients at the level
  // of rounding noise are compared absolutely.
  double floor = 1e-6;
  double tau = 0.07;
  std::uint64_t seed = 0;
  EncoderArch arch;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil crosses a rectifier or max-pool switch
  std::size_t nonzero = 0;  // checked coordinates with a nonzero analytic gradient
  std::string worst;        // "tensor[index]" of the largest error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Fourth-order central finite differences of the configured loss through the full
// encoder and critic, against the analytic gradient.
GradcheckResult gradcheck(const GradcheckOptions& options);

}  // namespace shapecon
