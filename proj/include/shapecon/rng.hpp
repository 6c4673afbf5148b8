#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace shapecon {

// Seeded random source. Every distribution is implemented here on top of
// the raw 64-bit engine so that streams are bit-reproducible and the state
// can be serialized into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal (Box-Muller, no cached second value).
  double normal();

  // Child stream whose seed is a mix of this stream's next output and tag.
  Rng split(std::uint64_t tag);

  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace shapecon
