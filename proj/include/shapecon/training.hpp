#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "shapecon/data.hpp"
#include "shapecon/encoder.hpp"
#include "shapecon/objective.hpp"
#include "shapecon/rng.hpp"
#include "shapecon/views.hpp"

namespace shapecon {

enum class LossKind { infonce, nce };
const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct RunConfig {
  std::size_t batch_size = 32;
  std::size_t points_per_cloud = 2048;
  std::size_t encode_points = 0;  // 0: encode clouds at full size; otherwise subsample both branches to this size
  double lr = 1e-4;
  double tau = 0.07;
  std::size_t k = 512;
  std::size_t epochs = 250;
  std::size_t max_steps = 0;  // 0: unlimited
  LossKind loss = LossKind::nce;
  std::string view = "aligned-clustering";
  int layer_tap = 6;
  double bank_momentum = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 50;
  std::string anchor_so3 = "auto";  // auto | true | false
  std::string dataset;
  std::string checkpoint = "model.i3dc";
  EncoderArch arch;

  // Throws Error naming the offending key.
  void validate() const;
  ViewSpec view_spec() const { return ViewSpec::parse(view); }
  // auto: the anchor is re-posed each epoch iff the view contains rotate_so3.
  bool anchor_rotates() const;

  // Sets one key from its text value; unknown keys throw.
  void set(const std::string& key, const std::string& value);
  // Flat "key = value" lines in a fixed key order.
  std::string to_text() const;
  // "key = value" lines with '#' comments; later lines override earlier ones.
  static RunConfig parse(const std::string& text);
  static RunConfig parse(const std::string& text, RunConfig base);
  static RunConfig load(const std::string& path);
  static RunConfig load(const std::string& path, RunConfig base);
};

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;

  static AdamState zeros(const EncoderArch& arch);
  bool operator==(const AdamState& other) const { return step == other.step && m == other.m && v == other.v; }
};

// Bias-corrected Adam over every tensor including the critic. Throws
// Error("diverged") before touching anything if a gradient is not finite.
void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps);

// Everything needed to continue a run bit-exactly.
struct TrainState {
  RunConfig config;
  EncoderParams params;
  AdamState adam;
  MemoryBank bank;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
  std::vector<double> epoch_losses;
  Rng shuffle_rng;
  Rng view_rng;
  Rng negative_rng;

  bool operator==(const TrainState& other) const;
};

// Fresh parameters, optimizer state and bank for `rows` training instances.
TrainState init_training(const RunConfig& config, std::size_t rows);

// Training clouds: the train split, resampled to points_per_cloud where the
// stored size differs (per-instance streams derived from the seed).
std::vector<PointCloud> training_clouds(const Dataset& dataset, const RunConfig& config);

// Anchor and view clouds for one instance, as fed to the encoder.
struct ViewPair {
  PointCloud anchor;
  PointCloud view;
};
ViewPair make_views(const PointCloud& cloud, const RunConfig& config, const ViewSpec& spec, std::uint64_t seed);

// One pass over shuffled instances in batches of min(batch_size, M), drop-last.
// Returns the mean batch loss. Stops early when max_steps is reached.
double train_epoch(std::span<const PointCloud> clouds, TrainState& state);

// Epoch bookkeeping for early stopping; returns true when training should stop.
bool record_epoch(TrainState& state, double loss);

// Runs epochs until config.epochs, max_steps or early stopping. `on_epoch`
// runs after every epoch (e.g. to write a checkpoint).
void train(std::span<const PointCloud> clouds, TrainState& state,
           const std::function<void(const TrainState&)>& on_epoch = {});

// Little-endian "I3DC" container with a section table.
std::string encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace shapecon
