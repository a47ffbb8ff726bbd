#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roar/imaging.hpp"
#include "roar/network.hpp"
#include "roar/tensor.hpp"

namespace roar {

// Losses ------------------------------------------------------------------------

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d input, same length as the predictions
};

/// Mean of squared differences.
LossValue mse_loss(std::span<const double> pred, std::span<const double> target);

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy on probabilities clamped to [eps, 1-eps].
/// The gradient is with respect to the (unclamped) probabilities and is zero
/// where clamping is active.
LossValue bce_loss(std::span<const double> prob, std::span<const double> label);

// Optimizer ---------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update using each tensor's gradient buffer.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, const AdamConfig& cfg = {});

// Learning-rate schedule -------------------------------------------------------

/// Multiplies the rate by `factor` once the best validation loss has not
/// improved for `patience` consecutive epochs; the counter restarts after
/// every improvement and every reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, double min_lr = 0.0);

  double step(double val_loss);
  double lr() const { return lr_; }

  struct State {
    double lr = 0.0;
    double best = 0.0;
    bool has_best = false;
    int wait = 0;
  };
  State state() const { return {lr_, best_, has_best_, wait_}; }
  void restore(const State& s);

 private:
  double lr_;
  int patience_;
  double factor_;
  double min_lr_;
  double best_ = 0.0;
  bool has_best_ = false;
  int wait_ = 0;
};

/// Replays `history` through a fresh scheduler and returns the resulting rate.
double plateau_schedule(std::span<const double> val_history, double base_lr, int patience = 10,
                        double factor = 0.75, double min_lr = 0.0);

// Training ------------------------------------------------------------------------

struct AugmentOption {
  AugmentSpec spec;
  double probability = 0.5;
  // Brightness and cutout draw their magnitude per sample: delta uniform in
  // [-|delta|, |delta|], side uniform in [1, side].
  bool randomize_magnitude = true;
};

struct TrainConfig {
  double base_lr = 1e-4;
  AdamConfig adam;
  int batch_size = 32;
  int max_epochs = 150;
  int plateau_patience = 10;
  double plateau_factor = 0.75;
  double min_lr = 0.0;
  int early_stop_patience = 0;  // 0 disables
  std::uint64_t seed = 1;
  std::vector<AugmentOption> augmentations;

  void validate() const;
};

/// Images plus one scalar target each (VCDR or 0/1 label).
struct Dataset {
  std::vector<RasterImage> images;
  std::vector<double> targets;

  std::size_t size() const { return images.size(); }
};

/// Packs images (interleaved RGB) into an N x 3 x H x W tensor.
Tensor to_batch(std::span<const RasterImage> images);
Tensor to_batch(std::span<const RasterImage* const> images);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

/// Everything needed to resume training bit-exactly, or to reload a model
/// for inference.
struct Checkpoint {
  GraphSpec graph;
  std::vector<std::vector<double>> params;
  AdamState adam;
  PlateauScheduler::State scheduler;
  int epoch = 0;
  std::string rng_state;
  std::vector<std::vector<double>> best_params;
  double best_val_loss = 0.0;
  int best_epoch = -1;
  int epochs_since_best = 0;
  std::vector<EpochRecord> history;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Network holding the checkpoint's best parameters (current ones when no
/// best has been recorded).
Network network_from_checkpoint(const Checkpoint& ckpt, bool use_best = true);

/// Stateful epoch-by-epoch trainer; fit() drives it to completion.
class Trainer {
 public:
  Trainer(Network net, TrainConfig cfg);
  Trainer(const Checkpoint& ckpt, TrainConfig cfg);

  EpochRecord run_epoch(const Dataset& train, const Dataset& val);
  bool should_stop() const;

  const Network& network() const { return net_; }
  Network best_network() const;
  const std::vector<EpochRecord>& history() const { return history_; }
  int best_epoch() const { return best_epoch_; }
  double best_val_loss() const { return best_val_; }
  int epoch() const { return epoch_; }
  Checkpoint checkpoint() const;

 private:
  double train_batch(const Dataset& train, std::span<const std::size_t> indices);

  Network net_;
  TrainConfig cfg_;
  AdamState adam_;
  PlateauScheduler scheduler_;
  Rng rng_;
  int epoch_ = 0;
  std::vector<std::vector<double>> best_params_;
  double best_val_ = 0.0;
  int best_epoch_ = -1;
  int since_best_ = 0;
  std::vector<EpochRecord> history_;
};

struct FitResult {
  Network model;  // parameters of the lowest-validation-loss epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  Checkpoint checkpoint;
};

FitResult fit(Network net, const Dataset& train, const Dataset& val, const TrainConfig& cfg);

/// Loss of the network on a dataset without augmentation.
double evaluate_loss(const Network& net, const Dataset& data, int batch_size = 64);

/// Per-image scores (probabilities for classification). Consumes no rng.
std::vector<double> predict(const Network& net, std::span<const RasterImage> images, int batch_size = 64);

}  // namespace roar
