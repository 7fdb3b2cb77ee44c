#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "piwan/net.hpp"

namespace piwan {

enum class CollocationMode { Off, Fixed, Resampled };

std::string to_string(CollocationMode mode);
CollocationMode collocation_mode_from_string(const std::string& name);

struct TrainConfig {
  int epochs{80};
  int batch_size{256};           // N_B
  double learning_rate{1e-3};
  double adam_beta1{0.9};
  double adam_beta2{0.999};
  double adam_eps{1e-8};
  double lambda_pi{0.1};         // λ
  CollocationMode collocation{CollocationMode::Off};
  int collocation_count{2048};   // N_c
  int resample_period{10};       // epochs between fresh collocation sets
  double val_fraction{0.1};
  std::uint64_t seed{0};

  void validate() const;
};

// Randomly sampled state-input windows, each a nominal-model rollout with
// the control held, labelled with the nominal velocity derivative at the
// final frame.
struct CollocationSet {
  std::vector<TrainingWindow> windows;
};

CollocationSet sample_collocation(int count, std::uint64_t seed, int window_len, double dt);

struct LossResult {
  double value{0.0};
  Eigen::VectorXd gradient;
};

// Mean squared error over batch and output components, in normalized target
// space, with the exact reverse-mode gradient.
LossResult supervised_loss(const ModelParams& params, std::span<const TrainingWindow> batch);
LossResult physics_loss(const ModelParams& params, const CollocationSet& colloc);

struct EpochLog {
  int epoch;
  double loss_sl;
  double loss_pi;
  double val_rmse;       // held-out prediction RMSE [m/s²]
  double wall_time_s;    // cumulative
  std::uint64_t collocation_hash;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  std::vector<int> collocation_epochs;  // epochs at which the set was (re)built
  double initial_val_rmse{0.0};         // held-out RMSE before any update
};

// Adam over minibatches of L = L_SL + λ·L_PI. Collocation modes: `off`
// (plain supervised), `fixed` (one set sampled before training), `resampled`
// (fresh set every resample_period epochs). Deterministic under fixed seed.
TrainResult fit(std::span<const TrainingWindow> windows, const NetConfig& net_cfg,
                const TrainConfig& cfg, double dt);

void write_train_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace piwan
