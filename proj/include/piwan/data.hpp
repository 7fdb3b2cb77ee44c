#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "piwan/mpc.hpp"

namespace piwan {

struct FlightRecord {
  double t;
  State state;
  ControlInput input;
  Vec3 dv_true;  // true plant velocity derivative [m/s²]
};

struct Rollout {
  Trajectory trajectory;
  WindField wind;
  double dt{0.02};
  std::vector<FlightRecord> records;
};

struct Dataset {
  std::uint64_t seed{0};
  double dt{0.02};
  int window_len{20};  // T used when this dataset was assembled
  std::vector<Rollout> rollouts;
};

struct CollectConfig {
  double duration{20.0};
  double dt{0.02};
  int window_len{20};
  std::uint64_t seed{0};
  int threads{0};
  MpcConfig mpc{};
  MpcWeights weights{MpcWeights::defaults()};
};

// One nominal-MPC rollout per (trajectory, wind) cell. Deterministic given
// the configuration; cells run in parallel.
Dataset collect(std::span<const Trajectory> trajectories, std::span<const WindField> winds,
                const CollectConfig& cfg);
Dataset collect_cells(std::span<const std::pair<Trajectory, WindField>> cells,
                      const CollectConfig& cfg);

// Default training grid: for each of the five training kinds, five wind
// cells subsampled by seed from the 3×3 grid over {0, 2, 4} m/s in x and y.
std::vector<std::pair<Trajectory, WindField>> default_training_cells(std::uint64_t seed);

// 11×T feature block (rows: q w,x,y,z; v x,y,z; u t_mn,ωx,ωy,ωz — one column
// per frame, oldest first) with the velocity derivative at the final frame.
struct TrainingWindow {
  Eigen::MatrixXd features;
  Vec3 target{Vec3::Zero()};
};

inline constexpr int kFeatureChannels = 11;

Eigen::Matrix<double, kFeatureChannels, 1> frame_features(const State& x, const ControlInput& u);

std::vector<TrainingWindow> windowize_rollout(const Rollout& rollout, int window_len);

enum class SplitPolicy {
  TrainingSet,    // refuses rollouts on unseen trajectory kinds
  EvaluationSet,  // accepts any kind
};

// Sliding stride-1 windows inside each rollout; never crosses a rollout
// boundary. Per-rollout count = len − T + 1.
std::vector<TrainingWindow> windowize(const Dataset& dataset, int window_len, SplitPolicy policy);

// Per-channel z-score statistics, fitted on training windows only.
struct NormStats {
  Eigen::Matrix<double, kFeatureChannels, 1> feature_mean;
  Eigen::Matrix<double, kFeatureChannels, 1> feature_std;
  Vec3 target_mean{Vec3::Zero()};
  Vec3 target_std{Vec3::Ones()};

  static NormStats identity();
};

NormStats fit_normalizer(std::span<const TrainingWindow> windows);

Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& features, const NormStats& stats);
Eigen::MatrixXd denormalize_features(const Eigen::MatrixXd& normalized, const NormStats& stats);
Vec3 normalize_target(const Vec3& target, const NormStats& stats);
Vec3 denormalize_target(const Vec3& normalized, const NormStats& stats);

// Self-describing binary dataset file (magic/version header, schema, wind
// table, then little-endian f64 rows), plus a CSV export for inspection.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);
void export_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace piwan
