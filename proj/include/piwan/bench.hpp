#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "piwan/adapter.hpp"
#include "piwan/data.hpp"
#include "piwan/train.hpp"

namespace piwan {

// Method roster. Every learned method feeds its disturbance estimate to the
// MPC; Nom runs the uncompensated nominal model.
enum class Method { Nom, Tcn, PiMlp, PiTcn, PiWan };

inline constexpr Method kAllMethods[] = {Method::Nom, Method::Tcn, Method::PiMlp, Method::PiTcn,
                                         Method::PiWan};

struct MethodConfig {
  Backbone backbone{Backbone::Tcn};
  CollocationMode collocation{CollocationMode::Off};
  bool use_adapter{false};
};

MethodConfig method_config(Method method);
std::string to_string(Method method);
Method method_from_string(const std::string& name);

// sqrt(mean ‖v̇_pred − dv_true‖²) over all length-T windows of the rollout.
// A null model scores the nominal derivative (the Nom baseline).
double prediction_rmse(const ModelParams* model, const Rollout& rollout, int window_len);

struct BenchConfig {
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<Trajectory> trajectories;
  std::vector<WindField> winds;
  double duration{20.0};
  int window_len{20};
  MpcConfig mpc{};
  MpcWeights weights{MpcWeights::defaults()};
  AdapterConfig adapter{};
  std::uint64_t seed{0};
  int threads{0};
  bool run_prediction{true};
  bool run_tracking{true};

  static BenchConfig defaults();
};

struct BenchCell {
  Method method;
  TrajectoryKind trajectory;
  double wind_x;
  double wind_y;
  std::string metric;  // "prediction_rmse" or "tracking_rmse"
  double value;
  std::uint64_t seed;
  std::string error;  // non-empty when the cell failed; value is NaN then
};

struct CellTiming {
  std::size_t cell_index;
  double wall_time_s;
};

struct BenchReport {
  std::vector<BenchCell> cells;                            // sorted: metric, method, traj, wind
  std::vector<CellTiming> timings;                         // same order as cells
  std::vector<std::pair<std::size_t, TrackLog>> track_logs;  // retained for the strongest wind
};

// Full experiment matrix. Prediction cells score each method on shared
// nominal-MPC rollouts per (trajectory, wind); tracking cells close the loop
// per method. Cells run in parallel; assembly order is deterministic.
BenchReport run_matrix(const BenchConfig& cfg, const std::map<Method, ModelParams>& checkpoints);

enum class ReportFormat { Csv, SvgHeatmap, SvgTrajectory };

// Renders the requested format under `dir` and returns the files written.
// Csv: matrix.csv (bit-stable) + timings.csv. SvgHeatmap: one wind×method
// grid per trajectory. SvgTrajectory: reference-vs-actual overlays for the
// retained track logs.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir,
                                               const BenchReport& report, ReportFormat format);

void write_matrix_csv(const std::filesystem::path& path, const BenchReport& report);
BenchReport load_matrix_csv(const std::filesystem::path& path);
void write_track_svg(const std::filesystem::path& path, const TrackLog& log);

}  // namespace piwan
