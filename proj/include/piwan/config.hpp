#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "piwan/bench.hpp"

namespace piwan {

// One structured configuration for every subcommand. Unknown keys are
// rejected; environment overrides exist for the output directory
// (PIWAN_OUTPUT_DIR) and thread count (PIWAN_THREADS) only.
struct RunConfig {
  std::string run_id{"default"};
  std::uint64_t seed{0};
  std::string output_dir{"."};
  int threads{0};  // 0 = all available cores

  struct Plant {
    Vec3 wind{Vec3::Zero()};
    Vec3 drag_coeffs{0.3, 0.3, 0.15};
  } plant;

  struct Shape {
    double radius_x{2.0};
    double radius_y{1.5};
    double height{1.0};
    double angular_rate{2.0 * M_PI / 20.0};
    double climb_rate{0.05};
    double warp_amplitude{0.5};
  } shape;

  MpcConfig mpc{};
  MpcWeights weights{MpcWeights::defaults()};

  struct Data {
    double duration{20.0};
    int window_len{20};
  } data;

  NetConfig net{};
  TrainConfig train{};
  AdapterConfig adapter{};

  struct Bench {
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    std::vector<TrajectoryKind> trajectories{std::begin(kAllTrajectoryKinds),
                                             std::end(kAllTrajectoryKinds)};
    std::vector<std::pair<double, double>> winds{{0, 0}, {2, 0}, {4, 0}, {6, 0}};
    double duration{20.0};
  } bench;

  Trajectory make_trajectory(TrajectoryKind kind) const;
  WindField make_wind(double wx, double wy) const;
  BenchConfig make_bench_config() const;
  CollectConfig make_collect_config() const;

  std::filesystem::path artifacts_dir() const;  // <output_dir>/artifacts/<run_id>
  std::filesystem::path reports_dir() const;    // <output_dir>/reports/<run_id>

  void validate() const;
};

RunConfig default_config();
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
void apply_env_overrides(RunConfig& cfg);
void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg);

}  // namespace piwan
