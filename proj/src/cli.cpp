#include "piwan/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "piwan/config.hpp"

namespace piwan {

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
  std::string config_path;
  std::optional<std::string> run_id;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> threads;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Path to the JSON run configuration");
    cmd->add_option("--run-id", run_id, "Override run_id (isolates outputs per run)");
    cmd->add_option("--seed", seed, "Override the master seed");
    cmd->add_option("--output-dir", output_dir, "Override the output directory");
    cmd->add_option("--threads", threads, "Override the worker thread count (0 = all cores)");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
    apply_env_overrides(cfg);
    if (run_id) cfg.run_id = *run_id;
    if (seed) cfg.seed = *seed;
    if (output_dir) cfg.output_dir = *output_dir;
    if (threads) cfg.threads = *threads;
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
  }
};

std::pair<double, double> parse_wind(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--wind expects 'x,y' in m/s");
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--wind expects 'x,y' in m/s");
  }
}

fs::path default_dataset_path(const RunConfig& cfg) { return cfg.artifacts_dir() / "dataset.bin"; }

fs::path checkpoint_path(const fs::path& dir, Method method, std::uint64_t seed) {
  return dir / ("checkpoint-" + to_string(method) + "-seed" + std::to_string(seed) + ".bin");
}

NetConfig net_config_for(const RunConfig& cfg, Method method) {
  NetConfig net = cfg.net;
  net.backbone = method_config(method).backbone;
  return net;
}

TrainConfig train_config_for(const RunConfig& cfg, Method method) {
  TrainConfig train = cfg.train;
  train.collocation = method_config(method).collocation;
  train.seed = cfg.seed;
  return train;
}

int run_collect(const CommonOpts& common, bool export_csv) {
  const RunConfig cfg = common.resolve();
  auto cells = default_training_cells(cfg.seed);
  for (auto& [traj, wind] : cells) {
    traj = cfg.make_trajectory(traj.kind);
    wind.drag_coeffs = cfg.plant.drag_coeffs;
  }
  std::cout << "collecting " << cells.size() << " rollouts (" << cfg.data.duration << " s at dt="
            << cfg.mpc.dt << ")...\n";
  const Dataset dataset = collect_cells(cells, cfg.make_collect_config());

  const fs::path out = default_dataset_path(cfg);
  save_dataset(out, dataset);
  write_config_echo(cfg.artifacts_dir(), cfg);
  std::size_t records = 0;
  for (const Rollout& r : dataset.rollouts) records += r.records.size();
  std::cout << "wrote " << dataset.rollouts.size() << " rollouts, " << records << " records -> "
            << out.string() << "\n";
  if (export_csv) {
    const fs::path csv = cfg.artifacts_dir() / "dataset.csv";
    export_dataset_csv(csv, dataset);
    std::cout << "wrote " << csv.string() << "\n";
  }
  return 0;
}

int run_train(const CommonOpts& common, const std::string& method_name,
              const std::string& dataset_override) {
  const RunConfig cfg = common.resolve();
  const Method method = method_from_string(method_name);
  if (method == Method::Nom) throw ConfigError("train: the nominal model has no parameters");

  const fs::path dataset_path =
      dataset_override.empty() ? default_dataset_path(cfg) : fs::path(dataset_override);
  if (!fs::exists(dataset_path)) {
    throw ConfigError("train: dataset not found at " + dataset_path.string() +
                      " (run `piwan collect` first or pass --dataset)");
  }
  const Dataset dataset = load_dataset(dataset_path);
  const std::vector<TrainingWindow> windows =
      windowize(dataset, cfg.data.window_len, SplitPolicy::TrainingSet);
  std::cout << "training " << to_string(method) << " ("
            << build_layout(net_config_for(cfg, method)).total << " parameters) on "
            << windows.size() << " windows, " << cfg.train.epochs << " epochs, seed " << cfg.seed
            << "...\n";

  const TrainResult result =
      fit(windows, net_config_for(cfg, method), train_config_for(cfg, method), dataset.dt);

  const fs::path ckpt = checkpoint_path(cfg.artifacts_dir(), method, cfg.seed);
  save_checkpoint(ckpt, result.params);
  const fs::path log_path = cfg.artifacts_dir() / ("trainlog-" + to_string(method) + "-seed" +
                                                   std::to_string(cfg.seed) + ".csv");
  write_train_log_csv(log_path, result.log);
  write_config_echo(cfg.artifacts_dir(), cfg);

  std::cout << "final: loss_sl=" << result.log.back().loss_sl
            << " loss_pi=" << result.log.back().loss_pi
            << " val_rmse=" << result.log.back().val_rmse << " m/s^2\n";
  std::cout << "wrote " << ckpt.string() << "\n";
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& checkpoint, const std::string& traj_name,
             const std::string& wind_text) {
  const RunConfig cfg = common.resolve();
  const TrajectoryKind kind = trajectory_kind_from_string(traj_name);
  const auto [wx, wy] = parse_wind(wind_text);

  std::vector<std::pair<Trajectory, WindField>> cells{
      {cfg.make_trajectory(kind), cfg.make_wind(wx, wy)}};
  CollectConfig ccfg = cfg.make_collect_config();
  const Dataset rollouts = collect_cells(cells, ccfg);
  const Rollout& rollout = rollouts.rollouts.front();

  const double nom = prediction_rmse(nullptr, rollout, cfg.data.window_len);
  std::cout << "prediction RMSE on " << traj_name << " at wind (" << wx << ", " << wy << ") m/s:\n";
  std::cout << "  nom: " << nom << " m/s^2\n";
  if (!checkpoint.empty()) {
    const ModelParams params = load_checkpoint(checkpoint);
    const double learned = prediction_rmse(&params, rollout, cfg.data.window_len);
    std::cout << "  checkpoint: " << learned << " m/s^2\n";
  }
  write_config_echo(cfg.artifacts_dir(), cfg);
  return 0;
}

int run_track(const CommonOpts& common, const std::string& method_name,
              const std::string& traj_name, const std::string& wind_text,
              const std::string& checkpoint) {
  const RunConfig cfg = common.resolve();
  const Method method = method_from_string(method_name);
  const TrajectoryKind kind = trajectory_kind_from_string(traj_name);
  const auto [wx, wy] = parse_wind(wind_text);
  const Trajectory traj = cfg.make_trajectory(kind);
  const WindField wind = cfg.make_wind(wx, wy);

  TrackLog log;
  if (method == Method::Nom) {
    NominalModel model;
    log = track(traj, model, wind, cfg.mpc, cfg.weights, cfg.bench.duration);
  } else {
    if (checkpoint.empty()) {
      throw ConfigError("track: --checkpoint is required for method '" + method_name + "'");
    }
    AdaptiveModel model(load_checkpoint(checkpoint), cfg.adapter);
    log = track(traj, model, wind, cfg.mpc, cfg.weights, cfg.bench.duration);
  }

  const fs::path svg =
      cfg.reports_dir() / ("track-" + to_string(method) + "-" + to_string(kind) + ".svg");
  write_track_svg(svg, log);
  write_config_echo(cfg.reports_dir(), cfg);
  std::cout << "tracking RMSE: " << log.rmse << " m over " << log.steps.size() << " steps\n";
  std::cout << "wrote " << svg.string() << "\n";
  return 0;
}

int run_sweep(const CommonOpts& common, const std::string& checkpoint_dir) {
  const RunConfig cfg = common.resolve();
  const fs::path ckpt_dir = checkpoint_dir.empty() ? cfg.artifacts_dir() : fs::path(checkpoint_dir);

  std::map<Method, ModelParams> checkpoints;
  for (Method m : cfg.bench.methods) {
    if (m == Method::Nom) continue;
    const fs::path path = checkpoint_path(ckpt_dir, m, cfg.seed);
    if (!fs::exists(path)) {
      throw ConfigError("sweep: missing checkpoint " + path.string() +
                        " (train it first or pass --checkpoint-dir)");
    }
    checkpoints.emplace(m, load_checkpoint(path));
  }

  const BenchConfig bench_cfg = cfg.make_bench_config();
  std::cout << "sweep: " << bench_cfg.methods.size() << " methods x "
            << bench_cfg.trajectories.size() << " trajectories x " << bench_cfg.winds.size()
            << " winds...\n";
  const BenchReport report = run_matrix(bench_cfg, checkpoints);

  const fs::path dir = cfg.reports_dir();
  for (ReportFormat fmt : {ReportFormat::Csv, ReportFormat::SvgHeatmap, ReportFormat::SvgTrajectory}) {
    for (const fs::path& f : emit_report(dir, report, fmt)) {
      std::cout << "wrote " << f.string() << "\n";
    }
  }
  write_config_echo(dir, cfg);

  int failed = 0;
  for (const BenchCell& c : report.cells) {
    if (!c.error.empty()) {
      ++failed;
      std::cout << "cell error: " << to_string(c.method) << " " << to_string(c.trajectory)
                << " wind (" << c.wind_x << ", " << c.wind_y << "): " << c.error << "\n";
    }
  }
  std::cout << report.cells.size() << " cells, " << failed << " failed\n";
  return failed == 0 ? 0 : 2;
}

int run_report(const CommonOpts& common, const std::string& matrix_path) {
  const RunConfig cfg = common.resolve();
  const BenchReport report = load_matrix_csv(matrix_path);
  const fs::path dir = cfg.reports_dir();
  for (ReportFormat fmt : {ReportFormat::Csv, ReportFormat::SvgHeatmap}) {
    for (const fs::path& f : emit_report(dir, report, fmt)) {
      std::cout << "wrote " << f.string() << "\n";
    }
  }
  write_config_echo(dir, cfg);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"quadrotor dynamics learning and wind-adaptive MPC toolkit"};
  app.require_subcommand(1);

  CommonOpts collect_opts, train_opts, eval_opts, track_opts, sweep_opts, report_opts;

  auto* collect_cmd = app.add_subcommand("collect", "Fly the training grid and write the dataset");
  collect_opts.attach(collect_cmd);
  bool collect_csv = false;
  collect_cmd->add_flag("--csv", collect_csv, "Also export the dataset as CSV");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a collected dataset");
  train_opts.attach(train_cmd);
  std::string train_method, train_dataset;
  train_cmd->add_option("--method", train_method, "One of: tcn, pi-mlp, pi-tcn, pi-wan")
      ->required();
  train_cmd->add_option("--dataset", train_dataset, "Dataset file (default: this run's dataset)");

  auto* eval_cmd = app.add_subcommand("eval", "Prediction RMSE of a checkpoint on one cell");
  eval_opts.attach(eval_cmd);
  std::string eval_checkpoint, eval_traj = "warped_ellipse", eval_wind = "5,0";
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file to evaluate");
  eval_cmd->add_option("--traj", eval_traj, "Trajectory name");
  eval_cmd->add_option("--wind", eval_wind, "Wind 'x,y' in m/s");

  auto* track_cmd = app.add_subcommand("track", "Closed-loop tracking of one trajectory");
  track_opts.attach(track_cmd);
  std::string track_method, track_traj, track_wind = "0,0", track_checkpoint;
  track_cmd->add_option("--method", track_method, "One of: nom, tcn, pi-mlp, pi-tcn, pi-wan")
      ->required();
  track_cmd->add_option("--traj", track_traj, "Trajectory name")->required();
  track_cmd->add_option("--wind", track_wind, "Wind 'x,y' in m/s");
  track_cmd->add_option("--checkpoint", track_checkpoint, "Checkpoint (learned methods)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the full method x trajectory x wind matrix");
  sweep_opts.attach(sweep_cmd);
  std::string sweep_ckpt_dir;
  sweep_cmd->add_option("--checkpoint-dir", sweep_ckpt_dir,
                        "Directory holding checkpoint-<method>-seed<seed>.bin files");

  auto* report_cmd = app.add_subcommand("report", "Re-render reports from a matrix.csv");
  report_opts.attach(report_cmd);
  std::string report_matrix;
  report_cmd->add_option("--matrix", report_matrix, "matrix.csv to render")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (collect_cmd->parsed()) return run_collect(collect_opts, collect_csv);
    if (train_cmd->parsed()) return run_train(train_opts, train_method, train_dataset);
    if (eval_cmd->parsed()) return run_eval(eval_opts, eval_checkpoint, eval_traj, eval_wind);
    if (track_cmd->parsed()) {
      return run_track(track_opts, track_method, track_traj, track_wind, track_checkpoint);
    }
    if (sweep_cmd->parsed()) return run_sweep(sweep_opts, sweep_ckpt_dir);
    if (report_cmd->parsed()) return run_report(report_opts, report_matrix);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const UnknownKind& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace piwan
