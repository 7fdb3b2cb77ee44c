#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "piwan/bench.hpp"

using namespace piwan;

namespace {

namespace fs = std::filesystem;

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

// Rollout whose true derivative is the nominal one plus a constant offset.
Rollout offset_rollout(int count, const Vec3& offset) {
  Rollout r;
  r.trajectory = Trajectory::of(TrajectoryKind::Circle);
  r.wind = WindField::none();
  r.dt = 0.02;
  r.records.resize(count);
  for (int k = 0; k < count; ++k) {
    FlightRecord& rec = r.records[k];
    rec.t = k * r.dt;
    rec.state.p = Vec3{0.1 * k, 0.0, 1.0};
    rec.state.v = Vec3{0.2, -0.1, 0.05};
    rec.input = ControlInput{10.0, Vec3{0.1, 0.0, -0.05}};
    rec.dv_true = nominal_derivative(rec.state, rec.input).dv + offset;
  }
  return r;
}

ModelParams dummy_checkpoint(int window_len) {
  NetConfig cfg;
  cfg.window_len = window_len;
  cfg.tcn.blocks = 2;
  cfg.tcn.channels = 8;
  cfg.tcn.dilations = {1, 2};
  cfg.head_hidden = {8};
  ModelParams p = init_params(cfg, NormStats::identity());
  p.values.setZero();  // predicts zero everywhere
  return p;
}

BenchConfig tiny_bench(int window_len) {
  BenchConfig cfg;
  cfg.methods = {Method::Nom, Method::Tcn};
  cfg.trajectories = {Trajectory::of(TrajectoryKind::Circle),
                      Trajectory::of(TrajectoryKind::Spiral)};
  cfg.winds = {WindField::none(), WindField::xy(2.0, 0.0)};
  cfg.duration = 0.4;
  cfg.window_len = window_len;
  cfg.adapter.estimate_window = 2;
  return cfg;
}

}  // namespace

TEST_CASE("method roster resolves one-to-one") {
  CHECK_FALSE(method_config(Method::Nom).use_adapter);
  CHECK(method_config(Method::Tcn).use_adapter);
  CHECK(method_config(Method::Tcn).collocation == CollocationMode::Off);
  CHECK(method_config(Method::PiMlp).backbone == Backbone::Mlp);
  CHECK(method_config(Method::PiTcn).collocation == CollocationMode::Fixed);
  CHECK(method_config(Method::PiWan).collocation == CollocationMode::Resampled);
  CHECK(method_config(Method::PiWan).backbone == Backbone::Tcn);

  std::set<std::string> names;
  for (Method m : kAllMethods) names.insert(to_string(m));
  CHECK(names.size() == 5);
  for (Method m : kAllMethods) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("pid"), UnknownKind);
}

TEST_CASE("prediction_rmse of the nominal baseline") {
  // dv_true == nominal: zero error.
  CHECK(prediction_rmse(nullptr, offset_rollout(50, Vec3::Zero()), 10) == 0.0);
  // Constant (1,1,1) offset: RMSE = sqrt(3).
  CHECK(prediction_rmse(nullptr, offset_rollout(50, Vec3::Ones()), 10) ==
        doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(prediction_rmse(nullptr, offset_rollout(5, Vec3::Zero()), 10), RolloutTooShort);
}

TEST_CASE("prediction_rmse of a model that reproduces the labels") {
  NetConfig cfg;
  cfg.window_len = 6;
  cfg.tcn.blocks = 2;
  cfg.tcn.channels = 8;
  cfg.tcn.dilations = {1, 2};
  cfg.head_hidden = {8};
  NormStats stats = NormStats::identity();
  stats.target_mean = Vec3{0.3, -0.2, 0.1};
  ModelParams params = init_params(cfg, stats);
  params.values.setZero();  // predicts exactly the target mean

  Rollout r = offset_rollout(40, Vec3::Zero());
  for (FlightRecord& rec : r.records) rec.dv_true = stats.target_mean;
  CHECK(prediction_rmse(&params, r, 6) < 1e-12);
}

TEST_CASE("run_matrix produces every configured cell exactly once") {
  const BenchConfig cfg = tiny_bench(5);
  std::map<Method, ModelParams> ckpts;
  ckpts.emplace(Method::Tcn, dummy_checkpoint(5));

  const BenchReport report = run_matrix(cfg, ckpts);
  CHECK(report.cells.size() == 2 * 2 * 2 * 2);  // metrics x methods x trajs x winds

  std::set<std::string> keys;
  for (const BenchCell& c : report.cells) {
    CHECK(c.error.empty());
    CHECK(std::isfinite(c.value));
    keys.insert(c.metric + "|" + to_string(c.method) + "|" + to_string(c.trajectory) + "|" +
                std::to_string(c.wind_x) + "|" + std::to_string(c.wind_y));
  }
  CHECK(keys.size() == report.cells.size());
  CHECK(report.timings.size() == report.cells.size());

  // Tracking value equals the retained log's RMSE (single metric definition).
  for (const auto& [index, log] : report.track_logs) {
    CHECK(report.cells[index].value == doctest::Approx(tracking_rmse(log.steps)).epsilon(1e-12));
  }

  // Determinism: identical configuration gives identical values.
  const BenchReport again = run_matrix(cfg, ckpts);
  REQUIRE(again.cells.size() == report.cells.size());
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    CHECK(report.cells[i].value == again.cells[i].value);
  }
}

TEST_CASE("run_matrix tags failing cells instead of dropping them") {
  BenchConfig cfg = tiny_bench(30);  // windows longer than the 20-step rollouts
  cfg.run_tracking = false;
  std::map<Method, ModelParams> ckpts;
  ckpts.emplace(Method::Tcn, dummy_checkpoint(30));

  const BenchReport report = run_matrix(cfg, ckpts);
  CHECK(report.cells.size() == 2 * 2 * 2);
  for (const BenchCell& c : report.cells) {
    CHECK_FALSE(c.error.empty());
    CHECK(std::isnan(c.value));
  }
}

TEST_CASE("run_matrix requires checkpoints for learned methods") {
  const BenchConfig cfg = tiny_bench(5);
  CHECK_THROWS_AS(run_matrix(cfg, {}), ConfigError);
}

TEST_CASE("matrix CSV is bit-stable and round-trips") {
  const BenchConfig cfg = tiny_bench(5);
  std::map<Method, ModelParams> ckpts;
  ckpts.emplace(Method::Tcn, dummy_checkpoint(5));
  const BenchReport report = run_matrix(cfg, ckpts);

  const fs::path dir = fs::temp_directory_path() / "piwan_bench_csv";
  fs::create_directories(dir);
  write_matrix_csv(dir / "a.csv", report);

  const BenchReport loaded = load_matrix_csv(dir / "a.csv");
  write_matrix_csv(dir / "b.csv", loaded);
  CHECK(file_bytes(dir / "a.csv") == file_bytes(dir / "b.csv"));

  CHECK_THROWS_AS(write_matrix_csv(dir / "empty.csv", BenchReport{}), EmptyReport);
  fs::remove_all(dir);
}

TEST_CASE("heatmap cell count equals the tracking cell count") {
  const BenchConfig cfg = tiny_bench(5);
  std::map<Method, ModelParams> ckpts;
  ckpts.emplace(Method::Tcn, dummy_checkpoint(5));
  const BenchReport report = run_matrix(cfg, ckpts);

  const fs::path dir = fs::temp_directory_path() / "piwan_bench_svg";
  fs::remove_all(dir);
  const auto files = emit_report(dir, report, ReportFormat::SvgHeatmap);
  CHECK(files.size() == 2);  // one per trajectory

  int rects = 0;
  for (const fs::path& f : files) rects += count_occurrences(file_bytes(f), "class=\"cell\"");
  int tracking_cells = 0;
  for (const BenchCell& c : report.cells) {
    if (c.metric == "tracking_rmse") ++tracking_cells;
  }
  CHECK(rects == tracking_cells);

  // Trajectory overlays for the retained (strongest wind) logs.
  const auto tracks = emit_report(dir, report, ReportFormat::SvgTrajectory);
  CHECK(tracks.size() == 4);  // one per (method, trajectory) at the max wind
  for (const fs::path& f : tracks) {
    const std::string svg = file_bytes(f);
    CHECK(count_occurrences(svg, "<polyline") == 4);  // ref/actual x 2 panels
  }
  CHECK_THROWS_AS(emit_report(dir, BenchReport{}, ReportFormat::Csv), EmptyReport);
  fs::remove_all(dir);
}
