#include "piwan/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "piwan/common.hpp"
#include "piwan/io.hpp"

namespace piwan {

namespace {

constexpr char kDatasetMagic[] = "PWDS";
constexpr std::uint32_t kDatasetVersion = 1;
constexpr char kColumnSchema[] =
    "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,tmn,wx,wy,wz,dvx,dvy,dvz";
constexpr int kColumns = 18;

Rollout collect_one(const Trajectory& traj, const WindField& wind, const CollectConfig& cfg) {
  std::optional<MpcSolution> warm;
  const DiscreteDynamics nominal = nominal_discrete_dynamics();
  ControlPolicy policy = [&](double t, const State& x) {
    const std::vector<ReferenceState> refs = horizon(traj, t, cfg.mpc.horizon, cfg.mpc.dt);
    MpcSolution sol = solve(x, refs, nominal, cfg.mpc, cfg.weights, warm ? &*warm : nullptr);
    const ControlInput u = sol.u0;
    warm = std::move(sol);
    return u;
  };

  const State x0 = sample(traj, 0.0).state();
  std::vector<SimRecord> sim;
  try {
    sim = simulate(x0, policy, wind, cfg.duration, cfg.dt);
  } catch (const SolverDiverged& e) {
    throw SolverDiverged("collect cell (" + to_string(traj.kind) + ", wind " +
                         format_double(wind.v_w.x()) + "," + format_double(wind.v_w.y()) +
                         "): " + e.what());
  }

  Rollout rollout;
  rollout.trajectory = traj;
  rollout.wind = wind;
  rollout.dt = cfg.dt;
  rollout.records.reserve(sim.size());
  for (const SimRecord& r : sim) {
    rollout.records.push_back(FlightRecord{r.t, r.state, r.input, r.deriv.dv});
  }
  return rollout;
}

}  // namespace

Dataset collect_cells(std::span<const std::pair<Trajectory, WindField>> cells,
                      const CollectConfig& cfg) {
  Dataset dataset;
  dataset.seed = cfg.seed;
  dataset.dt = cfg.dt;
  dataset.window_len = cfg.window_len;
  dataset.rollouts.resize(cells.size());
  parallel_for(static_cast<int>(cells.size()), cfg.threads, [&](int i) {
    dataset.rollouts[i] = collect_one(cells[i].first, cells[i].second, cfg);
  });
  return dataset;
}

Dataset collect(std::span<const Trajectory> trajectories, std::span<const WindField> winds,
                const CollectConfig& cfg) {
  std::vector<std::pair<Trajectory, WindField>> cells;
  cells.reserve(trajectories.size() * winds.size());
  for (const Trajectory& traj : trajectories) {
    for (const WindField& wind : winds) cells.emplace_back(traj, wind);
  }
  return collect_cells(cells, cfg);
}

std::vector<std::pair<Trajectory, WindField>> default_training_cells(std::uint64_t seed) {
  const double speeds[] = {0.0, 2.0, 4.0};
  std::vector<WindField> grid;
  for (double wx : speeds) {
    for (double wy : speeds) grid.push_back(WindField::xy(wx, wy));
  }

  std::vector<std::pair<Trajectory, WindField>> cells;
  int traj_index = 0;
  for (TrajectoryKind kind : kAllTrajectoryKinds) {
    if (!is_training_kind(kind)) continue;
    std::vector<WindField> winds = grid;
    std::mt19937_64 rng(derive_seed(seed, 1000 + traj_index));
    std::shuffle(winds.begin(), winds.end(), rng);
    for (int i = 0; i < 5; ++i) cells.emplace_back(Trajectory::of(kind), winds[i]);
    ++traj_index;
  }
  return cells;
}

Eigen::Matrix<double, kFeatureChannels, 1> frame_features(const State& x, const ControlInput& u) {
  Eigen::Matrix<double, kFeatureChannels, 1> f;
  f << x.q.w, x.q.x, x.q.y, x.q.z, x.v, u.to_vector();
  return f;
}

std::vector<TrainingWindow> windowize_rollout(const Rollout& rollout, int window_len) {
  if (window_len < 1) throw Error("windowize: window length must be >= 1");
  const int n = static_cast<int>(rollout.records.size());
  if (n < window_len) {
    throw RolloutTooShort("windowize: rollout has " + std::to_string(n) + " records, need " +
                          std::to_string(window_len));
  }
  std::vector<TrainingWindow> windows;
  windows.reserve(n - window_len + 1);
  for (int end = window_len - 1; end < n; ++end) {
    TrainingWindow w;
    w.features.resize(kFeatureChannels, window_len);
    for (int j = 0; j < window_len; ++j) {
      const FlightRecord& rec = rollout.records[end - window_len + 1 + j];
      w.features.col(j) = frame_features(rec.state, rec.input);
    }
    w.target = rollout.records[end].dv_true;
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<TrainingWindow> windowize(const Dataset& dataset, int window_len, SplitPolicy policy) {
  std::vector<TrainingWindow> all;
  for (const Rollout& rollout : dataset.rollouts) {
    if (policy == SplitPolicy::TrainingSet && !is_training_kind(rollout.trajectory.kind)) {
      throw Error("windowize: rollout on unseen kind '" + to_string(rollout.trajectory.kind) +
                  "' is not allowed in a training set");
    }
    std::vector<TrainingWindow> w = windowize_rollout(rollout, window_len);
    all.insert(all.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return all;
}

NormStats NormStats::identity() {
  NormStats s;
  s.feature_mean.setZero();
  s.feature_std.setOnes();
  s.target_mean.setZero();
  s.target_std.setOnes();
  return s;
}

NormStats fit_normalizer(std::span<const TrainingWindow> windows) {
  if (windows.empty()) throw EmptyDataset("fit_normalizer: no windows");

  NormStats stats;
  stats.feature_mean.setZero();
  stats.target_mean.setZero();
  Eigen::Matrix<double, kFeatureChannels, 1> fmin = windows.front().features.rowwise().minCoeff();
  Eigen::Matrix<double, kFeatureChannels, 1> fmax = windows.front().features.rowwise().maxCoeff();
  Vec3 tmin = windows.front().target, tmax = windows.front().target;
  std::int64_t frames = 0;
  for (const TrainingWindow& w : windows) {
    stats.feature_mean += w.features.rowwise().sum();
    stats.target_mean += w.target;
    frames += w.features.cols();
    fmin = fmin.cwiseMin(w.features.rowwise().minCoeff());
    fmax = fmax.cwiseMax(w.features.rowwise().maxCoeff());
    tmin = tmin.cwiseMin(w.target);
    tmax = tmax.cwiseMax(w.target);
  }
  stats.feature_mean /= static_cast<double>(frames);
  stats.target_mean /= static_cast<double>(windows.size());

  // Exactly constant channels normalize to exactly zero: take the value as
  // the mean so the floored std does not amplify summation rounding.
  for (int i = 0; i < kFeatureChannels; ++i) {
    if (fmin[i] == fmax[i]) stats.feature_mean[i] = fmin[i];
  }
  for (int i = 0; i < 3; ++i) {
    if (tmin[i] == tmax[i]) stats.target_mean[i] = tmin[i];
  }

  Eigen::Matrix<double, kFeatureChannels, 1> fvar = decltype(fvar)::Zero();
  Vec3 tvar = Vec3::Zero();
  for (const TrainingWindow& w : windows) {
    fvar += (w.features.colwise() - stats.feature_mean).cwiseAbs2().rowwise().sum();
    tvar += (w.target - stats.target_mean).cwiseAbs2();
  }
  fvar /= static_cast<double>(frames);
  tvar /= static_cast<double>(windows.size());

  stats.feature_std = fvar.cwiseSqrt().cwiseMax(1e-6);  // constant channels floored
  stats.target_std = tvar.cwiseSqrt().cwiseMax(1e-6);
  return stats;
}

Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& features, const NormStats& stats) {
  if (features.rows() != kFeatureChannels) {
    throw ShapeMismatch("normalize_features: expected 11 feature rows");
  }
  return stats.feature_std.cwiseInverse().asDiagonal() *
         (features.colwise() - stats.feature_mean);
}

Eigen::MatrixXd denormalize_features(const Eigen::MatrixXd& normalized, const NormStats& stats) {
  if (normalized.rows() != kFeatureChannels) {
    throw ShapeMismatch("denormalize_features: expected 11 feature rows");
  }
  return (stats.feature_std.asDiagonal() * normalized).colwise() + stats.feature_mean;
}

Vec3 normalize_target(const Vec3& target, const NormStats& stats) {
  return (target - stats.target_mean).cwiseQuotient(stats.target_std);
}

Vec3 denormalize_target(const Vec3& normalized, const NormStats& stats) {
  return stats.target_mean + normalized.cwiseProduct(stats.target_std);
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  BinaryWriter out(tmp);
  out.bytes(kDatasetMagic, 4);
  out.u32(kDatasetVersion);
  out.f64(dataset.dt);
  out.u32(static_cast<std::uint32_t>(dataset.window_len));
  out.u64(dataset.seed);
  out.str(kColumnSchema);
  out.u64(dataset.rollouts.size());
  for (const Rollout& r : dataset.rollouts) {
    out.str(to_string(r.trajectory.kind));
    out.f64(r.trajectory.radius_x);
    out.f64(r.trajectory.radius_y);
    out.f64(r.trajectory.height);
    out.f64(r.trajectory.angular_rate);
    out.f64(r.trajectory.climb_rate);
    out.f64(r.trajectory.warp_amplitude);
    for (int i = 0; i < 3; ++i) out.f64(r.wind.v_w[i]);
    for (int i = 0; i < 3; ++i) out.f64(r.wind.drag_coeffs[i]);
    out.f64(r.dt);
    out.u64(r.records.size());
  }
  for (const Rollout& r : dataset.rollouts) {
    for (const FlightRecord& rec : r.records) {
      out.f64(rec.t);
      const StateVector x = rec.state.to_vector();
      for (int i = 0; i < 10; ++i) out.f64(x[i]);
      const Vec4 u = rec.input.to_vector();
      for (int i = 0; i < 4; ++i) out.f64(u[i]);
      for (int i = 0; i < 3; ++i) out.f64(rec.dv_true[i]);
    }
  }
  out.close();
  std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  BinaryReader in(path);
  char magic[4];
  in.bytes(magic, 4);
  if (std::string(magic, 4) != kDatasetMagic) throw IoError("not a dataset file: " + path.string());
  if (in.u32() != kDatasetVersion) throw IoError("unsupported dataset version: " + path.string());

  Dataset dataset;
  dataset.dt = in.f64();
  dataset.window_len = static_cast<int>(in.u32());
  dataset.seed = in.u64();
  if (in.str() != kColumnSchema) throw IoError("unexpected column schema: " + path.string());

  const std::uint64_t n_rollouts = in.u64();
  std::vector<std::uint64_t> counts(n_rollouts);
  dataset.rollouts.resize(n_rollouts);
  for (std::uint64_t i = 0; i < n_rollouts; ++i) {
    Rollout& r = dataset.rollouts[i];
    r.trajectory.kind = trajectory_kind_from_string(in.str());
    r.trajectory.radius_x = in.f64();
    r.trajectory.radius_y = in.f64();
    r.trajectory.height = in.f64();
    r.trajectory.angular_rate = in.f64();
    r.trajectory.climb_rate = in.f64();
    r.trajectory.warp_amplitude = in.f64();
    for (int j = 0; j < 3; ++j) r.wind.v_w[j] = in.f64();
    for (int j = 0; j < 3; ++j) r.wind.drag_coeffs[j] = in.f64();
    r.dt = in.f64();
    counts[i] = in.u64();
  }
  for (std::uint64_t i = 0; i < n_rollouts; ++i) {
    Rollout& r = dataset.rollouts[i];
    r.records.resize(counts[i]);
    for (FlightRecord& rec : r.records) {
      rec.t = in.f64();
      StateVector x;
      for (int j = 0; j < 10; ++j) x[j] = in.f64();
      rec.state = State::from_vector(x);
      Vec4 u;
      for (int j = 0; j < 4; ++j) u[j] = in.f64();
      rec.input = ControlInput::from_vector(u);
      for (int j = 0; j < 3; ++j) rec.dv_true[j] = in.f64();
    }
  }
  return dataset;
}

void export_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "rollout,trajectory,wind_x,wind_y," << kColumnSchema << "\n";
  for (std::size_t i = 0; i < dataset.rollouts.size(); ++i) {
    const Rollout& r = dataset.rollouts[i];
    for (const FlightRecord& rec : r.records) {
      out << i << ',' << to_string(r.trajectory.kind) << ',' << format_double(r.wind.v_w.x())
          << ',' << format_double(r.wind.v_w.y());
      out << ',' << format_double(rec.t);
      const StateVector x = rec.state.to_vector();
      for (int j = 0; j < 10; ++j) out << ',' << format_double(x[j]);
      const Vec4 u = rec.input.to_vector();
      for (int j = 0; j < 4; ++j) out << ',' << format_double(u[j]);
      for (int j = 0; j < 3; ++j) out << ',' << format_double(rec.dv_true[j]);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace piwan
