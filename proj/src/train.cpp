#include "piwan/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "piwan/common.hpp"

namespace piwan {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Loss and gradient of the MSE (mean over batch and the 3 components) in
// normalized target space.
LossResult mse_loss(const ModelParams& params, std::span<const TrainingWindow> batch) {
  if (batch.empty()) throw EmptyDataset("loss: empty batch");
  const WindowBatch packed = pack_windows(batch, params.stats);

  ForwardTrace trace;
  const MatrixXd pred = net_forward(params, packed, &trace);
  MatrixXd diff(3, packed.count);
  for (int n = 0; n < packed.count; ++n) {
    diff.col(n) = pred.col(n) - normalize_target(batch[n].target, params.stats);
  }
  const double denom = 3.0 * packed.count;

  LossResult result;
  result.value = diff.squaredNorm() / denom;
  result.gradient = net_backward(params, trace, (2.0 / denom) * diff);
  return result;
}

std::uint64_t hash_collocation(const CollocationSet& colloc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const TrainingWindow& w : colloc.windows) {
    const std::uint64_t t = fnv1a(w.target.data(), 3 * sizeof(double));
    h ^= t;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double validation_rmse(const ModelParams& params, std::span<const TrainingWindow> val) {
  if (val.empty()) return 0.0;
  const MatrixXd pred = predict_windows(params, val);
  double acc = 0.0;
  for (Eigen::Index n = 0; n < pred.rows(); ++n) {
    acc += (pred.row(n).transpose() - val[n].target).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(val.size()));
}

}  // namespace

std::string to_string(CollocationMode mode) {
  switch (mode) {
    case CollocationMode::Off: return "off";
    case CollocationMode::Fixed: return "fixed";
    case CollocationMode::Resampled: return "resampled";
  }
  throw UnknownKind("invalid collocation mode");
}

CollocationMode collocation_mode_from_string(const std::string& name) {
  if (name == "off") return CollocationMode::Off;
  if (name == "fixed") return CollocationMode::Fixed;
  if (name == "resampled") return CollocationMode::Resampled;
  throw UnknownKind("unknown collocation mode: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (lambda_pi < 0.0) throw ConfigError("train.lambda_pi must be >= 0");
  if (collocation_count < 1) throw ConfigError("train.collocation_count must be >= 1");
  if (resample_period < 1) throw ConfigError("train.resample_period must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("train.val_fraction must be in [0, 1)");
  }
}

CollocationSet sample_collocation(int count, std::uint64_t seed, int window_len, double dt) {
  if (count < 1) throw Error("sample_collocation: count must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, 0xc0110cULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle_dist(0.0, M_PI / 6.0);  // within 30° of identity
  std::uniform_real_distribution<double> vel_dist(-3.0, 3.0);
  std::uniform_real_distribution<double> thrust_dist(5.0, 15.0);
  std::uniform_real_distribution<double> rate_dist(-2.0, 2.0);

  CollocationSet set;
  set.windows.reserve(count);
  for (int i = 0; i < count; ++i) {
    Vec3 axis{gauss(rng), gauss(rng), gauss(rng)};
    if (axis.norm() < 1e-9) axis = Vec3::UnitX();
    const Quat q = Quat::from_axis_angle(axis, angle_dist(rng));
    State x;
    x.q = q;
    x.v = Vec3{vel_dist(rng), vel_dist(rng), vel_dist(rng)};
    const ControlInput u{thrust_dist(rng), Vec3{rate_dist(rng), rate_dist(rng), rate_dist(rng)}};

    TrainingWindow w;
    w.features.resize(kFeatureChannels, window_len);
    for (int j = 0; j < window_len; ++j) {
      w.features.col(j) = frame_features(x, u);
      if (j + 1 < window_len) x = rk4_step_nominal(x, u, dt);
    }
    w.target = nominal_derivative(x, u).dv;
    set.windows.push_back(std::move(w));
  }
  return set;
}

LossResult supervised_loss(const ModelParams& params, std::span<const TrainingWindow> batch) {
  return mse_loss(params, batch);
}

LossResult physics_loss(const ModelParams& params, const CollocationSet& colloc) {
  return mse_loss(params, colloc.windows);
}

TrainResult fit(std::span<const TrainingWindow> windows, const NetConfig& net_cfg,
                const TrainConfig& cfg, double dt) {
  cfg.validate();
  if (windows.empty()) throw EmptyDataset("fit: no training windows");
  const auto started = std::chrono::steady_clock::now();

  // Deterministic split: shuffle indices, carve off the validation tail.
  std::vector<int> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  {
    std::mt19937_64 split_rng(derive_seed(cfg.seed, 1));
    std::shuffle(order.begin(), order.end(), split_rng);
  }
  const int val_count = static_cast<int>(cfg.val_fraction * static_cast<double>(order.size()));
  const std::size_t train_count = order.size() - val_count;
  if (train_count == 0) throw EmptyDataset("fit: validation split left no training windows");
  std::vector<TrainingWindow> train, val;
  train.reserve(train_count);
  val.reserve(val_count);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < train_count ? train : val).push_back(windows[order[i]]);
  }

  const NormStats stats = fit_normalizer(train);
  NetConfig net = net_cfg;
  net.init_seed = derive_seed(cfg.seed, 2);
  ModelParams params = init_params(net, stats);

  const bool use_pi = cfg.collocation != CollocationMode::Off && cfg.lambda_pi > 0.0;
  CollocationSet colloc;
  TrainResult result;
  if (cfg.collocation == CollocationMode::Fixed) {
    colloc = sample_collocation(cfg.collocation_count, derive_seed(cfg.seed, 3), net.window_len, dt);
    result.collocation_epochs.push_back(0);
  }

  result.initial_val_rmse = validation_rmse(params, val);

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 4));
  std::mt19937_64 colloc_rng(derive_seed(cfg.seed, 5));

  VectorXd adam_m = VectorXd::Zero(params.layout.total);
  VectorXd adam_v = VectorXd::Zero(params.layout.total);
  std::int64_t step = 0;

  std::vector<int> epoch_order(train.size());
  std::iota(epoch_order.begin(), epoch_order.end(), 0);
  std::vector<TrainingWindow> batch_buf, colloc_buf;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.collocation == CollocationMode::Resampled && epoch % cfg.resample_period == 0) {
      colloc = sample_collocation(cfg.collocation_count, derive_seed(cfg.seed, 100 + epoch),
                                  net.window_len, dt);
      result.collocation_epochs.push_back(epoch);
    }
    std::shuffle(epoch_order.begin(), epoch_order.end(), shuffle_rng);

    double sum_sl = 0.0, sum_pi = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < epoch_order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(epoch_order.size(), start + cfg.batch_size);
      batch_buf.clear();
      for (std::size_t i = start; i < end; ++i) batch_buf.push_back(train[epoch_order[i]]);

      LossResult sl = supervised_loss(params, batch_buf);
      double loss_pi = 0.0;
      VectorXd grad = std::move(sl.gradient);
      if (use_pi) {
        colloc_buf.clear();
        std::uniform_int_distribution<int> pick(0, static_cast<int>(colloc.windows.size()) - 1);
        for (std::size_t i = start; i < end; ++i) {
          colloc_buf.push_back(colloc.windows[pick(colloc_rng)]);
        }
        LossResult pi = physics_loss(params, CollocationSet{colloc_buf});
        loss_pi = pi.value;
        grad += cfg.lambda_pi * pi.gradient;
      }

      const double total = sl.value + cfg.lambda_pi * loss_pi;
      if (!std::isfinite(total) || !grad.allFinite()) {
        throw NonFiniteLoss("fit: non-finite loss at epoch " + std::to_string(epoch));
      }

      ++step;
      adam_m = cfg.adam_beta1 * adam_m + (1.0 - cfg.adam_beta1) * grad;
      adam_v = cfg.adam_beta2 * adam_v + (1.0 - cfg.adam_beta2) * grad.cwiseAbs2();
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      params.values -=
          (cfg.learning_rate / bc1) *
          (adam_m.array() / ((adam_v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();

      sum_sl += sl.value;
      sum_pi += loss_pi;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss_sl = sum_sl / batches;
    entry.loss_pi = sum_pi / batches;
    entry.val_rmse = validation_rmse(params, val);
    entry.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    entry.collocation_hash = use_pi || cfg.collocation != CollocationMode::Off
                                 ? hash_collocation(colloc)
                                 : 0;
    result.log.push_back(entry);
  }

  result.params = std::move(params);
  return result;
}

void write_train_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,loss_sl,loss_pi,val_rmse,wall_time_s\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << format_double(e.loss_sl) << ',' << format_double(e.loss_pi) << ','
        << format_double(e.val_rmse) << ',' << format_double(e.wall_time_s) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace piwan
