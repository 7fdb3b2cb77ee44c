#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "piwan/net.hpp"

using namespace piwan;

namespace {

NetConfig small_tcn() {
  NetConfig cfg;
  cfg.backbone = Backbone::Tcn;
  cfg.window_len = 8;
  cfg.tcn.blocks = 2;
  cfg.tcn.channels = 8;
  cfg.tcn.kernel = 3;
  cfg.tcn.dilations = {1, 2};
  cfg.head_hidden = {16};
  return cfg;
}

NetConfig small_mlp() {
  NetConfig cfg;
  cfg.backbone = Backbone::Mlp;
  cfg.window_len = 8;
  cfg.mlp_hidden = {24, 16};
  return cfg;
}

std::vector<TrainingWindow> random_windows(int count, int t_len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<TrainingWindow> windows(count);
  for (TrainingWindow& w : windows) {
    w.features.resize(kFeatureChannels, t_len);
    for (int i = 0; i < kFeatureChannels; ++i) {
      for (int j = 0; j < t_len; ++j) w.features(i, j) = gauss(rng);
    }
    w.target = Vec3{gauss(rng), gauss(rng), gauss(rng)};
  }
  return windows;
}

// Scalar probe Σ C ∘ forward, checked against central differences.
void check_gradient(const NetConfig& cfg) {
  const NormStats stats = NormStats::identity();
  ModelParams params = init_params(cfg, stats);

  const auto windows = random_windows(3, cfg.window_len, 99);
  const WindowBatch batch = pack_windows(windows, stats);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd cot(3, batch.count);
  for (int i = 0; i < cot.size(); ++i) cot.data()[i] = gauss(rng);

  ForwardTrace trace;
  net_forward(params, batch, &trace);
  const Eigen::VectorXd grad = net_backward(params, trace, cot);

  auto probe = [&](const ModelParams& p) {
    return (cot.cwiseProduct(net_forward(p, batch))).sum();
  };

  std::uniform_int_distribution<int> coord(0, params.layout.total - 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int i = coord(rng);
    const double h = 1e-5 * std::max(1.0, std::abs(params.values[i]));
    ModelParams p = params;
    p.values[i] += h;
    const double fp = probe(p);
    p.values[i] = params.values[i] - h;
    const double fm = probe(p);
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  CHECK(worst <= 1e-4);
}

}  // namespace

TEST_CASE("layout covers the expected parameter counts") {
  NetConfig cfg;  // defaults: 3 blocks of 32 channels, kernel 3, head (64, 64)
  const ParamLayout tcn = build_layout(cfg);
  CHECK(tcn.total == 14115);
  CHECK(cfg.receptive_field() == 15);

  cfg.backbone = Backbone::Mlp;
  const ParamLayout mlp = build_layout(cfg);
  CHECK(mlp.total == 53251);
  CHECK(cfg.receptive_field() == cfg.window_len);

  // Offsets tile the vector exactly.
  int expected = 0;
  for (const auto& e : tcn.entries) {
    CHECK(e.offset == expected);
    expected += e.rows * e.cols;
  }
  CHECK(expected == tcn.total);
}

TEST_CASE("layout hash is stable and shape-sensitive") {
  const NetConfig cfg = small_tcn();
  CHECK(build_layout(cfg).hash() == build_layout(cfg).hash());
  NetConfig other = cfg;
  other.tcn.channels = 9;
  CHECK(build_layout(cfg).hash() != build_layout(other).hash());
}

TEST_CASE("zero parameters collapse to the target mean") {
  NetConfig cfg = small_tcn();
  NormStats stats = NormStats::identity();
  stats.target_mean = Vec3{1.0, 2.0, 3.0};
  stats.target_std = Vec3{2.0, 2.0, 2.0};
  ModelParams params = init_params(cfg, stats);
  params.values.setZero();

  const auto windows = random_windows(4, cfg.window_len, 17);
  const Eigen::MatrixXd out = predict_windows(params, windows);
  for (int n = 0; n < 4; ++n) {
    CHECK((Vec3(out.row(n).transpose()) - stats.target_mean).norm() == 0.0);
  }
}

TEST_CASE("frames beyond the receptive field cannot influence the output") {
  NetConfig cfg;  // receptive field 15 < T = 20
  const NormStats stats = NormStats::identity();
  const ModelParams params = init_params(cfg, stats);
  const int rf = cfg.receptive_field();
  REQUIRE(rf < cfg.window_len);

  auto windows = random_windows(1, cfg.window_len, 23);
  const Vec3 base = forward(params, windows[0].features);

  // Any frame strictly older than the receptive field is inert.
  for (int j = 0; j < cfg.window_len - rf; ++j) {
    auto perturbed = windows;
    perturbed[0].features.col(j).array() += 10.0;
    const Vec3 out = forward(params, perturbed[0].features);
    CHECK((out - base).norm() == 0.0);
  }
  // The newest frame matters.
  auto perturbed = windows;
  perturbed[0].features.col(cfg.window_len - 1).array() += 1.0;
  CHECK((forward(params, perturbed[0].features) - base).norm() > 0.0);
}

TEST_CASE("initialization and forward are deterministic") {
  const NetConfig cfg = small_tcn();
  const NormStats stats = NormStats::identity();
  const ModelParams a = init_params(cfg, stats);
  const ModelParams b = init_params(cfg, stats);
  CHECK(a.values == b.values);

  const auto windows = random_windows(2, cfg.window_len, 31);
  const WindowBatch batch = pack_windows(windows, stats);
  CHECK(net_forward(a, batch) == net_forward(a, batch));
}

TEST_CASE("forward_batch matches forward row by row") {
  for (const NetConfig& cfg : {small_tcn(), small_mlp()}) {
    const NormStats stats = NormStats::identity();
    const ModelParams params = init_params(cfg, stats);
    const auto windows = random_windows(5, cfg.window_len, 41);
    const WindowBatch batch = pack_windows(windows, stats);
    const Eigen::MatrixXd out = forward_batch(params, batch);
    for (int n = 0; n < 5; ++n) {
      const Vec3 single = forward(params, normalize_features(windows[n].features, stats));
      CHECK((Vec3(out.row(n).transpose()) - single).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("permuting batch rows permutes outputs") {
  const NetConfig cfg = small_tcn();
  const NormStats stats = NormStats::identity();
  const ModelParams params = init_params(cfg, stats);
  auto windows = random_windows(4, cfg.window_len, 43);
  const Eigen::MatrixXd out = predict_windows(params, windows);
  std::swap(windows[0], windows[3]);
  const Eigen::MatrixXd swapped = predict_windows(params, windows);
  CHECK((out.row(0) - swapped.row(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.row(3) - swapped.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reverse-mode gradients match finite differences (tcn)") { check_gradient(small_tcn()); }

TEST_CASE("reverse-mode gradients match finite differences (mlp)") { check_gradient(small_mlp()); }

TEST_CASE("backward is linear in the cotangent and zero at zero") {
  const NetConfig cfg = small_tcn();
  const NormStats stats = NormStats::identity();
  const ModelParams params = init_params(cfg, stats);
  const auto windows = random_windows(3, cfg.window_len, 57);
  const WindowBatch batch = pack_windows(windows, stats);

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(batch.count, 3);
  CHECK(backward(params, batch, zero).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd ca(batch.count, 3), cb(batch.count, 3);
  for (int i = 0; i < ca.size(); ++i) {
    ca.data()[i] = gauss(rng);
    cb.data()[i] = gauss(rng);
  }
  const Eigen::VectorXd sum = backward(params, batch, ca + cb);
  const Eigen::VectorXd parts = backward(params, batch, ca) + backward(params, batch, cb);
  CHECK((sum - parts).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("forward rejects mismatched window shapes") {
  const ModelParams params = init_params(small_tcn(), NormStats::identity());
  CHECK_THROWS_AS(forward(params, Eigen::MatrixXd::Zero(kFeatureChannels, 5)), ShapeMismatch);
  CHECK_THROWS_AS(forward(params, Eigen::MatrixXd::Zero(7, 8)), ShapeMismatch);
}

TEST_CASE("batched forward meets the latency budget") {
  NetConfig cfg;  // default production TCN, T = 20
  const NormStats stats = NormStats::identity();
  const ModelParams params = init_params(cfg, stats);
  const auto windows = random_windows(256, cfg.window_len, 71);
  const WindowBatch batch = pack_windows(windows, stats);

  double best = 1e9;
  for (int attempt = 0; attempt < 3; ++attempt) {
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::MatrixXd out = forward_batch(params, batch);
    best = std::min(best,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    CHECK(out.allFinite());
  }
  CHECK(best < 0.050);  // 256 x 11 x 20 forward in under 50 ms
}

TEST_CASE("checkpoints round-trip and validate the layout hash") {
  const auto dir = std::filesystem::temp_directory_path() / "piwan_net_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ckpt.bin";

  NetConfig cfg = small_tcn();
  NormStats stats = NormStats::identity();
  stats.target_mean = Vec3{0.1, -0.2, 0.3};
  ModelParams params = init_params(cfg, stats);
  save_checkpoint(path, params);

  const ModelParams loaded = load_checkpoint(path);
  CHECK(loaded.values == params.values);
  CHECK(loaded.config.backbone == params.config.backbone);
  CHECK(loaded.config.window_len == params.config.window_len);
  CHECK((loaded.stats.target_mean - stats.target_mean).norm() == 0.0);
  CHECK(loaded.layout.hash() == params.layout.hash());

  // Corrupt a byte of a layout entry name: the loader must refuse the file.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(120);
  const char junk[4] = {'X', 'X', 'X', 'X'};
  f.write(junk, sizeof(junk));
  f.close();
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove_all(dir);
}
