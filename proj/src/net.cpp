#include "piwan/net.hpp"

#include <cmath>
#include <random>

#include "piwan/common.hpp"
#include "piwan/io.hpp"

namespace piwan {

namespace {

constexpr char kCheckpointMagic[] = "PWCK";
constexpr std::uint32_t kCheckpointVersion = 1;

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::Map<const MatrixXd> view(const ModelParams& p, const ParamLayout::Entry& e) {
  return {p.values.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<MatrixXd> view(VectorXd& grad, const ParamLayout::Entry& e) {
  return {grad.data() + e.offset, e.rows, e.cols};
}

// Y[:, w·T + t] = X[:, w·T + t − s] within each window, zero where t < s.
MatrixXd shift_back(const MatrixXd& x, int s, int t_len) {
  if (s == 0) return x;
  MatrixXd y = MatrixXd::Zero(x.rows(), x.cols());
  if (s >= t_len) return y;
  const int windows = static_cast<int>(x.cols()) / t_len;
  for (int w = 0; w < windows; ++w) {
    y.middleCols(w * t_len + s, t_len - s) = x.middleCols(w * t_len, t_len - s);
  }
  return y;
}

// Adjoint of shift_back: Y[:, w·T + t] = X[:, w·T + t + s], zero at the tail.
MatrixXd shift_forward(const MatrixXd& x, int s, int t_len) {
  if (s == 0) return x;
  MatrixXd y = MatrixXd::Zero(x.rows(), x.cols());
  if (s >= t_len) return y;
  const int windows = static_cast<int>(x.cols()) / t_len;
  for (int w = 0; w < windows; ++w) {
    y.middleCols(w * t_len, t_len - s) = x.middleCols(w * t_len + s, t_len - s);
  }
  return y;
}

// Column-major flatten of each 11×T window into one column.
MatrixXd flatten_windows(const MatrixXd& features, int t_len) {
  const int windows = static_cast<int>(features.cols()) / t_len;
  const int dim = kFeatureChannels * t_len;
  MatrixXd flat(dim, windows);
  for (int w = 0; w < windows; ++w) {
    flat.col(w) = Eigen::Map<const VectorXd>(features.data() + w * dim, dim);
  }
  return flat;
}

int tcn_in_channels(const NetConfig& cfg, int block) {
  return block == 0 ? kFeatureChannels : cfg.tcn.channels;
}

}  // namespace

std::string to_string(Backbone b) { return b == Backbone::Tcn ? "tcn" : "mlp"; }

Backbone backbone_from_string(const std::string& name) {
  if (name == "tcn") return Backbone::Tcn;
  if (name == "mlp") return Backbone::Mlp;
  throw UnknownKind("unknown backbone: " + name);
}

int NetConfig::receptive_field() const {
  if (backbone == Backbone::Mlp) return window_len;
  int rf = 1;
  for (int d : tcn.dilations) rf += (tcn.kernel - 1) * d;
  return rf;
}

void NetConfig::validate() const {
  if (window_len < 1) throw ConfigError("net.window_len must be >= 1");
  if (backbone == Backbone::Tcn) {
    if (tcn.blocks < 1 || tcn.channels < 1 || tcn.kernel < 1) {
      throw ConfigError("net.tcn sizes must be positive");
    }
    if (static_cast<int>(tcn.dilations.size()) != tcn.blocks) {
      throw ConfigError("net.tcn.dilations must have one entry per block");
    }
    for (int d : tcn.dilations) {
      if (d < 1) throw ConfigError("net.tcn.dilations entries must be >= 1");
    }
  }
  if (head_hidden.empty() && backbone == Backbone::Tcn) {
    throw ConfigError("net.head_hidden must not be empty");
  }
  for (int h : head_hidden) {
    if (h < 1) throw ConfigError("net.head_hidden entries must be >= 1");
  }
  for (int h : mlp_hidden) {
    if (h < 1) throw ConfigError("net.mlp_hidden entries must be >= 1");
  }
}

const ParamLayout::Entry& ParamLayout::find(const std::string& name) const {
  for (const Entry& e : entries) {
    if (e.name == name) return e;
  }
  throw Error("parameter not in layout: " + name);
}

std::uint64_t ParamLayout::hash() const {
  std::string repr;
  for (const Entry& e : entries) {
    repr += e.name + ":" + std::to_string(e.rows) + "x" + std::to_string(e.cols) + "@" +
            std::to_string(e.offset) + ";";
  }
  return fnv1a(repr.data(), repr.size());
}

ParamLayout build_layout(const NetConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto add = [&layout](const std::string& name, int rows, int cols) {
    layout.entries.push_back({name, rows, cols, layout.total});
    layout.total += rows * cols;
  };

  if (cfg.backbone == Backbone::Tcn) {
    for (int b = 0; b < cfg.tcn.blocks; ++b) {
      const int c_in = tcn_in_channels(cfg, b);
      add("tcn.b" + std::to_string(b) + ".w", cfg.tcn.channels, c_in * cfg.tcn.kernel);
      add("tcn.b" + std::to_string(b) + ".bias", cfg.tcn.channels, 1);
      if (c_in != cfg.tcn.channels) {
        add("tcn.b" + std::to_string(b) + ".skip", cfg.tcn.channels, c_in);
      }
    }
    int prev = cfg.tcn.channels;
    for (std::size_t i = 0; i < cfg.head_hidden.size(); ++i) {
      add("head.l" + std::to_string(i) + ".w", cfg.head_hidden[i], prev);
      add("head.l" + std::to_string(i) + ".bias", cfg.head_hidden[i], 1);
      prev = cfg.head_hidden[i];
    }
    add("head.out.w", 3, prev);
    add("head.out.bias", 3, 1);
  } else {
    int prev = kFeatureChannels * cfg.window_len;
    for (std::size_t i = 0; i < cfg.mlp_hidden.size(); ++i) {
      add("mlp.l" + std::to_string(i) + ".w", cfg.mlp_hidden[i], prev);
      add("mlp.l" + std::to_string(i) + ".bias", cfg.mlp_hidden[i], 1);
      prev = cfg.mlp_hidden[i];
    }
    add("mlp.out.w", 3, prev);
    add("mlp.out.bias", 3, 1);
  }
  return layout;
}

ModelParams init_params(const NetConfig& cfg, const NormStats& stats) {
  ModelParams p;
  p.config = cfg;
  p.layout = build_layout(cfg);
  p.values = VectorXd::Zero(p.layout.total);
  p.stats = stats;

  std::mt19937_64 rng(derive_seed(cfg.init_seed, 0x6e6574));  // init stream
  for (const ParamLayout::Entry& e : p.layout.entries) {
    if (e.name.ends_with(".bias")) continue;  // biases start at zero
    const double bound = std::sqrt(6.0 / static_cast<double>(e.cols));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (int i = 0; i < e.rows * e.cols; ++i) p.values[e.offset + i] = uniform(rng);
  }
  return p;
}

WindowBatch pack_windows(std::span<const TrainingWindow> windows, const NormStats& stats) {
  if (windows.empty()) throw EmptyDataset("pack_windows: no windows");
  const int t_len = static_cast<int>(windows.front().features.cols());
  WindowBatch batch;
  batch.count = static_cast<int>(windows.size());
  batch.window_len = t_len;
  batch.features.resize(kFeatureChannels, batch.count * t_len);
  for (int n = 0; n < batch.count; ++n) {
    const TrainingWindow& w = windows[n];
    if (w.features.rows() != kFeatureChannels || w.features.cols() != t_len) {
      throw ShapeMismatch("pack_windows: inconsistent window shapes");
    }
    batch.features.middleCols(n * t_len, t_len) = normalize_features(w.features, stats);
  }
  return batch;
}

Eigen::MatrixXd net_forward(const ModelParams& params, const WindowBatch& batch,
                            ForwardTrace* trace) {
  const NetConfig& cfg = params.config;
  if (batch.window_len != cfg.window_len || batch.features.rows() != kFeatureChannels ||
      batch.features.cols() != static_cast<Eigen::Index>(batch.count) * batch.window_len) {
    throw ShapeMismatch("net_forward: batch does not match the configured window shape");
  }
  if (trace != nullptr) {
    trace->layer_inputs.clear();
    trace->activations.clear();
    trace->batch = batch;
  }

  const int t_len = cfg.window_len;
  MatrixXd x;

  if (cfg.backbone == Backbone::Tcn) {
    x = batch.features;
    for (int b = 0; b < cfg.tcn.blocks; ++b) {
      const int c_in = tcn_in_channels(cfg, b);
      const auto w = view(params, params.layout.find("tcn.b" + std::to_string(b) + ".w"));
      const auto bias = view(params, params.layout.find("tcn.b" + std::to_string(b) + ".bias"));
      const int d = cfg.tcn.dilations[b];

      MatrixXd z = bias.col(0).replicate(1, x.cols());
      for (int tap = 0; tap < cfg.tcn.kernel; ++tap) {
        const auto w_tap = w.middleCols(tap * c_in, c_in);
        if (tap == 0) {
          z.noalias() += w_tap * x;
        } else {
          z.noalias() += w_tap * shift_back(x, tap * d, t_len);
        }
      }
      MatrixXd a = z.cwiseMax(0.0);
      MatrixXd out;
      if (c_in == cfg.tcn.channels) {
        out = a + x;
      } else {
        const auto skip = view(params, params.layout.find("tcn.b" + std::to_string(b) + ".skip"));
        out = a;
        out.noalias() += skip * x;
      }
      if (trace != nullptr) {
        trace->layer_inputs.push_back(std::move(x));
        trace->activations.push_back(std::move(a));
      }
      x = std::move(out);
    }

    // Final-frame feature of each window feeds the head.
    MatrixXd h(cfg.tcn.channels, batch.count);
    for (int n = 0; n < batch.count; ++n) h.col(n) = x.col(n * t_len + t_len - 1);
    x = std::move(h);

    for (std::size_t i = 0; i < cfg.head_hidden.size(); ++i) {
      const auto w = view(params, params.layout.find("head.l" + std::to_string(i) + ".w"));
      const auto bias = view(params, params.layout.find("head.l" + std::to_string(i) + ".bias"));
      MatrixXd z = (w * x).colwise() + bias.col(0);
      if (trace != nullptr) trace->layer_inputs.push_back(std::move(x));
      x = z.cwiseMax(0.0);
    }
    const auto w_out = view(params, params.layout.find("head.out.w"));
    const auto b_out = view(params, params.layout.find("head.out.bias"));
    MatrixXd y = (w_out * x).colwise() + b_out.col(0);
    if (trace != nullptr) trace->layer_inputs.push_back(std::move(x));
    return y;
  }

  // MLP backbone over the flattened window.
  x = flatten_windows(batch.features, t_len);
  for (std::size_t i = 0; i < cfg.mlp_hidden.size(); ++i) {
    const auto w = view(params, params.layout.find("mlp.l" + std::to_string(i) + ".w"));
    const auto bias = view(params, params.layout.find("mlp.l" + std::to_string(i) + ".bias"));
    MatrixXd z = (w * x).colwise() + bias.col(0);
    if (trace != nullptr) trace->layer_inputs.push_back(std::move(x));
    x = z.cwiseMax(0.0);
  }
  const auto w_out = view(params, params.layout.find("mlp.out.w"));
  const auto b_out = view(params, params.layout.find("mlp.out.bias"));
  MatrixXd y = (w_out * x).colwise() + b_out.col(0);
  if (trace != nullptr) trace->layer_inputs.push_back(std::move(x));
  return y;
}

Eigen::VectorXd net_backward(const ModelParams& params, const ForwardTrace& trace,
                             const Eigen::MatrixXd& cotangent) {
  const NetConfig& cfg = params.config;
  if (cotangent.rows() != 3 || cotangent.cols() != trace.batch.count) {
    throw ShapeMismatch("net_backward: cotangent must be 3 x batch count");
  }
  VectorXd grad = VectorXd::Zero(params.layout.total);
  const int t_len = cfg.window_len;

  auto linear_backward = [&](const std::string& prefix, std::size_t hidden_count,
                             std::size_t input_base, MatrixXd dy) -> MatrixXd {
    // Output layer first, then hidden layers in reverse with ReLU masks.
    {
      const ParamLayout::Entry& we = params.layout.find(prefix + ".out.w");
      const ParamLayout::Entry& be = params.layout.find(prefix + ".out.bias");
      const MatrixXd& h = trace.layer_inputs[input_base + hidden_count];
      view(grad, we).noalias() += dy * h.transpose();
      view(grad, be).col(0) += dy.rowwise().sum();
      dy = (view(params, we).transpose() * dy).eval();
    }
    for (int i = static_cast<int>(hidden_count) - 1; i >= 0; --i) {
      const MatrixXd& post = trace.layer_inputs[input_base + i + 1];  // ReLU output
      dy.array() *= (post.array() > 0.0).cast<double>();
      const ParamLayout::Entry& we = params.layout.find(prefix + ".l" + std::to_string(i) + ".w");
      const ParamLayout::Entry& be =
          params.layout.find(prefix + ".l" + std::to_string(i) + ".bias");
      const MatrixXd& h = trace.layer_inputs[input_base + i];
      view(grad, we).noalias() += dy * h.transpose();
      view(grad, be).col(0) += dy.rowwise().sum();
      dy = (view(params, we).transpose() * dy).eval();
    }
    return dy;
  };

  if (cfg.backbone == Backbone::Mlp) {
    linear_backward("mlp", cfg.mlp_hidden.size(), 0, cotangent);
    return grad;
  }

  const std::size_t head_base = static_cast<std::size_t>(cfg.tcn.blocks);
  MatrixXd dh = linear_backward("head", cfg.head_hidden.size(), head_base, cotangent);

  // Scatter head-input gradients back onto the final frame of each window.
  MatrixXd dx = MatrixXd::Zero(cfg.tcn.channels, static_cast<Eigen::Index>(trace.batch.count) * t_len);
  for (int n = 0; n < trace.batch.count; ++n) dx.col(n * t_len + t_len - 1) = dh.col(n);

  for (int b = cfg.tcn.blocks - 1; b >= 0; --b) {
    const int c_in = tcn_in_channels(cfg, b);
    const MatrixXd& x_in = trace.layer_inputs[b];
    const MatrixXd& act = trace.activations[b];
    const int d = cfg.tcn.dilations[b];

    MatrixXd dz = dx.cwiseProduct((act.array() > 0.0).cast<double>().matrix());

    const ParamLayout::Entry& we = params.layout.find("tcn.b" + std::to_string(b) + ".w");
    const ParamLayout::Entry& be = params.layout.find("tcn.b" + std::to_string(b) + ".bias");
    auto dw = view(grad, we);
    view(grad, be).col(0) += dz.rowwise().sum();

    const auto w = view(params, we);
    MatrixXd dx_in = MatrixXd::Zero(c_in, dx.cols());
    for (int tap = 0; tap < cfg.tcn.kernel; ++tap) {
      const int s = tap * d;
      const MatrixXd shifted = shift_back(x_in, s, t_len);
      dw.middleCols(tap * c_in, c_in).noalias() += dz * shifted.transpose();
      const MatrixXd back = w.middleCols(tap * c_in, c_in).transpose() * dz;
      dx_in += shift_forward(back, s, t_len);
    }

    if (c_in == cfg.tcn.channels) {
      dx_in += dx;
    } else {
      const ParamLayout::Entry& se = params.layout.find("tcn.b" + std::to_string(b) + ".skip");
      view(grad, se).noalias() += dx * x_in.transpose();
      dx_in.noalias() += view(params, se).transpose() * dx;
    }
    dx = std::move(dx_in);
  }
  return grad;
}

Vec3 forward(const ModelParams& params, const Eigen::MatrixXd& normalized_window) {
  if (normalized_window.rows() != kFeatureChannels ||
      normalized_window.cols() != params.config.window_len) {
    throw ShapeMismatch("forward: window must be 11 x T");
  }
  WindowBatch batch;
  batch.features = normalized_window;
  batch.count = 1;
  batch.window_len = params.config.window_len;
  const MatrixXd y = net_forward(params, batch);
  return denormalize_target(Vec3(y.col(0)), params.stats);
}

Eigen::MatrixXd forward_batch(const ModelParams& params, const WindowBatch& batch) {
  const MatrixXd y = net_forward(params, batch);
  MatrixXd out(batch.count, 3);
  for (int n = 0; n < batch.count; ++n) {
    out.row(n) = denormalize_target(Vec3(y.col(n)), params.stats).transpose();
  }
  return out;
}

Eigen::MatrixXd predict_windows(const ModelParams& params,
                                std::span<const TrainingWindow> windows) {
  return forward_batch(params, pack_windows(windows, params.stats));
}

Eigen::VectorXd backward(const ModelParams& params, const WindowBatch& batch,
                         const Eigen::MatrixXd& cotangent) {
  if (cotangent.rows() != batch.count || cotangent.cols() != 3) {
    throw ShapeMismatch("backward: cotangent must be batch count x 3");
  }
  ForwardTrace trace;
  net_forward(params, batch, &trace);
  // d(denorm)/d(norm) is the diagonal target scale.
  MatrixXd cot_norm(3, batch.count);
  for (int n = 0; n < batch.count; ++n) {
    cot_norm.col(n) = cotangent.row(n).transpose().cwiseProduct(params.stats.target_std);
  }
  return net_backward(params, trace, cot_norm);
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  // Published atomically: readers never observe a half-written checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  BinaryWriter out(tmp);
  out.bytes(kCheckpointMagic, 4);
  out.u32(kCheckpointVersion);
  const NetConfig& cfg = params.config;
  out.str(to_string(cfg.backbone));
  out.u32(static_cast<std::uint32_t>(cfg.window_len));
  out.u32(static_cast<std::uint32_t>(cfg.tcn.blocks));
  out.u32(static_cast<std::uint32_t>(cfg.tcn.channels));
  out.u32(static_cast<std::uint32_t>(cfg.tcn.kernel));
  out.u64(cfg.tcn.dilations.size());
  for (int d : cfg.tcn.dilations) out.u32(static_cast<std::uint32_t>(d));
  out.u64(cfg.head_hidden.size());
  for (int h : cfg.head_hidden) out.u32(static_cast<std::uint32_t>(h));
  out.u64(cfg.mlp_hidden.size());
  for (int h : cfg.mlp_hidden) out.u32(static_cast<std::uint32_t>(h));
  out.u64(cfg.init_seed);

  out.u64(params.layout.entries.size());
  for (const ParamLayout::Entry& e : params.layout.entries) {
    out.str(e.name);
    out.u32(static_cast<std::uint32_t>(e.rows));
    out.u32(static_cast<std::uint32_t>(e.cols));
    out.u32(static_cast<std::uint32_t>(e.offset));
  }
  out.u64(params.layout.hash());

  for (int i = 0; i < kFeatureChannels; ++i) out.f64(params.stats.feature_mean[i]);
  for (int i = 0; i < kFeatureChannels; ++i) out.f64(params.stats.feature_std[i]);
  for (int i = 0; i < 3; ++i) out.f64(params.stats.target_mean[i]);
  for (int i = 0; i < 3; ++i) out.f64(params.stats.target_std[i]);

  out.u64(static_cast<std::uint64_t>(params.values.size()));
  for (Eigen::Index i = 0; i < params.values.size(); ++i) out.f64(params.values[i]);
  out.close();
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  BinaryReader in(path);
  char magic[4];
  in.bytes(magic, 4);
  if (std::string(magic, 4) != kCheckpointMagic) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (in.u32() != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version: " + path.string());
  }

  ModelParams p;
  p.config.backbone = backbone_from_string(in.str());
  p.config.window_len = static_cast<int>(in.u32());
  p.config.tcn.blocks = static_cast<int>(in.u32());
  p.config.tcn.channels = static_cast<int>(in.u32());
  p.config.tcn.kernel = static_cast<int>(in.u32());
  p.config.tcn.dilations.resize(in.u64());
  for (int& d : p.config.tcn.dilations) d = static_cast<int>(in.u32());
  p.config.head_hidden.resize(in.u64());
  for (int& h : p.config.head_hidden) h = static_cast<int>(in.u32());
  p.config.mlp_hidden.resize(in.u64());
  for (int& h : p.config.mlp_hidden) h = static_cast<int>(in.u32());
  p.config.init_seed = in.u64();

  ParamLayout stored;
  const std::uint64_t n_entries = in.u64();
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    ParamLayout::Entry e;
    e.name = in.str();
    e.rows = static_cast<int>(in.u32());
    e.cols = static_cast<int>(in.u32());
    e.offset = static_cast<int>(in.u32());
    stored.total += e.rows * e.cols;
    stored.entries.push_back(std::move(e));
  }
  const std::uint64_t stored_hash = in.u64();

  p.layout = build_layout(p.config);
  if (stored.hash() != stored_hash || p.layout.hash() != stored_hash) {
    throw IoError("checkpoint layout hash mismatch: " + path.string());
  }

  for (int i = 0; i < kFeatureChannels; ++i) p.stats.feature_mean[i] = in.f64();
  for (int i = 0; i < kFeatureChannels; ++i) p.stats.feature_std[i] = in.f64();
  for (int i = 0; i < 3; ++i) p.stats.target_mean[i] = in.f64();
  for (int i = 0; i < 3; ++i) p.stats.target_std[i] = in.f64();

  const std::uint64_t total = in.u64();
  if (total != static_cast<std::uint64_t>(p.layout.total)) {
    throw IoError("checkpoint parameter count mismatch: " + path.string());
  }
  p.values.resize(static_cast<Eigen::Index>(total));
  for (std::uint64_t i = 0; i < total; ++i) p.values[static_cast<Eigen::Index>(i)] = in.f64();
  return p;
}

}  // namespace piwan
