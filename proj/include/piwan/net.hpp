#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "piwan/data.hpp"

namespace piwan {

enum class Backbone { Tcn, Mlp };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& name);

struct TcnConfig {
  int blocks{3};
  int channels{32};
  int kernel{3};
  std::vector<int> dilations{1, 2, 4};  // one entry per block
};

struct NetConfig {
  Backbone backbone{Backbone::Tcn};
  int window_len{20};                        // T
  TcnConfig tcn{};
  std::vector<int> head_hidden{64, 64};      // MLP head after the TCN encoder
  std::vector<int> mlp_hidden{128, 128, 64}; // hidden sizes for the Mlp backbone
  std::uint64_t init_seed{0};

  // 1 + Σ (kernel−1)·dilation for the TCN; the full window for the MLP.
  int receptive_field() const;
  void validate() const;
};

struct ParamLayout {
  struct Entry {
    std::string name;
    int rows;
    int cols;
    int offset;
  };
  std::vector<Entry> entries;
  int total{0};

  const Entry& find(const std::string& name) const;
  std::uint64_t hash() const;  // fingerprint over names and shapes
};

ParamLayout build_layout(const NetConfig& cfg);

// Flat parameter vector plus its layout table and the normalization
// statistics the model was trained with.
struct ModelParams {
  NetConfig config;
  ParamLayout layout;
  Eigen::VectorXd values;
  NormStats stats{NormStats::identity()};
};

// Kaiming-uniform weights scaled by fan-in, zero biases, seeded.
ModelParams init_params(const NetConfig& cfg, const NormStats& stats);

// A batch of normalized windows packed channel-major: 11 × (count·T), window
// n occupying columns [n·T, (n+1)·T).
struct WindowBatch {
  Eigen::MatrixXd features;
  int count{0};
  int window_len{0};
};

WindowBatch pack_windows(std::span<const TrainingWindow> windows, const NormStats& stats);

// Opaque cache of forward intermediates consumed by the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> layer_inputs;
  std::vector<Eigen::MatrixXd> activations;
  WindowBatch batch;  // copy of the input batch
};

// Normalized-space network output, 3 × count.
Eigen::MatrixXd net_forward(const ModelParams& params, const WindowBatch& batch,
                            ForwardTrace* trace = nullptr);

// Gradient w.r.t. the flat parameter vector given cotangents in normalized
// output space (3 × count).
Eigen::VectorXd net_backward(const ModelParams& params, const ForwardTrace& trace,
                             const Eigen::MatrixXd& cotangent);

// Single normalized 11×T window → denormalized v̇ prediction [m/s²].
Vec3 forward(const ModelParams& params, const Eigen::MatrixXd& normalized_window);

// Vectorized forward over a packed batch; rows match forward() within 1e-12.
// Output is count × 3, denormalized.
Eigen::MatrixXd forward_batch(const ModelParams& params, const WindowBatch& batch);

// Convenience: raw (unnormalized) windows in, denormalized predictions out.
Eigen::MatrixXd predict_windows(const ModelParams& params,
                                std::span<const TrainingWindow> windows);

// Gradient w.r.t. params of Σ_ij cotangent_ij · forward_batch(...)_ij, with
// the cotangent given against the denormalized outputs (count × 3).
Eigen::VectorXd backward(const ModelParams& params, const WindowBatch& batch,
                         const Eigen::MatrixXd& cotangent);

// Checkpoint: header (config echo, layout table, normalization stats, layout
// hash) + little-endian f64 parameter vector. The loader validates the hash.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace piwan
