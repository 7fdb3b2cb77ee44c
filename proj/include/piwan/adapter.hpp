#pragma once

#include <vector>

#include "piwan/mpc.hpp"
#include "piwan/net.hpp"

namespace piwan {

struct AdapterConfig {
  int estimate_window{10};       // N_T, steps averaged for the estimate
  Vec3 gains{0.8, 0.8, 0.8};     // Λ, per-axis compensation gain in [0, 1]
  double correction_limit{3.0};  // per-axis saturation of Λ∘f_w [m/s²]

  void validate(int model_window_len) const;
};

// Ring buffer of the most recent (state, input) pairs at fixed dt. Holds
// T + N_T − 1 frames: enough for N_T model windows of length T ending at
// the last N_T steps. Queries before the buffer fills throw HistoryNotWarm.
class ControlHistory {
 public:
  ControlHistory(int window_len, int estimate_window);

  void push(double t, const State& x, const ControlInput& u);
  bool full() const { return size_ == capacity_; }
  int size() const { return size_; }
  int capacity() const { return capacity_; }
  void clear() { size_ = head_ = 0; }

  struct Frame {
    double t;
    State state;
    ControlInput input;
  };

  // i_back = 0 is the newest frame, capacity()-1 the oldest retained.
  const Frame& from_newest(int i_back) const;

 private:
  std::vector<Frame> frames_;
  int capacity_;
  int size_{0};
  int head_{0};  // index of the next write slot
};

// f_w: mean over the last N_T steps of (model prediction − nominal velocity
// derivative), evaluated on the history window ending at each step. [m/s²]
Vec3 estimate(const ModelParams& params, const ControlHistory& history, const AdapterConfig& cfg);

// Discrete dynamics with the velocity derivative augmented by Λ∘f_w, where
// f_w is estimated once from the given history and held constant (the MPC
// sees a frozen disturbance over its horizon). The applied correction is
// saturated at ±correction_limit per axis: far outside the training
// distribution the network extrapolates arbitrarily, and an unbounded
// correction lets tracking error and estimate error feed each other.
// Λ = 0 reproduces the nominal step bit-for-bit.
DiscreteDynamics corrected_dynamics(const ModelParams& params, const ControlHistory& history,
                                    const AdapterConfig& cfg);

// SteppedModel wiring for the closed loop: feeds the history from observed
// (state, input) pairs, re-estimates every control step once warm, and falls
// back to the nominal model during warm-up.
class AdaptiveModel final : public SteppedModel {
 public:
  AdaptiveModel(ModelParams params, const AdapterConfig& cfg);

  DiscreteDynamics model_at(double t) override;
  void observe(double t, const State& x, const ControlInput& u) override;
  Vec3 disturbance() const override { return last_fw_; }

 private:
  ModelParams params_;
  AdapterConfig cfg_;
  ControlHistory history_;
  Vec3 last_fw_{Vec3::Zero()};
};

}  // namespace piwan
