#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "piwan/dynamics.hpp"
#include "piwan/trajectories.hpp"

namespace piwan {

// Discrete one-step model x_{k+1} = F(x_k, u_k, dt).
using DiscreteDynamics = std::function<State(const State&, const ControlInput&, double)>;

DiscreteDynamics nominal_discrete_dynamics();

// Diagonal stage weights for the tracking cost
//   Σ_k (x_k − x^r_k)ᵀ Q (x_k − x^r_k) + (u_k − u^r_k)ᵀ R (u_k − u^r_k)
//   + (x_H − x^r_H)ᵀ Q_T (x_H − x^r_H).
struct MpcWeights {
  StateVector q_state;
  Vec4 r_input;
  StateVector q_terminal;

  static MpcWeights defaults() {
    MpcWeights w;
    w.q_state << 10, 10, 10, 5, 5, 5, 5, 1, 1, 1;
    w.r_input << 0.1, 0.2, 0.2, 0.2;
    w.q_terminal = w.q_state;
    return w;
  }
};

struct MpcConfig {
  int horizon{20};
  double dt{0.02};
  Vec4 u_min{2.0, -3.0, -3.0, -3.0};
  Vec4 u_max{20.0, 3.0, 3.0, 3.0};
  int max_sqp_iters{30};
  double kkt_tol{1e-6};
  double merit_penalty{1e3};   // L1 defect weight in the line-search merit
  int max_line_search{30};     // halvings before declaring divergence

  void validate() const;
};

struct MpcSolution {
  ControlInput u0;
  std::vector<State> states;         // horizon+1, consistent with `inputs` under the model
  std::vector<ControlInput> inputs;  // horizon entries, within bounds
  double cost{0.0};                  // nonlinear rollout cost of `inputs`
  double kkt_residual{0.0};
  int iterations{0};
};

// Jacobians of the discrete map at (x, u) by relative-scaled central
// differences (step 1e-6), plus the map value at the linearization point.
struct Linearization {
  Eigen::Matrix<double, 10, 10> A;
  Eigen::Matrix<double, 10, 4> B;
  StateVector value;  // F(x, u, dt); the caller forms defects against x_{k+1}
};

Linearization linearize_dynamics(const DiscreteDynamics& model, const State& x,
                                 const ControlInput& u, double dt);

// Multiple-shooting Gauss–Newton SQP with input box constraints. Warm start
// shifts the previous solution by one step. The returned trajectory is the
// nonlinear rollout of the solved inputs, so shooting defects are zero.
MpcSolution solve(const State& x_init, std::span<const ReferenceState> refs,
                  const DiscreteDynamics& model, const MpcConfig& cfg, const MpcWeights& weights,
                  const MpcSolution* warm_start = nullptr);

// Prediction model used by the receding-horizon loop; adaptive variants
// refresh their disturbance estimate once per control step.
class SteppedModel {
 public:
  virtual ~SteppedModel() = default;
  virtual DiscreteDynamics model_at(double t) = 0;
  virtual void observe(double /*t*/, const State& /*x*/, const ControlInput& /*u*/) {}
  virtual Vec3 disturbance() const { return Vec3::Zero(); }
};

class NominalModel final : public SteppedModel {
 public:
  DiscreteDynamics model_at(double /*t*/) override { return nominal_discrete_dynamics(); }
};

struct TrackStep {
  double t;
  State state;
  ReferenceState ref;
  ControlInput input;
  Vec3 disturbance;
  int sqp_iterations;
};

struct TrackLog {
  Trajectory trajectory;
  WindField wind;
  double dt{0.0};
  std::vector<TrackStep> steps;
  double rmse{0.0};  // sqrt(mean ‖p − p_r‖²) over steps
};

double tracking_rmse(std::span<const TrackStep> steps);

// Closed loop: solve with warm start, apply u0 to the true plant, advance one
// step. Starts at the trajectory's t = 0 state with matched velocity.
TrackLog track(const Trajectory& traj, SteppedModel& model, const WindField& plant_wind,
               const MpcConfig& cfg, const MpcWeights& weights, double duration);

}  // namespace piwan
