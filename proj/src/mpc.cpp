#include "piwan/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace piwan {

namespace {

constexpr int kNx = 10;
constexpr int kNu = 4;

Vec4 clamp_input(const Vec4& u, const Vec4& lo, const Vec4& hi) {
  return u.cwiseMax(lo).cwiseMin(hi);
}

// minimize 0.5 x'Hx + g'x subject to lo <= x <= hi, H symmetric positive
// definite. Projected-Newton active set: Newton step on the free variables,
// projected backtracking on the quadratic.
Eigen::VectorXd solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             Eigen::VectorXd x) {
  const int n = static_cast<int>(g.size());
  const double bound_tol = 1e-10;
  const double grad_tol = 1e-10 * (1.0 + g.cwiseAbs().maxCoeff());
  x = x.cwiseMax(lo).cwiseMin(hi);

  auto objective = [&](const Eigen::VectorXd& z) {
    return 0.5 * z.dot(H * z) + g.dot(z);
  };

  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd grad = H * x + g;

    double pg_inf = 0.0;
    std::vector<int> free_idx;
    free_idx.reserve(n);
    for (int i = 0; i < n; ++i) {
      const bool at_lo = x[i] <= lo[i] + bound_tol;
      const bool at_hi = x[i] >= hi[i] - bound_tol;
      double pg = grad[i];
      if (at_lo) pg = std::min(grad[i], 0.0);
      if (at_hi) pg = std::max(grad[i], 0.0);
      pg_inf = std::max(pg_inf, std::abs(pg));
      const bool binding = (at_lo && grad[i] > 0.0) || (at_hi && grad[i] < 0.0);
      if (!binding) free_idx.push_back(i);
    }
    if (pg_inf <= grad_tol) return x;
    if (free_idx.empty()) return x;

    const int nf = static_cast<int>(free_idx.size());
    Eigen::MatrixXd hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf[a] = grad[free_idx[a]];
      for (int b = 0; b < nf; ++b) hf(a, b) = H(free_idx[a], free_idx[b]);
    }

    Eigen::VectorXd pf;
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      Eigen::MatrixXd hj = hf;
      if (jitter > 0.0) hj.diagonal().array() += jitter;
      pf = hj.ldlt().solve(-gf);
      if (pf.allFinite()) break;
      jitter = (jitter == 0.0) ? 1e-10 * (1.0 + hf.trace() / nf) : jitter * 100.0;
    }
    if (!pf.allFinite()) return x;

    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < nf; ++a) p[free_idx[a]] = pf[a];

    const double f0 = objective(x);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd xn = (x + alpha * p).cwiseMax(lo).cwiseMin(hi);
      if (objective(xn) < f0 - 1e-14 * (1.0 + std::abs(f0))) {
        x = xn;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return x;  // stalled at numerical precision
  }
  return x;
}

struct Iterate {
  std::vector<State> xs;         // horizon+1
  std::vector<ControlInput> us;  // horizon
};

double nonlinear_cost(const Iterate& z, std::span<const ReferenceState> refs,
                      const MpcWeights& w) {
  const int h = static_cast<int>(z.us.size());
  double cost = 0.0;
  for (int k = 0; k < h; ++k) {
    const StateVector e = z.xs[k].to_vector() - refs[k].state().to_vector();
    const Vec4 ue = z.us[k].to_vector() - refs[k].input().to_vector();
    cost += e.dot(w.q_state.cwiseProduct(e)) + ue.dot(w.r_input.cwiseProduct(ue));
  }
  const StateVector eh = z.xs[h].to_vector() - refs[h].state().to_vector();
  cost += eh.dot(w.q_terminal.cwiseProduct(eh));
  return cost;
}

double defect_l1(const Iterate& z, const DiscreteDynamics& model, double dt) {
  double total = 0.0;
  for (std::size_t k = 0; k < z.us.size(); ++k) {
    const StateVector d = model(z.xs[k], z.us[k], dt).to_vector() - z.xs[k + 1].to_vector();
    total += d.cwiseAbs().sum();
  }
  return total;
}

// Linearizations, defect-folded condensed gradient, and the KKT measure at
// the current iterate. The gradient comes from the adjoint recursion, so the
// sensitivity matrix G is only materialized when a step is actually taken.
struct Measurement {
  std::vector<Linearization> lin;          // horizon
  std::vector<StateVector> defects;        // horizon, F(x_k,u_k) − x_{k+1}
  std::vector<StateVector> folded_error;   // ê_k = x_k + w_k − x^r_k
  Eigen::VectorXd gradient;                // condensed ∇J at δu = 0
  double defect_inf{0.0};
  double kkt{0.0};
};

Measurement measure(const Iterate& z, std::span<const ReferenceState> refs,
                    const DiscreteDynamics& model, const MpcConfig& cfg, const MpcWeights& w) {
  const int h = cfg.horizon;
  Measurement m;
  m.lin.reserve(h);
  m.defects.resize(h);
  m.folded_error.resize(h + 1);

  for (int k = 0; k < h; ++k) {
    m.lin.push_back(linearize_dynamics(model, z.xs[k], z.us[k], cfg.dt));
    m.defects[k] = m.lin[k].value - z.xs[k + 1].to_vector();
    m.defect_inf = std::max(m.defect_inf, m.defects[k].cwiseAbs().maxCoeff());
  }

  // δx at δu = 0: w_0 = 0 (x_0 is pinned to x_init), w_{k+1} = A_k w_k + d_k.
  StateVector wk = StateVector::Zero();
  m.folded_error[0] = z.xs[0].to_vector() - refs[0].state().to_vector();
  for (int k = 0; k < h; ++k) {
    wk = (m.lin[k].A * wk + m.defects[k]).eval();
    m.folded_error[k + 1] = z.xs[k + 1].to_vector() + wk - refs[k + 1].state().to_vector();
  }

  // Adjoint sweep for the condensed gradient.
  m.gradient.resize(kNu * h);
  StateVector lambda = 2.0 * w.q_terminal.cwiseProduct(m.folded_error[h]);
  for (int k = h - 1; k >= 0; --k) {
    const Vec4 ue = z.us[k].to_vector() - refs[k].input().to_vector();
    m.gradient.segment<kNu>(kNu * k) = 2.0 * w.r_input.cwiseProduct(ue) + m.lin[k].B.transpose() * lambda;
    lambda = 2.0 * w.q_state.cwiseProduct(m.folded_error[k]) + m.lin[k].A.transpose() * lambda;
  }

  // Projected-gradient stationarity under the current input bounds.
  double pg_inf = 0.0;
  for (int k = 0; k < h; ++k) {
    const Vec4 u = z.us[k].to_vector();
    for (int i = 0; i < kNu; ++i) {
      double gi = m.gradient[kNu * k + i];
      if (u[i] <= cfg.u_min[i] + 1e-10) gi = std::min(gi, 0.0);
      if (u[i] >= cfg.u_max[i] - 1e-10) gi = std::max(gi, 0.0);
      pg_inf = std::max(pg_inf, std::abs(gi));
    }
  }
  m.kkt = std::max(m.defect_inf, pg_inf);
  return m;
}

std::vector<State> rollout(const State& x_init, std::span<const ControlInput> us,
                           const DiscreteDynamics& model, double dt) {
  std::vector<State> xs;
  xs.reserve(us.size() + 1);
  xs.push_back(x_init);
  for (const ControlInput& u : us) xs.push_back(model(xs.back(), u, dt));
  return xs;
}

}  // namespace

void MpcConfig::validate() const {
  if (horizon < 1) throw ConfigError("mpc.horizon must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("mpc.dt must be positive");
  if (!(kkt_tol > 0.0)) throw ConfigError("mpc.kkt_tol must be positive");
  if (((u_max - u_min).array() <= 0.0).any()) {
    throw ConfigError("mpc input bounds require u_min < u_max componentwise");
  }
}

DiscreteDynamics nominal_discrete_dynamics() {
  return [](const State& x, const ControlInput& u, double dt) {
    return rk4_step_nominal(x, u, dt);
  };
}

Linearization linearize_dynamics(const DiscreteDynamics& model, const State& x,
                                 const ControlInput& u, double dt) {
  Linearization lin;
  lin.value = model(x, u, dt).to_vector();

  const StateVector x0 = x.to_vector();
  const Vec4 u0 = u.to_vector();
  for (int i = 0; i < kNx; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x0[i]));
    StateVector xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const StateVector fp = model(State::from_vector(xp), u, dt).to_vector();
    const StateVector fm = model(State::from_vector(xm), u, dt).to_vector();
    lin.A.col(i) = (fp - fm) / (2.0 * h);
  }
  for (int i = 0; i < kNu; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(u0[i]));
    Vec4 up = u0, um = u0;
    up[i] += h;
    um[i] -= h;
    const StateVector fp = model(x, ControlInput::from_vector(up), dt).to_vector();
    const StateVector fm = model(x, ControlInput::from_vector(um), dt).to_vector();
    lin.B.col(i) = (fp - fm) / (2.0 * h);
  }
  if (!lin.A.allFinite() || !lin.B.allFinite() || !lin.value.allFinite()) {
    throw NonFiniteJacobian("linearize_dynamics: non-finite Jacobian");
  }
  return lin;
}

MpcSolution solve(const State& x_init, std::span<const ReferenceState> refs,
                  const DiscreteDynamics& model, const MpcConfig& cfg, const MpcWeights& weights,
                  const MpcSolution* warm_start) {
  cfg.validate();
  const int h = cfg.horizon;
  if (static_cast<int>(refs.size()) != h + 1) {
    throw HorizonMismatch("solve: refs must have horizon+1 entries");
  }
  if (!x_init.finite()) throw NonFiniteState("solve: non-finite initial state");

  Iterate z;
  z.us.resize(h);
  if (warm_start != nullptr && static_cast<int>(warm_start->inputs.size()) == h) {
    for (int k = 0; k < h; ++k) {
      const int src = std::min(k + 1, h - 1);
      z.us[k] = ControlInput::from_vector(
          clamp_input(warm_start->inputs[src].to_vector(), cfg.u_min, cfg.u_max));
    }
  } else {
    for (int k = 0; k < h; ++k) {
      z.us[k] = ControlInput::from_vector(
          clamp_input(refs[k].input().to_vector(), cfg.u_min, cfg.u_max));
    }
  }
  z.xs = rollout(x_init, z.us, model, cfg.dt);

  const std::vector<ControlInput> baseline_us = z.us;
  const std::vector<State> baseline_xs = z.xs;
  const double baseline_cost = nonlinear_cost(z, refs, weights);

  Measurement m = measure(z, refs, model, cfg, weights);
  int iterations = 0;

  for (int it = 0; it < cfg.max_sqp_iters && m.kkt > cfg.kkt_tol; ++it) {
    // Forward sensitivity G_k = ∂δx_k/∂δu (nonzero in the first 4k columns)
    // and the Gauss–Newton Hessian 2(Σ G_kᵀ Q_k G_k + R̄).
    const int nu_total = kNu * h;
    Eigen::MatrixXd gk = Eigen::MatrixXd::Zero(kNx, nu_total);
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(nu_total, nu_total);
    for (int k = 0; k < h; ++k) hessian.block<kNu, kNu>(kNu * k, kNu * k) = 2.0 * weights.r_input.asDiagonal();
    for (int k = 0; k < h; ++k) {
      // gk enters the iteration holding G_k; G_{k+1} = A_k G_k + B_k.
      if (k > 0) {
        const int cols = kNu * k;
        gk.leftCols(cols) = (m.lin[k].A * gk.leftCols(cols)).eval();
      }
      gk.block<kNx, kNu>(0, kNu * k) = m.lin[k].B;
      const int active = kNu * (k + 1);
      const StateVector& qk = (k + 1 == h) ? weights.q_terminal : weights.q_state;
      hessian.topLeftCorner(active, active).noalias() +=
          2.0 * gk.leftCols(active).transpose() * qk.asDiagonal() * gk.leftCols(active);
    }
    // k = 0 state is pinned, so only states 1..H contribute through G; the
    // k = 0 stage cost of δx vanishes and is already in the gradient.

    Eigen::VectorXd lo(nu_total), hi(nu_total);
    for (int k = 0; k < h; ++k) {
      lo.segment<kNu>(kNu * k) = cfg.u_min - z.us[k].to_vector();
      hi.segment<kNu>(kNu * k) = cfg.u_max - z.us[k].to_vector();
    }

    const Eigen::VectorXd du =
        solve_box_qp(hessian, m.gradient, lo, hi, Eigen::VectorXd::Zero(nu_total));

    // Recover the state step from the linearized dynamics.
    std::vector<StateVector> dx(h + 1);
    dx[0] = StateVector::Zero();
    for (int k = 0; k < h; ++k) {
      dx[k + 1] = m.lin[k].A * dx[k] + m.lin[k].B * du.segment<kNu>(kNu * k) + m.defects[k];
    }

    const double merit0 = nonlinear_cost(z, refs, weights) + cfg.merit_penalty * [&] {
      double l1 = 0.0;
      for (int k = 0; k < h; ++k) l1 += m.defects[k].cwiseAbs().sum();
      return l1;
    }();

    double alpha = 1.0;
    bool accepted = false;
    Iterate trial;
    trial.us.resize(h);
    trial.xs.resize(h + 1);
    for (int ls = 0; ls < cfg.max_line_search; ++ls) {
      trial.xs[0] = x_init;
      for (int k = 0; k < h; ++k) {
        trial.us[k] = ControlInput::from_vector(clamp_input(
            z.us[k].to_vector() + alpha * du.segment<kNu>(kNu * k), cfg.u_min, cfg.u_max));
        State xk = State::from_vector(z.xs[k + 1].to_vector() + alpha * dx[k + 1]);
        xk.q = xk.q.normalized();
        trial.xs[k + 1] = xk;
      }
      const double merit =
          nonlinear_cost(trial, refs, weights) + cfg.merit_penalty * defect_l1(trial, model, cfg.dt);
      if (merit < merit0 - 1e-12 * (1.0 + std::abs(merit0))) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      if (m.kkt <= 1e3 * cfg.kkt_tol) break;  // stalled within numerical precision of done
      throw SolverDiverged("solve: merit increased at minimum step (kkt=" +
                           std::to_string(m.kkt) + ")");
    }

    z = trial;
    ++iterations;
    m = measure(z, refs, model, cfg, weights);
  }

  // Return the rollout of the solved inputs: dynamics-consistent by
  // construction, and never worse than the (shifted) warm start.
  MpcSolution sol;
  sol.inputs = z.us;
  sol.states = rollout(x_init, sol.inputs, model, cfg.dt);
  sol.cost = nonlinear_cost(Iterate{sol.states, sol.inputs}, refs, weights);
  sol.kkt_residual = m.kkt;
  sol.iterations = iterations;
  if (sol.cost > baseline_cost) {
    sol.inputs = baseline_us;
    sol.states = baseline_xs;
    sol.cost = baseline_cost;
    sol.kkt_residual = measure(Iterate{sol.states, sol.inputs}, refs, model, cfg, weights).kkt;
  }
  sol.u0 = sol.inputs.front();
  return sol;
}

double tracking_rmse(std::span<const TrackStep> steps) {
  if (steps.empty()) return 0.0;
  double acc = 0.0;
  for (const TrackStep& s : steps) acc += (s.state.p - s.ref.p_r).squaredNorm();
  return std::sqrt(acc / static_cast<double>(steps.size()));
}

TrackLog track(const Trajectory& traj, SteppedModel& model, const WindField& plant_wind,
               const MpcConfig& cfg, const MpcWeights& weights, double duration) {
  cfg.validate();
  const int n = step_count(duration, cfg.dt);

  TrackLog log;
  log.trajectory = traj;
  log.wind = plant_wind;
  log.dt = cfg.dt;
  log.steps.reserve(n);

  State x = sample(traj, 0.0).state();
  std::optional<MpcSolution> warm;
  for (int k = 0; k < n; ++k) {
    const double t = k * cfg.dt;
    const std::vector<ReferenceState> refs = horizon(traj, t, cfg.horizon, cfg.dt);
    const DiscreteDynamics dyn = model.model_at(t);
    MpcSolution sol;
    try {
      sol = solve(x, refs, dyn, cfg, weights, warm ? &*warm : nullptr);
    } catch (const SolverDiverged& e) {
      throw SolverDiverged("track " + to_string(traj.kind) + " t=" + std::to_string(t) + ": " +
                           e.what());
    }
    log.steps.push_back(TrackStep{t, x, refs[0], sol.u0, model.disturbance(), sol.iterations});
    model.observe(t, x, sol.u0);
    x = rk4_step_plant(x, sol.u0, plant_wind, cfg.dt);
    warm = std::move(sol);
  }
  log.rmse = tracking_rmse(log.steps);
  return log;
}

}  // namespace piwan
