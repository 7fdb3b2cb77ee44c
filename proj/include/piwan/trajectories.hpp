#pragma once

#include <string>
#include <vector>

#include "piwan/dynamics.hpp"

namespace piwan {

enum class TrajectoryKind {
  Circle,
  Ellipse,
  Lemniscate,
  TransposedLemniscate,
  Spiral,
  WarpedEllipse,
  ExtendedLemniscate,
};

inline constexpr TrajectoryKind kAllTrajectoryKinds[] = {
    TrajectoryKind::Circle,         TrajectoryKind::Ellipse,
    TrajectoryKind::Lemniscate,     TrajectoryKind::TransposedLemniscate,
    TrajectoryKind::Spiral,         TrajectoryKind::WarpedEllipse,
    TrajectoryKind::ExtendedLemniscate,
};

// {Circle, Ellipse, Lemniscate, TransposedLemniscate, Spiral} are used for
// training; {WarpedEllipse, ExtendedLemniscate} are held out as unseen.
bool is_training_kind(TrajectoryKind kind);

std::string to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& name);

// One trajectory family with its shape parameters. Kinds that do not use a
// parameter ignore it.
struct Trajectory {
  TrajectoryKind kind{TrajectoryKind::Circle};
  double radius_x{2.0};                     // a [m]
  double radius_y{1.5};                     // b [m]
  double height{1.0};                       // h [m]
  double angular_rate{2.0 * M_PI / 20.0};   // ω_t [rad/s], one lap per 20 s
  double climb_rate{0.05};                  // c [m/s], Spiral only
  double warp_amplitude{0.5};               // d [m], warped/extended kinds

  static Trajectory of(TrajectoryKind kind) {
    Trajectory t;
    t.kind = kind;
    return t;
  }
};

// Full reference for one horizon knot: analytic position/velocity, identity
// attitude, zero body rates, hover thrust.
struct ReferenceState {
  Vec3 p_r{Vec3::Zero()};
  Vec3 v_r{Vec3::Zero()};
  Quat q_r{};
  Vec3 omega_r{Vec3::Zero()};
  double t_mn_r{kGravity};

  State state() const { return State{p_r, q_r, v_r}; }
  ControlInput input() const { return ControlInput{t_mn_r, omega_r}; }
};

// Evaluates the analytic reference at time t ≥ 0. v_r is the exact time
// derivative of p_r.
ReferenceState sample(const Trajectory& traj, double t);

// Samples at t0, t0+dt, ..., t0+steps·dt (steps+1 entries).
std::vector<ReferenceState> horizon(const Trajectory& traj, double t0, int steps, double dt);

}  // namespace piwan
