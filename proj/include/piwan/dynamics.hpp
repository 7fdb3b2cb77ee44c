#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "piwan/common.hpp"

namespace piwan {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using StateVector = Eigen::Matrix<double, 10, 1>;

inline constexpr double kGravity = 9.81;  // m/s^2, world frame z-up

// Hamilton quaternion, body-to-world, (w, x, y, z) component order.
struct Quat {
  double w{1.0};
  double x{0.0};
  double y{0.0};
  double z{0.0};

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return Quat{w / n, x / n, y / n, z / n};
  }

  Vec4 vec() const { return Vec4{w, x, y, z}; }

  static Quat from_vec(const Vec4& v) { return Quat{v[0], v[1], v[2], v[3]}; }

  static Quat identity() { return Quat{}; }

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double half = 0.5 * angle;
    const double s = std::sin(half);
    return Quat{std::cos(half), s * a.x(), s * a.y(), s * a.z()};
  }

  // Body-to-world rotation matrix. Valid as a rotation only for unit
  // quaternions; left unnormalized so it stays smooth in the components.
  Eigen::Matrix3d rotation() const;

  bool finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

// Hamilton product a ⊗ b.
Quat quat_multiply(const Quat& a, const Quat& b);

// Rotates a world-frame vector by R(q) (body-to-world for body vectors).
Vec3 quat_rotate(const Quat& q, const Vec3& v);

// Vehicle state: position, attitude quaternion, velocity (world frame).
struct State {
  Vec3 p{Vec3::Zero()};
  Quat q{};
  Vec3 v{Vec3::Zero()};

  StateVector to_vector() const;
  static State from_vector(const StateVector& x);
  bool finite() const { return p.allFinite() && q.finite() && v.allFinite(); }
};

// Mass-normalized collective thrust [m/s^2] plus body rates [rad/s].
struct ControlInput {
  double t_mn{0.0};
  Vec3 omega{Vec3::Zero()};

  Vec4 to_vector() const { return Vec4{t_mn, omega.x(), omega.y(), omega.z()}; }
  static ControlInput from_vector(const Vec4& u) {
    return ControlInput{u[0], Vec3{u[1], u[2], u[3]}};
  }
  static ControlInput hover() { return ControlInput{kGravity, Vec3::Zero()}; }
  bool finite() const { return std::isfinite(t_mn) && omega.allFinite(); }
};

struct StateDerivative {
  Vec3 dp{Vec3::Zero()};
  Vec4 dq{Vec4::Zero()};
  Vec3 dv{Vec3::Zero()};

  StateVector to_vector() const;
};

// Constant wind plus diagonal linear drag acting on relative airspeed.
struct WindField {
  Vec3 v_w{Vec3::Zero()};
  Vec3 drag_coeffs{0.3, 0.3, 0.15};  // 1/s, entries >= 0

  static WindField none() { return WindField{Vec3::Zero(), Vec3{0.3, 0.3, 0.15}}; }
  static WindField xy(double wx, double wy) {
    return WindField{Vec3{wx, wy, 0.0}, Vec3{0.3, 0.3, 0.15}};
  }
};

// Rigid-body model: dp = v, dq = 1/2 q ⊗ (0, ω), dv = R(q)·(0,0,t_mn) − g·e_z.
// Throws NonUnitQuaternion when ‖q‖ deviates from 1 by more than 1e-3.
StateDerivative nominal_derivative(const State& x, const ControlInput& u);

// Ground-truth plant: nominal dynamics with dv augmented by −D·(v − v_w).
StateDerivative plant_derivative(const State& x, const ControlInput& u, const WindField& w);

// Classical RK4 over all ten state components with u held constant; the
// quaternion is renormalized after the step.
template <class DerivFn>
State rk4_step(DerivFn&& f, const State& x, const ControlInput& u, double dt) {
  if (!(dt > 0.0)) throw Error("rk4_step: dt must be positive");
  const StateVector x0 = x.to_vector();
  const StateVector k1 = f(x, u).to_vector();
  const StateVector k2 = f(State::from_vector(x0 + (0.5 * dt) * k1), u).to_vector();
  const StateVector k3 = f(State::from_vector(x0 + (0.5 * dt) * k2), u).to_vector();
  const StateVector k4 = f(State::from_vector(x0 + dt * k3), u).to_vector();
  State out = State::from_vector(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  out.q = out.q.normalized();
  if (!out.finite()) throw NonFiniteState("rk4_step: non-finite state");
  return out;
}

State rk4_step_nominal(const State& x, const ControlInput& u, double dt);
State rk4_step_plant(const State& x, const ControlInput& u, const WindField& w, double dt);

struct SimRecord {
  double t;
  State state;
  ControlInput input;
  StateDerivative deriv;  // true plant derivative at (state, input), pre-integration
};

using ControlPolicy = std::function<ControlInput(double t, const State& x)>;

// Rolls the plant forward for duration/dt steps, recording the state, the
// applied input, and the true plant derivative at each step. Controller
// failures are rethrown with the failing timestamp attached.
std::vector<SimRecord> simulate(const State& x0, const ControlPolicy& controller,
                                const WindField& wind, double duration, double dt);

// duration/dt rounded to the nearest integer; throws unless it is integral.
int step_count(double duration, double dt);

}  // namespace piwan
