#include "piwan/dynamics.hpp"

#include <cmath>

namespace piwan {

Eigen::Matrix3d Quat::rotation() const {
  Eigen::Matrix3d r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Quat quat_multiply(const Quat& a, const Quat& b) {
  return Quat{
      a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
      a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
      a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
      a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
  };
}

Vec3 quat_rotate(const Quat& q, const Vec3& v) { return q.rotation() * v; }

StateVector State::to_vector() const {
  StateVector x;
  x << p, q.w, q.x, q.y, q.z, v;
  return x;
}

State State::from_vector(const StateVector& x) {
  State s;
  s.p = x.segment<3>(0);
  s.q = Quat{x[3], x[4], x[5], x[6]};
  s.v = x.segment<3>(7);
  return s;
}

StateVector StateDerivative::to_vector() const {
  StateVector x;
  x << dp, dq, dv;
  return x;
}

StateDerivative nominal_derivative(const State& x, const ControlInput& u) {
  const double qn = x.q.norm();
  if (std::abs(qn - 1.0) > 1e-3 || !std::isfinite(qn)) {
    throw NonUnitQuaternion("nominal_derivative: |q| = " + std::to_string(qn));
  }
  StateDerivative d;
  d.dp = x.v;
  const Quat omega_q{0.0, u.omega.x(), u.omega.y(), u.omega.z()};
  d.dq = 0.5 * quat_multiply(x.q, omega_q).vec();
  d.dv = quat_rotate(x.q, Vec3{0.0, 0.0, u.t_mn}) + Vec3{0.0, 0.0, -kGravity};
  return d;
}

StateDerivative plant_derivative(const State& x, const ControlInput& u, const WindField& w) {
  StateDerivative d = nominal_derivative(x, u);
  d.dv -= w.drag_coeffs.cwiseProduct(x.v - w.v_w);
  return d;
}

State rk4_step_nominal(const State& x, const ControlInput& u, double dt) {
  return rk4_step([](const State& s, const ControlInput& c) { return nominal_derivative(s, c); },
                  x, u, dt);
}

State rk4_step_plant(const State& x, const ControlInput& u, const WindField& w, double dt) {
  return rk4_step(
      [&w](const State& s, const ControlInput& c) { return plant_derivative(s, c, w); }, x, u, dt);
}

int step_count(double duration, double dt) {
  if (!(dt > 0.0)) throw Error("step_count: dt must be positive");
  const double ratio = duration / dt;
  const int n = static_cast<int>(std::llround(ratio));
  if (n <= 0 || std::abs(ratio - n) > 1e-6) {
    throw Error("duration must be an integral multiple of dt");
  }
  return n;
}

std::vector<SimRecord> simulate(const State& x0, const ControlPolicy& controller,
                                const WindField& wind, double duration, double dt) {
  const int n = step_count(duration, dt);
  std::vector<SimRecord> records;
  records.reserve(n);
  State x = x0;
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    ControlInput u;
    try {
      u = controller(t, x);
    } catch (const SolverDiverged& e) {
      throw SolverDiverged("t=" + std::to_string(t) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("simulate: controller failed at t=" + std::to_string(t) + ": " + e.what());
    }
    SimRecord rec;
    rec.t = t;
    rec.state = x;
    rec.input = u;
    rec.deriv = plant_derivative(x, u, wind);
    records.push_back(rec);
    x = rk4_step_plant(x, u, wind, dt);
  }
  return records;
}

}  // namespace piwan
