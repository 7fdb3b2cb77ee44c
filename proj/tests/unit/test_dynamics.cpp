#include <doctest.h>

#include <cmath>
#include <random>

#include "piwan/dynamics.hpp"

using namespace piwan;

namespace {

// Independent Rodrigues rotation matrix used as the oracle for quaternion
// rotation and composition.
Eigen::Matrix3d rodrigues(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  Eigen::Matrix3d k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

State random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-5.0, 5.0);
  std::uniform_real_distribution<double> vel(-3.0, 3.0);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 axis{gauss(rng), gauss(rng), gauss(rng)};
  if (axis.norm() < 1e-9) axis = Vec3::UnitZ();
  State x;
  x.p = Vec3{pos(rng), pos(rng), pos(rng)};
  x.q = Quat::from_axis_angle(axis, angle(rng));
  x.v = Vec3{vel(rng), vel(rng), vel(rng)};
  return x;
}

ControlInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> thrust(2.0, 20.0);
  std::uniform_real_distribution<double> rate(-3.0, 3.0);
  return ControlInput{thrust(rng), Vec3{rate(rng), rate(rng), rate(rng)}};
}

}  // namespace

TEST_CASE("quat_multiply identity and unit rules") {
  const Quat half{0.5, 0.5, 0.5, 0.5};
  const Quat r = quat_multiply(Quat::identity(), half);
  CHECK(r.w == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.x == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.y == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.z == doctest::Approx(0.5).epsilon(1e-15));

  const Quat i{0.0, 1.0, 0.0, 0.0};
  const Quat ii = quat_multiply(i, i);
  CHECK(ii.w == doctest::Approx(-1.0));
  CHECK(ii.x == doctest::Approx(0.0));
  CHECK(ii.y == doctest::Approx(0.0));
  CHECK(ii.z == doctest::Approx(0.0));
}

TEST_CASE("quat_multiply matches rotation-matrix composition oracle") {
  const double c = std::cos(M_PI / 4.0), s = std::sin(M_PI / 4.0);
  const Quat a{c, s, 0.0, 0.0};
  const Quat ab = quat_multiply(a, a);
  CHECK(ab.w == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ab.x == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 ax1{gauss(rng), gauss(rng), gauss(rng)};
    const Vec3 ax2{gauss(rng), gauss(rng), gauss(rng)};
    const double a1 = angle(rng), a2 = angle(rng);
    const Quat q1 = Quat::from_axis_angle(ax1, a1);
    const Quat q2 = Quat::from_axis_angle(ax2, a2);
    const Eigen::Matrix3d composed = rodrigues(ax1, a1) * rodrigues(ax2, a2);
    CHECK((quat_multiply(q1, q2).rotation() - composed).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("quat_multiply preserves the norm product") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Quat a{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
    const Quat b{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
    CHECK(quat_multiply(a, b).norm() == doctest::Approx(a.norm() * b.norm()).epsilon(1e-12));
  }
}

TEST_CASE("nominal_derivative hover equilibrium") {
  State x;
  const StateDerivative d = nominal_derivative(x, ControlInput::hover());
  CHECK(d.dp.norm() == 0.0);
  CHECK(d.dq.norm() == 0.0);
  CHECK(d.dv.norm() == 0.0);
}

TEST_CASE("nominal_derivative yaw rate quaternion rate") {
  State x;
  const ControlInput u{kGravity, Vec3{0.0, 0.0, 2.0}};
  const StateDerivative d = nominal_derivative(x, u);
  CHECK(d.dq[0] == doctest::Approx(0.0));
  CHECK(d.dq[1] == doctest::Approx(0.0));
  CHECK(d.dq[2] == doctest::Approx(0.0));
  CHECK(d.dq[3] == doctest::Approx(1.0));
}

TEST_CASE("nominal_derivative tilted thrust against rotation oracle") {
  State x;
  x.q = Quat::from_axis_angle(Vec3::UnitX(), M_PI / 2.0);
  const StateDerivative d = nominal_derivative(x, ControlInput{kGravity, Vec3::Zero()});
  const Vec3 expected = rodrigues(Vec3::UnitX(), M_PI / 2.0) * Vec3{0, 0, kGravity} +
                        Vec3{0, 0, -kGravity};
  CHECK((d.dv - expected).norm() < 1e-12);
  CHECK(d.dv.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.dv.y() == doctest::Approx(-kGravity));
  CHECK(d.dv.z() == doctest::Approx(-kGravity));
}

TEST_CASE("nominal_derivative rejects drifted quaternions") {
  State x;
  x.q = Quat{1.01, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(nominal_derivative(x, ControlInput::hover()), NonUnitQuaternion);
}

TEST_CASE("plant_derivative matches nominal at zero relative airspeed") {
  State x;
  x.v = Vec3{1.0, -2.0, 0.5};
  const WindField w{x.v, Vec3{0.3, 0.3, 0.15}};
  const ControlInput u{12.0, Vec3{0.1, -0.2, 0.3}};
  const StateDerivative nom = nominal_derivative(x, u);
  const StateDerivative plant = plant_derivative(x, u, w);
  CHECK((plant.dv - nom.dv).norm() == 0.0);
}

TEST_CASE("plant_derivative drag term from the defining formula") {
  State x;  // at rest
  const WindField w{Vec3{5.0, 0.0, 0.0}, Vec3{0.3, 0.3, 0.15}};

  const ControlInput hover = ControlInput::hover();
  const Vec3 drag = plant_derivative(x, hover, w).dv - nominal_derivative(x, hover).dv;
  CHECK(drag.x() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(drag.y() == doctest::Approx(0.0));
  CHECK(drag.z() == doctest::Approx(0.0));

  // Superposition: hover thrust cancels gravity, the drag term remains.
  const Vec3 dv = plant_derivative(x, hover, w).dv;
  CHECK((dv - Vec3{1.5, 0.0, 0.0}).norm() < 1e-12);
}

TEST_CASE("plant minus nominal equals the drag term on random states") {
  std::mt19937_64 rng(3);
  const WindField w{Vec3{2.0, -1.0, 0.5}, Vec3{0.3, 0.3, 0.15}};
  for (int trial = 0; trial < 100; ++trial) {
    const State x = random_state(rng);
    const ControlInput u = random_input(rng);
    const Vec3 expected = -w.drag_coeffs.cwiseProduct(x.v - w.v_w);
    const Vec3 got = plant_derivative(x, u, w).dv - nominal_derivative(x, u).dv;
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("rk4_step fixed point under zero derivative") {
  std::mt19937_64 rng(5);
  const State x = random_state(rng);
  auto zero = [](const State&, const ControlInput&) { return StateDerivative{}; };
  const State y = rk4_step(zero, x, ControlInput::hover(), 0.02);
  CHECK((y.to_vector() - State{x.p, x.q.normalized(), x.v}.to_vector()).cwiseAbs().maxCoeff() <
        1e-15);
}

TEST_CASE("rk4_step hover equilibrium to 1e-12") {
  State x;
  x.p = Vec3{0.3, -0.2, 1.0};
  const State y = rk4_step_nominal(x, ControlInput::hover(), 0.02);
  CHECK((y.to_vector() - x.to_vector()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rk4_step shows fourth-order convergence on dy/dt = y") {
  // Embed the scalar ODE in the velocity x-component.
  auto f = [](const State& s, const ControlInput&) {
    StateDerivative d;
    d.dv = Vec3{s.v.x(), 0.0, 0.0};
    return d;
  };
  auto integrate = [&](double dt) {
    State x;
    x.v = Vec3{1.0, 0.0, 0.0};
    const int n = static_cast<int>(std::llround(1.0 / dt));
    for (int i = 0; i < n; ++i) x = rk4_step(f, x, ControlInput{}, dt);
    return std::abs(x.v.x() - std::exp(1.0));
  };
  const double err_coarse = integrate(1e-2);
  const double err_fine = integrate(5e-3);
  const double ratio = err_coarse / err_fine;
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("rk4_step rejects non-positive dt and non-finite results") {
  State x;
  CHECK_THROWS_AS(rk4_step_nominal(x, ControlInput::hover(), 0.0), Error);
  auto blow_up = [](const State&, const ControlInput&) {
    StateDerivative d;
    d.dv = Vec3{std::numeric_limits<double>::infinity(), 0, 0};
    return d;
  };
  CHECK_THROWS_AS(rk4_step(blow_up, x, ControlInput::hover(), 0.02), NonFiniteState);
}

TEST_CASE("quaternion norm stays within 1e-9 across many random steps") {
  std::mt19937_64 rng(13);
  State x = random_state(rng);
  const WindField w{Vec3{1.0, 2.0, 0.0}, Vec3{0.3, 0.3, 0.15}};
  for (int i = 0; i < 1000; ++i) {
    x = rk4_step_plant(x, random_input(rng), w, 0.02);
    CHECK(std::abs(x.q.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("simulate produces one record per step") {
  const ControlPolicy hover = [](double, const State&) { return ControlInput::hover(); };
  const auto records = simulate(State{}, hover, WindField::none(), 20.0, 0.02);
  CHECK(records.size() == 1000);
  CHECK(records.front().t == doctest::Approx(0.0));
  CHECK(records.back().t == doctest::Approx(19.98));
}

TEST_CASE("simulate hover under zero wind holds position") {
  State x0;
  x0.p = Vec3{1.0, 2.0, 3.0};
  const ControlPolicy hover = [](double, const State&) { return ControlInput::hover(); };
  const auto records = simulate(x0, hover, WindField::none(), 5.0, 0.02);
  for (const SimRecord& r : records) {
    CHECK((r.state.p - x0.p).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("simulate open-loop hover drifts downwind with first-order response") {
  const WindField w{Vec3{5.0, 0.0, 0.0}, Vec3{0.3, 0.3, 0.15}};
  const ControlPolicy hover = [](double, const State&) { return ControlInput::hover(); };
  const auto records = simulate(State{}, hover, w, 4.0, 0.02);

  // x positions increase monotonically toward the wind direction.
  for (std::size_t i = 1; i < records.size(); ++i) {
    CHECK(records[i].state.p.x() > records[i - 1].state.p.x());
  }
  // Closed form of the linear drag response: v(t) = v_w (1 − e^{−D t}).
  const double t_end = records.back().t;
  const double v_expected = 5.0 * (1.0 - std::exp(-0.3 * t_end));
  CHECK(records.back().state.v.x() == doctest::Approx(v_expected).epsilon(1e-6));
  CHECK(std::abs(records.back().state.p.z()) < 1e-9);
}

TEST_CASE("simulate is deterministic") {
  const WindField w{Vec3{2.0, 1.0, 0.0}, Vec3{0.3, 0.3, 0.15}};
  const ControlPolicy wiggle = [](double t, const State&) {
    return ControlInput{kGravity + std::sin(t), Vec3{0.1 * std::cos(t), 0.0, 0.05}};
  };
  const auto a = simulate(State{}, wiggle, w, 2.0, 0.02);
  const auto b = simulate(State{}, wiggle, w, 2.0, 0.02);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].state.to_vector() == b[i].state.to_vector());
    CHECK(a[i].deriv.to_vector() == b[i].deriv.to_vector());
  }
}

TEST_CASE("simulate reports the failing timestamp of a controller error") {
  const ControlPolicy failing = [](double t, const State&) -> ControlInput {
    if (t > 0.05) throw SolverDiverged("synthetic failure");
    return ControlInput::hover();
  };
  CHECK_THROWS_WITH_AS(simulate(State{}, failing, WindField::none(), 1.0, 0.02),
                       doctest::Contains("t=0.06"), SolverDiverged);
}

TEST_CASE("step_count requires an integral ratio") {
  CHECK(step_count(20.0, 0.02) == 1000);
  CHECK_THROWS_AS(step_count(1.0, 0.03), Error);
}
