#include <doctest.h>

#include <cmath>

#include "piwan/trajectories.hpp"

using namespace piwan;

TEST_CASE("circle sample at t=0") {
  Trajectory traj = Trajectory::of(TrajectoryKind::Circle);
  traj.radius_x = 2.0;
  traj.height = 1.0;
  traj.angular_rate = M_PI / 10.0;
  const ReferenceState ref = sample(traj, 0.0);
  CHECK((ref.p_r - Vec3{2.0, 0.0, 1.0}).norm() < 1e-15);
  CHECK((ref.v_r - Vec3{0.0, 2.0 * M_PI / 10.0, 0.0}).norm() < 1e-15);
  CHECK(ref.t_mn_r == doctest::Approx(kGravity));
  CHECK(ref.omega_r.norm() == 0.0);
  CHECK(ref.q_r.w == doctest::Approx(1.0));
}

TEST_CASE("lemniscate sample at t=0") {
  const Trajectory traj = Trajectory::of(TrajectoryKind::Lemniscate);
  const ReferenceState ref = sample(traj, 0.0);
  CHECK((ref.p_r - Vec3{traj.radius_x, 0.0, traj.height}).norm() < 1e-15);
  CHECK(ref.v_r.x() == doctest::Approx(0.0));
  CHECK(ref.v_r.y() == doctest::Approx(traj.radius_x * traj.angular_rate));
  CHECK(ref.v_r.z() == doctest::Approx(0.0));
}

TEST_CASE("periodic kinds repeat after one lap") {
  for (TrajectoryKind kind : kAllTrajectoryKinds) {
    if (kind == TrajectoryKind::Spiral) continue;  // climbs, not periodic
    const Trajectory traj = Trajectory::of(kind);   // ω_t = 2π/20
    for (double t : {0.0, 1.7, 6.4}) {
      const ReferenceState a = sample(traj, t);
      const ReferenceState b = sample(traj, t + 20.0);
      CHECK((a.p_r - b.p_r).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("spiral climbs at the configured rate") {
  const Trajectory traj = Trajectory::of(TrajectoryKind::Spiral);
  const ReferenceState a = sample(traj, 0.0);
  const ReferenceState b = sample(traj, 10.0);
  CHECK(b.p_r.z() - a.p_r.z() == doctest::Approx(traj.climb_rate * 10.0));
  CHECK(a.v_r.z() == doctest::Approx(traj.climb_rate));
}

TEST_CASE("extended lemniscate uses the 1.5x amplitude") {
  const Trajectory traj = Trajectory::of(TrajectoryKind::ExtendedLemniscate);
  const ReferenceState ref = sample(traj, 0.0);
  CHECK(ref.p_r.x() == doctest::Approx(1.5 * traj.radius_x));
}

TEST_CASE("horizon returns steps+1 samples starting at t0") {
  const Trajectory traj = Trajectory::of(TrajectoryKind::Circle);
  const auto two = horizon(traj, 0.0, 1, 0.02);
  REQUIRE(two.size() == 2);
  CHECK((two[0].p_r - sample(traj, 0.0).p_r).norm() == 0.0);

  const auto refs = horizon(traj, 1.5, 20, 0.02);
  REQUIRE(refs.size() == 21);
  CHECK((refs.back().p_r - sample(traj, 1.5 + 0.4).p_r).norm() < 1e-15);
  CHECK_THROWS_AS(horizon(traj, 0.0, 0, 0.02), Error);
}

TEST_CASE("v_r matches the central difference of p_r for every kind") {
  const double eps = 1e-4;
  for (TrajectoryKind kind : kAllTrajectoryKinds) {
    const Trajectory traj = Trajectory::of(kind);
    for (double t : {0.5, 3.1, 7.9, 14.2, 19.0}) {
      const Vec3 fd = (sample(traj, t + eps).p_r - sample(traj, t - eps).p_r) / (2.0 * eps);
      CHECK((fd - sample(traj, t).v_r).norm() < 1e-4);
    }
  }
}

TEST_CASE("training split is the fixed five/two partition") {
  CHECK(is_training_kind(TrajectoryKind::Circle));
  CHECK(is_training_kind(TrajectoryKind::Ellipse));
  CHECK(is_training_kind(TrajectoryKind::Lemniscate));
  CHECK(is_training_kind(TrajectoryKind::TransposedLemniscate));
  CHECK(is_training_kind(TrajectoryKind::Spiral));
  CHECK_FALSE(is_training_kind(TrajectoryKind::WarpedEllipse));
  CHECK_FALSE(is_training_kind(TrajectoryKind::ExtendedLemniscate));
}

TEST_CASE("kind names round-trip and reject unknown strings") {
  for (TrajectoryKind kind : kAllTrajectoryKinds) {
    CHECK(trajectory_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(trajectory_kind_from_string("figure-nine"), UnknownKind);
}

TEST_CASE("sample validates shape parameters and time") {
  Trajectory traj = Trajectory::of(TrajectoryKind::Circle);
  traj.radius_x = -1.0;
  CHECK_THROWS_AS(sample(traj, 0.0), Error);
  CHECK_THROWS_AS(sample(Trajectory::of(TrajectoryKind::Circle), -0.1), Error);
}
