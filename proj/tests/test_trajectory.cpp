#include <catch2/catch_amalgamated.hpp>

#include "ddnn/rng.hpp"
#include "ddnn/trajectory.hpp"

using namespace ddnn;

TEST_CASE("interpolation reproduces a linear segment") {
    Trajectory traj(0.0, HistorySpec{{0.0}});
    traj.append(2.0, Vec{2.0});
    CHECK(traj.query(1.0)[0] == 1.0);
    CHECK(traj.query(0.0)[0] == 0.0); // knot identity
    CHECK(traj.query(2.0)[0] == 2.0);
}

TEST_CASE("interpolation, 2-D hand case") {
    Trajectory traj(0.0, HistorySpec{{1.0, 0.0}});
    traj.append(4.0, Vec{3.0, 8.0});
    const Vec z = interpolate(traj, 1.0);
    CHECK(z[0] == Catch::Approx(1.5).epsilon(1e-15));
    CHECK(z[1] == Catch::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("history serves all queries at and before t0") {
    Trajectory traj(1.0, HistorySpec{{0.5, -0.5}});
    traj.append(2.0, Vec{1.0, 1.0});
    CHECK(traj.query(-10.0) == Vec{0.5, -0.5});
    CHECK(traj.query(1.0) == Vec{0.5, -0.5});
}

TEST_CASE("queries beyond the last knot throw") {
    Trajectory traj(0.0, HistorySpec{{0.0}});
    traj.append(1.0, Vec{1.0});
    CHECK_THROWS_AS(traj.query(1.5), QueryBeyondTrajectory);
    // float-slop overshoot is clamped instead
    CHECK(traj.query(1.0 + 1e-15)[0] == 1.0);
}

TEST_CASE("knot times must strictly increase") {
    Trajectory traj(0.0, HistorySpec{{0.0}});
    traj.append(1.0, Vec{1.0});
    CHECK_THROWS_AS(traj.append(1.0, Vec{2.0}), Error);
    CHECK_THROWS_AS(traj.append(0.5, Vec{2.0}), Error);
    CHECK_THROWS_AS(traj.append(2.0, Vec{1.0, 2.0}), DimensionMismatch);
}

TEST_CASE("globally linear trajectories are reproduced exactly at interior points") {
    // z(t) = m t + c sampled on an irregular grid; interpolation must be exact
    // (up to one rounding) at arbitrary interior query points.
    Xoshiro256pp rng(42);
    const double m0 = 1.75, m1 = -0.5, c0 = 0.25, c1 = 3.0;
    Trajectory traj(0.0, HistorySpec{{c0, c1}});
    double t = 0.0;
    for (int i = 0; i < 50; ++i) {
        t += rng.uniform(0.01, 0.4);
        traj.append(t, Vec{m0 * t + c0, m1 * t + c1});
    }
    for (int i = 0; i < 200; ++i) {
        const double q = rng.uniform(0.0, t);
        const Vec z = traj.query(q);
        CHECK(z[0] == Catch::Approx(m0 * q + c0).margin(1e-12));
        CHECK(z[1] == Catch::Approx(m1 * q + c1).margin(1e-12));
    }
}

TEST_CASE("trajectory construction validates the history") {
    CHECK_THROWS_AS(Trajectory(0.0, HistorySpec{{}}), DimensionMismatch);
    CHECK_THROWS_AS(Trajectory(0.0, HistorySpec{{std::nan("")}}), NonFiniteState);
}
