#include <doctest.h>

#include "trajopt/discretization.hpp"
#include "trajopt/json_reader.hpp"
#include "trajopt/scvx.hpp"
#include "trajopt/vehicles.hpp"

#include <cmath>
#include <random>

using namespace trajopt;
using namespace trajopt::vehicles;

namespace {

Vec4 random_unit_quat(std::mt19937& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

Vec3 random_vec3(std::mt19937& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    return Vec3(u(rng), u(rng), u(rng));
}

// equal up to the double cover
double quat_distance(const Vec4& a, const Vec4& b) { return std::min((a - b).norm(), (a + b).norm()); }

} // namespace

TEST_CASE("ellipsoid value at center and boundary") {
    auto P = QuadrotorParams::defaults();
    for (const auto& ob : P.obstacles) {
        CHECK(ob.value(ob.c) == doctest::Approx(1.0));
        // a point on the surface along each axis
        for (int a = 0; a < 3; ++a) {
            Vec3 r = ob.c + ob.H.inverse().col(a);
            CHECK(ob.value(r) == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("ellipsoid gradient matches finite differences") {
    std::mt19937 rng(7);
    Ellipsoid e;
    e.c = Vec3(1.0, -0.5, 0.3);
    Mat3 L;
    L << 2.0, 0.0, 0.0, 0.3, 1.5, 0.0, -0.2, 0.4, 0.8;
    e.H = L * L.transpose();
    e.validate();
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 r = e.c + random_vec3(rng, -2.0, 2.0);
        Vec3 g = e.gradient(r), fd;
        for (int i = 0; i < 3; ++i) {
            Vec3 d = Vec3::Unit(i) * h;
            fd[i] = (e.value(r + d) - e.value(r - d)) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("ellipsoid rejects a shape that is not positive definite") {
    Ellipsoid e;
    e.H = Vec3(1.0, -1.0, 1.0).asDiagonal();
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);
    e.H = Mat3::Identity();
    e.H(0, 1) = 0.5;
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);

    auto P = QuadrotorParams::defaults();
    P.obstacles[1].H(2, 2) = 0.0;
    CHECK_THROWS_AS(quadrotor_ocp(P), std::invalid_argument);
}

TEST_CASE("quadrotor problem shape and Jacobians") {
    auto P = QuadrotorParams::defaults();
    auto o = quadrotor_ocp(P);
    CHECK(o.n == 6);
    CHECK(o.m == 4);
    CHECK(o.d == 1);
    CHECK(o.n_s == 3);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vec x(6), u(4), p(1);
        x << random_vec3(rng, 0, 3), random_vec3(rng, -1, 1);
        u << random_vec3(rng, -5, 5), 12.0 + U(rng);
        p << 1.5 + U(rng);
        auto jc = ocp::check_jacobians(o, 3, 0.3, x, u, p);
        CHECK(jc.dynamics <= 1e-6);
        CHECK(jc.path <= 1e-5);
        CHECK(jc.boundary <= 1e-6);
        CHECK(jc.running_cost <= 1e-6);
    }
}

TEST_CASE("quadrotor guess is hover on a straight line") {
    auto P = QuadrotorParams::defaults();
    auto grid = TimeGrid::uniform(20);
    auto z = quadrotor_guess(P, grid);
    auto o = quadrotor_ocp(P);
    CHECK(z.p[0] == doctest::Approx(0.5 * (P.tf_min + P.tf_max)));
    for (int k = 0; k < grid.N; ++k) {
        CHECK(z.u(3, k) == doctest::Approx(P.g));
        CHECK(z.u.col(k).head<3>().isApprox(Vec3(0, 0, P.g)));
        CHECK(o.input_violation(k, z.u.col(k), z.p) <= 1e-12);
    }
    CHECK(z.x.col(0).head<3>().isApprox(P.r0));
    CHECK(z.x.col(grid.N - 1).head<3>().isApprox(P.rf));
}

TEST_CASE("quaternion basics") {
    std::mt19937 rng(11);
    const Vec4 I = quat_identity();
    for (int trial = 0; trial < 20; ++trial) {
        Vec4 q = random_unit_quat(rng), r = random_unit_quat(rng);
        CHECK((quat_mul(I, q) - q).norm() <= 1e-15);
        CHECK((quat_mul(q, I) - q).norm() <= 1e-15);
        CHECK((quat_mul(q, quat_conj(q)) - I).norm() <= 1e-12);
        // composition matches rotation matrices
        Mat3 Rqr = quat_to_matrix(quat_mul(q, r));
        CHECK((Rqr - quat_to_matrix(q) * quat_to_matrix(r)).norm() <= 1e-12);
        // rotating a vector as a pure quaternion
        Vec3 v = random_vec3(rng, -1, 1);
        Vec4 pv(v[0], v[1], v[2], 0.0);
        Vec4 rot = quat_mul(quat_mul(q, pv), quat_conj(q));
        CHECK((rot.head<3>() - quat_to_matrix(q) * v).norm() <= 1e-12);
        CHECK(std::abs(rot[3]) <= 1e-12);
    }
}

TEST_CASE("quaternion exp and log maps") {
    Vec4 q = quat_log_map(M_PI, Vec3::UnitZ());
    CHECK((q - Vec4(0, 0, 1, 0)).norm() <= 1e-15);

    AngleAxis a0 = quat_exp_map(quat_identity());
    CHECK(a0.angle == 0.0);
    CHECK(a0.axis == Vec3::UnitZ());

    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Vec4 q = random_unit_quat(rng);
        AngleAxis a = quat_exp_map(q);
        CHECK(a.axis.norm() == doctest::Approx(1.0));
        CHECK(quat_distance(quat_log_map(a.angle, a.axis), q) <= 1e-10);
        CHECK(quat_distance(quat_from_rotation_vector(quat_rotation_vector(q)), q) <= 1e-10);
        // rotation matrix oracle: R(q) rotates the axis onto itself by the angle
        Mat3 R = quat_to_matrix(q);
        CHECK((R * a.axis - a.axis).norm() <= 1e-10);
        CHECK(std::acos(std::clamp((R.trace() - 1) / 2, -1.0, 1.0)) ==
              doctest::Approx(a.angle > M_PI ? 2 * M_PI - a.angle : a.angle).epsilon(1e-8));
        // round trip through the rotation matrix back to the identity
        Eigen::Quaterniond e(R);
        Vec4 back(e.x(), e.y(), e.z(), e.w());
        CHECK(quat_distance(quat_mul(quat_conj(back), q), quat_identity()) <= 1e-10);
    }
}

TEST_CASE("slerp endpoints and constant rate") {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Vec4 q0 = random_unit_quat(rng), qf = random_unit_quat(rng);
        CHECK((slerp(q0, qf, 0.0) - q0).norm() <= 1e-12);
        CHECK(quat_distance(slerp(q0, qf, 1.0), qf) <= 1e-10);
        CHECK(quat_distance(slerp(q0, q0, 0.37), q0) <= 1e-12);

        // body rate from finite differences: w = 2 vec(conj(q) qdot)
        const Vec3 w = slerp_rotation(q0, qf);
        CHECK(w.norm() <= M_PI + 1e-12);
        for (double t : {0.1, 0.5, 0.9}) {
            const double h = 1e-6;
            Vec4 qd = (slerp(q0, qf, t + h) - slerp(q0, qf, t - h)) / (2 * h);
            Vec4 rate = 2.0 * quat_mul(quat_conj(slerp(q0, qf, t)), qd);
            CHECK((rate.head<3>() - w).norm() <= 1e-6);
            CHECK(slerp(q0, qf, t).norm() == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(slerp(quat_identity(), quat_identity(), 1.5), std::invalid_argument);
}

TEST_CASE("room SDF") {
    Room room{Vec3(1, -2, 0), Vec3(3, 2, 1)};
    CHECK(room_sdf(room.center(), room) == doctest::Approx(1.0));
    CHECK(room_sdf(Vec3(3, 0, 0.5), room) == doctest::Approx(0.0));
    CHECK(room_sdf(Vec3(2, 0.5, 0), room) == doctest::Approx(0.0));
    CHECK(room_sdf(room.center() + 2.0 * room.half()[0] * Vec3::UnitX(), room) == doctest::Approx(-1.0));
    CHECK(room_sdf(Vec3(2, 1, 0.5), room) == doctest::Approx(0.5));
}

TEST_CASE("softmax bounds and gradient") {
    Vec v(2);
    v << 0.0, 0.0;
    CHECK(softmax(v, 1.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    // no overflow for large arguments
    Vec big(3);
    big << 800.0, 799.0, -5.0;
    CHECK(std::isfinite(softmax(big, 50.0).value));

    std::mt19937 rng(13);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    double worst_fd = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + trial % 6;
        const double sigma = trial % 2 ? 50.0 : 2.0;
        Vec x(n);
        for (int i = 0; i < n; ++i) x[i] = U(rng);
        auto s = softmax(x, sigma);
        CHECK(s.value >= x.maxCoeff());
        CHECK(s.value <= x.maxCoeff() + std::log(n) / sigma + 1e-14);
        CHECK(s.grad.sum() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(s.grad.minCoeff() >= 0.0);
        const double h = 1e-7;
        for (int i = 0; i < n; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            double fd = (softmax(xp, sigma).value - softmax(xm, sigma).value) / (2 * h);
            worst_fd = std::max(worst_fd, std::abs(fd - s.grad[i]) / std::max(1.0, std::abs(s.grad[i])));
        }
    }
    CHECK(worst_fd <= 1e-6);
    CHECK_THROWS_AS(softmax(v, 0.0), std::invalid_argument);
}

TEST_CASE("flight space at room centers and across interfaces") {
    auto P = FreeFlyerParams::defaults();
    for (const auto& room : P.rooms) {
        Vec d(P.n_rooms());
        for (int i = 0; i < P.n_rooms(); ++i) d[i] = room_sdf(room.center(), P.rooms[i]);
        double smooth = softmax(d, P.sharpness).value;
        CHECK(smooth >= 1.0 - 1e-12);
        CHECK(smooth <= 1.0 + std::log(P.n_rooms()) / P.sharpness);
    }

    // face-adjacent pairs share a face of nonzero area
    int pairs = 0;
    for (int a = 0; a < P.n_rooms(); ++a)
        for (int b = a + 1; b < P.n_rooms(); ++b) {
            const Room &A = P.rooms[a], &B = P.rooms[b];
            int touching = -1;
            bool overlap = true;
            for (int j = 0; j < 3; ++j) {
                if (A.hi[j] == B.lo[j] || B.hi[j] == A.lo[j])
                    touching = j;
                else if (std::min(A.hi[j], B.hi[j]) <= std::max(A.lo[j], B.lo[j]))
                    overlap = false;
            }
            if (touching < 0 || !overlap) continue;
            ++pairs;
            double worst = 1.0;
            for (int i = 0; i <= 200; ++i) {
                Vec3 r = A.center() + (B.center() - A.center()) * (i / 200.0);
                worst = std::min(worst, smooth_flight_space_sdf(r, P.rooms, P.sharpness));
            }
            CHECK(worst >= 0.0);
        }
    CHECK(pairs >= 5);
}

TEST_CASE("free-flyer dynamics") {
    auto P = FreeFlyerParams::defaults();
    std::mt19937 rng(17);
    Vec x(13), u(6);
    x << random_vec3(rng, 0, 1), random_vec3(rng, -0.2, 0.2), random_unit_quat(rng), Vec3::Zero();
    u << random_vec3(rng, -0.5, 0.5), Vec3::Zero();
    Vec f = freeflyer_dynamics(P, x, u);
    CHECK(f.segment<4>(6).norm() == 0.0);
    CHECK(f.head<3>().isApprox(x.segment<3>(3)));
    CHECK(f.segment<3>(3).isApprox(u.head<3>() / P.m));

    // symmetric body: no gyroscopic term
    P.J = Mat3::Identity();
    x.segment<3>(10) = random_vec3(rng, -1, 1);
    u.tail<3>() = random_vec3(rng, -0.1, 0.1);
    f = freeflyer_dynamics(P, x, u);
    CHECK((f.tail<3>() - u.tail<3>()).norm() <= 1e-15);

    // q' = 1/2 q (x) w
    Vec4 q = x.segment<4>(6);
    Vec3 w = x.segment<3>(10);
    Vec4 qd = 0.5 * quat_mul(q, Vec4(w[0], w[1], w[2], 0.0));
    CHECK((f.segment<4>(6) - qd).norm() <= 1e-15);
}

TEST_CASE("free-flyer Jacobians") {
    auto P = FreeFlyerParams::defaults();
    P.J << 0.12, 0.01, 0.0, 0.01, 0.09, -0.005, 0.0, -0.005, 0.11;
    const int N = 8;
    auto o = freeflyer_ocp(P, N);
    CHECK(o.n == 13);
    CHECK(o.m == 6);
    CHECK(o.d == 1 + N * P.n_rooms());
    CHECK(o.d_dyn == 1);

    std::mt19937 rng(19);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vec x(13), u(6), p(o.d);
        x << random_vec3(rng, 0, 8), random_vec3(rng, -0.3, 0.3), random_unit_quat(rng), random_vec3(rng, -0.5, 0.5);
        u << random_vec3(rng, -0.5, 0.5), random_vec3(rng, -0.05, 0.05);
        for (int i = 0; i < o.d; ++i) p[i] = U(rng);
        p[0] = 70.0 + 5 * U(rng);
        auto jc = ocp::check_jacobians(o, trial % N, 0.5, x, u, p);
        CHECK(jc.dynamics <= 1e-6);
        CHECK(jc.path <= 1e-5);
        CHECK(jc.boundary <= 1e-6);
        CHECK(jc.running_cost <= 1e-6);
    }
    CHECK_THROWS(freeflyer_ocp(P, 1));
}

TEST_CASE("free-flyer guess") {
    auto P = FreeFlyerParams::defaults();
    const int N = 31;
    auto grid = TimeGrid::uniform(N);
    auto z = freeflyer_guess(P, grid);
    auto o = freeflyer_ocp(P, N);
    const double alpha = z.p[0];
    CHECK(alpha == doctest::Approx(0.5 * (P.tf_min + P.tf_max)));
    CHECK(z.u.isZero());
    CHECK(z.x.col(0).head<3>().isApprox(P.r0));
    CHECK((z.x.col(N - 1).head<3>() - P.rf).norm() <= 1e-12);

    double length = 0.0;
    for (int k = 0; k + 1 < N; ++k) {
        Vec3 step = z.x.col(k + 1).head<3>() - z.x.col(k).head<3>();
        length += step.cwiseAbs().sum();
        // the path is axis by axis, so each leg moves forward only
        CHECK((step.array() * (P.rf - P.r0).array()).minCoeff() >= -1e-12);
    }
    CHECK(length == doctest::Approx((P.rf - P.r0).cwiseAbs().sum()).epsilon(1e-12));

    const Vec3 w = slerp_rotation(P.q0, P.qf) / alpha;
    for (int k = 0; k < N; ++k) {
        Vec3 r = z.x.col(k).head<3>();
        for (int i = 0; i < P.n_rooms(); ++i)
            CHECK(z.p[P.chi_index(i, k)] == doctest::Approx(room_sdf(r, P.rooms[i])));
        CHECK(z.x.col(k).segment<4>(6).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((z.x.col(k).tail<3>() - w).norm() <= 1e-14);
        CHECK(z.x.col(k).segment<3>(3).norm() == doctest::Approx((P.rf - P.r0).cwiseAbs().sum() / alpha));
    }
    CHECK(quat_distance(z.x.col(N - 1).segment<4>(6), P.qf) <= 1e-10);
    // slacks are tight, so every convex state constraint holds with at most zero slack
    for (int k = 0; k < N; ++k)
        for (const auto& c : o.state_constraints) CHECK(c.value(k, z.x.col(k), z.p) <= 1e-12);

    // coincident endpoints: constant position, zero velocity
    P.rf = P.r0;
    auto z0 = freeflyer_guess(P, grid);
    for (int k = 0; k < N; ++k) {
        CHECK(z0.x.col(k).head<3>().isApprox(P.r0));
        CHECK(z0.x.col(k).segment<3>(3).isZero());
    }
}

TEST_CASE("free-flyer quaternion norm is preserved by propagation") {
    auto P = FreeFlyerParams::defaults();
    const int N = 11;
    auto grid = TimeGrid::uniform(N);
    auto o = freeflyer_ocp(P, N);
    auto z = freeflyer_guess(P, grid);
    std::mt19937 rng(23);
    for (int k = 0; k < N; ++k) z.u.col(k) << random_vec3(rng, -0.3, 0.3), random_vec3(rng, -0.05, 0.05);
    auto sim = disc::simulate(o, z, grid, disc::Scheme::foh, 20);
    double worst = 0.0;
    for (const auto& seg : sim.segments)
        for (const auto& x : seg.x) worst = std::max(worst, std::abs(x.segment<4>(6).norm() - 1.0));
    CHECK(worst <= 1e-6);
}

TEST_CASE("free-flyer SCvx keeps the maximizing slack tight") {
    auto P = FreeFlyerParams::defaults();
    const int N = 20;
    auto grid = TimeGrid::uniform(N);
    auto o = freeflyer_ocp(P, N);
    scvx::Config cfg;
    cfg.lambda = 100.0;
    cfg.eps_r = 1e-4;
    cfg.max_iters = 15;
    auto r = scvx::run(o, freeflyer_guess(P, grid), cfg, freeflyer_scaling(P, N), grid, disc::Scheme::foh);
    REQUIRE(r.converged);
    CHECK_FALSE(r.soft_failure);
    for (int k = 0; k < N; ++k) {
        Vec3 pos = r.solution.x.col(k).head<3>();
        int best = 0;
        for (int i = 1; i < P.n_rooms(); ++i)
            if (room_sdf(pos, P.rooms[i]) > room_sdf(pos, P.rooms[best])) best = i;
        CHECK(r.solution.p[P.chi_index(best, k)] >= room_sdf(pos, P.rooms[best]) - 1e-4);
        CHECK(smooth_flight_space_sdf(pos, P.rooms, P.sharpness) >= -1e-6);
    }
}

TEST_CASE("vehicle parameters from JSON") {
    using nlohmann::json;
    auto q = QuadrotorParams::from_json(json::parse(R"({"a_max": 20.0, "theta_max_deg": 45,
        "obstacles": [{"center": [1, 2, 3], "radii": [0.5, 0.5, 2]}]})"));
    CHECK(q.a_max == 20.0);
    CHECK(q.theta_max == doctest::Approx(M_PI / 4));
    REQUIRE(q.obstacles.size() == 1);
    CHECK(q.obstacles[0].H(2, 2) == doctest::Approx(0.5));

    // round trip
    auto q2 = QuadrotorParams::from_json(q.to_json());
    CHECK(q2.obstacles[0].H.isApprox(q.obstacles[0].H));
    CHECK(q2.theta_max == doctest::Approx(q.theta_max));

    auto f = FreeFlyerParams::from_json(FreeFlyerParams::defaults().to_json());
    CHECK(f.rooms.size() == 6);
    CHECK(f.qf.isApprox(FreeFlyerParams::defaults().qf));

    auto pointer_of = [](auto fn) {
        try {
            fn();
        } catch (const ConfigError& e) {
            return e.pointer();
        }
        return std::string("no error");
    };
    CHECK(pointer_of([] { QuadrotorParams::from_json(json::parse(R"({"foo": 1})")); }) == "/foo");
    CHECK(pointer_of([] { QuadrotorParams::from_json(json::parse(R"({"obstacles": [{"center": [0,0,0], "shape": 1}]})"), "/params"); }) ==
          "/params/obstacles/0/shape");
    CHECK(pointer_of([] { FreeFlyerParams::from_json(json::parse(R"({"rooms": [{"lo": [0,0,0], "hi": [1,1]}]})")); }) ==
          "/rooms/0/hi");
    CHECK(pointer_of([] { FreeFlyerParams::from_json(json::parse(R"({"a_min": 2})")); }) == "/a_min");
    CHECK_THROWS_AS(QuadrotorParams::from_json(json::parse(R"({"a_min": 30})")), ConfigError);
}
