#include <doctest.h>

#include "trajopt/discretization.hpp"

#include <random>

using namespace trajopt::disc;
using trajopt::ocp::ContinuousOCP;

namespace {

Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

void no_boundary(ContinuousOCP& o) {
    o.n_ic = o.n_tc = 0;
    o.g_ic = o.g_tc = [](const Vec&, const Vec&) { return Vec(); };
    o.dg_ic = o.dg_tc = [n = o.n, d = o.d](const Vec&, const Vec&, Mat& H, Mat& K) {
        H = Mat::Zero(0, n);
        K = Mat::Zero(0, d);
    };
}

ContinuousOCP linear_system(const Mat& A, const Mat& B) {
    ContinuousOCP o;
    o.n = static_cast<int>(A.rows());
    o.m = static_cast<int>(B.cols());
    o.d = 0;
    o.f = [A, B](double, const Vec& x, const Vec& u, const Vec&) -> Vec { return A * x + B * u; };
    o.df = [A, B](double, const Vec&, const Vec&, const Vec&, Mat& Ax, Mat& Bu, Mat& F) {
        Ax = A;
        Bu = B;
        F = Mat::Zero(A.rows(), 0);
    };
    no_boundary(o);
    return o;
}

ContinuousOCP double_integrator() {
    Mat A(2, 2);
    A << 0, 1, 0, 0;
    Mat B(2, 1);
    B << 0, 1;
    return linear_system(A, B);
}

// nonlinear pendulum with time dilation p and a cubic damping term
ContinuousOCP pendulum() {
    ContinuousOCP o;
    o.n = 2;
    o.m = 1;
    o.d = 1;
    o.f = [](double, const Vec& x, const Vec& u, const Vec& p) -> Vec {
        return p[0] * vec({x[1], -std::sin(x[0]) - 0.1 * x[1] * x[1] * x[1] + u[0]});
    };
    o.df = [](double, const Vec& x, const Vec& u, const Vec& p, Mat& A, Mat& B, Mat& F) {
        A.setZero(2, 2);
        A(0, 1) = p[0];
        A(1, 0) = -p[0] * std::cos(x[0]);
        A(1, 1) = -0.3 * p[0] * x[1] * x[1];
        B = Mat::Zero(2, 1);
        B(1, 0) = p[0];
        F = Mat(2, 1);
        F << x[1], -std::sin(x[0]) - 0.1 * x[1] * x[1] * x[1] + u[0];
    };
    o.n_s = 1;
    o.s = [](int, double, const Vec& x, const Vec&, const Vec&) { return vec({x[0] * x[0] - 1.0}); };
    o.ds = [](int, double, const Vec& x, const Vec&, const Vec&, Mat& C, Mat& D, Mat& G) {
        C = Mat(1, 2);
        C << 2 * x[0], 0;
        D = Mat::Zero(1, 1);
        G = Mat::Zero(1, 1);
    };
    no_boundary(o);
    return o;
}

Trajectory random_ref(const ContinuousOCP& o, int N, std::mt19937& rng) {
    std::uniform_real_distribution<double> U(-1, 1);
    Trajectory z;
    z.x = Mat::NullaryExpr(o.n, N, [&]() { return U(rng); });
    z.u = Mat::NullaryExpr(o.m, N, [&]() { return U(rng); });
    z.p = Vec::NullaryExpr(o.d, [&]() { return 1.5 + U(rng); });
    return z;
}

} // namespace

TEST_CASE("flow_map: trivial cases") {
    auto grid = TimeGrid::uniform(3); // dt = 0.5
    ContinuousOCP o;
    o.n = 1;
    o.m = 1;
    o.d = 0;
    o.f = [](double, const Vec&, const Vec& u, const Vec&) -> Vec { return u; };
    Vec x0 = vec({3});
    CHECK(flow_map(o, grid, 0, x0, vec({0}), vec({0}), Vec(), Scheme::zoh).x_end[0] == doctest::Approx(3.0));
    CHECK(flow_map(o, grid, 0, x0, vec({2}), vec({7}), Vec(), Scheme::zoh).x_end[0] ==
          doctest::Approx(4.0).epsilon(1e-12));
    auto g2 = TimeGrid::uniform(2); // dt = 1
    CHECK(flow_map(o, g2, 0, x0, vec({0}), vec({1}), Vec(), Scheme::foh).x_end[0] ==
          doctest::Approx(3.5).epsilon(1e-12));
    auto dense = flow_map(o, g2, 0, x0, vec({0}), vec({1}), Vec(), Scheme::foh, 4);
    CHECK(dense.t.size() == 6);
    CHECK(dense.t.front() == 0.0);
    CHECK(dense.t.back() == 1.0);
    CHECK(dense.x[3][0] == doctest::Approx(3.0 + 0.5 * 0.6 * 0.6).epsilon(1e-12));
}

TEST_CASE("flow_map: failure carries the time") {
    auto grid = TimeGrid::uniform(2);
    ContinuousOCP o;
    o.n = 1;
    o.m = 1;
    o.d = 0;
    // finite-time blow up x' = x^2 from x = 2 at t = 0.5
    o.f = [](double, const Vec& x, const Vec&, const Vec&) -> Vec { return x.cwiseProduct(x); };
    try {
        flow_map(o, grid, 0, vec({2}), vec({0}), vec({0}), Vec(), Scheme::zoh);
        FAIL("expected an integrator error");
    } catch (const IntegratorError& e) {
        CHECK(e.time > 0.4);
        CHECK(e.time <= 0.5 + 1e-6);
    }
}

TEST_CASE("discretize: double integrator closed forms") {
    auto o = double_integrator();
    auto grid = TimeGrid::uniform(11);
    const double h = 0.1;
    std::mt19937 rng(1);
    auto ref = random_ref(o, 11, rng);
    auto zoh = discretize(o, ref, grid, Scheme::zoh);
    auto foh = discretize(o, ref, grid, Scheme::foh);
    Mat Ak(2, 2);
    Ak << 1, h, 0, 1;
    // int_0^h e^{As} B w(s) ds with e^{As}B = (s, 1)
    Vec Bz = vec({h * h / 2, h});
    Vec Bm = vec({h * h / 3, h / 2});
    Vec Bp = vec({h * h / 6, h / 2});
    for (int k = 0; k < 10; ++k) {
        CHECK((zoh.A[k] - Ak).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((zoh.Bm[k] - Bz).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(zoh.Bp[k].norm() == 0.0);
        CHECK((foh.A[k] - Ak).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((foh.Bm[k] - Bm).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((foh.Bp[k] - Bp).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((foh.Bm[k] + foh.Bp[k] - zoh.Bm[k]).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(foh.r[k].cwiseAbs().maxCoeff() <= 1e-10);
        // E = I under ZOH: int_0^h e^{As} ds
        Mat Ek(2, 2);
        Ek << h, h * h / 2, 0, h;
        CHECK((foh.E[k] - Ek).cwiseAbs().maxCoeff() <= 1e-10);
    }
    CHECK(check_consistency(foh, o, ref, grid) <= 1e-12);
    CHECK(check_consistency(zoh, o, ref, grid) <= 1e-12);
}

TEST_CASE("discretize: zero dynamics") {
    auto o = linear_system(Mat::Zero(3, 3), Mat::Zero(3, 2));
    auto grid = TimeGrid::uniform(5);
    std::mt19937 rng(2);
    auto ref = random_ref(o, 5, rng);
    auto seg = discretize(o, ref, grid, Scheme::foh);
    for (int k = 0; k < 4; ++k) {
        CHECK((seg.A[k] - Mat::Identity(3, 3)).norm() == 0.0);
        CHECK(seg.Bm[k].norm() == 0.0);
        CHECK(seg.Bp[k].norm() == 0.0);
        CHECK(seg.r[k].norm() == 0.0);
    }
    CHECK(check_consistency(seg, o, ref, grid) == 0.0);
}

TEST_CASE("discretize: consistency on random references") {
    auto o = pendulum();
    auto grid = TimeGrid::uniform(8);
    std::mt19937 rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto ref = random_ref(o, 8, rng);
        auto scheme = trial % 2 ? Scheme::zoh : Scheme::foh;
        auto seg = discretize(o, ref, grid, scheme);
        worst = std::max(worst, check_consistency(seg, o, ref, grid));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("discretize: FOH moment identity on a nonlinear reference") {
    auto o = pendulum();
    auto grid = TimeGrid::uniform(6);
    std::mt19937 rng(5);
    auto ref = random_ref(o, 6, rng);
    // constant input makes the ZOH and FOH references coincide
    for (int k = 0; k < 6; ++k) ref.u(0, k) = 0.3;
    auto zoh = discretize(o, ref, grid, Scheme::zoh);
    auto foh = discretize(o, ref, grid, Scheme::foh);
    for (int k = 0; k < 5; ++k) CHECK((foh.Bm[k] + foh.Bp[k] - zoh.Bm[k]).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("discretize: node linearization of path constraints") {
    auto o = pendulum();
    auto grid = TimeGrid::uniform(4);
    std::mt19937 rng(6);
    auto ref = random_ref(o, 4, rng);
    auto seg = discretize(o, ref, grid, Scheme::foh);
    REQUIRE(seg.C.size() == 4);
    for (int k = 0; k < 4; ++k) {
        Vec lin = seg.C[k] * ref.x.col(k) + seg.D[k] * ref.u.col(k) + seg.G[k] * ref.p + seg.rs[k];
        CHECK((lin - o.s(k, 0, ref.x.col(k), ref.u.col(k), ref.p)).norm() <= 1e-14);
    }
}

TEST_CASE("discretize: non-finite Jacobian names the node") {
    auto o = pendulum();
    auto good = o.df;
    o.df = [good](double t, const Vec& x, const Vec& u, const Vec& p, Mat& A, Mat& B, Mat& F) {
        good(t, x, u, p, A, B, F);
        if (t > 0.5) B(1, 0) = std::numeric_limits<double>::quiet_NaN();
    };
    auto grid = TimeGrid::uniform(5);
    std::mt19937 rng(7);
    auto ref = random_ref(o, 5, rng);
    try {
        discretize(o, ref, grid, Scheme::foh);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("df/du") != std::string::npos);
        CHECK(msg.find("node 2") != std::string::npos);
    }
}

TEST_CASE("defects") {
    auto o = pendulum();
    auto grid = TimeGrid::uniform(10);
    std::mt19937 rng(8);
    auto z = random_ref(o, 10, rng);
    // propagated trajectory is self consistent
    Mat xs;
    simulate(o, z, grid, Scheme::foh, 0, &xs);
    z.x = xs;
    auto d = defects(o, z, grid, Scheme::foh);
    CHECK(d.max_defect <= 1e-9);
    // additivity in x_{k+1}
    auto z2 = z;
    Vec delta = vec({1e-3, -2e-3});
    z2.x.col(4) += delta;
    auto d2 = defects(o, z2, grid, Scheme::foh);
    CHECK((d2.defects[3] - d.defects[3] - delta).cwiseAbs().maxCoeff() <= 1e-15);
    // a random reference is not dynamically feasible
    auto z3 = random_ref(o, 10, rng);
    CHECK(defects(o, z3, grid, Scheme::foh).max_defect > 1e-3);
}
