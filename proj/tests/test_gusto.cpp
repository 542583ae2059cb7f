#include <doctest.h>

#include "trajopt/gusto.hpp"
#include "lti_problem.hpp"

#include <random>

using namespace trajopt;
using namespace trajopt::gusto;

namespace {
Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

ocp::ScalingMap lti_scaling() {
    return ocp::make_scaling({vec({0, -2}), vec({1, 2})}, {vec({-5}), vec({5})}, {Vec(), Vec()});
}

ocp::Trajectory lti_guess(int N) {
    return ocp::straight_line_guess(vec({0, 0}), vec({1, 0}), vec({0}), vec({0}), Vec(), TimeGrid::uniform(N));
}

// keeps r out of a band around 0.5 (nonconvex)
ContinuousOCP lti_with_keepout() {
    auto o = testing::lti_problem();
    o.n_s = 1;
    o.s = [](int, double, const Vec& x, const Vec&, const Vec&) { return vec({0.01 - (x[0] - 0.5) * (x[0] - 0.5)}); };
    o.ds = [](int, double, const Vec& x, const Vec&, const Vec&, Mat& C, Mat& D, Mat& G) {
        C = Mat::Zero(1, 2);
        C(0, 0) = -2 * (x[0] - 0.5);
        D = Mat::Zero(1, 1);
        G = Mat::Zero(1, 0);
    };
    return o;
}
} // namespace

TEST_CASE("h_penalty") {
    CHECK(h_penalty(-1, 1, PenaltyKind::quadratic_rectifier).value == 0.0);
    CHECK(h_penalty(2, 3, PenaltyKind::quadratic_rectifier).value == 12.0);
    CHECK(h_penalty(0, 1, PenaltyKind::softplus, 10).value == doctest::Approx(std::log(2.0) / 10).epsilon(1e-14));
    CHECK(std::isfinite(h_penalty(1e3, 1, PenaltyKind::softplus, 10).value));
    CHECK(h_penalty(1e3, 1, PenaltyKind::softplus, 10).value == doctest::Approx(1e3));

    for (auto kind : {PenaltyKind::quadratic_rectifier, PenaltyKind::softplus}) {
        for (double lam : {1.0, 7.0}) {
            double prev = -1;
            for (int i = 0; i <= 200; ++i) {
                double z = -2 + 0.02 * i;
                double v = h_penalty(z, lam, kind).value;
                CHECK(v >= 0.0);
                CHECK(v >= prev);
                prev = v;
                double a = z - 0.3, b = z + 0.3;
                CHECK(v <= 0.5 * (h_penalty(a, lam, kind).value + h_penalty(b, lam, kind).value) + 1e-12);
                // slope matches a central difference
                double fd = (h_penalty(z + 1e-6, lam, kind).value - h_penalty(z - 1e-6, lam, kind).value) / 2e-6;
                CHECK(h_penalty(z, lam, kind).slope == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("soft_state_penalty") {
    auto o = lti_with_keepout();
    // far from the band: satisfied with margin
    CHECK(soft_state_penalty(o, 0, 0, vec({0, 0}), vec({0}), Vec(), 4, PenaltyKind::quadratic_rectifier) == 0.0);
    ContinuousOCP o2;
    o2.n_s = 2;
    o2.s = [](int, double, const Vec&, const Vec&, const Vec&) { return vec({0.5, -1}); };
    CHECK(soft_state_penalty(o2, 0, 0, Vec(), Vec(), Vec(), 4, PenaltyKind::quadratic_rectifier) == 1.0);
    double prev = 0;
    for (double lam : {1.0, 2.0, 10.0, 1e3}) {
        double v = soft_state_penalty(o2, 0, 0, Vec(), Vec(), Vec(), lam, PenaltyKind::softplus, 3);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("trust_region_penalty") {
    const auto R = PenaltyKind::quadratic_rectifier;
    CHECK(trust_region_penalty(Vec::Zero(3), Vec::Zero(1), 0.5, 10, R, NormKind::two) == 0.0);
    double eta = 0.25;
    Vec dx = vec({2 * eta, 0, 0});
    CHECK(trust_region_penalty(dx, Vec(), eta, 10, R, NormKind::two) == doctest::Approx(10 * eta * eta));
    double prev = 1e300;
    for (double e : {0.0, 0.1, 0.3, 0.6, 1.0}) {
        double v = trust_region_penalty(dx, vec({0.1}), e, 10, PenaltyKind::softplus, NormKind::one);
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("update") {
    Config c;
    c.rho0 = 0.1;
    c.rho1 = 0.5;
    c.gamma_fail = 5;
    c.k_star = 8;
    c.mu = 0.9;
    auto u = update(0.05, true, false, 10, 1, 1, c);
    CHECK_FALSE(u.accept);
    CHECK(u.lambda == 50);
    CHECK(u.eta == 1);
    u = update(0.9, false, false, 10, 1, 1, c);
    CHECK_FALSE(u.accept);
    CHECK(u.eta == 0.5);
    u = update(0.3, false, false, 50, 1, 1, c);
    CHECK(u.accept);
    CHECK(u.eta == 1);
    CHECK(u.lambda == 10);
    u = update(0.05, false, true, 10, 1, 1, c);
    CHECK(u.accept);
    CHECK(u.eta == 2);
    CHECK(u.lambda == 50);
    // lambda never drops below lambda0
    CHECK(update(0.3, false, false, 11, 1, 1, c).lambda == c.lambda0);
    // exponential shrink from k_star on
    CHECK(update(0.3, false, false, 10, 1, 7, c).eta == 1);
    CHECK(update(0.3, false, false, 10, 1, 8, c).eta == doctest::Approx(0.9));
    CHECK(update(0.3, false, false, 10, 1, 10, c).eta == doctest::Approx(0.9 * 0.9 * 0.9));
    for (int it = c.k_star; it < 20; ++it) {
        CHECK(update(0.3, false, false, 10, 1, it, c).eta < 1);
        CHECK(update(0.9, false, false, 10, 1, it, c).eta < 1);
        CHECK(update(0.3, true, false, 10, 1, it, c).eta < 1);
    }
}

TEST_CASE("stopping") {
    const int N = 5;
    auto grid = TimeGrid::uniform(N);
    auto z = lti_guess(N);
    Config c;
    auto s = stopping(z, z, 1, 1, 10, grid, c);
    CHECK(s.stop);
    CHECK_FALSE(s.failure);
    s = stopping(z, z, 1, 1, c.lambda_max * c.gamma_fail, grid, c);
    CHECK(s.stop);
    CHECK(s.failure);
    c.eps = c.eps_r = 0;
    CHECK_FALSE(stopping(z, z, 1, 1, c.lambda_max, grid, c).stop);
}

TEST_CASE("accuracy_ratio") {
    CHECK(accuracy_ratio(3, 3, {0, 2}) == 0.0);
    CHECK(accuracy_ratio(3, 2, {1, 2}) == doctest::Approx(0.5));
    CHECK(accuracy_ratio(5, 5, {0.2, 1}) * 2 == doctest::Approx(accuracy_ratio(5, 5, {0.4, 1})));
    CHECK_THROWS_AS(accuracy_ratio(0, 0, {0, 0}), std::logic_error);
}

TEST_CASE("linear system: no linearization error") {
    auto o = ocp::scaled_problem(testing::lti_problem(), lti_scaling());
    auto grid = TimeGrid::uniform(6);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(0.1, 0.9);
    ocp::Trajectory ref, z;
    ref.x = Mat::NullaryExpr(2, 6, [&]() { return U(rng); });
    ref.u = Mat::NullaryExpr(1, 6, [&]() { return U(rng); });
    z.x = Mat::NullaryExpr(2, 6, [&]() { return U(rng); });
    z.u = Mat::NullaryExpr(1, 6, [&]() { return U(rng); });
    auto terms = ratio_terms(o, z, ref, grid);
    CHECK(terms.theta <= 1e-12);
    CHECK(terms.xdot_norm > 0);
    CHECK(check_quadratic_form(o, 0.3, z.x.col(0), z.u.col(0), Vec()) <= 1e-12);
}

TEST_CASE("linear and nonlinear cost agree at the reference") {
    auto o = ocp::scaled_problem(lti_with_keepout(), lti_scaling());
    auto grid = TimeGrid::uniform(8);
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (auto kind : {PenaltyKind::quadratic_rectifier, PenaltyKind::softplus}) {
        Config cfg;
        cfg.penalty = kind;
        for (int trial = 0; trial < 10; ++trial) {
            ocp::Trajectory ref;
            ref.x = Mat::NullaryExpr(2, 8, [&]() { return U(rng); });
            ref.u = Mat::NullaryExpr(1, 8, [&]() { return U(rng); });
            auto seg = disc::discretize(o, ref, grid, Scheme::foh);
            auto cm = cost_model(o, ref);
            double L = linear_cost(o, ref, ref, seg, cm, grid, 30, 0.2, cfg);
            double J = nonlinear_cost(o, ref, ref, grid, 30, 0.2, cfg);
            CHECK(std::abs(L - J) <= 1e-10 * std::max(1.0, std::abs(J)));
        }
    }
}

TEST_CASE("subproblem without state constraints matches the direct optimum") {
    auto o = ocp::scaled_problem(testing::lti_problem(), lti_scaling());
    const int N = 11;
    auto grid = TimeGrid::uniform(N);
    auto ref = ocp::scale(lti_guess(N), lti_scaling());
    Config cfg;
    auto seg = disc::discretize(o, ref, grid, Scheme::foh);
    auto cm = cost_model(o, ref);
    auto sp = build_subproblem(o, ref, seg, cm, grid, cfg.lambda0, 1e6, cfg);
    auto sol = conic::solve(sp.program, cfg.solver);
    REQUIRE(sol.status == conic::Status::optimal);
    CHECK(sol.objective_value + sp.objective_constant ==
          doctest::Approx(testing::lti_direct_optimum(N)).epsilon(1e-7));
}

TEST_CASE("large penalty weight recovers the hard-constrained optimum") {
    const double v_max = 1.3;
    auto s = ocp::make_scaling({vec({0, -2}), vec({1, 2})}, {vec({-10}), vec({10})}, {Vec(), Vec()});
    auto o = ocp::scaled_problem(testing::lti_problem(10.0, 1.0, v_max), s);
    const int N = 11;
    auto grid = TimeGrid::uniform(N);
    auto ref = ocp::scale(lti_guess(N), s);
    Config cfg;
    auto seg = disc::discretize(o, ref, grid, Scheme::foh);
    auto cm = cost_model(o, ref);
    auto sp = build_subproblem(o, ref, seg, cm, grid, 1e7, 1e6, cfg);
    auto sol = conic::solve(sp.program, cfg.solver);
    REQUIRE(sol.status == conic::Status::optimal);
    auto z = ocp::unscale(extract(sp.vars, sol.primal), s);
    CHECK(z.x.row(1).maxCoeff() <= v_max + 1e-4);
    Mat u_direct;
    double direct = testing::lti_direct_optimum(N, 10.0, 1.0, &u_direct, v_max);
    CHECK((z.u - u_direct).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(sol.objective_value + sp.objective_constant == doctest::Approx(direct).epsilon(1e-4));
    // the constraint is active so the soft problem pays a little less
    CHECK(sol.objective_value + sp.objective_constant <= direct + 1e-6);
}

TEST_CASE("run: convex problem converges to the direct optimum") {
    const int N = 11;
    Config cfg;
    cfg.eta_init = cfg.eta_max = 100;
    auto rep = run(testing::lti_problem(), lti_guess(N), cfg, lti_scaling(), TimeGrid::uniform(N), Scheme::foh);
    REQUIRE(rep.converged);
    CHECK(rep.iterations.size() <= 3);
    Mat u_direct;
    double direct = testing::lti_direct_optimum(N, 5.0, 1.0, &u_direct);
    CHECK((rep.solution.u - u_direct).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(rep.cost == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("run: a keep-out band the path must cross drives lambda past lambda_max") {
    const int N = 21;
    Config cfg;
    auto o = lti_with_keepout();
    auto rep = run(o, lti_guess(N), cfg, lti_scaling(), TimeGrid::uniform(N), Scheme::foh);
    CHECK_FALSE(rep.error);
    double lam_prev = 0;
    bool prev_trust = false;
    for (const auto& r : rep.iterations) {
        CHECK(r.lambda >= cfg.lambda0);
        if (prev_trust) CHECK(r.lambda >= lam_prev);
        lam_prev = r.lambda;
        prev_trust = r.trust_violated;
    }
    CHECK_FALSE(rep.converged);
    CHECK(rep.soft_failure);
    CHECK(rep.iterations.back().lambda * cfg.gamma_fail > cfg.lambda_max);
}
