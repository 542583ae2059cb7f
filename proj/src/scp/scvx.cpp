#include "trajopt/scvx.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace trajopt::scvx {

namespace {

using Clock = std::chrono::steady_clock;
double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// trapezoid weight of node k on a uniform grid
double trap_weight(int k, int N, double dt) { return (k == 0 || k == N - 1) ? 0.5 * dt : dt; }

// denominators at or below this are treated as an exact model
constexpr double kDenominatorGuard = 1e-12;
// relative slack by which a subproblem solution may exceed the reference cost
constexpr double kSolverSlack = 1e-6;

// Largest virtual control that makes the reference itself feasible for the
// subproblem built around it.
double reference_vc(const ContinuousOCP& ocp, const Trajectory& ref, const Segments& seg, const TimeGrid& grid) {
    double vc = 0.0;
    for (int k = 0; k + 1 < grid.N; ++k) {
        Vec lin = seg.A[k] * ref.x.col(k) + seg.Bm[k] * ref.u.col(k) + seg.Bp[k] * ref.u.col(k + 1) +
                  seg.F[k] * ref.p + seg.r[k];
        Vec nu = seg.E[k].completeOrthogonalDecomposition().solve(Vec(ref.x.col(k + 1) - lin));
        if (nu.size()) vc = std::max(vc, nu.cwiseAbs().maxCoeff());
    }
    for (int k = 0; k < grid.N && ocp.n_s > 0; ++k)
        vc = std::max(vc, ocp.s(k, grid.t[k], ref.x.col(k), ref.u.col(k), ref.p).cwiseMax(0.0).maxCoeff());
    if (ocp.n_ic) vc = std::max(vc, ocp.g_ic(ref.x.col(0), ref.p).cwiseAbs().maxCoeff());
    if (ocp.n_tc) vc = std::max(vc, ocp.g_tc(ref.x.col(grid.N - 1), ref.p).cwiseAbs().maxCoeff());
    return vc;
}

} // namespace

void Config::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("scvx config: ") + what);
    };
    need(lambda > 0, "lambda must be positive");
    need(0 < rho0 && rho0 < rho1 && rho1 < rho2 && rho2 < 1, "need 0 < rho0 < rho1 < rho2 < 1");
    need(beta_sh > 1 && beta_gr > 1, "beta_sh and beta_gr must exceed 1");
    need(0 < eta_min && eta_min <= eta_init && eta_init <= eta_max, "need 0 < eta0 <= eta_init <= eta1");
    need(eps >= 0 && eps_r >= 0, "stopping tolerances must be nonnegative");
    need(max_iters >= 1, "max_iters must be at least 1");
}

double penalty(const Vec& y, const Vec& z) { return y.lpNorm<1>() + z.lpNorm<1>(); }

double Virtuals::max_abs() const {
    double m = 0.0;
    auto upd = [&m](const auto& a) {
        if (a.size()) m = std::max(m, a.cwiseAbs().maxCoeff());
    };
    upd(nu);
    upd(nu_s);
    upd(nu_ic);
    upd(nu_tc);
    return m;
}

double linear_cost(const ContinuousOCP& ocp, const Trajectory& z, const Virtuals& v, const Segments& seg,
                   const TimeGrid& grid, double lambda) {
    const int N = grid.N;
    double L = terminal_cost(ocp, z.x.col(N - 1), z.p) + lambda * penalty(Vec(), v.nu_ic) +
               lambda * penalty(Vec(), v.nu_tc);
    std::vector<double> run(N);
    for (int k = 0; k < N; ++k) {
        Vec Enu = k + 1 < N ? Vec(seg.E[k] * v.nu.col(k)) : Vec::Zero(ocp.n);
        Vec nus = v.nu_s.size() ? Vec(v.nu_s.col(k)) : Vec();
        run[k] = running_cost(ocp, z.x.col(k), z.u.col(k), z.p) + lambda * penalty(Enu, nus);
    }
    return L + trapz(run, grid.dt);
}

double nonlinear_cost(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, Scheme scheme,
                      double lambda, double* max_defect) {
    const int N = grid.N;
    auto prop = disc::defects(ocp, z, grid, scheme);
    if (max_defect) *max_defect = prop.max_defect;
    const Vec xN = z.x.col(N - 1);
    double J = terminal_cost(ocp, xN, z.p) + lambda * penalty(Vec(), ocp.g_ic(z.x.col(0), z.p)) +
               lambda * penalty(Vec(), ocp.g_tc(xN, z.p));
    std::vector<double> run(N);
    for (int k = 0; k < N; ++k) {
        Vec dk = k + 1 < N ? prop.defects[k] : Vec::Zero(ocp.n);
        Vec sp;
        if (ocp.n_s > 0) sp = ocp.s(k, grid.t[k], z.x.col(k), z.u.col(k), z.p).cwiseMax(0.0);
        run[k] = running_cost(ocp, z.x.col(k), z.u.col(k), z.p) + lambda * penalty(dk, sp);
    }
    return J + trapz(run, grid.dt);
}

Subproblem build_subproblem(const ContinuousOCP& ocp, const Trajectory& ref, const Segments& seg,
                            const TimeGrid& grid, double eta, const Config& cfg) {
    const int N = grid.N, n = ocp.n, m = ocp.m, d = ocp.d;
    const double lam = cfg.lambda;
    ProblemBuilder pb;
    Subproblem sp;
    sp.vars = add_trajectory_vars(pb, n, m, d, N);
    const auto& X = sp.vars.x;
    const auto& U = sp.vars.u;
    const auto& P = sp.vars.p;
    const int nnu = static_cast<int>(seg.E.empty() ? n : seg.E[0].cols());
    for (int k = 0; k + 1 < N; ++k) sp.nu.push_back(pb.add_vars(nnu, "nu" + std::to_string(k)));
    for (int k = 0; k < N && ocp.n_s > 0; ++k) sp.nu_s.push_back(pb.add_vars(ocp.n_s, "nus" + std::to_string(k)));
    sp.nu_ic = pb.add_vars(ocp.n_ic, "nu_ic");
    sp.nu_tc = pb.add_vars(ocp.n_tc, "nu_tc");

    // dynamics
    for (int k = 0; k + 1 < N; ++k) {
        ExprVec rhs = conic::affine(seg.A[k], X[k], seg.r[k]);
        rhs = conic::add(rhs, conic::affine(seg.Bm[k], U[k]));
        if (seg.scheme == Scheme::foh) rhs = conic::add(rhs, conic::affine(seg.Bp[k], U[k + 1]));
        if (d > 0) rhs = conic::add(rhs, conic::affine(seg.F[k], P));
        rhs = conic::add(rhs, conic::affine(seg.E[k], sp.nu[k]));
        pb.add_eq(conic::sub(X[k + 1], rhs), "dynamics " + std::to_string(k));
    }

    emit_convex_sets(ocp, sp.vars, N, true, pb);

    // linearized nonconvex path constraints
    for (int k = 0; k < N && ocp.n_s > 0; ++k) {
        ExprVec lin = conic::affine(seg.C[k], X[k], seg.rs[k]);
        lin = conic::add(lin, conic::affine(seg.D[k], U[k]));
        if (d > 0) lin = conic::add(lin, conic::affine(seg.G[k], P));
        for (int i = 0; i < ocp.n_s; ++i) {
            pb.add_le(lin[i], sp.nu_s[k][i], "path " + std::to_string(k));
            pb.add_ge(sp.nu_s[k][i], "path slack " + std::to_string(k));
        }
    }

    // boundary conditions
    {
        ExprVec ic = conic::add(conic::affine(seg.H0, X[0], seg.l0), sp.nu_ic);
        if (d > 0) ic = conic::add(ic, conic::affine(seg.K0, P));
        pb.add_eq(ic, "initial condition");
        ExprVec tc = conic::add(conic::affine(seg.Hf, X[N - 1], seg.lf), sp.nu_tc);
        if (d > 0) tc = conic::add(tc, conic::affine(seg.Kf, P));
        pb.add_eq(tc, "terminal condition");
    }

    // trust region; a zero radius pins the deviations directly since the
    // norm cone would have no interior
    if (eta <= 0) {
        if (cfg.alpha_p && d > 0) pb.add_eq(minus(P, ref.p), "trust p");
        for (int k = 0; k < N; ++k) {
            if (cfg.alpha_x) pb.add_eq(minus(X[k], ref.x.col(k)), "trust region " + std::to_string(k));
            if (cfg.alpha_u) pb.add_eq(minus(U[k], ref.u.col(k)), "trust region " + std::to_string(k));
        }
    }
    LinExpr tp;
    if (cfg.alpha_p && d > 0 && eta > 0) tp = pb.norm_epigraph(minus(P, ref.p), cfg.q, "trust p");
    for (int k = 0; k < N && eta > 0; ++k) {
        LinExpr lhs = tp;
        if (cfg.alpha_x) lhs += pb.norm_epigraph(minus(X[k], ref.x.col(k)), cfg.q, "trust x");
        if (cfg.alpha_u) lhs += pb.norm_epigraph(minus(U[k], ref.u.col(k)), cfg.q, "trust u");
        pb.add_le(lhs, LinExpr(eta), "trust region " + std::to_string(k));
    }

    // objective
    LinExpr obj;
    if (ocp.terminal_cost_epigraph) obj += ocp.terminal_cost_epigraph(X[N - 1], P, pb);
    if (ocp.n_ic > 0) obj += lam * pb.norm_epigraph(sp.nu_ic, NormKind::one, "vc ic");
    if (ocp.n_tc > 0) obj += lam * pb.norm_epigraph(sp.nu_tc, NormKind::one, "vc tc");
    for (int k = 0; k < N; ++k) {
        LinExpr run;
        if (ocp.running_cost_epigraph) run += ocp.running_cost_epigraph(k, X[k], U[k], P, pb);
        if (k + 1 < N) run += lam * pb.norm_epigraph(conic::affine(seg.E[k], sp.nu[k]), NormKind::one, "vc dyn");
        if (ocp.n_s > 0)
            for (const auto& e : sp.nu_s[k]) run += lam * e;
        obj += trap_weight(k, N, grid.dt) * run;
    }
    obj.compress();
    sp.objective_constant = obj.constant;
    pb.minimize(obj);
    sp.program = pb.build();
    return sp;
}

Virtuals extract_virtuals(const Subproblem& sp, const Vec& primal) {
    Virtuals v;
    const int K = static_cast<int>(sp.nu.size());
    v.nu.resize(K ? static_cast<Eigen::Index>(sp.nu[0].size()) : 0, K);
    for (int k = 0; k < K; ++k) v.nu.col(k) = values(sp.nu[k], primal);
    const int Ns = static_cast<int>(sp.nu_s.size());
    v.nu_s.resize(Ns ? static_cast<Eigen::Index>(sp.nu_s[0].size()) : 0, Ns);
    for (int k = 0; k < Ns; ++k) v.nu_s.col(k) = values(sp.nu_s[k], primal);
    v.nu_ic = values(sp.nu_ic, primal);
    v.nu_tc = values(sp.nu_tc, primal);
    return v;
}

double accuracy_ratio(double J_ref, double J_star, double L_star, double tol) {
    double den = J_ref - L_star;
    if (den < -tol) {
        std::ostringstream os;
        os << "negative predicted decrease " << den << " (reference cost " << J_ref << ", model cost " << L_star
           << ")";
        throw std::logic_error(os.str());
    }
    if (den <= kDenominatorGuard) return 1.0;
    return (J_ref - J_star) / den;
}

TrustUpdate update_trust_region(double rho, double eta, const Config& cfg) {
    if (rho < cfg.rho0) return {false, std::max(eta / cfg.beta_sh, cfg.eta_min)};
    if (rho < cfg.rho1) return {true, std::max(eta / cfg.beta_sh, cfg.eta_min)};
    if (rho < cfg.rho2) return {true, eta};
    return {true, std::min(eta * cfg.beta_gr, cfg.eta_max)};
}

bool stopping(const Trajectory& ref, const Trajectory& sol, double J_ref, double L_star, const Config& cfg) {
    if (cfg.eps > 0) {
        double dx = 0.0;
        for (int k = 0; k < ref.N(); ++k) dx = std::max(dx, norm(Vec(sol.x.col(k) - ref.x.col(k)), cfg.q_stop));
        if (norm(Vec(sol.p - ref.p), cfg.q_stop) + dx <= cfg.eps) return true;
    }
    if (cfg.eps_r > 0 && J_ref - L_star <= cfg.eps_r * std::abs(J_ref)) return true;
    return false;
}

SCPReport run(const ContinuousOCP& ocp_in, const Trajectory& guess, const Config& cfg, const ScalingMap& scaling,
              const TimeGrid& grid, Scheme scheme) {
    cfg.validate();
    SCPReport rep;
    rep.algorithm = "scvx";
    const ContinuousOCP ocp = ocp::scaled_problem(ocp_in, scaling);
    const bool fixed_iterations = cfg.eps == 0 && cfg.eps_r == 0;

    auto t = Clock::now();
    Trajectory ref = project_guess(ocp, ocp::scale(guess, scaling));
    rep.totals.formulate_ms += ms_since(t);
    t = Clock::now();
    Segments seg = disc::discretize(ocp, ref, grid, scheme);
    double J_ref = nonlinear_cost(ocp, ref, grid, scheme, cfg.lambda);
    rep.totals.discretize_ms += ms_since(t);
    double eta = cfg.eta_init;
    double ref_vc = std::numeric_limits<double>::infinity(); // the guess has no virtual controls

    for (int it = 1; it <= cfg.max_iters; ++it) {
        IterationRecord rec;
        rec.iter = it;
        rec.eta_before = eta;
        rec.lambda = cfg.lambda;
        rec.cost_reference = J_ref;

        t = Clock::now();
        Subproblem sp = build_subproblem(ocp, ref, seg, grid, eta, cfg);
        rec.times.formulate_ms = ms_since(t);
        t = Clock::now();
        auto sol = conic::solve(sp.program, cfg.solver);
        rec.times.solve_ms = ms_since(t);
        rec.solve_status = sol.status;
        rec.solver_iterations = sol.iterations;
        if (sol.status != conic::Status::optimal) {
            rep.error = true;
            rep.message = "subproblem " + std::to_string(it) + " returned " + std::string(conic::to_string(sol.status)) +
                          (sol.message.empty() ? "" : " (" + sol.message + ")");
            rec.eta_after = eta;
            rep.iterations.push_back(rec);
            break;
        }
        Trajectory z = extract(sp.vars, sol.primal);
        Virtuals v = extract_virtuals(sp, sol.primal);
        rec.vc_norm = v.max_abs();
        rec.cost_linear = linear_cost(ocp, z, v, seg, grid, cfg.lambda);

        t = Clock::now();
        if (rec.cost_linear > J_ref && rec.cost_linear - J_ref <= kSolverSlack * std::max(1.0, std::abs(J_ref))) {
            // the reference with matching virtual controls is feasible and no
            // worse, so keep it
            z = ref;
            rec.cost_linear = J_ref;
            rec.vc_norm = reference_vc(ocp, ref, seg, grid);
        }
        rec.cost_nonlinear = nonlinear_cost(ocp, z, grid, scheme, cfg.lambda, &rec.defect);
        rec.times.discretize_ms = ms_since(t);

        double den = J_ref - rec.cost_linear;
        try {
            rec.rho = accuracy_ratio(J_ref, rec.cost_nonlinear, rec.cost_linear);
        } catch (const std::logic_error& e) {
            rep.error = true;
            rep.message = std::string("iteration ") + std::to_string(it) + ": " + e.what();
            rec.eta_after = eta;
            rep.iterations.push_back(rec);
            break;
        }
        bool stop = stopping(ref, z, J_ref, rec.cost_linear, cfg);
        if (den <= kDenominatorGuard && !fixed_iterations) stop = true;

        if (stop) {
            rec.accepted = true;
            rec.eta_after = eta;
            ref = z;
            J_ref = rec.cost_nonlinear;
            ref_vc = rec.vc_norm;
            rep.converged = true;
        } else {
            auto upd = update_trust_region(rec.rho, eta, cfg);
            rec.accepted = upd.accept;
            rec.eta_after = upd.eta;
            eta = upd.eta;
            if (upd.accept) {
                ref = z;
                J_ref = rec.cost_nonlinear;
                ref_vc = rec.vc_norm;
                t = Clock::now();
                seg = disc::discretize(ocp, ref, grid, scheme);
                rec.times.discretize_ms += ms_since(t);
            }
        }
        rep.totals.formulate_ms += rec.times.formulate_ms;
        rep.totals.solve_ms += rec.times.solve_ms;
        rep.totals.discretize_ms += rec.times.discretize_ms;
        rep.iterations.push_back(rec);
        if (cfg.on_iteration) cfg.on_iteration(rec, ref);
        if (stop) break;
    }

    rep.solution_scaled = ref;
    rep.solution = ocp::unscale(ref, scaling);
    rep.cost = J_ref;
    rep.vc_norm = ref_vc;
    rep.max_defect = disc::defects(ocp, ref, grid, scheme).max_defect;
    rep.soft_failure = !rep.error && ref_vc > cfg.vc_tol;
    if (rep.message.empty())
        rep.message = rep.converged ? (rep.soft_failure ? "converged with nonzero virtual control" : "converged")
                                    : "iteration limit reached";
    return rep;
}

} // namespace trajopt::scvx
