#include "trajopt/gusto.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace trajopt::gusto {

namespace {

using Clock = std::chrono::steady_clock;
double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double trap_weight(int k, int N, double dt) { return (k == 0 || k == N - 1) ? 0.5 * dt : dt; }

double h(double z, double lambda, const Config& cfg) { return h_penalty(z, lambda, cfg.penalty, cfg.sharpness).value; }

// lower factor L with L'L = S; rows for numerically zero eigenvalues dropped
Mat psd_factor(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
    const Vec& ev = es.eigenvalues();
    if (ev.size() && ev.minCoeff() < -1e-10) {
        std::ostringstream os;
        os << "quadratic cost matrix S(p) is indefinite (min eigenvalue " << ev.minCoeff() << ")";
        throw std::domain_error(os.str());
    }
    const double cut = 1e-14 * std::max(1.0, ev.size() ? ev.maxCoeff() : 0.0);
    std::vector<int> keep;
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] > cut) keep.push_back(i);
    Mat L(keep.size(), S.cols());
    for (std::size_t j = 0; j < keep.size(); ++j)
        L.row(static_cast<Eigen::Index>(j)) = std::sqrt(ev[keep[j]]) * es.eigenvectors().col(keep[j]).transpose();
    return L;
}

// t >= h(v) for some v >= z; returns t
LinExpr h_epigraph(ProblemBuilder& pb, const LinExpr& z, double lambda, const Config& cfg, const std::string& label) {
    LinExpr v = LinExpr::var(pb.add_var(label));
    pb.add_ge(v - z, label);
    LinExpr t = LinExpr::var(pb.add_var(label));
    if (cfg.penalty == PenaltyKind::quadratic_rectifier) {
        pb.add_ge(v, label);
        pb.add_square_le(v, t, label);
        return lambda * t;
    }
    // softplus: maximum of tangents over a window where it bends
    pb.add_ge(t, label);
    const double w = 8.0 / cfg.sharpness;
    const int n = std::max(cfg.softplus_pieces, 2);
    for (int j = 0; j < n; ++j) {
        double zj = -w + 2.0 * w * j / (n - 1);
        auto hp = h_penalty(zj, lambda, cfg.penalty, cfg.sharpness);
        pb.add_ge(t - hp.slope * v - (hp.value - hp.slope * zj), label);
    }
    return t;
}

Vec dev(const Vec& a, const Vec& b) { return a - b; }

double trust_term(const Trajectory& z, const Trajectory& ref, int k, const Config& cfg) {
    double s = 0.0;
    if (cfg.alpha_x) s += norm(dev(z.x.col(k), ref.x.col(k)), cfg.q);
    if (cfg.alpha_p && z.p.size()) s += norm(dev(z.p, ref.p), cfg.q);
    return s;
}

} // namespace

PenaltyKind penalty_kind_from_string(const std::string& s) {
    if (s == "quadratic_rectifier") return PenaltyKind::quadratic_rectifier;
    if (s == "softplus") return PenaltyKind::softplus;
    throw std::invalid_argument("unknown penalty kind '" + s + "' (expected quadratic_rectifier or softplus)");
}

std::string to_string(PenaltyKind k) { return k == PenaltyKind::softplus ? "softplus" : "quadratic_rectifier"; }

void Config::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("gusto config: ") + what);
    };
    need(1 <= lambda0 && lambda0 < lambda_max, "need 1 <= lambda0 < lambda_max");
    need(gamma_fail > 1, "gamma_fail must exceed 1");
    need(0 < rho0 && rho0 < rho1 && rho1 < 1, "need 0 < rho0 < rho1 < 1");
    need(beta_sh > 1 && beta_gr > 1, "beta_sh and beta_gr must exceed 1");
    need(0 < eta_min && eta_min <= eta_init && eta_init <= eta_max, "need 0 < eta0 <= eta_init <= eta1");
    need(0 < mu && mu < 1, "mu must lie in (0, 1)");
    need(k_star >= 1, "k_star must be at least 1");
    need(sharpness > 0, "softplus sharpness must be positive");
    need(eps >= 0 && eps_r >= 0, "tolerances must be nonnegative");
    need(max_iters >= 1, "max_iters must be positive");
    need(trust_tol >= 0 && state_tol >= 0, "violation tolerances must be nonnegative");
}

Penalty h_penalty(double z, double lambda, PenaltyKind kind, double sharpness) {
    if (kind == PenaltyKind::quadratic_rectifier) {
        double zp = std::max(z, 0.0);
        return {lambda * zp * zp, 2.0 * lambda * zp};
    }
    const double sz = sharpness * z;
    double value = lambda * (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(sz))) / sharpness);
    double sig = sz >= 0 ? 1.0 / (1.0 + std::exp(-sz)) : std::exp(sz) / (1.0 + std::exp(sz));
    return {value, lambda * sig};
}

double soft_state_penalty(const ContinuousOCP& ocp, int k, double t, const Vec& x, const Vec& u, const Vec& p,
                          double lambda, PenaltyKind kind, double sharpness) {
    double s = 0.0;
    for (const auto& c : ocp.state_constraints) s += h_penalty(c.value(k, x, p), lambda, kind, sharpness).value;
    if (ocp.n_s > 0) {
        Vec sv = ocp.s(k, t, x, u, p);
        for (int i = 0; i < sv.size(); ++i) s += h_penalty(sv[i], lambda, kind, sharpness).value;
    }
    return s;
}

double trust_region_penalty(const Vec& dx, const Vec& dp, double eta, double lambda, PenaltyKind kind, NormKind q,
                            double sharpness) {
    return h_penalty(norm(dx, q) + norm(dp, q) - eta, lambda, kind, sharpness).value;
}

double check_quadratic_form(const ContinuousOCP& ocp, double t, const Vec& x, const Vec& u, const Vec& p) {
    if (!ocp.quadratic) throw std::invalid_argument("problem '" + ocp.name + "' has no quadratic running cost");
    const auto& q = *ocp.quadratic;
    double gam = u.dot(q.S(p) * u) + u.dot(q.ell(x, p)) + q.g(x, p);
    double err = std::abs(gam - running_cost(ocp, x, u, p)) / std::max(1.0, std::abs(gam));
    Vec f = q.f0(t, x, p) + q.f1(t, x, p) * u;
    Vec fr = ocp.f(t, x, u, p);
    return std::max(err, (f - fr).norm() / std::max(1.0, fr.norm()));
}

CostModel cost_model(const ContinuousOCP& ocp, const Trajectory& ref) {
    if (!ocp.quadratic) throw std::invalid_argument("GuSTO needs a running cost quadratic in u");
    const auto& q = *ocp.quadratic;
    CostModel cm;
    const int N = ref.N();
    const Vec& p = ref.p;
    Mat S = q.S(p);
    psd_factor(S); // indefiniteness check
    // d/dp of ubar' S(p) ubar by central differences
    std::vector<Mat> dS;
    for (int j = 0; j < p.size(); ++j) {
        double hstep = 1e-6 * std::max(1.0, std::abs(p[j]));
        Vec pp = p, pm = p;
        pp[j] += hstep;
        pm[j] -= hstep;
        dS.push_back((q.S(pp) - q.S(pm)) / (2 * hstep));
    }
    for (int k = 0; k < N; ++k) {
        Vec x = ref.x.col(k), u = ref.u.col(k);
        Vec ax, bu, fp;
        if (ocp.running_cost_grad) {
            ocp.running_cost_grad(x, u, p, ax, bu, fp);
        } else {
            ax = Vec::Zero(ocp.n);
            bu = Vec::Zero(ocp.m);
            fp = Vec::Zero(ocp.d);
        }
        cm.S.push_back(S);
        cm.r0.push_back(running_cost(ocp, x, u, p) - u.dot(S * u));
        cm.rx.push_back(ax);
        cm.ru.push_back(bu - 2.0 * S * u);
        Vec rp = fp;
        for (int j = 0; j < p.size(); ++j) rp[j] -= u.dot(dS[j] * u);
        cm.rp.push_back(rp);
    }
    return cm;
}

Subproblem build_subproblem(const ContinuousOCP& ocp, const Trajectory& ref, const Segments& seg,
                            const CostModel& cm, const TimeGrid& grid, double lambda, double eta, const Config& cfg) {
    const int N = grid.N, n = ocp.n, m = ocp.m, d = ocp.d;
    ProblemBuilder pb;
    Subproblem sp;
    sp.vars = add_trajectory_vars(pb, n, m, d, N);
    const auto& X = sp.vars.x;
    const auto& U = sp.vars.u;
    const auto& P = sp.vars.p;

    for (int k = 0; k + 1 < N; ++k) {
        ExprVec rhs = conic::affine(seg.A[k], X[k], seg.r[k]);
        rhs = conic::add(rhs, conic::affine(seg.Bm[k], U[k]));
        if (seg.scheme == Scheme::foh) rhs = conic::add(rhs, conic::affine(seg.Bp[k], U[k + 1]));
        if (d > 0) rhs = conic::add(rhs, conic::affine(seg.F[k], P));
        pb.add_eq(conic::sub(X[k + 1], rhs), "dynamics " + std::to_string(k));
    }
    emit_convex_sets(ocp, sp.vars, N, false, pb);
    if (ocp.n_ic > 0) {
        ExprVec ic = conic::affine(seg.H0, X[0], seg.l0);
        if (d > 0) ic = conic::add(ic, conic::affine(seg.K0, P));
        pb.add_eq(ic, "initial condition");
    }
    if (ocp.n_tc > 0) {
        ExprVec tc = conic::affine(seg.Hf, X[N - 1], seg.lf);
        if (d > 0) tc = conic::add(tc, conic::affine(seg.Kf, P));
        pb.add_eq(tc, "terminal condition");
    }

    LinExpr obj;
    if (ocp.terminal_cost_epigraph) obj += ocp.terminal_cost_epigraph(X[N - 1], P, pb);
    LinExpr tp;
    if (cfg.alpha_p && d > 0) tp = pb.norm_epigraph(minus(P, ref.p), cfg.q, "trust p");
    for (int k = 0; k < N; ++k) {
        const std::string node = std::to_string(k);
        LinExpr run;
        // running cost: exact u'S u plus the linearized remainder
        Mat L = psd_factor(cm.S[k]);
        if (L.rows() > 0) {
            LinExpr t = LinExpr::var(pb.add_var("gamma" + node));
            pb.add_sumsq_le(conic::affine(L, U[k]), t, "running cost " + node);
            run += t;
        }
        run += LinExpr(cm.r0[k]) + conic::dot(cm.rx[k], minus(X[k], ref.x.col(k))) +
               conic::dot(cm.ru[k], minus(U[k], ref.u.col(k)));
        if (d > 0) run += conic::dot(cm.rp[k], minus(P, ref.p));
        // convex state constraints w
        for (const auto& c : ocp.state_constraints) {
            LinExpr v = LinExpr::var(pb.add_var("w " + c.name));
            c.emit(k, X[k], P, v, pb);
            run += h_epigraph(pb, v, lambda, cfg, "penalty " + c.name + " " + node);
        }
        // linearized nonconvex constraints
        if (ocp.n_s > 0) {
            ExprVec lin = conic::affine(seg.C[k], X[k], seg.rs[k]);
            lin = conic::add(lin, conic::affine(seg.D[k], U[k]));
            if (d > 0) lin = conic::add(lin, conic::affine(seg.G[k], P));
            for (int i = 0; i < ocp.n_s; ++i)
                run += h_epigraph(pb, lin[i], lambda, cfg, "penalty s" + std::to_string(i) + " " + node);
        }
        // soft trust region
        LinExpr tr = tp;
        if (cfg.alpha_x) tr += pb.norm_epigraph(minus(X[k], ref.x.col(k)), cfg.q, "trust x");
        run += h_epigraph(pb, tr - eta, lambda, cfg, "trust region " + node);
        obj += trap_weight(k, N, grid.dt) * run;
    }
    obj.compress();
    sp.objective_constant = obj.constant;
    pb.minimize(obj);
    sp.program = pb.build();
    return sp;
}

double linear_cost(const ContinuousOCP& ocp, const Trajectory& z, const Trajectory& ref, const Segments& seg,
                   const CostModel& cm, const TimeGrid& grid, double lambda, double eta, const Config& cfg) {
    const int N = grid.N;
    std::vector<double> run(N);
    for (int k = 0; k < N; ++k) {
        Vec x = z.x.col(k), u = z.u.col(k);
        Vec dx = x - ref.x.col(k), du = u - ref.u.col(k), dp = z.p - ref.p;
        double r = u.dot(cm.S[k] * u) + cm.r0[k] + cm.rx[k].dot(dx) + cm.ru[k].dot(du);
        if (dp.size()) r += cm.rp[k].dot(dp);
        for (const auto& c : ocp.state_constraints) r += h(c.value(k, x, z.p), lambda, cfg);
        if (ocp.n_s > 0) {
            Vec lin = seg.C[k] * x + seg.D[k] * u + seg.rs[k];
            if (z.p.size()) lin += seg.G[k] * z.p;
            for (int i = 0; i < lin.size(); ++i) r += h(lin[i], lambda, cfg);
        }
        r += h(trust_term(z, ref, k, cfg) - eta, lambda, cfg);
        run[k] = r;
    }
    return terminal_cost(ocp, z.x.col(N - 1), z.p) + trapz(run, grid.dt);
}

double nonlinear_cost(const ContinuousOCP& ocp, const Trajectory& z, const Trajectory& ref, const TimeGrid& grid,
                      double lambda, double eta, const Config& cfg) {
    const int N = grid.N;
    std::vector<double> run(N);
    for (int k = 0; k < N; ++k) {
        Vec x = z.x.col(k), u = z.u.col(k);
        run[k] = running_cost(ocp, x, u, z.p) +
                 soft_state_penalty(ocp, k, grid.t[k], x, u, z.p, lambda, cfg.penalty, cfg.sharpness) +
                 h(trust_term(z, ref, k, cfg) - eta, lambda, cfg);
    }
    return terminal_cost(ocp, z.x.col(N - 1), z.p) + trapz(run, grid.dt);
}

RatioTerms ratio_terms(const ContinuousOCP& ocp, const Trajectory& z, const Trajectory& ref, const TimeGrid& grid) {
    const int N = grid.N;
    std::vector<double> err(N), mag(N);
    for (int k = 0; k < N; ++k) {
        const double t = grid.t[k];
        Vec xb = ref.x.col(k), ub = ref.u.col(k);
        Mat A, B, F;
        ocp.df(t, xb, ub, ref.p, A, B, F);
        Vec xdot = ocp.f(t, xb, ub, ref.p) + A * (z.x.col(k) - xb) + B * (z.u.col(k) - ub);
        if (F.cols() > 0) xdot += F * (z.p - ref.p).head(F.cols());
        err[k] = (ocp.f(t, z.x.col(k), z.u.col(k), z.p) - xdot).norm();
        mag[k] = xdot.norm();
    }
    return {trapz(err, grid.dt), trapz(mag, grid.dt)};
}

double accuracy_ratio(double J_star, double L_star, const RatioTerms& terms) {
    double den = std::abs(L_star) + terms.xdot_norm;
    if (den <= 1e-12) throw std::logic_error("accuracy ratio undefined for a trivial solution");
    return (std::abs(J_star - L_star) + terms.theta) / den;
}

Update update(double rho, bool trust_violated, bool state_violated, double lambda, double eta, int iter,
              const Config& cfg) {
    Update u{false, lambda, eta};
    if (trust_violated) {
        u.lambda = cfg.gamma_fail * lambda;
    } else if (rho > cfg.rho1) {
        u.eta = std::max(eta / cfg.beta_sh, cfg.eta_min);
    } else {
        u.accept = true;
        if (rho < cfg.rho0) u.eta = std::min(eta * cfg.beta_gr, cfg.eta_max);
        u.lambda = state_violated ? cfg.gamma_fail * lambda : std::max(lambda / cfg.gamma_fail, cfg.lambda0);
    }
    u.eta *= std::pow(cfg.mu, std::max(0, 1 + iter - cfg.k_star));
    return u;
}

StopDecision stopping(const Trajectory& ref, const Trajectory& sol, double J_ref, double J_star, double lambda,
                      const TimeGrid& grid, const Config& cfg) {
    if (lambda > cfg.lambda_max) return {true, true};
    if (cfg.eps > 0) {
        std::vector<double> du(grid.N);
        for (int k = 0; k < grid.N; ++k) du[k] = norm(Vec(sol.u.col(k) - ref.u.col(k)), cfg.q_stop);
        if (norm(Vec(sol.p - ref.p), cfg.q_stop) + trapz(du, grid.dt) <= cfg.eps) return {true, false};
    }
    if (cfg.eps_r > 0 && std::abs(J_ref - J_star) <= cfg.eps_r * std::abs(J_ref)) return {true, false};
    return {};
}

bool trust_violated(const Trajectory& z, const Trajectory& ref, double eta, const Config& cfg) {
    for (int k = 0; k < z.N(); ++k)
        if (trust_term(z, ref, k, cfg) > eta * (1.0 + cfg.trust_tol)) return true;
    return false;
}

bool state_violated(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, double tol) {
    for (int k = 0; k < z.N(); ++k) {
        Vec x = z.x.col(k);
        for (const auto& c : ocp.state_constraints)
            if (c.value(k, x, z.p) > tol) return true;
        if (ocp.n_s > 0 && ocp.s(k, grid.t[k], x, z.u.col(k), z.p).maxCoeff() > tol) return true;
    }
    return false;
}

SCPReport run(const ContinuousOCP& ocp_in, const Trajectory& guess, const Config& cfg, const ScalingMap& scaling,
              const TimeGrid& grid, Scheme scheme) {
    cfg.validate();
    SCPReport rep;
    rep.algorithm = "gusto";
    const ContinuousOCP ocp = ocp::scaled_problem(ocp_in, scaling);

    auto t = Clock::now();
    Trajectory ref = project_guess(ocp, ocp::scale(guess, scaling));
    CostModel cm = cost_model(ocp, ref);
    rep.totals.formulate_ms += ms_since(t);
    t = Clock::now();
    Segments seg = disc::discretize(ocp, ref, grid, scheme);
    rep.totals.discretize_ms += ms_since(t);
    double lambda = cfg.lambda0, eta = cfg.eta_init;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        IterationRecord rec;
        rec.iter = it;
        rec.eta_before = eta;
        rec.lambda = lambda;
        const double J_ref = nonlinear_cost(ocp, ref, ref, grid, lambda, eta, cfg);
        rec.cost_reference = J_ref;

        t = Clock::now();
        Subproblem sp = build_subproblem(ocp, ref, seg, cm, grid, lambda, eta, cfg);
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
        rec.cost_linear = linear_cost(ocp, z, ref, seg, cm, grid, lambda, eta, cfg);

        t = Clock::now();
        rec.cost_nonlinear = nonlinear_cost(ocp, z, ref, grid, lambda, eta, cfg);
        rec.defect = disc::defects(ocp, z, grid, scheme).max_defect;
        rec.trust_violated = trust_violated(z, ref, eta, cfg);
        rec.state_violated = state_violated(ocp, z, grid, cfg.state_tol);
        if (!rec.trust_violated) {
            try {
                rec.rho = accuracy_ratio(rec.cost_nonlinear, rec.cost_linear, ratio_terms(ocp, z, ref, grid));
            } catch (const std::logic_error& e) {
                rep.error = true;
                rep.message = std::string("iteration ") + std::to_string(it) + ": " + e.what();
                rec.eta_after = eta;
                rep.iterations.push_back(rec);
                break;
            }
        } else {
            rec.rho = std::numeric_limits<double>::quiet_NaN();
        }
        rec.times.discretize_ms = ms_since(t);

        // converged only on an admissible step that also satisfies the state constraints
        bool done = false;
        if (!rec.trust_violated && !rec.state_violated && rec.rho <= cfg.rho1)
            done = stopping(ref, z, J_ref, rec.cost_nonlinear, lambda, grid, cfg).stop;

        if (done) {
            rec.accepted = true;
            rec.eta_after = eta;
            ref = z;
            rep.converged = true;
        } else {
            auto upd = update(rec.rho, rec.trust_violated, rec.state_violated, lambda, eta, it, cfg);
            rec.accepted = upd.accept;
            rec.eta_after = upd.eta;
            eta = upd.eta;
            lambda = upd.lambda;
            if (upd.accept) {
                ref = z;
                t = Clock::now();
                cm = cost_model(ocp, ref);
                seg = disc::discretize(ocp, ref, grid, scheme);
                rec.times.discretize_ms += ms_since(t);
            }
        }
        rep.totals.formulate_ms += rec.times.formulate_ms;
        rep.totals.solve_ms += rec.times.solve_ms;
        rep.totals.discretize_ms += rec.times.discretize_ms;
        rep.iterations.push_back(rec);
        if (cfg.on_iteration) cfg.on_iteration(rec, ref);
        if (done) break;
        if (lambda > cfg.lambda_max) {
            rep.soft_failure = true;
            rep.message = "penalty weight exceeded lambda_max";
            break;
        }
    }

    rep.solution_scaled = ref;
    rep.solution = ocp::unscale(ref, scaling);
    rep.cost = nonlinear_cost(ocp, ref, ref, grid, lambda, eta, cfg);
    rep.vc_norm = 0.0;
    rep.max_defect = disc::defects(ocp, ref, grid, scheme).max_defect;
    if (rep.message.empty()) rep.message = rep.converged ? "converged" : "iteration limit reached";
    return rep;
}

} // namespace trajopt::gusto
