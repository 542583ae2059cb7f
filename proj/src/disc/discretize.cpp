#include "trajopt/discretization.hpp"

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <sstream>

namespace trajopt::disc {

namespace odeint = boost::numeric::odeint;
using State = std::vector<double>;

Scheme scheme_from_string(const std::string& s) {
    if (s == "zoh") return Scheme::zoh;
    if (s == "foh") return Scheme::foh;
    throw std::invalid_argument("unknown discretization scheme '" + s + "'");
}

std::string to_string(Scheme s) { return s == Scheme::zoh ? "zoh" : "foh"; }

Vec input_at(Scheme scheme, double t, double t0, double t1, const Vec& uk, const Vec& uk1) {
    if (scheme == Scheme::zoh) return uk;
    double lp = (t - t0) / (t1 - t0);
    return (1.0 - lp) * uk + lp * uk1;
}

namespace {

template <class Sys>
void integrate(Sys&& sys, State& y, double t0, double t1) {
    auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(kIntegratorTol, kIntegratorTol);
    // last time with a finite accepted state
    double t_ok = t0;
    auto fail = [&](const std::string& why) {
        std::ostringstream os;
        os << "integration failed at t = " << t_ok << ": " << why;
        return IntegratorError(os.str(), t_ok);
    };
    auto observer = [&](const State& s, double t) {
        for (double v : s)
            if (!std::isfinite(v)) throw fail("non-finite state");
        t_ok = t;
    };
    try {
        odeint::integrate_adaptive(stepper, sys, y, t0, t1, (t1 - t0) / 10.0, observer);
    } catch (const IntegratorError&) {
        throw;
    } catch (const std::exception& e) {
        throw fail(e.what());
    }
}

void require_finite(const Mat& M, const char* what, int k) {
    if (!M.allFinite()) {
        std::ostringstream os;
        os << "non-finite " << what << " at node " << k;
        throw std::runtime_error(os.str());
    }
}

} // namespace

Flow flow_map(const ContinuousOCP& ocp, const TimeGrid& grid, int k, const Vec& xk, const Vec& uk, const Vec& uk1,
              const Vec& p, Scheme scheme, int samples) {
    const int n = ocp.n;
    const double t0 = grid.t[k], t1 = grid.t[k + 1];
    auto sys = [&](const State& y, State& dy, double t) {
        Eigen::Map<const Vec> x(y.data(), n);
        Vec f = ocp.f(t, x, input_at(scheme, t, t0, t1, uk, uk1), p);
        Eigen::Map<Vec>(dy.data(), n) = f;
    };
    State y(xk.data(), xk.data() + n);
    Flow out;
    if (samples <= 0) {
        integrate(sys, y, t0, t1);
    } else {
        out.t.push_back(t0);
        out.x.push_back(xk);
        out.u.push_back(input_at(scheme, t0, t0, t1, uk, uk1));
        for (int i = 1; i <= samples + 1; ++i) {
            double ta = t0 + (t1 - t0) * (i - 1) / (samples + 1);
            double tb = i == samples + 1 ? t1 : t0 + (t1 - t0) * i / (samples + 1);
            integrate(sys, y, ta, tb);
            out.t.push_back(tb);
            out.x.push_back(Eigen::Map<Vec>(y.data(), n));
            out.u.push_back(input_at(scheme, tb, t0, t1, uk, uk1));
        }
    }
    out.x_end = Eigen::Map<Vec>(y.data(), n);
    return out;
}

PropagationResult defects(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, Scheme scheme,
                          int samples) {
    PropagationResult res;
    for (int k = 0; k + 1 < grid.N; ++k) {
        Flow fl = flow_map(ocp, grid, k, z.x.col(k), z.u.col(k), z.u.col(k + 1), z.p, scheme, samples);
        Vec dk = z.x.col(k + 1) - fl.x_end;
        res.max_defect = std::max(res.max_defect, dk.cwiseAbs().maxCoeff());
        res.defects.push_back(dk);
        if (samples > 0) res.segments.push_back(std::move(fl));
    }
    return res;
}

PropagationResult simulate(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, Scheme scheme,
                           int samples, Mat* x_out) {
    PropagationResult res;
    Vec x = z.x.col(0);
    if (x_out) {
        x_out->resize(ocp.n, grid.N);
        x_out->col(0) = x;
    }
    for (int k = 0; k + 1 < grid.N; ++k) {
        Flow fl = flow_map(ocp, grid, k, x, z.u.col(k), z.u.col(k + 1), z.p, scheme, samples);
        x = fl.x_end;
        if (x_out) x_out->col(k + 1) = x;
        Vec dk = z.x.col(k + 1) - x;
        res.max_defect = std::max(res.max_defect, dk.cwiseAbs().maxCoeff());
        res.defects.push_back(dk);
        if (samples > 0) res.segments.push_back(std::move(fl));
    }
    return res;
}

Segments discretize(const ContinuousOCP& ocp, const Trajectory& ref, const TimeGrid& grid, Scheme scheme) {
    const int n = ocp.n, m = ocp.m, d = ocp.d, dd = ocp.n_p_dyn();
    const Mat E = ocp.E_matrix();
    const int ne = static_cast<int>(E.cols());
    const bool foh = scheme == Scheme::foh;
    const Vec& p = ref.p;
    const Vec pd = p.head(dd);

    // layout: x | Phi | PBm | PBp | PF | PE | Pr
    const int o_phi = n, o_bm = o_phi + n * n, o_bp = o_bm + n * m, o_f = o_bp + (foh ? n * m : 0),
              o_e = o_f + n * dd, o_r = o_e + n * ne, total = o_r + n;

    Segments seg;
    seg.scheme = scheme;
    const int K = grid.N - 1;
    for (int k = 0; k < K; ++k) {
        const double t0 = grid.t[k], t1 = grid.t[k + 1], h = t1 - t0;
        const Vec uk = ref.u.col(k), uk1 = ref.u.col(k + 1);
            Mat A, B, F;
        auto sys = [&](const State& y, State& dy, double t) {
            Eigen::Map<const Vec> x(y.data(), n);
            Vec u = input_at(scheme, t, t0, t1, uk, uk1);
            Vec f = ocp.f(t, x, u, p);
            ocp.df(t, x, u, p, A, B, F);
            require_finite(A, "df/dx", k);
            require_finite(B, "df/du", k);
            require_finite(F, "df/dp", k);
            Mat Fd = F.leftCols(dd);
            Vec rc = f - A * x - B * u - Fd * pd;
            Eigen::Map<Vec>(dy.data(), n) = f;
            auto M = [&](int off, int cols) { return Eigen::Map<const Mat>(y.data() + off, n, cols); };
            auto D = [&](int off, int cols) { return Eigen::Map<Mat>(dy.data() + off, n, cols); };
            D(o_phi, n) = A * M(o_phi, n);
            double lm = foh ? (t1 - t) / h : 1.0;
            D(o_bm, m) = A * M(o_bm, m) + B * lm;
            if (foh) D(o_bp, m) = A * M(o_bp, m) + B * ((t - t0) / h);
            if (dd > 0) D(o_f, dd) = A * M(o_f, dd) + Fd;
            D(o_e, ne) = A * M(o_e, ne) + E;
            D(o_r, 1) = A * M(o_r, 1) + rc;
        };
        State y(total, 0.0);
        Eigen::Map<Vec>(y.data(), n) = ref.x.col(k);
        Eigen::Map<Mat>(y.data() + o_phi, n, n) = Mat::Identity(n, n);
        integrate(sys, y, t0, t1);
        auto M = [&](int off, int cols) { return Mat(Eigen::Map<const Mat>(y.data() + off, n, cols)); };
        seg.A.push_back(M(o_phi, n));
        seg.Bm.push_back(M(o_bm, m));
        seg.Bp.push_back(foh ? M(o_bp, m) : Mat::Zero(n, m));
        Mat Ff = Mat::Zero(n, d);
        if (dd > 0) Ff.leftCols(dd) = M(o_f, dd);
        seg.F.push_back(Ff);
        seg.E.push_back(M(o_e, ne));
        seg.r.push_back(M(o_r, 1));
    }

    for (int k = 0; k < grid.N && ocp.n_s > 0; ++k) {
        Vec x = ref.x.col(k), u = ref.u.col(k);
        Mat C, D, G;
        ocp.ds(k, grid.t[k], x, u, p, C, D, G);
        require_finite(C, "ds/dx", k);
        require_finite(D, "ds/du", k);
        require_finite(G, "ds/dp", k);
        seg.rs.push_back(ocp.s(k, grid.t[k], x, u, p) - C * x - D * u - G * p);
        seg.C.push_back(C);
        seg.D.push_back(D);
        seg.G.push_back(G);
    }

    Vec x0 = ref.x.col(0), xf = ref.x.col(grid.N - 1);
    ocp.dg_ic(x0, p, seg.H0, seg.K0);
    ocp.dg_tc(xf, p, seg.Hf, seg.Kf);
    require_finite(seg.H0, "dg_ic/dx", 0);
    require_finite(seg.Hf, "dg_tc/dx", grid.N - 1);
    seg.l0 = ocp.g_ic(x0, p) - seg.H0 * x0 - seg.K0 * p;
    seg.lf = ocp.g_tc(xf, p) - seg.Hf * xf - seg.Kf * p;
    return seg;
}

double check_consistency(const Segments& seg, const ContinuousOCP& ocp, const Trajectory& ref, const TimeGrid& grid) {
    double worst = 0.0;
    for (int k = 0; k + 1 < grid.N; ++k) {
        Vec psi = flow_map(ocp, grid, k, ref.x.col(k), ref.u.col(k), ref.u.col(k + 1), ref.p, seg.scheme).x_end;
        Vec lin = seg.A[k] * ref.x.col(k) + seg.Bm[k] * ref.u.col(k) + seg.Bp[k] * ref.u.col(k + 1) +
                  seg.F[k] * ref.p + seg.r[k];
        worst = std::max(worst, (psi - lin).cwiseAbs().maxCoeff());
    }
    return worst;
}

} // namespace trajopt::disc
