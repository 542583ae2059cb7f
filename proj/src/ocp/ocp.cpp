#include "trajopt/ocp.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace trajopt::ocp {

TimeGrid TimeGrid::uniform(int N) {
    if (N < 2) throw std::invalid_argument("time grid needs at least 2 nodes");
    TimeGrid g;
    g.N = N;
    g.dt = 1.0 / (N - 1);
    g.t.resize(N);
    for (int k = 0; k < N; ++k) g.t[k] = static_cast<double>(k) / (N - 1);
    g.t[N - 1] = 1.0;
    return g;
}

namespace {

nlohmann::json mat_rows(const Mat& M) {
    // one row per node (column of M)
    nlohmann::json out = nlohmann::json::array();
    for (int k = 0; k < M.cols(); ++k) {
        std::vector<double> v(M.rows());
        for (int i = 0; i < M.rows(); ++i) v[i] = M(i, k);
        out.push_back(v);
    }
    return out;
}

Mat rows_mat(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) return Mat();
    int N = static_cast<int>(j.size());
    int n = static_cast<int>(j[0].size());
    Mat M(n, N);
    for (int k = 0; k < N; ++k) {
        if (static_cast<int>(j[k].size()) != n) throw std::runtime_error("ragged trajectory array");
        for (int i = 0; i < n; ++i) M(i, k) = j[k][i].get<double>();
    }
    return M;
}

} // namespace

nlohmann::json to_json(const Trajectory& z, const TimeGrid& grid) {
    nlohmann::json j;
    j["t"] = std::vector<double>(grid.t.data(), grid.t.data() + grid.t.size());
    j["x"] = mat_rows(z.x);
    j["u"] = mat_rows(z.u);
    j["p"] = std::vector<double>(z.p.data(), z.p.data() + z.p.size());
    return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j, TimeGrid* grid) {
    Trajectory z;
    z.x = rows_mat(j.at("x"));
    z.u = rows_mat(j.at("u"));
    auto p = j.at("p").get<std::vector<double>>();
    z.p = Eigen::Map<Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
    if (z.u.cols() != z.x.cols()) throw std::runtime_error("x and u node counts differ");
    if (grid) {
        auto t = j.at("t").get<std::vector<double>>();
        *grid = TimeGrid::uniform(static_cast<int>(t.size()));
    }
    return z;
}

ScalingMap ScalingMap::identity(int n, int m, int d) {
    ScalingMap s;
    s.Sx = Vec::Ones(n);
    s.cx = Vec::Zero(n);
    s.Su = Vec::Ones(m);
    s.cu = Vec::Zero(m);
    s.Sp = Vec::Ones(d);
    s.cp = Vec::Zero(d);
    return s;
}

namespace {
void make_block(const Bounds& b, Vec& S, Vec& c, const char* what, std::vector<std::string>* warnings) {
    if (b.lo.size() != b.hi.size()) throw std::invalid_argument(std::string("bounds size mismatch for ") + what);
    S.resize(b.lo.size());
    c = b.lo;
    for (int i = 0; i < b.lo.size(); ++i) {
        double w = b.hi[i] - b.lo[i];
        if (w == 0.0) {
            S[i] = 1.0;
            if (warnings)
                warnings->push_back(std::string("degenerate scaling bounds for ") + what + "[" + std::to_string(i) +
                                    "], using unit scale");
        } else if (w < 0.0) {
            throw std::invalid_argument(std::string("scaling bounds with hi < lo for ") + what + "[" +
                                        std::to_string(i) + "]");
        } else {
            S[i] = w;
        }
    }
}
} // namespace

ScalingMap make_scaling(const Bounds& x, const Bounds& u, const Bounds& p, std::vector<std::string>* warnings) {
    ScalingMap s;
    make_block(x, s.Sx, s.cx, "x", warnings);
    make_block(u, s.Su, s.cu, "u", warnings);
    make_block(p, s.Sp, s.cp, "p", warnings);
    return s;
}

Trajectory scale(const Trajectory& z, const ScalingMap& s) {
    Trajectory o = z;
    for (int k = 0; k < z.x.cols(); ++k) o.x.col(k) = s.scale_x(z.x.col(k));
    for (int k = 0; k < z.u.cols(); ++k) o.u.col(k) = s.scale_u(z.u.col(k));
    o.p = s.scale_p(z.p);
    return o;
}

Trajectory unscale(const Trajectory& z, const ScalingMap& s) {
    Trajectory o = z;
    for (int k = 0; k < z.x.cols(); ++k) o.x.col(k) = s.unscale_x(z.x.col(k));
    for (int k = 0; k < z.u.cols(); ++k) o.u.col(k) = s.unscale_u(z.u.col(k));
    o.p = s.unscale_p(z.p);
    return o;
}

void ContinuousOCP::validate(const Vec& x, const Vec& u, const Vec& p) const {
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) throw std::logic_error(name + ": " + what);
    };
    need(x.size() == n && u.size() == m && p.size() == d, "point dimensions differ from n, m, d");
    need(static_cast<bool>(f) && static_cast<bool>(df), "dynamics callbacks missing");
    need(f(0.0, x, u, p).size() == n, "dynamics output size");
    Mat A, B, F;
    df(0.0, x, u, p, A, B, F);
    need(A.rows() == n && A.cols() == n, "df/dx size");
    need(B.rows() == n && B.cols() == m, "df/du size");
    need(F.rows() == n && F.cols() == d, "df/dp size");
    if (n_s > 0) {
        need(static_cast<bool>(s) && static_cast<bool>(ds), "path constraint callbacks missing");
        need(s(0, 0.0, x, u, p).size() == n_s, "s output size");
        Mat C, D, G;
        ds(0, 0.0, x, u, p, C, D, G);
        need(C.rows() == n_s && C.cols() == n && D.rows() == n_s && D.cols() == m && G.rows() == n_s &&
                 G.cols() == d,
             "s Jacobian sizes");
    }
    need(g_ic(x, p).size() == n_ic, "g_ic output size");
    need(g_tc(x, p).size() == n_tc, "g_tc output size");
    Mat H, K;
    dg_ic(x, p, H, K);
    need(H.rows() == n_ic && H.cols() == n && K.rows() == n_ic && K.cols() == d, "g_ic Jacobian sizes");
    dg_tc(x, p, H, K);
    need(H.rows() == n_tc && H.cols() == n && K.rows() == n_tc && K.cols() == d, "g_tc Jacobian sizes");
    if (E.size()) need(E.rows() == n, "E row count");
}

ContinuousOCP scaled_problem(const ContinuousOCP& base, const ScalingMap& s) {
    auto o = std::make_shared<ContinuousOCP>(base);
    auto sc = std::make_shared<ScalingMap>(s);
    ContinuousOCP r = base;
    r.name = base.name;
    auto X = [sc](const Vec& xh) { return sc->unscale_x(xh); };
    auto U = [sc](const Vec& uh) { return sc->unscale_u(uh); };
    auto P = [sc](const Vec& ph) { return sc->unscale_p(ph); };
    auto affx = [sc](const ExprVec& e) {
        ExprVec out(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) out[i] = sc->Sx[i] * e[i] + sc->cx[i];
        return out;
    };
    auto affu = [sc](const ExprVec& e) {
        ExprVec out(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) out[i] = sc->Su[i] * e[i] + sc->cu[i];
        return out;
    };
    auto affp = [sc](const ExprVec& e) {
        ExprVec out(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) out[i] = sc->Sp[i] * e[i] + sc->cp[i];
        return out;
    };

    r.f = [o, sc, X, U, P](double t, const Vec& x, const Vec& u, const Vec& p) -> Vec {
        return o->f(t, X(x), U(u), P(p)).cwiseQuotient(sc->Sx);
    };
    r.df = [o, sc, X, U, P](double t, const Vec& x, const Vec& u, const Vec& p, Mat& A, Mat& B, Mat& F) {
        o->df(t, X(x), U(u), P(p), A, B, F);
        Vec isx = sc->Sx.cwiseInverse();
        A = isx.asDiagonal() * A * sc->Sx.asDiagonal();
        B = isx.asDiagonal() * B * sc->Su.asDiagonal();
        F = isx.asDiagonal() * F * sc->Sp.asDiagonal();
    };
    if (base.s) {
        r.s = [o, X, U, P](int k, double t, const Vec& x, const Vec& u, const Vec& p) {
            return o->s(k, t, X(x), U(u), P(p));
        };
        r.ds = [o, sc, X, U, P](int k, double t, const Vec& x, const Vec& u, const Vec& p, Mat& C, Mat& D, Mat& G) {
            o->ds(k, t, X(x), U(u), P(p), C, D, G);
            C = C * sc->Sx.asDiagonal();
            D = D * sc->Su.asDiagonal();
            G = G * sc->Sp.asDiagonal();
        };
    }
    r.state_constraints.clear();
    for (const auto& c : base.state_constraints) {
        ConvexConstraint cc;
        cc.name = c.name;
        auto val = c.value;
        auto emit = c.emit;
        cc.value = [val, X, P](int k, const Vec& x, const Vec& p) { return val(k, X(x), P(p)); };
        cc.emit = [emit, affx, affp](int k, const ExprVec& x, const ExprVec& p, const LinExpr& slack,
                                     ProblemBuilder& pb) { emit(k, affx(x), affp(p), slack, pb); };
        r.state_constraints.push_back(cc);
    }
    if (base.input_constraints)
        r.input_constraints = [o, affu, affp](int k, const ExprVec& u, const ExprVec& p, ProblemBuilder& pb) {
            o->input_constraints(k, affu(u), affp(p), pb);
        };
    if (base.input_violation)
        r.input_violation = [o, U, P](int k, const Vec& u, const Vec& p) { return o->input_violation(k, U(u), P(p)); };
    r.g_ic = [o, X, P](const Vec& x, const Vec& p) { return o->g_ic(X(x), P(p)); };
    r.g_tc = [o, X, P](const Vec& x, const Vec& p) { return o->g_tc(X(x), P(p)); };
    r.dg_ic = [o, sc, X, P](const Vec& x, const Vec& p, Mat& H, Mat& K) {
        o->dg_ic(X(x), P(p), H, K);
        H = H * sc->Sx.asDiagonal();
        K = K * sc->Sp.asDiagonal();
    };
    r.dg_tc = [o, sc, X, P](const Vec& x, const Vec& p, Mat& H, Mat& K) {
        o->dg_tc(X(x), P(p), H, K);
        H = H * sc->Sx.asDiagonal();
        K = K * sc->Sp.asDiagonal();
    };
    if (base.terminal_cost)
        r.terminal_cost = [o, X, P](const Vec& x, const Vec& p) { return o->terminal_cost(X(x), P(p)); };
    if (base.terminal_cost_epigraph)
        r.terminal_cost_epigraph = [o, affx, affp](const ExprVec& x, const ExprVec& p, ProblemBuilder& pb) {
            return o->terminal_cost_epigraph(affx(x), affp(p), pb);
        };
    if (base.running_cost)
        r.running_cost = [o, X, U, P](const Vec& x, const Vec& u, const Vec& p) {
            return o->running_cost(X(x), U(u), P(p));
        };
    if (base.running_cost_grad)
        r.running_cost_grad = [o, sc, X, U, P](const Vec& x, const Vec& u, const Vec& p, Vec& ax, Vec& bu, Vec& fp) {
            o->running_cost_grad(X(x), U(u), P(p), ax, bu, fp);
            ax = ax.cwiseProduct(sc->Sx);
            bu = bu.cwiseProduct(sc->Su);
            fp = fp.cwiseProduct(sc->Sp);
        };
    if (base.running_cost_epigraph)
        r.running_cost_epigraph = [o, affx, affu, affp](int k, const ExprVec& x, const ExprVec& u, const ExprVec& p,
                                                        ProblemBuilder& pb) {
            return o->running_cost_epigraph(k, affx(x), affu(u), affp(p), pb);
        };
    if (base.quadratic) {
        QuadraticRunningCost q;
        const auto bq = *base.quadratic;
        q.S = [bq, sc, P](const Vec& p) -> Mat { return sc->Su.asDiagonal() * bq.S(P(p)) * sc->Su.asDiagonal(); };
        // u'S u with u = Su uh + cu expands to uh' Sh uh + uh' ell_h + const
        q.ell = [bq, sc, X, P](const Vec& x, const Vec& p) -> Vec {
            Mat S = bq.S(P(p));
            Vec l = bq.ell(X(x), P(p));
            return sc->Su.cwiseProduct(2.0 * S * sc->cu + l);
        };
        q.g = [bq, sc, X, P](const Vec& x, const Vec& p) {
            Mat S = bq.S(P(p));
            return bq.g(X(x), P(p)) + sc->cu.dot(S * sc->cu) + sc->cu.dot(bq.ell(X(x), P(p)));
        };
        q.f0 = [bq, sc, X, P](double t, const Vec& x, const Vec& p) -> Vec {
            // f = f0 + F1 (Su uh + cu)
            return (bq.f0(t, X(x), P(p)) + bq.f1(t, X(x), P(p)) * sc->cu).cwiseQuotient(sc->Sx);
        };
        q.f1 = [bq, sc, X, P](double t, const Vec& x, const Vec& p) -> Mat {
            return sc->Sx.cwiseInverse().asDiagonal() * bq.f1(t, X(x), P(p)) * sc->Su.asDiagonal();
        };
        r.quadratic = q;
    }
    if (base.dense_violation)
        r.dense_violation = [o, X, U, P](double t, const Vec& x, const Vec& u, const Vec& p) {
            return o->dense_violation(t, X(x), U(u), P(p));
        };
    // E in scaled coordinates: Sx^{-1} E (virtual control keeps its own units)
    if (base.E.size()) r.E = sc->Sx.cwiseInverse().asDiagonal() * base.E;
    return r;
}

DilatedDynamics dilate_dynamics(std::function<Vec(const Vec&, const Vec&)> f_abs,
                                std::function<void(const Vec&, const Vec&, Mat& A, Mat& B)> df_abs, int n, int m,
                                int d, int p_index) {
    if (p_index < 0 || p_index >= d) throw std::invalid_argument("dilation index out of range");
    DilatedDynamics out;
    out.f = [f_abs, p_index](double, const Vec& x, const Vec& u, const Vec& p) -> Vec {
        double s = p[p_index];
        if (!(s > 0)) throw std::domain_error("time dilation must be positive, got " + std::to_string(s));
        return s * f_abs(x, u);
    };
    out.df = [f_abs, df_abs, p_index, n, m, d](double, const Vec& x, const Vec& u, const Vec& p, Mat& A, Mat& B,
                                                Mat& F) {
        double s = p[p_index];
        if (!(s > 0)) throw std::domain_error("time dilation must be positive, got " + std::to_string(s));
        Mat Aa(n, n), Ba(n, m);
        df_abs(x, u, Aa, Ba);
        A = s * Aa;
        B = s * Ba;
        F = Mat::Zero(n, d);
        F.col(p_index) = f_abs(x, u);
    };
    return out;
}

Trajectory straight_line_guess(const Vec& x_ic, const Vec& x_tc, const Vec& u_ic, const Vec& u_tc, const Vec& p,
                               const TimeGrid& grid) {
    if (x_ic.size() != x_tc.size() || u_ic.size() != u_tc.size())
        throw std::invalid_argument("straight_line_guess: endpoint dimension mismatch");
    Trajectory z;
    z.x.resize(x_ic.size(), grid.N);
    z.u.resize(u_ic.size(), grid.N);
    for (int k = 0; k < grid.N; ++k) {
        double t = grid.t[k];
        z.x.col(k) = (1.0 - t) * x_ic + t * x_tc;
        z.u.col(k) = (1.0 - t) * u_ic + t * u_tc;
    }
    z.p = p;
    return z;
}

double relative_error(const Mat& a, const Mat& nmat) {
    double den = std::max(nmat.norm(), 1e-6);
    return (a - nmat).norm() / den;
}

JacobianCheck check_jacobians(const ContinuousOCP& ocp, int k, double t, const Vec& x, const Vec& u, const Vec& p,
                              double h) {
    JacobianCheck r;
    auto fd = [h](auto&& fun, const Vec& at, int rows) {
        Mat J(rows, at.size());
        for (int j = 0; j < at.size(); ++j) {
            Vec a = at, b = at;
            a[j] += h;
            b[j] -= h;
            J.col(j) = (fun(a) - fun(b)) / (2 * h);
        }
        return J;
    };
    Mat A, B, F;
    ocp.df(t, x, u, p, A, B, F);
    Mat An = fd([&](const Vec& v) { return ocp.f(t, v, u, p); }, x, ocp.n);
    Mat Bn = fd([&](const Vec& v) { return ocp.f(t, x, v, p); }, u, ocp.n);
    Mat Fn = fd([&](const Vec& v) { return ocp.f(t, x, u, v); }, p, ocp.n);
    r.dynamics = std::max({relative_error(A, An), relative_error(B, Bn), relative_error(F, Fn)});
    if (ocp.n_s > 0) {
        Mat C, D, G;
        ocp.ds(k, t, x, u, p, C, D, G);
        Mat Cn = fd([&](const Vec& v) { return ocp.s(k, t, v, u, p); }, x, ocp.n_s);
        Mat Dn = fd([&](const Vec& v) { return ocp.s(k, t, x, v, p); }, u, ocp.n_s);
        Mat Gn = fd([&](const Vec& v) { return ocp.s(k, t, x, u, v); }, p, ocp.n_s);
        r.path = std::max({relative_error(C, Cn), relative_error(D, Dn), relative_error(G, Gn)});
    }
    Mat H, K;
    ocp.dg_ic(x, p, H, K);
    Mat Hn = fd([&](const Vec& v) { return ocp.g_ic(v, p); }, x, ocp.n_ic);
    Mat Kn = fd([&](const Vec& v) { return ocp.g_ic(x, v); }, p, ocp.n_ic);
    r.boundary = std::max(relative_error(H, Hn), relative_error(K, Kn));
    ocp.dg_tc(x, p, H, K);
    Hn = fd([&](const Vec& v) { return ocp.g_tc(v, p); }, x, ocp.n_tc);
    Kn = fd([&](const Vec& v) { return ocp.g_tc(x, v); }, p, ocp.n_tc);
    r.boundary = std::max({r.boundary, relative_error(H, Hn), relative_error(K, Kn)});
    if (ocp.running_cost && ocp.running_cost_grad) {
        Vec ax, bu, fp;
        ocp.running_cost_grad(x, u, p, ax, bu, fp);
        auto wrap = [](double v) { return Vec::Constant(1, v); };
        Mat an = fd([&](const Vec& v) { return wrap(ocp.running_cost(v, u, p)); }, x, 1);
        Mat bn = fd([&](const Vec& v) { return wrap(ocp.running_cost(x, v, p)); }, u, 1);
        Mat pn = fd([&](const Vec& v) { return wrap(ocp.running_cost(x, u, v)); }, p, 1);
        r.running_cost = std::max({relative_error(ax.transpose(), an), relative_error(bu.transpose(), bn),
                                   relative_error(fp.transpose(), pn)});
    }
    return r;
}

} // namespace trajopt::ocp
