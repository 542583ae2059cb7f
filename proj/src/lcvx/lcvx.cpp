#include "trajopt/lcvx.hpp"

#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace trajopt::lcvx {

using conic::ExprVec;
using conic::LinExpr;
using conic::ProblemBuilder;

namespace {

int svd_rank(const Mat& M) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Mat> svd(M);
    const Vec& s = svd.singularValues();
    const double tol = 1e-10 * s[0];
    int r = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s[i] > tol) ++r;
    return r;
}

Mat skew(const Vec3& w) {
    Mat S(3, 3);
    S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return S;
}

} // namespace

bool controllability_check(const Mat& A, const Mat& B) {
    if (A.rows() != A.cols()) throw std::invalid_argument("controllability_check: A must be square");
    if (B.rows() != A.rows()) throw std::invalid_argument("controllability_check: B rows must match A");
    const int n = static_cast<int>(A.rows());
    Mat C(n, n * B.cols());
    Mat blk = B;
    for (int i = 0; i < n; ++i) {
        C.middleCols(i * B.cols(), B.cols()) = blk;
        blk = A * blk;
    }
    return svd_rank(C) == n;
}

bool transversality_check(const Vec& m, const Mat& B) {
    if (B.cols() == 0) return m.norm() > 0;
    if (B.rows() != m.size()) throw std::invalid_argument("transversality_check: dimension mismatch");
    Mat Bm(B.rows(), B.cols() + 1);
    Bm << B, m;
    return svd_rank(Bm) == svd_rank(B) + 1;
}

double lcvx_equality_gap(const Vec& sigma, const Mat& u, int first) {
    double gap = 0.0;
    for (int k = first; k < sigma.size(); ++k) gap = std::max(gap, sigma[k] - u.col(k).norm());
    return gap;
}

// ---------------------------------------------------------------------------

void ToyParams::validate() const {
    if (!(tf > 0)) throw std::invalid_argument("toy: tf must be positive");
    if (N < 2) throw std::invalid_argument("toy: N must be at least 2");
    if (!(0 < u_min && u_min < u_max)) throw std::invalid_argument("toy: need 0 < u_min < u_max");
}

ToySolution solve_toy(const ToyParams& p, const conic::SolverSettings& settings) {
    p.validate();
    const int N = p.N;
    const double h = p.tf / (N - 1);
    // exact FOH transition of the double integrator with constant drift -g
    Mat A(2, 2);
    A << 1, h, 0, 1;
    Vec Bm(2), Bp(2), w(2);
    Bm << h * h / 3, h / 2;
    Bp << h * h / 6, h / 2;
    w << -p.g * h * h / 2, -p.g * h;

    ProblemBuilder pb;
    std::vector<ExprVec> x;
    std::vector<LinExpr> u, sig;
    for (int k = 0; k < N; ++k) x.push_back(pb.add_vars(2, "x" + std::to_string(k)));
    for (int k = 0; k < N; ++k) u.push_back(LinExpr::var(pb.add_var("u")));
    for (int k = 0; k < N; ++k) sig.push_back(LinExpr::var(pb.add_var("sigma")));
    pb.add_eq(x[0], "initial condition");
    pb.add_eq(x[N - 1][0] - p.s, "terminal position");
    pb.add_eq(x[N - 1][1], "terminal velocity");
    LinExpr cost;
    for (int k = 0; k < N; ++k) {
        const std::string node = std::to_string(k);
        pb.add_le(LinExpr(p.u_min), sig[k], "sigma min " + node);
        pb.add_le(sig[k], LinExpr(p.u_max), "sigma max " + node);
        pb.add_soc(sig[k], {u[k]}, "lcvx " + node);
        LinExpr t = LinExpr::var(pb.add_var("cost"));
        pb.add_square_le(sig[k], t);
        cost += ((k == 0 || k == N - 1) ? h / 2 : h) * t;
        if (k + 1 < N)
            for (int i = 0; i < 2; ++i)
                pb.add_eq(x[k + 1][i] - (A(i, 0) * x[k][0] + A(i, 1) * x[k][1] + Bm[i] * u[k] + Bp[i] * u[k + 1] + w[i]),
                          "dynamics " + node);
    }
    pb.minimize(cost);
    auto sol = conic::solve(pb.build(), settings);

    ToySolution out;
    out.status = sol.status;
    out.feasible = sol.status == conic::Status::optimal;
    if (!out.feasible) return out;
    out.t = Vec::LinSpaced(N, 0.0, p.tf);
    out.x1.resize(N);
    out.x2.resize(N);
    out.u.resize(N);
    out.sigma.resize(N);
    for (int k = 0; k < N; ++k) {
        out.x1[k] = x[k][0].eval(sol.primal);
        out.x2[k] = x[k][1].eval(sol.primal);
        out.u[k] = u[k].eval(sol.primal);
        out.sigma[k] = sig[k].eval(sol.primal);
    }
    out.cost = cost.eval(sol.primal);
    out.gap = lcvx_equality_gap(out.sigma, out.u.transpose(), 1);
    out.boundary_residual = std::max({std::abs(out.x1[0]), std::abs(out.x2[0]), std::abs(out.x1[N - 1] - p.s),
                                      std::abs(out.x2[N - 1])});
    return out;
}

// ---------------------------------------------------------------------------

void PDGParams::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("pdg: ") + what);
    };
    need(g.allFinite() && omega.allFinite() && r0.allFinite() && v0.allFinite(), "vectors must be finite");
    need(0 < rho_min && rho_min < rho_max, "need 0 < rho_min < rho_max");
    need(0 < m_dry && m_dry < m_wet, "need 0 < m_dry < m_wet");
    need(isp > 0 && g_e > 0, "isp and g_e must be positive");
    need(0 < gamma_p && gamma_p < M_PI / 2, "gamma_p must lie in (0, pi/2)");
    need(0 < gamma_gs && gamma_gs < M_PI / 2, "gamma_gs must lie in (0, pi/2)");
    need(v_max > 0, "v_max must be positive");
    need(dt > 0, "dt must be positive");
}

PDGParams PDGParams::landing_scenario() {
    const double deg = M_PI / 180.0, kmh = 1.0 / 3.6;
    PDGParams p;
    p.g = Vec3(0, 0, -3.71);
    p.m_dry = 1505;
    p.m_wet = 1905;
    p.isp = 225;
    p.omega = Vec3(3.5e-3, 0, 2e-3) * deg;
    p.rho_min = 4971;
    p.rho_max = 13258;
    p.gamma_gs = 86 * deg;
    p.gamma_p = 40 * deg;
    p.v_max = 500 * kmh;
    p.r0 = Vec3(2000, 0, 1500);
    p.v0 = Vec3(288, 108, -270) * kmh;
    p.dt = 1.0;
    return p;
}

int pdg_nodes(const PDGParams& p, double tf) {
    if (!(tf >= p.dt)) {
        std::ostringstream os;
        os << "pdg: time of flight " << tf << " s is shorter than one step (" << p.dt << " s)";
        throw std::invalid_argument(os.str());
    }
    return static_cast<int>(std::ceil(tf / p.dt - 1e-9)) + 1;
}

double pdg_z_low(const PDGParams& p, double t) { return std::log(p.m_wet - p.alpha() * p.rho_max * t); }
double pdg_z_high(const PDGParams& p, double t) { return std::log(p.m_wet - p.alpha() * p.rho_min * t); }

double pdg_input_violation(const PDGParams& p, double t, double z, const Vec3& u, double xi) {
    const double z0 = pdg_z_low(p, t), dz = z - z0;
    const double mu_min = p.rho_min * std::exp(-z0), mu_max = p.rho_max * std::exp(-z0);
    double v = 0.0;
    v = std::max(v, mu_min * (1 - dz + 0.5 * dz * dz) - xi);
    v = std::max(v, xi - mu_max * (1 - dz));
    v = std::max(v, u.norm() - xi);
    v = std::max(v, xi * std::cos(p.gamma_p) - u.z());
    v = std::max(v, z0 - z);
    v = std::max(v, z - pdg_z_high(p, t));
    return v;
}

PDGProgram build_pdg(const PDGParams& p, double tf) {
    p.validate();
    PDGProgram out;
    const int N = pdg_nodes(p, tf);
    const double h = tf / (N - 1);
    out.N = N;
    out.h = h;

    // ZOH transition of x = (r, v) with input (u + g)
    Mat Ac = Mat::Zero(6, 6);
    const Mat W = skew(p.omega);
    Ac.topRightCorner(3, 3) = Mat::Identity(3, 3);
    Ac.bottomLeftCorner(3, 3) = -W * W;
    Ac.bottomRightCorner(3, 3) = -2 * W;
    Mat M = Mat::Zero(9, 9);
    M.topLeftCorner(6, 6) = Ac;
    M.block(3, 6, 3, 3) = Mat::Identity(3, 3);
    Mat E = (M * h).exp();
    const Mat Ad = E.topLeftCorner(6, 6), Bd = E.topRightCorner(6, 3);
    const Vec wg = Bd * p.g;

    ProblemBuilder pb;
    for (int k = 0; k < N; ++k) {
        out.r.push_back(pb.add_vars(3, "r" + std::to_string(k)));
        out.v.push_back(pb.add_vars(3, "v" + std::to_string(k)));
        out.z.push_back(LinExpr::var(pb.add_var("z" + std::to_string(k))));
    }
    for (int k = 0; k + 1 < N; ++k) {
        out.u.push_back(pb.add_vars(3, "u" + std::to_string(k)));
        out.xi.push_back(LinExpr::var(pb.add_var("xi" + std::to_string(k))));
    }
    const double a = p.alpha();
    const double cgs = 1.0 / std::tan(p.gamma_gs);
    LinExpr cost;
    for (int k = 0; k < N; ++k) {
        const std::string node = std::to_string(k);
        const double t = k * h;
        const auto &r = out.r[k], &v = out.v[k];
        const LinExpr& z = out.z[k];
        // glideslope about the vertical axis
        pb.add_ge(r[2] - cgs * r[0], "glideslope " + node);
        pb.add_ge(r[2] + cgs * r[0], "glideslope " + node);
        pb.add_ge(r[2] - cgs * r[1], "glideslope " + node);
        pb.add_ge(r[2] + cgs * r[1], "glideslope " + node);
        pb.add_soc(LinExpr(p.v_max), v, "speed " + node);
        const double z0 = pdg_z_low(p, t);
        pb.add_le(LinExpr(z0), z, "z low " + node);
        pb.add_le(z, LinExpr(pdg_z_high(p, t)), "z high " + node);
        if (k + 1 == N) break;

        const auto& u = out.u[k];
        const LinExpr& xi = out.xi[k];
        const double mu_min = p.rho_min * std::exp(-z0), mu_max = p.rho_max * std::exp(-z0);
        const LinExpr dz = z - z0;
        // mu_min (1 - dz + dz^2 / 2) <= xi
        pb.add_square_le(std::sqrt(0.5 * mu_min) * dz, xi - mu_min * (1.0 - dz), "thrust low " + node);
        pb.add_le(xi, mu_max * (1.0 - dz), "thrust high " + node);
        pb.add_soc(xi, u, "lcvx " + node);
        pb.add_ge(u[2] - std::cos(p.gamma_p) * xi, "pointing " + node);

        for (int i = 0; i < 6; ++i) {
            LinExpr rhs(wg[i]);
            for (int j = 0; j < 3; ++j) rhs += Ad(i, j) * out.r[k][j] + Ad(i, j + 3) * out.v[k][j] + Bd(i, j) * u[j];
            const LinExpr& nxt = i < 3 ? out.r[k + 1][i] : out.v[k + 1][i - 3];
            pb.add_eq(nxt - rhs, "dynamics " + node);
        }
        pb.add_eq(out.z[k + 1] - (z - a * h * xi), "mass " + node);
        cost += h * xi;
    }
    for (int i = 0; i < 3; ++i) {
        pb.add_eq(out.r[0][i] - p.r0[i], "initial position");
        pb.add_eq(out.v[0][i] - p.v0[i], "initial velocity");
        pb.add_eq(out.r[N - 1][i], "terminal position");
        pb.add_eq(out.v[N - 1][i], "terminal velocity");
    }
    pb.add_eq(out.z[0] - std::log(p.m_wet), "initial mass");
    pb.add_le(LinExpr(std::log(p.m_dry)), out.z[N - 1], "dry mass");
    pb.minimize(cost);
    out.program = pb.build();
    return out;
}

Vec PDGSolution::thrust() const {
    Vec T(u.cols());
    for (int k = 0; k < u.cols(); ++k) T[k] = std::exp(z[k]) * u.col(k).norm();
    return T;
}

PDGSolution solve_pdg(const PDGParams& p, double tf, const conic::SolverSettings& settings) {
    PDGProgram prog = build_pdg(p, tf);
    auto sol = conic::solve(prog.program, settings);
    PDGSolution out;
    out.tf = tf;
    out.h = prog.h;
    out.N = prog.N;
    out.status = sol.status;
    out.feasible = sol.status == conic::Status::optimal;
    if (!out.feasible) return out;
    const int N = prog.N;
    out.t = Vec::LinSpaced(N, 0.0, tf);
    out.r.resize(3, N);
    out.v.resize(3, N);
    out.z.resize(N);
    out.u.resize(3, N - 1);
    out.xi.resize(N - 1);
    const double cgs = 1.0 / std::tan(p.gamma_gs);
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < 3; ++i) {
            out.r(i, k) = prog.r[k][i].eval(sol.primal);
            out.v(i, k) = prog.v[k][i].eval(sol.primal);
        }
        out.z[k] = prog.z[k].eval(sol.primal);
        if (k + 1 < N) {
            for (int i = 0; i < 3; ++i) out.u(i, k) = prog.u[k][i].eval(sol.primal);
            out.xi[k] = prog.xi[k].eval(sol.primal);
            out.cost += prog.h * out.xi[k];
        }
        const Vec3 r = out.r.col(k);
        double slack = std::min({r.z() - cgs * std::abs(r.x()), r.z() - cgs * std::abs(r.y())});
        if (slack <= 1e-3) ++out.glideslope_active;
        if (out.v.col(k).norm() >= p.v_max - 1e-3) ++out.speed_active;
    }
    out.final_mass = std::exp(out.z[N - 1]);
    out.gap = lcvx_equality_gap(out.xi, out.u, 1);
    return out;
}

GoldenResult golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
    if (!(lo < hi)) throw std::invalid_argument("golden_section: need lo < hi");
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    GoldenResult best;
    best.fx = std::numeric_limits<double>::infinity();
    best.x = std::numeric_limits<double>::quiet_NaN();
    auto eval = [&](double x) {
        double v = f(x);
        ++best.evaluations;
        if (v < best.fx || (v == best.fx && x < best.x)) {
            best.fx = v;
            best.x = x;
        }
        return v;
    };
    double a = lo, b = hi;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = eval(c), fd = eval(d);
    while (b - a > tol) {
        bool left;
        if (std::isinf(fc) && std::isinf(fd))
            left = false;
        else
            left = fc <= fd;
        if (left) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    if (!std::isfinite(best.fx)) throw std::runtime_error("golden_section: no finite value in the bracket");
    return best;
}

PDGSearch golden_search_tf(const PDGParams& p, double lo, double hi, const conic::SolverSettings& settings) {
    PDGSearch s;
    auto f = [&](double tf) {
        PDGSolution sol = solve_pdg(p, tf, settings);
        double c = sol.feasible ? sol.cost : std::numeric_limits<double>::infinity();
        s.evaluations.emplace_back(tf, c);
        return c;
    };
    GoldenResult g;
    try {
        g = golden_section(f, lo, hi, p.dt);
    } catch (const std::runtime_error&) {
        std::ostringstream os;
        os << "pdg: no feasible time of flight in [" << lo << ", " << hi << "] s";
        throw std::runtime_error(os.str());
    }
    s.tf = g.x;
    s.solution = solve_pdg(p, g.x, settings);
    return s;
}

PDGPropagation propagate_pdg(const PDGParams& p, const PDGSolution& sol) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;
    const int N = sol.N;
    const Mat W = skew(p.omega);
    const double a = p.alpha();
    PDGPropagation out;
    out.r.resize(3, N);
    out.v.resize(3, N);
    out.m.resize(N);
    State y(7);
    for (int i = 0; i < 3; ++i) {
        y[i] = sol.r(i, 0);
        y[3 + i] = sol.v(i, 0);
    }
    y[6] = std::exp(sol.z[0]);
    auto store = [&](int k) {
        for (int i = 0; i < 3; ++i) {
            out.r(i, k) = y[i];
            out.v(i, k) = y[3 + i];
        }
        out.m[k] = y[6];
    };
    store(0);
    for (int k = 0; k + 1 < N; ++k) {
        const Vec3 uk = sol.u.col(k);
        auto rhs = [&](const State& s, State& ds, double) {
            Vec3 r(s[0], s[1], s[2]), v(s[3], s[4], s[5]);
            const double m = s[6];
            const Vec3 T = m * uk;
            Vec3 acc = p.g + T / m - W * (W * r) - 2.0 * W * v;
            for (int i = 0; i < 3; ++i) {
                ds[i] = v[i];
                ds[3 + i] = acc[i];
            }
            ds[6] = -a * T.norm();
        };
        auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(1e-10, 1e-10);
        odeint::integrate_adaptive(stepper, rhs, y, sol.t[k], sol.t[k + 1], sol.h / 10);
        store(k + 1);
    }
    out.max_position_error = (out.r - sol.r).colwise().norm().maxCoeff();
    out.max_velocity_error = (out.v - sol.v).colwise().norm().maxCoeff();
    out.max_mass_error = (out.m - sol.mass()).cwiseAbs().maxCoeff();
    out.final_mass = out.m[N - 1];
    return out;
}

} // namespace trajopt::lcvx
