#include "trajopt/report.hpp"

#include <chrono>
#include <cmath>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

namespace trajopt::report {

namespace {

using lcvx::Vec3;
using Clock = std::chrono::steady_clock;

constexpr double kInf = std::numeric_limits<double>::infinity();

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Eigen::Matrix3d skew(const Vec3& w) {
    Eigen::Matrix3d S;
    S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return S;
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double ocp_node_violation(const ContinuousOCP& o, const TimeGrid& grid, bool last_unused, int k,
                          const Trajectory& z) {
    const Vec x = z.x.col(k), u = z.u.col(k);
    double v = 0.0;
    if (o.n_s > 0 && o.s) v = std::max(v, o.s(k, grid.t[k], x, u, z.p).maxCoeff());
    for (const auto& c : o.state_constraints) v = std::max(v, c.value(k, x, z.p));
    if (o.input_violation && !(last_unused && k == z.N() - 1)) v = std::max(v, o.input_violation(k, u, z.p));
    return v;
}

// Trajectory in the (x1, x2) / (u, sigma) layout on normalized time.
CaseProblem toy_problem(const lcvx::ToyParams& P, int N) {
    CaseProblem cp;
    ContinuousOCP& o = cp.ocp;
    o.name = "lcvx-toy";
    o.n = 2;
    o.m = 2;
    o.n_ic = o.n_tc = 2;
    const double tf = P.tf, g = P.g;
    o.f = [tf, g](double, const Vec& x, const Vec& u, const Vec&) -> Vec {
        Vec dx(2);
        dx << tf * x[1], tf * (u[0] - g);
        return dx;
    };
    o.df = [tf](double, const Vec&, const Vec&, const Vec&, Mat& A, Mat& B, Mat& F) {
        A = Mat::Zero(2, 2);
        A(0, 1) = tf;
        B = Mat::Zero(2, 2);
        B(1, 0) = tf;
        F = Mat::Zero(2, 0);
    };
    o.input_violation = [P](int, const Vec& u, const Vec&) {
        return std::max({0.0, P.u_min - u[1], u[1] - P.u_max, std::abs(u[0]) - u[1]});
    };
    o.dense_violation = [P](double, const Vec&, const Vec& u, const Vec&) {
        return std::max({0.0, P.u_min - u[1], u[1] - P.u_max, std::abs(u[0]) - u[1]});
    };
    o.g_ic = [](const Vec& x, const Vec&) -> Vec { return x; };
    o.g_tc = [P](const Vec& x, const Vec&) -> Vec {
        Vec r(2);
        r << x[0] - P.s, x[1];
        return r;
    };
    o.dg_ic = o.dg_tc = [](const Vec&, const Vec&, Mat& H, Mat& K) {
        H = Mat::Identity(2, 2);
        K = Mat::Zero(2, 0);
    };
    o.terminal_cost = [](const Vec&, const Vec&) { return 0.0; };
    o.running_cost = [tf](const Vec&, const Vec& u, const Vec&) { return tf * u[1] * u[1]; };
    cp.scaling = ScalingMap::identity(2, 2, 0);
    cp.grid = TimeGrid::uniform(N);
    cp.scheme = disc::Scheme::foh;
    cp.x_names = {"x1", "x2"};
    cp.u_names = {"u", "sigma"};
    cp.absolute_time = [tf](const Trajectory&, double t) { return tf * t; };
    cp.lcvx_gap = [](const Trajectory& z) {
        double gap = 0.0;
        for (int k = 1; k < z.N(); ++k) gap = std::max(gap, z.u(1, k) - std::abs(z.u(0, k)));
        return gap;
    };
    return cp;
}

// Physical state (r, v, m) with input (u, xi); u is the thrust acceleration.
CaseProblem pdg_problem(const lcvx::PDGParams& P, double tf, int N) {
    CaseProblem cp;
    ContinuousOCP& o = cp.ocp;
    o.name = "lcvx-pdg";
    o.n = 7;
    o.m = 4;
    o.n_ic = 7;
    o.n_tc = 6;
    const Eigen::Matrix3d W = skew(P.omega), W2 = W * W;
    const double a = P.alpha();
    o.f = [P, tf, W, W2, a](double, const Vec& x, const Vec& u, const Vec&) -> Vec {
        Vec dx(7);
        const Vec3 r = x.head<3>(), v = x.segment<3>(3), uu = u.head<3>();
        dx.head<3>() = v;
        dx.segment<3>(3) = P.g + uu - W2 * r - 2.0 * W * v;
        dx[6] = -a * x[6] * uu.norm();
        return tf * dx;
    };
    o.df = [tf, W, W2, a](double, const Vec& x, const Vec& u, const Vec&, Mat& A, Mat& B, Mat& F) {
        const Vec3 uu = u.head<3>();
        const double un = uu.norm();
        A = Mat::Zero(7, 7);
        A.block<3, 3>(0, 3).setIdentity();
        A.block<3, 3>(3, 0) = -W2;
        A.block<3, 3>(3, 3) = -2.0 * W;
        A(6, 6) = -a * un;
        B = Mat::Zero(7, 4);
        B.block<3, 3>(3, 0).setIdentity();
        if (un > 0) B.block<1, 3>(6, 0) = -a * x[6] * uu.transpose() / un;
        A *= tf;
        B *= tf;
        F = Mat::Zero(7, 0);
    };
    const double cgs = 1.0 / std::tan(P.gamma_gs);
    ocp::ConvexConstraint gs{"glideslope", [cgs](int, const Vec& x, const Vec&) {
                                 return cgs * std::max(std::abs(x[0]), std::abs(x[1])) - x[2];
                             }, {}};
    ocp::ConvexConstraint speed{"speed", [P](int, const Vec& x, const Vec&) {
                                    return x.segment<3>(3).norm() - P.v_max;
                                }, {}};
    ocp::ConvexConstraint dry{"dry mass", [P](int, const Vec& x, const Vec&) { return P.m_dry - x[6]; }, {}};
    o.state_constraints = {gs, speed, dry};
    // the input constraints couple u with the mass, so node_violation handles them
    o.dense_violation = [P, cgs](double, const Vec& x, const Vec& u, const Vec&) {
        const Vec3 uu = u.head<3>();
        const double thrust = x[6] * uu.norm();
        double v = 0.0;
        v = std::max(v, (P.rho_min - thrust) / P.rho_max);
        v = std::max(v, (thrust - P.rho_max) / P.rho_max);
        v = std::max(v, std::cos(P.gamma_p) * uu.norm() - uu.z());
        v = std::max(v, cgs * std::max(std::abs(x[0]), std::abs(x[1])) - x[2]);
        v = std::max(v, x.segment<3>(3).norm() - P.v_max);
        v = std::max(v, P.m_dry - x[6]);
        return v;
    };
    o.g_ic = [P](const Vec& x, const Vec&) -> Vec {
        Vec r(7);
        r << x.head<3>() - P.r0, x.segment<3>(3) - P.v0, x[6] - P.m_wet;
        return r;
    };
    o.g_tc = [](const Vec& x, const Vec&) -> Vec { return x.head<6>(); };
    o.dg_ic = [](const Vec&, const Vec&, Mat& H, Mat& K) {
        H = Mat::Identity(7, 7);
        K = Mat::Zero(7, 0);
    };
    o.dg_tc = [](const Vec&, const Vec&, Mat& H, Mat& K) {
        H = Mat::Identity(6, 7);
        K = Mat::Zero(6, 0);
    };
    o.terminal_cost = [](const Vec&, const Vec&) { return 0.0; };
    o.running_cost = [tf](const Vec&, const Vec& u, const Vec&) { return tf * u[3]; };
    cp.scaling = ScalingMap::identity(7, 4, 0);
    cp.grid = TimeGrid::uniform(N);
    cp.scheme = disc::Scheme::zoh;
    cp.x_names = {"rx", "ry", "rz", "vx", "vy", "vz", "m"};
    cp.u_names = {"ux", "uy", "uz", "xi"};
    cp.last_input_unused = true;
    cp.absolute_time = [tf](const Trajectory&, double t) { return tf * t; };
    // in units of rho_max / m_wet
    const double unit = P.rho_max / P.m_wet;
    cp.lcvx_gap = [unit](const Trajectory& z) {
        double gap = 0.0;
        for (int k = 0; k + 1 < z.N(); ++k) gap = std::max(gap, z.u(3, k) - z.u.col(k).head<3>().norm());
        return gap / unit;
    };
    const TimeGrid grid = cp.grid;
    cp.node_violation = [P, tf, grid, o](int k, const Trajectory& z) {
        double v = ocp_node_violation(o, grid, true, k, z);
        if (k + 1 < z.N()) {
            const Vec3 uu = z.u.col(k).head<3>();
            v = std::max(v, lcvx::pdg_input_violation(P, tf * grid.t[k], std::log(z.x(6, k)), uu, z.u(3, k)));
        }
        return std::max(v, 0.0);
    };
    return cp;
}

Trajectory pdg_trajectory(const lcvx::PDGSolution& s) {
    Trajectory z;
    const int N = s.N;
    z.x.resize(7, N);
    z.x.topRows(3) = s.r;
    z.x.middleRows(3, 3) = s.v;
    z.x.row(6) = s.mass().transpose();
    z.u.resize(4, N);
    z.u.block(0, 0, 3, N - 1) = s.u;
    z.u.block(3, 0, 1, N - 1) = s.xi.transpose();
    z.u.col(N - 1) = z.u.col(N - 2);
    z.p = Vec(0);
    return z;
}

std::vector<std::string> numbered(const std::string& base, std::initializer_list<const char*> suffixes) {
    std::vector<std::string> out;
    for (const char* s : suffixes) out.push_back(base + s);
    return out;
}

template <class V>
void append(std::vector<std::string>& a, const V& b) {
    a.insert(a.end(), b.begin(), b.end());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json record_json(const scp::IterationRecord& r) {
    return {{"iter", r.iter},
            {"cost_linear", number_or_null(r.cost_linear)},
            {"cost_reference", number_or_null(r.cost_reference)},
            {"cost_nonlinear", number_or_null(r.cost_nonlinear)},
            {"rho", number_or_null(r.rho)},
            {"eta_before", r.eta_before},
            {"eta_after", r.eta_after},
            {"lambda", r.lambda},
            {"accepted", r.accepted},
            {"vc_norm", r.vc_norm},
            {"defect", number_or_null(r.defect)},
            {"trust_violated", r.trust_violated},
            {"state_violated", r.state_violated},
            {"solve_status", conic::to_string(r.solve_status)},
            {"solver_iterations", r.solver_iterations},
            {"formulate_ms", r.times.formulate_ms},
            {"discretize_ms", r.times.discretize_ms},
            {"solve_ms", r.times.solve_ms}};
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing: " + std::strerror(errno));
    out << content;
    out.close();
    if (!out) throw std::runtime_error("error writing '" + path.string() + "': " + std::strerror(errno));
}

} // namespace

CaseProblem make_problem(const RunConfig& cfg, int N, double tf) {
    CaseProblem cp;
    switch (cfg.kind) {
    case Case::lcvx_toy: {
        lcvx::ToyParams P = cfg.toy;
        P.N = N;
        cp = toy_problem(P, N);
        break;
    }
    case Case::lcvx_pdg:
        if (!(tf > 0)) throw std::invalid_argument("lcvx-pdg needs a positive time of flight");
        cp = pdg_problem(cfg.pdg, tf, N);
        break;
    case Case::quadrotor: {
        cp.ocp = vehicles::quadrotor_ocp(cfg.quad);
        cp.scaling = vehicles::quadrotor_scaling(cfg.quad);
        cp.grid = TimeGrid::uniform(N);
        cp.scheme = cfg.scheme;
        cp.x_names = {"rx", "ry", "rz", "vx", "vy", "vz"};
        cp.u_names = {"ax", "ay", "az", "sigma"};
        cp.absolute_time = [](const Trajectory& z, double t) { return z.p[0] * t; };
        cp.lcvx_gap = [](const Trajectory& z) {
            double gap = 0.0;
            for (int k = 0; k < z.N(); ++k) gap = std::max(gap, std::abs(z.u(3, k) - z.u.col(k).head<3>().norm()));
            return gap;
        };
        break;
    }
    case Case::freeflyer: {
        cp.ocp = vehicles::freeflyer_ocp(cfg.ff, N);
        cp.scaling = vehicles::freeflyer_scaling(cfg.ff, N);
        cp.grid = TimeGrid::uniform(N);
        cp.scheme = cfg.scheme;
        cp.x_names = numbered("r", {"x", "y", "z"});
        append(cp.x_names, numbered("v", {"x", "y", "z"}));
        append(cp.x_names, numbered("q", {"x", "y", "z", "w"}));
        append(cp.x_names, numbered("w", {"x", "y", "z"}));
        cp.u_names = numbered("T", {"x", "y", "z"});
        append(cp.u_names, numbered("M", {"x", "y", "z"}));
        cp.absolute_time = [](const Trajectory& z, double t) { return z.p[0] * t; };
        break;
    }
    }
    if (!cp.node_violation) {
        const ContinuousOCP o = cp.ocp;
        const TimeGrid grid = cp.grid;
        const bool last = cp.last_input_unused;
        cp.node_violation = [o, grid, last](int k, const Trajectory& z) {
            return std::max(0.0, ocp_node_violation(o, grid, last, k, z));
        };
    }
    return cp;
}

json to_json(const Checks& c) {
    json j = {{"integrator_ok", c.integrator_ok},
              {"max_defect", number_or_null(c.max_defect)},
              {"max_defect_unscaled", number_or_null(c.max_defect_unscaled)},
              {"max_node_deviation", number_or_null(c.max_node_deviation)},
              {"node_deviation", json::array()},
              {"lcvx_gap", c.has_lcvx_gap ? json(c.lcvx_gap) : json(nullptr)},
              {"max_constraint_violation", c.max_constraint_violation},
              {"max_dense_violation", number_or_null(c.max_dense_violation)},
              {"boundary_residual", c.boundary_residual}};
    for (double d : c.node_deviation) j["node_deviation"].push_back(number_or_null(d));
    if (!c.integrator_ok) j["integrator_error"] = c.integrator_error;
    return j;
}

bool checks_pass(const Checks& c, double tol) {
    return c.integrator_ok && c.max_defect <= tol && c.max_constraint_violation <= tol && c.boundary_residual <= tol &&
           (!c.has_lcvx_gap || c.lcvx_gap <= tol);
}

Checks propagate_and_verify(const CaseProblem& prob, const Trajectory& z, int samples, Dense* dense) {
    const ContinuousOCP& o = prob.ocp;
    const int N = z.N();
    if (N != prob.grid.N || z.x.rows() != o.n || z.u.rows() != o.m || z.p.size() != o.d)
        throw std::invalid_argument("trajectory shape does not match the case (" + std::to_string(o.n) + " states, " +
                                    std::to_string(o.m) + " inputs, " + std::to_string(o.d) + " parameters, " +
                                    std::to_string(prob.grid.N) + " nodes)");
    Checks c;

    for (int k = 0; k < N; ++k) c.max_constraint_violation = std::max(c.max_constraint_violation, prob.node_violation(k, z));
    c.boundary_residual =
        std::max(inf_norm(o.g_ic(z.x.col(0), z.p)), inf_norm(o.g_tc(z.x.col(N - 1), z.p)));
    if (prob.lcvx_gap) {
        c.has_lcvx_gap = true;
        c.lcvx_gap = prob.lcvx_gap(z);
    }

    try {
        // restarted at every node: defects and the dense artifact
        auto res = disc::defects(o, z, prob.grid, prob.scheme, samples);
        c.max_defect_unscaled = res.max_defect;
        for (const Vec& d : res.defects) c.max_defect = std::max(c.max_defect, inf_norm(d.cwiseQuotient(prob.scaling.Sx)));
        for (const auto& seg : res.segments)
            for (std::size_t i = 0; i < seg.t.size(); ++i) {
                // node-indexed slacks (free-flyer chi) have no meaning between nodes,
                // so only the case's dense measure is evaluated here
                if (o.dense_violation)
                    c.max_dense_violation =
                        std::max(c.max_dense_violation, o.dense_violation(seg.t[i], seg.x[i], seg.u[i], z.p));
            }
        if (dense) dense->segments = std::move(res.segments);

        // one continuous simulation from the initial state
        Mat xs;
        disc::simulate(o, z, prob.grid, prob.scheme, 0, &xs);
        c.node_deviation.resize(N);
        for (int k = 0; k < N; ++k) {
            c.node_deviation[k] = inf_norm((xs.col(k) - z.x.col(k)).cwiseQuotient(prob.scaling.Sx));
            c.max_node_deviation = std::max(c.max_node_deviation, c.node_deviation[k]);
        }
    } catch (const std::exception& e) {
        c.integrator_ok = false;
        c.integrator_error = e.what();
        c.max_defect = c.max_defect_unscaled = c.max_node_deviation = kInf;
        c.node_deviation.assign(N, kInf);
        if (dense) dense->segments.clear();
    }
    return c;
}

RunResult run_case(const RunConfig& cfg) {
    const auto t0 = Clock::now();
    RunResult r;
    r.config = cfg;
    try {
        CaseProblem prob;
        switch (cfg.kind) {
        case Case::lcvx_toy: {
            lcvx::ToyParams P = cfg.toy;
            P.N = cfg.N;
            auto s = lcvx::solve_toy(P, cfg.solver);
            r.lcvx_details = {{"status", conic::to_string(s.status)}, {"tf", P.tf}};
            if (!s.feasible) {
                r.error = true;
                r.message = std::string("relaxed toy problem not solved: ") + conic::to_string(s.status);
                break;
            }
            prob = make_problem(cfg, P.N);
            r.solution.x.resize(2, P.N);
            r.solution.x.row(0) = s.x1.transpose();
            r.solution.x.row(1) = s.x2.transpose();
            r.solution.u.resize(2, P.N);
            r.solution.u.row(0) = s.u.transpose();
            r.solution.u.row(1) = s.sigma.transpose();
            r.solution.p = Vec(0);
            r.cost = s.cost;
            r.converged = true;
            r.lcvx_details["cost"] = s.cost;
            r.lcvx_details["gap"] = s.gap;
            r.lcvx_details["boundary_residual"] = s.boundary_residual;
            break;
        }
        case Case::lcvx_pdg: {
            auto search = lcvx::golden_search_tf(cfg.pdg, cfg.tf_lo, cfg.tf_hi, cfg.solver);
            const auto& s = search.solution;
            json evals = json::array();
            for (auto [tf, cost] : search.evaluations) evals.push_back({tf, number_or_null(cost)});
            r.lcvx_details = {{"status", conic::to_string(s.status)}, {"tf", search.tf}, {"evaluations", evals}};
            if (!s.feasible) {
                r.error = true;
                r.message = std::string("powered descent not solved at the best time of flight: ") +
                            conic::to_string(s.status);
                break;
            }
            const Vec thrust = s.thrust();
            const auto prop = lcvx::propagate_pdg(cfg.pdg, s);
            r.lcvx_details["cost"] = s.cost;
            r.lcvx_details["final_mass"] = s.final_mass;
            r.lcvx_details["gap"] = s.gap;
            r.lcvx_details["glideslope_active"] = s.glideslope_active;
            r.lcvx_details["speed_active"] = s.speed_active;
            r.lcvx_details["min_thrust"] = thrust.minCoeff();
            r.lcvx_details["max_thrust"] = thrust.maxCoeff();
            r.lcvx_details["propagation"] = {{"max_position_error", prop.max_position_error},
                                             {"max_velocity_error", prop.max_velocity_error},
                                             {"max_mass_error", prop.max_mass_error},
                                             {"final_mass", prop.final_mass}};
            prob = make_problem(cfg, s.N, search.tf);
            r.solution = pdg_trajectory(s);
            r.cost = s.cost;
            r.converged = true;
            break;
        }
        case Case::quadrotor:
        case Case::freeflyer: {
            prob = make_problem(cfg, cfg.N);
            const Trajectory guess = cfg.kind == Case::quadrotor ? vehicles::quadrotor_guess(cfg.quad, prob.grid)
                                                                 : vehicles::freeflyer_guess(cfg.ff, prob.grid);
            scp::SCPReport rep = cfg.algorithm == Algorithm::gusto
                                     ? gusto::run(prob.ocp, guess, cfg.gusto, prob.scaling, prob.grid, prob.scheme)
                                     : scvx::run(prob.ocp, guess, cfg.scvx, prob.scaling, prob.grid, prob.scheme);
            r.converged = rep.converged;
            r.soft_failure = rep.soft_failure;
            r.error = rep.error;
            r.message = rep.message;
            r.cost = rep.cost;
            r.solution = rep.solution;
            r.scp = std::move(rep);
            break;
        }
        }
        if (r.solution.x.size()) {
            r.grid = prob.grid;
            r.x_names = prob.x_names;
            r.u_names = prob.u_names;
            for (int k = 0; k < prob.grid.N; ++k) r.time.push_back(prob.absolute_time(r.solution, prob.grid.t[k]));
            r.checks = propagate_and_verify(prob, r.solution, 10, &r.dense);
        }
    } catch (const std::exception& e) {
        r.error = true;
        r.message = to_string(cfg.kind) + ": " + e.what();
    }
    r.wall_ms = ms_since(t0);
    return r;
}

int exit_code(const RunResult& r) {
    if (r.error || r.solution.x.size() == 0) return 1;
    if (r.soft_failure) return 2;
    if (r.converged) return checks_pass(r.checks) ? 0 : 2;
    // iteration limit: still fine when the last iterate is feasible
    const bool vc_ok = !r.scp || r.config.algorithm != Algorithm::scvx || r.scp->vc_norm <= r.config.scvx.vc_tol;
    return vc_ok && checks_pass(r.checks) ? 0 : 2;
}

json report_json(const RunResult& r) {
    json j;
    j["case"] = to_string(r.config.kind);
    j["algorithm"] = to_string(r.config.algorithm);
    j["config"] = to_json(r.config);
    j["converged"] = r.converged;
    j["soft_failure"] = r.soft_failure;
    j["error"] = r.error;
    j["message"] = r.message;
    j["cost"] = number_or_null(r.cost);
    j["checks"] = to_json(r.checks);
    json iters = json::array();
    json timings = {{"formulate_ms", 0.0}, {"discretize_ms", 0.0}, {"solve_ms", 0.0}};
    if (r.scp) {
        for (const auto& rec : r.scp->iterations) iters.push_back(record_json(rec));
        j["vc_norm"] = r.scp->vc_norm;
        j["max_defect_algorithm"] = number_or_null(r.scp->max_defect);
        timings = {{"formulate_ms", r.scp->totals.formulate_ms},
                   {"discretize_ms", r.scp->totals.discretize_ms},
                   {"solve_ms", r.scp->totals.solve_ms}};
    }
    timings["wall_ms"] = r.wall_ms;
    j["iterations"] = iters;
    j["timings"] = timings;
    if (r.solution.p.size()) {
        j["p"] = trajopt::to_json(r.solution.p);
        j["tf"] = r.solution.p[0];
    } else if (!r.time.empty()) {
        j["tf"] = r.time.back();
    }
    if (!r.lcvx_details.is_null()) j["lcvx"] = r.lcvx_details;
    return j;
}

json trajectory_json(const RunResult& r) {
    json j = ocp::to_json(r.solution, r.grid);
    j["case"] = to_string(r.config.kind);
    j["params"] = r.config.params_json();
    j["scheme"] = disc::to_string(r.config.kind == Case::lcvx_pdg ? disc::Scheme::zoh : r.config.scheme);
    j["time"] = r.time;
    j["x_names"] = r.x_names;
    j["u_names"] = r.u_names;
    json dense = json::array();
    for (const auto& seg : r.dense.segments) {
        json s = {{"t_dense", seg.t}, {"x_dense", json::array()}, {"u_dense", json::array()}};
        for (const Vec& x : seg.x) s["x_dense"].push_back(std::vector<double>(x.data(), x.data() + x.size()));
        for (const Vec& u : seg.u) s["u_dense"].push_back(std::vector<double>(u.data(), u.data() + u.size()));
        dense.push_back(std::move(s));
    }
    j["dense"] = std::move(dense);
    return j;
}

void emit(const RunResult& r, const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    fs::create_directories(root);
    write_file(root / "report.json", report_json(r).dump(2) + "\n");
    write_file(root / "trajectory.json", trajectory_json(r).dump(2) + "\n");

    std::string conv = "iter,cost_linear,cost_nonlinear,rho,eta,lambda,accepted,solve_ms,discretize_ms,formulate_ms\n";
    if (r.scp)
        for (const auto& rec : r.scp->iterations)
            conv += std::to_string(rec.iter) + "," + fmt(rec.cost_linear) + "," + fmt(rec.cost_nonlinear) + "," +
                    fmt(rec.rho) + "," + fmt(rec.eta_before) + "," + fmt(rec.lambda) + "," +
                    (rec.accepted ? "1" : "0") + "," + fmt(rec.times.solve_ms) + "," +
                    fmt(rec.times.discretize_ms) + "," + fmt(rec.times.formulate_ms) + "\n";
    write_file(root / "convergence.csv", conv);

    std::string ts = "t";
    for (const auto& n : r.x_names) ts += "," + n;
    for (const auto& n : r.u_names) ts += "," + n;
    ts += "\n";
    for (int k = 0; k < r.solution.N(); ++k) {
        ts += fmt(r.time[k]);
        for (int i = 0; i < r.solution.x.rows(); ++i) ts += "," + fmt(r.solution.x(i, k));
        for (int i = 0; i < r.solution.u.rows(); ++i) ts += "," + fmt(r.solution.u(i, k));
        ts += "\n";
    }
    write_file(root / "timeseries.csv", ts);
}

Checks verify_trajectory(const json& artifact, Case expected) {
    if (!artifact.is_object()) throw ConfigError("/", "trajectory artifact must be an object");
    if (!artifact.contains("case")) throw ConfigError("/case", "missing required key");
    const std::string name = artifact.at("case").get<std::string>();
    if (name != to_string(expected))
        throw ConfigError("/case", "artifact holds case '" + name + "', expected '" + to_string(expected) + "'");
    json cj = {{"case", name}};
    if (artifact.contains("params")) cj["params"] = artifact.at("params");
    RunConfig cfg = config_from_json(cj);
    if (artifact.contains("scheme")) cfg.scheme = disc::scheme_from_string(artifact.at("scheme").get<std::string>());

    TimeGrid grid;
    const Trajectory z = ocp::trajectory_from_json(artifact, &grid);
    double tf = 0.0;
    if (expected == Case::lcvx_pdg) {
        const auto time = artifact.at("time").get<std::vector<double>>();
        if (time.empty()) throw ConfigError("/time", "empty time array");
        tf = time.back();
    }
    cfg.N = z.N();
    const CaseProblem prob = make_problem(cfg, z.N(), tf);
    return propagate_and_verify(prob, z, 10);
}

} // namespace trajopt::report
