#include "trajopt/scp.hpp"

#include <cmath>
#include <stdexcept>

namespace trajopt::scp {

NormKind norm_from_string(const std::string& s) {
    if (s == "1") return NormKind::one;
    if (s == "2") return NormKind::two;
    if (s == "2+") return NormKind::two_squared;
    if (s == "inf") return NormKind::inf;
    throw std::invalid_argument("unknown norm '" + s + "' (expected 1, 2, 2+ or inf)");
}

std::string norm_to_string(NormKind k) {
    switch (k) {
    case NormKind::one: return "1";
    case NormKind::two: return "2";
    case NormKind::two_squared: return "2+";
    case NormKind::inf: return "inf";
    }
    return "?";
}

double norm(const Vec& v, NormKind k) {
    if (v.size() == 0) return 0.0;
    switch (k) {
    case NormKind::one: return v.lpNorm<1>();
    case NormKind::two: return v.norm();
    case NormKind::two_squared: return v.squaredNorm();
    case NormKind::inf: return v.lpNorm<Eigen::Infinity>();
    }
    return 0.0;
}

double trapz(const std::vector<double>& z, double dt) {
    if (z.size() < 2) throw std::invalid_argument("trapz needs at least two samples");
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < z.size(); ++k) s += z[k] + z[k + 1];
    return 0.5 * dt * s;
}

TrajVars add_trajectory_vars(ProblemBuilder& pb, int n, int m, int d, int N) {
    TrajVars v;
    for (int k = 0; k < N; ++k) v.x.push_back(pb.add_vars(n, "x" + std::to_string(k)));
    for (int k = 0; k < N; ++k) v.u.push_back(pb.add_vars(m, "u" + std::to_string(k)));
    v.p = pb.add_vars(d, "p");
    return v;
}

Vec values(const ExprVec& e, const Vec& primal) {
    Vec out(static_cast<Eigen::Index>(e.size()));
    for (std::size_t i = 0; i < e.size(); ++i) out[static_cast<Eigen::Index>(i)] = e[i].eval(primal);
    return out;
}

Trajectory extract(const TrajVars& v, const Vec& primal) {
    Trajectory z;
    const int N = static_cast<int>(v.x.size());
    z.x.resize(v.x.empty() ? 0 : static_cast<Eigen::Index>(v.x[0].size()), N);
    z.u.resize(v.u.empty() ? 0 : static_cast<Eigen::Index>(v.u[0].size()), N);
    for (int k = 0; k < N; ++k) {
        z.x.col(k) = values(v.x[k], primal);
        z.u.col(k) = values(v.u[k], primal);
    }
    z.p = values(v.p, primal);
    return z;
}

ExprVec minus(const ExprVec& e, const Vec& v) {
    ExprVec out(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = e[i] - v[static_cast<Eigen::Index>(i)];
    return out;
}

void emit_convex_sets(const ContinuousOCP& ocp, const TrajVars& v, int N, bool state_sets, ProblemBuilder& pb) {
    for (int k = 0; k < N; ++k) {
        if (ocp.input_constraints) ocp.input_constraints(k, v.u[k], v.p, pb);
        if (!state_sets) continue;
        for (const auto& c : ocp.state_constraints) c.emit(k, v.x[k], v.p, LinExpr(0.0), pb);
    }
}

double convex_violation(const ContinuousOCP& ocp, const Trajectory& z, bool state_sets) {
    double worst = 0.0;
    for (int k = 0; k < z.N(); ++k) {
        if (ocp.input_violation) worst = std::max(worst, ocp.input_violation(k, z.u.col(k), z.p));
        if (!state_sets) continue;
        for (const auto& c : ocp.state_constraints) worst = std::max(worst, c.value(k, z.x.col(k), z.p));
    }
    return worst;
}

Trajectory project_guess(const ContinuousOCP& ocp, const Trajectory& z, double tol) {
    if (convex_violation(ocp, z) <= tol) return z;
    const int N = z.N();
    ProblemBuilder pb;
    auto v = add_trajectory_vars(pb, ocp.n, ocp.m, ocp.d, N);
    emit_convex_sets(ocp, v, N, true, pb);
    ExprVec all;
    for (int k = 0; k < N; ++k) {
        auto dx = minus(v.x[k], z.x.col(k));
        auto du = minus(v.u[k], z.u.col(k));
        all.insert(all.end(), dx.begin(), dx.end());
        all.insert(all.end(), du.begin(), du.end());
    }
    auto dp = minus(v.p, z.p);
    all.insert(all.end(), dp.begin(), dp.end());
    pb.minimize(pb.norm_epigraph(all, NormKind::two, "projection"));
    auto sol = conic::solve(pb.build());
    if (sol.status != conic::Status::optimal)
        throw std::runtime_error(std::string("initial guess projection failed: ") + conic::to_string(sol.status) +
                                 " (convex path constraints may be empty)");
    Trajectory out = extract(v, sol.primal);
    return out;
}

double terminal_cost(const ContinuousOCP& ocp, const Vec& xN, const Vec& p) {
    return ocp.terminal_cost ? ocp.terminal_cost(xN, p) : 0.0;
}

double running_cost(const ContinuousOCP& ocp, const Vec& x, const Vec& u, const Vec& p) {
    return ocp.running_cost ? ocp.running_cost(x, u, p) : 0.0;
}

} // namespace trajopt::scp
