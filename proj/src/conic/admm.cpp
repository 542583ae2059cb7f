// Operator splitting on the homogeneous self-dual embedding.
// Form used here:  min c'x  s.t.  -A x + s = b,  s in K  (i.e. A x + b in K).
#include "trajopt/conic.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace trajopt::conic::detail {

ConicSolution solve_admm(const ConicProgram& prog, const SolverSettings& st) {
    const int n = prog.num_vars;
    const int m = prog.num_rows();

    Vec D = Vec::Ones(n), E = Vec::Ones(m);
    if (st.scaling_enabled && m > 0) {
        auto eq = ruiz(prog.A, prog.cones);
        D = eq.D;
        E = eq.E;
    }
    // scaled data in the operator-splitting sign convention
    SpMat A = -(E.asDiagonal() * prog.A * D.asDiagonal());
    Vec b = E.cwiseProduct(prog.b);
    Vec c = D.cwiseProduct(prog.objective);

    // [I A'; A -I] with rhs (a, -b') solves x + A'y = a, -Ax + y = b'
    SpMat M(n + m, n + m);
    {
        std::vector<Eigen::Triplet<double>> t;
        for (int j = 0; j < n; ++j) t.emplace_back(j, j, 1.0);
        for (int k = 0; k < A.outerSize(); ++k)
            for (SpMat::InnerIterator it(A, k); it; ++it) t.emplace_back(it.col(), n + it.row(), it.value());
        for (int i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -1.0);
        M.setFromTriplets(t.begin(), t.end());
    }
    Eigen::SimplicialLDLT<SpMat, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt(M);
    ConicSolution out;
    out.primal = Vec::Zero(n);
    out.dual = Vec::Zero(m);
    out.slack = Vec::Zero(m);
    if (ldlt.info() != Eigen::Success) {
        out.status = Status::numerical_error;
        out.message = "factorization failed";
        return out;
    }
    auto solve_m = [&](const Vec& a, const Vec& bb) {
        Vec r(n + m);
        r.head(n) = a;
        r.tail(m) = -bb;
        return Vec(ldlt.solve(r));
    };
    Vec g = solve_m(c, b);
    const double hg = c.dot(g.head(n)) + b.dot(g.tail(m));

    // u = (x, y, tau), v = (r, s, kappa)
    Vec ux = Vec::Zero(n), uy = Vec::Zero(m), vx = Vec::Zero(n), vy = Vec::Zero(m);
    double ut = 1.0, vt = 1.0;
    const double relax = 1.5;

    const double infeas_tol = certificate_tolerance(prog, st);

    auto extract = [&]() {
        ConicSolution s;
        double tau = ut;
        s.primal = D.cwiseProduct(ux) / tau;
        s.dual = E.cwiseProduct(uy) / tau;
        s.slack = vy.cwiseQuotient(E) / tau;
        s.objective_value = prog.objective.dot(s.primal);
        s.residuals = kkt_residuals(prog, s);
        return s;
    };

    for (int it = 0; it < st.max_iters; ++it) {
        // linear step
        Vec wx = ux + vx, wy = uy + vy;
        double wt = ut + vt;
        Vec pq = solve_m(wx, wy);
        double tt = (wt + c.dot(pq.head(n)) + b.dot(pq.tail(m))) / (1.0 + hg);
        Vec tx = pq.head(n) - tt * g.head(n);
        Vec ty = pq.tail(m) - tt * g.tail(m);
        // relaxation
        Vec rx = relax * tx + (1 - relax) * ux;
        Vec ry = relax * ty + (1 - relax) * uy;
        double rt = relax * tt + (1 - relax) * ut;
        // projection onto R^n x K* x R+
        Vec nx = rx - vx;
        Vec ny = project_cone(prog.cones, Vec(ry - vy), true);
        double nt = std::max(rt - vt, 0.0);
        vx = vx - rx + nx;
        vy = vy - ry + ny;
        vt = vt - rt + nt;
        ux = nx;
        uy = ny;
        ut = nt;

        if (it % 10 != 0 && it + 1 != st.max_iters) continue;

        if (ut > 1e-12) {
            ConicSolution s = extract();
            auto scales = residual_scales(prog, s.primal, s.dual);
            if (s.primal.allFinite() && within_tolerance(s.residuals, scales, st)) {
                s.status = Status::optimal;
                s.iterations = it + 1;
                return s;
            }
        }
        if (!ux.allFinite() || !uy.allFinite()) {
            out.status = Status::numerical_error;
            out.message = "non-finite iterate";
            out.iterations = it + 1;
            return out;
        }
        // certificates
        Vec yd = E.cwiseProduct(uy);
        double by = prog.b.dot(yd);
        if (by < 0) {
            ConicSolution cert;
            cert.status = Status::infeasible;
            cert.dual = yd / (-by);
            cert.primal = Vec::Zero(n);
            cert.slack = Vec::Zero(m);
            if (certificate_residual(prog, cert) <= infeas_tol && ut < vt) {
                cert.iterations = it + 1;
                cert.objective_value = std::numeric_limits<double>::infinity();
                cert.residuals = kkt_residuals(prog, cert);
                return cert;
            }
        }
        Vec xd = D.cwiseProduct(ux);
        double cx = prog.objective.dot(xd);
        if (cx < 0) {
            ConicSolution cert;
            cert.status = Status::unbounded;
            cert.primal = xd / (-cx);
            cert.dual = Vec::Zero(m);
            cert.slack = Vec::Zero(m);
            if (certificate_residual(prog, cert) <= infeas_tol && ut < vt) {
                cert.iterations = it + 1;
                cert.objective_value = -std::numeric_limits<double>::infinity();
                cert.residuals = kkt_residuals(prog, cert);
                return cert;
            }
        }
    }
    if (ut > 1e-12) out = extract();
    out.status = Status::max_iters;
    out.iterations = st.max_iters;
    out.message = "iteration limit reached";
    return out;
}

} // namespace trajopt::conic::detail
