#pragma once

#include "trajopt/scp.hpp"

#include <functional>

namespace trajopt::scvx {

using namespace trajopt::scp;

struct Config {
    double lambda = 1e3;
    double rho0 = 0.01, rho1 = 0.1, rho2 = 0.7;
    double beta_sh = 2.0, beta_gr = 2.0;
    double eta_init = 1.0, eta_min = 1e-3, eta_max = 10.0;
    NormKind q = NormKind::two;
    NormKind q_stop = NormKind::inf;
    bool alpha_x = true, alpha_u = true, alpha_p = true;
    double eps = 1e-6, eps_r = 0.0;
    int max_iters = 30;
    // largest virtual-control entry still counted as zero
    double vc_tol = 1e-7;
    conic::SolverSettings solver;
    // called after every iteration with the reference in effect afterwards
    std::function<void(const IterationRecord&, const Trajectory&)> on_iteration;

    void validate() const;
};

// P(y, z) = ||y||_1 + ||z||_1
double penalty(const Vec& y, const Vec& z);

// Virtual controls of an SCvx subproblem solution (scaled units).
struct Virtuals {
    Mat nu;   // n_nu x (N-1)
    Mat nu_s; // n_s x N
    Vec nu_ic, nu_tc;
    double max_abs() const;
};

// L = phi + lambda P(0, nu_ic) + lambda P(0, nu_tc) + trapz(Gamma + lambda P(E_k nu_k, nu'_k)), nu_N = 0
double linear_cost(const ContinuousOCP& ocp, const Trajectory& z, const Virtuals& v, const Segments& seg,
                   const TimeGrid& grid, double lambda);

// J = phi + lambda P(0, g_ic) + lambda P(0, g_tc) + trapz(Gamma + lambda P(Delta_k, [s]^+))
double nonlinear_cost(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, Scheme scheme,
                      double lambda, double* max_defect = nullptr);

struct Subproblem {
    conic::ConicProgram program;
    TrajVars vars;
    std::vector<ExprVec> nu, nu_s;
    ExprVec nu_ic, nu_tc;
    double objective_constant = 0.0;
};

Subproblem build_subproblem(const ContinuousOCP& ocp, const Trajectory& ref, const Segments& seg,
                            const TimeGrid& grid, double eta, const Config& cfg);

Virtuals extract_virtuals(const Subproblem& sp, const Vec& primal);

// rho = (Jbar - J*) / (Jbar - L*); throws std::logic_error when the
// denominator is below -tol.
double accuracy_ratio(double J_ref, double J_star, double L_star, double tol = 1e-9);

struct TrustUpdate {
    bool accept;
    double eta;
};
TrustUpdate update_trust_region(double rho, double eta, const Config& cfg);

bool stopping(const Trajectory& ref, const Trajectory& sol, double J_ref, double L_star, const Config& cfg);

// Runs SCvx on ocp (unscaled) from guess (unscaled).  All algorithm quantities
// live in the scaled space defined by scaling.
SCPReport run(const ContinuousOCP& ocp, const Trajectory& guess, const Config& cfg, const ScalingMap& scaling,
              const TimeGrid& grid, Scheme scheme);

} // namespace trajopt::scvx
