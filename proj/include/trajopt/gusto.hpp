#pragma once

#include "trajopt/scp.hpp"

#include <functional>

namespace trajopt::gusto {

using namespace trajopt::scp;

enum class PenaltyKind { quadratic_rectifier, softplus };

PenaltyKind penalty_kind_from_string(const std::string& s);
std::string to_string(PenaltyKind k);

struct Config {
    double lambda0 = 10.0, lambda_max = 1e7, gamma_fail = 5.0;
    double rho0 = 0.1, rho1 = 0.5;
    double beta_sh = 2.0, beta_gr = 2.0;
    double eta_init = 1.0, eta_min = 1e-3, eta_max = 10.0;
    double mu = 0.9;
    int k_star = 8;
    PenaltyKind penalty = PenaltyKind::quadratic_rectifier;
    double sharpness = 10.0;
    // tangent count of the piecewise-linear softplus epigraph
    int softplus_pieces = 41;
    NormKind q = NormKind::two;
    NormKind q_stop = NormKind::inf;
    bool alpha_x = true, alpha_p = true;
    double eps = 1e-6, eps_r = 0.0;
    int max_iters = 30;
    // a node with ||dx|| + ||dp|| > eta (1 + trust_tol) counts as a trust-region violation
    double trust_tol = 1e-3;
    // state constraints w, s above this count as violated
    double state_tol = 1e-6;
    conic::SolverSettings solver;
    std::function<void(const IterationRecord&, const Trajectory&)> on_iteration;

    void validate() const;
};

struct Penalty {
    double value;
    double slope;
};

// h_lambda(z): lambda ([z]+)^2 or lambda/sigma log(1 + exp(sigma z))
Penalty h_penalty(double z, double lambda, PenaltyKind kind, double sharpness = 10.0);

// sum_i h(w_i(x, p)) + sum_i h(s_i(t, x, u, p)) at node k
double soft_state_penalty(const ContinuousOCP& ocp, int k, double t, const Vec& x, const Vec& u, const Vec& p,
                          double lambda, PenaltyKind kind, double sharpness = 10.0);

// h(||dx||_q + ||dp||_q - eta)
double trust_region_penalty(const Vec& dx, const Vec& dp, double eta, double lambda, PenaltyKind kind, NormKind q,
                            double sharpness = 10.0);

// Largest mismatch of the quadratic-cost form and the control-affine split
// against running_cost and f at one point.
double check_quadratic_form(const ContinuousOCP& ocp, double t, const Vec& x, const Vec& u, const Vec& p);

struct Subproblem {
    conic::ConicProgram program;
    TrajVars vars;
    double objective_constant = 0.0;
};

// Linearized running cost pieces at the reference (u'S(pbar)u is kept exact).
struct CostModel {
    std::vector<Mat> S;
    std::vector<double> r0;     // Gamma - u'S u at the reference
    std::vector<Vec> rx, ru, rp; // its gradient
};
CostModel cost_model(const ContinuousOCP& ocp, const Trajectory& ref);

Subproblem build_subproblem(const ContinuousOCP& ocp, const Trajectory& ref, const Segments& seg,
                            const CostModel& cm, const TimeGrid& grid, double lambda, double eta, const Config& cfg);

// phi + trapz(Gamma_lin + sum h(w) + sum h(s_lin) + trust penalty)
double linear_cost(const ContinuousOCP& ocp, const Trajectory& z, const Trajectory& ref, const Segments& seg,
                   const CostModel& cm, const TimeGrid& grid, double lambda, double eta, const Config& cfg);

// phi + trapz(Gamma + sum h(w) + sum h(s) + trust penalty about ref)
double nonlinear_cost(const ContinuousOCP& ocp, const Trajectory& z, const Trajectory& ref, const TimeGrid& grid,
                      double lambda, double eta, const Config& cfg);

struct RatioTerms {
    double theta = 0.0;     // trapz ||f - xdot_lin||
    double xdot_norm = 0.0; // trapz ||xdot_lin||
};
// xdot_lin at the nodes from the continuous-time linearization about ref
RatioTerms ratio_terms(const ContinuousOCP& ocp, const Trajectory& z, const Trajectory& ref, const TimeGrid& grid);

// rho = (|J* - L*| + theta) / (|L*| + trapz ||xdot||); throws std::logic_error
// for a trivial solution (zero denominator).
double accuracy_ratio(double J_star, double L_star, const RatioTerms& terms);

struct Update {
    bool accept;
    double lambda;
    double eta;
};
Update update(double rho, bool trust_violated, bool state_violated, double lambda, double eta, int iter,
              const Config& cfg);

struct StopDecision {
    bool stop = false;
    bool failure = false; // lambda exceeded lambda_max
};
StopDecision stopping(const Trajectory& ref, const Trajectory& sol, double J_ref, double J_star, double lambda,
                      const TimeGrid& grid, const Config& cfg);

bool trust_violated(const Trajectory& z, const Trajectory& ref, double eta, const Config& cfg);
bool state_violated(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, double tol);

SCPReport run(const ContinuousOCP& ocp, const Trajectory& guess, const Config& cfg, const ScalingMap& scaling,
              const TimeGrid& grid, Scheme scheme);

} // namespace trajopt::gusto
