#pragma once

#include "trajopt/conic.hpp"
#include "trajopt/discretization.hpp"
#include "trajopt/ocp.hpp"

#include <string>
#include <vector>

namespace trajopt::scp {

using conic::ExprVec;
using conic::LinExpr;
using conic::NormKind;
using conic::ProblemBuilder;
using disc::Scheme;
using disc::Segments;
using ocp::ContinuousOCP;
using ocp::Mat;
using ocp::ScalingMap;
using ocp::TimeGrid;
using ocp::Trajectory;
using ocp::Vec;

// "1", "2", "2+" (squared two-norm), "inf"
NormKind norm_from_string(const std::string& s);
std::string norm_to_string(NormKind k);
double norm(const Vec& v, NormKind k);

double trapz(const std::vector<double>& z, double dt);

struct PhaseTimes {
    double formulate_ms = 0.0;
    double discretize_ms = 0.0;
    double solve_ms = 0.0;
};

struct IterationRecord {
    int iter = 0;
    double cost_linear = 0.0;    // L*
    double cost_reference = 0.0; // J at the reference
    double cost_nonlinear = 0.0; // J*
    double rho = 0.0;
    double eta_before = 0.0, eta_after = 0.0;
    double lambda = 0.0;
    bool accepted = false;
    double vc_norm = 0.0; // largest virtual-control entry (SCvx)
    double defect = 0.0;  // max defect of the subproblem solution
    bool trust_violated = false;
    bool state_violated = false;
    conic::Status solve_status = conic::Status::optimal;
    int solver_iterations = 0;
    PhaseTimes times;
};

struct SCPReport {
    std::string algorithm;
    bool converged = false;
    // converged with nonzero virtual control (SCvx) or lambda overflow (GuSTO)
    bool soft_failure = false;
    bool error = false;
    std::string message;
    std::vector<IterationRecord> iterations;
    Trajectory solution;        // unscaled
    Trajectory solution_scaled; // as seen by the algorithm
    double cost = 0.0;          // nonlinear augmented cost of the solution
    double vc_norm = 0.0;
    double max_defect = 0.0;
    PhaseTimes totals;
};

// Decision variables for a trajectory on a grid.
struct TrajVars {
    std::vector<ExprVec> x, u;
    ExprVec p;
};
TrajVars add_trajectory_vars(ProblemBuilder& pb, int n, int m, int d, int N);
Trajectory extract(const TrajVars& v, const Vec& primal);
Vec values(const ExprVec& e, const Vec& primal);
ExprVec minus(const ExprVec& e, const Vec& v);

// Hard convex constraints (u, p) in U and, optionally, (x, p) in X at every node.
void emit_convex_sets(const ContinuousOCP& ocp, const TrajVars& v, int N, bool state_sets, ProblemBuilder& pb);

// Largest violation of X and U over all nodes.
double convex_violation(const ContinuousOCP& ocp, const Trajectory& z, bool state_sets = true);

// Closest point (least squares) satisfying X and U at all nodes; p couples the
// nodes so the projection is solved jointly.  Returns z unchanged when it is
// already feasible to tol.
Trajectory project_guess(const ContinuousOCP& ocp, const Trajectory& z, double tol = 1e-9);

double terminal_cost(const ContinuousOCP& ocp, const Vec& xN, const Vec& p);
double running_cost(const ContinuousOCP& ocp, const Vec& x, const Vec& u, const Vec& p);

} // namespace trajopt::scp
