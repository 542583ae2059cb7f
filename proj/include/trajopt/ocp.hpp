#pragma once

#include "trajopt/conic.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace trajopt::ocp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using conic::ExprVec;
using conic::LinExpr;
using conic::ProblemBuilder;

// Uniform grid on normalized time [0, 1].
struct TimeGrid {
    int N = 2;
    Vec t;
    double dt = 1.0;

    static TimeGrid uniform(int N);
};

struct Trajectory {
    Mat x; // n x N
    Mat u; // m x N
    Vec p;

    // virtual controls, present after an SCvx subproblem
    bool has_virtual = false;
    Mat nu;       // n_nu x (N-1)
    Mat nu_s;     // n_s x N
    Vec nu_ic, nu_tc;

    int N() const { return static_cast<int>(x.cols()); }
};

nlohmann::json to_json(const Trajectory& z, const TimeGrid& grid);
Trajectory trajectory_from_json(const nlohmann::json& j, TimeGrid* grid = nullptr);

struct ScalingMap {
    Vec Sx, cx, Su, cu, Sp, cp;

    Vec scale_x(const Vec& x) const { return (x - cx).cwiseQuotient(Sx); }
    Vec scale_u(const Vec& u) const { return (u - cu).cwiseQuotient(Su); }
    Vec scale_p(const Vec& p) const { return (p - cp).cwiseQuotient(Sp); }
    Vec unscale_x(const Vec& x) const { return Sx.cwiseProduct(x) + cx; }
    Vec unscale_u(const Vec& u) const { return Su.cwiseProduct(u) + cu; }
    Vec unscale_p(const Vec& p) const { return Sp.cwiseProduct(p) + cp; }

    static ScalingMap identity(int n, int m, int d);
};

struct Bounds {
    Vec lo, hi;
};

// Builds S = diag(hi - lo), c = lo. Degenerate entries (hi == lo) get S = 1, c = lo
// and a message appended to warnings.
ScalingMap make_scaling(const Bounds& x, const Bounds& u, const Bounds& p,
                        std::vector<std::string>* warnings = nullptr);

Trajectory scale(const Trajectory& z, const ScalingMap& s);
Trajectory unscale(const Trajectory& z, const ScalingMap& s);

// f(t, x, u, p)
using Dynamics = std::function<Vec(double, const Vec&, const Vec&, const Vec&)>;
// writes A = df/dx, B = df/du, F = df/dp
using DynamicsJacobian =
    std::function<void(double, const Vec&, const Vec&, const Vec&, Mat& A, Mat& B, Mat& F)>;

// Convex state/parameter constraint w(k, x, p) <= 0 with a conic emitter for
// w(k, x, p) <= slack.  slack is the constant 0 for hard constraints.
struct ConvexConstraint {
    std::string name;
    std::function<double(int k, const Vec& x, const Vec& p)> value;
    std::function<void(int k, const ExprVec& x, const ExprVec& p, const LinExpr& slack, ProblemBuilder&)> emit;
};

struct QuadraticRunningCost {
    std::function<Mat(const Vec& p)> S;
    std::function<Vec(const Vec& x, const Vec& p)> ell;
    std::function<double(const Vec& x, const Vec& p)> g;
    // control-affine split f = f0 + sum u_i f_i (columns of F1)
    std::function<Vec(double t, const Vec& x, const Vec& p)> f0;
    std::function<Mat(double t, const Vec& x, const Vec& p)> f1;
};

struct ContinuousOCP {
    std::string name;
    int n = 0, m = 0, d = 0;
    int n_s = 0, n_ic = 0, n_tc = 0;
    // only the leading d_dyn parameters enter f; -1 means all d
    int d_dyn = -1;

    Dynamics f;
    DynamicsJacobian df;

    // nonconvex path constraints s(k, t, x, u, p) <= 0 at nodes
    std::function<Vec(int k, double t, const Vec&, const Vec&, const Vec&)> s;
    std::function<void(int k, double t, const Vec&, const Vec&, const Vec&, Mat& C, Mat& D, Mat& G)> ds;

    // convex X(t): list of scalar convex constraints on (x, p)
    std::vector<ConvexConstraint> state_constraints;
    // convex U(t): hard conic rows on (u, p) and a scalar violation measure
    std::function<void(int k, const ExprVec& u, const ExprVec& p, ProblemBuilder&)> input_constraints;
    std::function<double(int k, const Vec& u, const Vec& p)> input_violation;

    // boundary conditions g(x, p) = 0
    std::function<Vec(const Vec& x, const Vec& p)> g_ic, g_tc;
    std::function<void(const Vec& x, const Vec& p, Mat& H, Mat& K)> dg_ic, dg_tc;

    // terminal cost phi(x1, p), convex; emitter returns an epigraph expression
    std::function<double(const Vec& x, const Vec& p)> terminal_cost;
    std::function<LinExpr(const ExprVec& x, const ExprVec& p, ProblemBuilder&)> terminal_cost_epigraph;

    // running cost Gamma(x, u, p)
    std::function<double(const Vec& x, const Vec& u, const Vec& p)> running_cost;
    std::function<void(const Vec& x, const Vec& u, const Vec& p, Vec& Ax, Vec& Bu, Vec& Fp)> running_cost_grad;
    std::function<LinExpr(int k, const ExprVec& x, const ExprVec& u, const ExprVec& p, ProblemBuilder&)>
        running_cost_epigraph;

    std::optional<QuadraticRunningCost> quadratic;

    // virtual-control gain E (n x n_nu); identity when empty
    Mat E;

    // optional extra violation measure for dense (inter-sample) checks; returns
    // the worst violation of all path constraints at (t, x, u, p)
    std::function<double(double t, const Vec& x, const Vec& u, const Vec& p)> dense_violation;

    int n_p_dyn() const { return d_dyn < 0 ? d : d_dyn; }
    int n_nu() const { return E.size() ? static_cast<int>(E.cols()) : n; }
    Mat E_matrix() const { return E.size() ? E : Mat::Identity(n, n); }

    // checks callback output sizes at a point; throws std::logic_error on mismatch
    void validate(const Vec& x, const Vec& u, const Vec& p) const;
};

// Problem in scaled variables x = Sx xh + cx etc.  The returned OCP is expressed
// entirely in (xh, uh, ph); dynamics are Sx^{-1} f.
ContinuousOCP scaled_problem(const ContinuousOCP& ocp, const ScalingMap& s);

// f(x, u, p) = p[idx] * f_abs(x, u)
struct DilatedDynamics {
    Dynamics f;
    DynamicsJacobian df;
};
DilatedDynamics dilate_dynamics(std::function<Vec(const Vec&, const Vec&)> f_abs,
                                std::function<void(const Vec&, const Vec&, Mat& A, Mat& B)> df_abs, int n, int m,
                                int d, int p_index);

Trajectory straight_line_guess(const Vec& x_ic, const Vec& x_tc, const Vec& u_ic, const Vec& u_tc, const Vec& p,
                               const TimeGrid& grid);

// Max relative error between analytic Jacobians and central differences (step h).
struct JacobianCheck {
    double dynamics = 0.0;
    double path = 0.0;
    double boundary = 0.0;
    double running_cost = 0.0;
};
JacobianCheck check_jacobians(const ContinuousOCP& ocp, int k, double t, const Vec& x, const Vec& u, const Vec& p,
                              double h = 1e-6);

double relative_error(const Mat& analytic, const Mat& numeric);

} // namespace trajopt::ocp
