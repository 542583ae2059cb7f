#pragma once

#include "trajopt/conic.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace trajopt::lcvx {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

// rank [B, AB, ..., A^{n-1}B] == n, SVD rank with tolerance 1e-10 sigma_max
bool controllability_check(const Mat& A, const Mat& B);

// m not in the column space of B (an empty B only needs m != 0)
bool transversality_check(const Vec& m, const Mat& B);

// max_{k >= first} (sigma_k - ||u_k||); u holds one input per column
double lcvx_equality_gap(const Vec& sigma, const Mat& u, int first = 1);

// ---------------------------------------------------------------------------
// Double integrator with friction: x1' = x2, x2' = u - g, 1 <= |u| <= 2.

struct ToyParams {
    double g = 0.1;
    double s = 47.0;
    double tf = 10.0;
    int N = 50;
    double u_min = 1.0, u_max = 2.0;

    void validate() const;
};

struct ToySolution {
    bool feasible = false;
    conic::Status status = conic::Status::numerical_error;
    Vec t, x1, x2, u, sigma;
    double cost = 0.0; // trapz of sigma^2
    double gap = 0.0;  // equality gap over nodes after the first
    double boundary_residual = 0.0;
};

// FOH relaxation with sigma, solved in one conic program.
ToySolution solve_toy(const ToyParams& p, const conic::SolverSettings& settings = {});

// ---------------------------------------------------------------------------
// 3-DoF powered descent in the (xi, u, z) variables.

struct PDGParams {
    Vec3 g{0.0, 0.0, -3.71};
    double m_dry = 1505.0, m_wet = 1905.0;
    double isp = 225.0;
    double g_e = 9.807;
    Vec3 omega{0.0, 0.0, 0.0}; // rad/s
    double rho_min = 4971.0, rho_max = 13258.0;
    double gamma_gs = 0.0, gamma_p = 0.0; // rad, both from the vertical
    double v_max = 0.0;
    Vec3 r0{0.0, 0.0, 0.0}, v0{0.0, 0.0, 0.0};
    double dt = 1.0;

    double alpha() const { return 1.0 / (isp * g_e); }
    void validate() const;
    // Mars landing scenario in SI units
    static PDGParams landing_scenario();
};

// the ZOH grid for a given time of flight: N = ceil(tf / dt) + 1 nodes
int pdg_nodes(const PDGParams& p, double tf);

// z_0(t) = ln(m_wet - alpha rho_max t) and the upper corridor ln(m_wet - alpha rho_min t)
double pdg_z_low(const PDGParams& p, double t);
double pdg_z_high(const PDGParams& p, double t);

// Worst violation of the per-node input constraints (Taylor thrust bounds,
// lcvx equality relaxation, pointing, z corridor) at time t.
double pdg_input_violation(const PDGParams& p, double t, double z, const Vec3& u, double xi);

struct PDGProgram {
    conic::ConicProgram program;
    int N = 0;
    double h = 0.0;
    std::vector<conic::ExprVec> r, v, u; // u: N-1 inputs
    std::vector<conic::LinExpr> z, xi;
};

PDGProgram build_pdg(const PDGParams& p, double tf);

struct PDGSolution {
    bool feasible = false;
    conic::Status status = conic::Status::numerical_error;
    double tf = 0.0, h = 0.0;
    int N = 0;
    Vec t;
    Mat r, v;  // 3 x N
    Vec z;     // N
    Mat u;     // 3 x (N-1), held over each interval
    Vec xi;    // N-1
    double cost = 0.0; // integral of xi
    double final_mass = 0.0;
    double gap = 0.0;
    int glideslope_active = 0;
    int speed_active = 0;

    Vec mass() const { return z.array().exp().matrix(); }
    // ||T_c|| = m ||u|| at each input node
    Vec thrust() const;
};

PDGSolution solve_pdg(const PDGParams& p, double tf, const conic::SolverSettings& settings = {});

struct GoldenResult {
    double x = 0.0;
    double fx = 0.0;
    int evaluations = 0;
};

// Golden-section search for a unimodal f on [lo, hi] until the bracket is no
// wider than tol.  Returns the best point evaluated, preferring the smaller x on
// ties.  Infinite values are allowed; when both interior points are infinite the
// bracket moves right.  Throws if every evaluation is infinite.
GoldenResult golden_section(const std::function<double(double)>& f, double lo, double hi, double tol);

struct PDGSearch {
    double tf = 0.0;
    PDGSolution solution;
    std::vector<std::pair<double, double>> evaluations; // (tf, cost)
};

PDGSearch golden_search_tf(const PDGParams& p, double lo, double hi, const conic::SolverSettings& settings = {});

struct PDGPropagation {
    Mat r, v; // 3 x N, from integrating the original dynamics
    Vec m;
    double max_position_error = 0.0;
    double max_velocity_error = 0.0;
    double max_mass_error = 0.0;
    double final_mass = 0.0;
};

// Integrates r, v, m with T_c(t) = m(t) u_k held over each interval.
PDGPropagation propagate_pdg(const PDGParams& p, const PDGSolution& sol);

} // namespace trajopt::lcvx
