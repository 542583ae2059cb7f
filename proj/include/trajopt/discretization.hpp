#pragma once

#include "trajopt/ocp.hpp"

#include <string>
#include <vector>

namespace trajopt::disc {

using ocp::ContinuousOCP;
using ocp::Mat;
using ocp::TimeGrid;
using ocp::Trajectory;
using ocp::Vec;

enum class Scheme { zoh, foh };

Scheme scheme_from_string(const std::string& s);
std::string to_string(Scheme s);

// x_{k+1} = A x_k + Bm u_k + Bp u_{k+1} + F p + r + E nu_k
struct Segments {
    Scheme scheme = Scheme::foh;
    std::vector<Mat> A, Bm, Bp, F, E;
    std::vector<Vec> r;
    // node linearization of s: s ~ C x + D u + G p + rs
    std::vector<Mat> C, D, G;
    std::vector<Vec> rs;
    // boundary: g ~ H x + K p + l
    Mat H0, K0, Hf, Kf;
    Vec l0, lf;

    int intervals() const { return static_cast<int>(A.size()); }
};

struct IntegratorError : std::runtime_error {
    double time;
    IntegratorError(const std::string& what, double t) : std::runtime_error(what), time(t) {}
};

struct Flow {
    Vec x_end;
    // dense samples including both interval endpoints (empty unless requested)
    std::vector<double> t;
    std::vector<Vec> x;
    std::vector<Vec> u;
};

inline constexpr double kIntegratorTol = 1e-10;

// Input signal on interval k: constant u_k (ZOH) or linear u_k -> u_{k+1} (FOH).
Vec input_at(Scheme scheme, double t, double t0, double t1, const Vec& uk, const Vec& uk1);

// Integrates x' = f from x_k over [t_k, t_{k+1}].  samples > 0 adds that many
// evenly spaced dense points (plus the endpoints).
Flow flow_map(const ContinuousOCP& ocp, const TimeGrid& grid, int k, const Vec& xk, const Vec& uk, const Vec& uk1,
              const Vec& p, Scheme scheme, int samples = 0);

struct PropagationResult {
    std::vector<Vec> defects; // N-1
    double max_defect = 0.0;
    std::vector<Flow> segments;
};

// Flow restarted from each x_k; Delta_k = x_{k+1} - psi(x_k).
PropagationResult defects(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, Scheme scheme,
                          int samples = 0);

// Single continuous simulation from z.x.col(0) with the discrete input signal.
PropagationResult simulate(const ContinuousOCP& ocp, const Trajectory& z, const TimeGrid& grid, Scheme scheme,
                           int samples = 0, Mat* x_out = nullptr);

Segments discretize(const ContinuousOCP& ocp, const Trajectory& ref, const TimeGrid& grid, Scheme scheme);

double check_consistency(const Segments& seg, const ContinuousOCP& ocp, const Trajectory& ref, const TimeGrid& grid);

} // namespace trajopt::disc
