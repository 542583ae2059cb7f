#pragma once

#include "trajopt/discretization.hpp"
#include "trajopt/gusto.hpp"
#include "trajopt/json_reader.hpp"
#include "trajopt/lcvx.hpp"
#include "trajopt/scvx.hpp"
#include "trajopt/vehicles.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace trajopt::report {

using nlohmann::json;
using ocp::ContinuousOCP;
using ocp::Mat;
using ocp::ScalingMap;
using ocp::TimeGrid;
using ocp::Trajectory;
using ocp::Vec;

enum class Case { lcvx_toy, lcvx_pdg, quadrotor, freeflyer };
enum class Algorithm { lcvx, scvx, gusto };

Case case_from_string(const std::string& s);
std::string to_string(Case c);
Algorithm algorithm_from_string(const std::string& s);
std::string to_string(Algorithm a);

struct RunConfig {
    Case kind = Case::lcvx_toy;
    Algorithm algorithm = Algorithm::lcvx;
    int N = 50;
    disc::Scheme scheme = disc::Scheme::foh;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    lcvx::ToyParams toy;
    lcvx::PDGParams pdg = lcvx::PDGParams::landing_scenario();
    double tf_lo = 40.0, tf_hi = 120.0; // golden-section bracket (lcvx-pdg)
    vehicles::QuadrotorParams quad = vehicles::QuadrotorParams::defaults();
    vehicles::FreeFlyerParams ff = vehicles::FreeFlyerParams::defaults();

    scvx::Config scvx;
    gusto::Config gusto;
    conic::SolverSettings solver; // lcvx cases

    // parameter block of the selected case
    json params_json() const;
};

// Shipped defaults for a case, including the tuned algorithm settings.
RunConfig default_config(Case c);

// Unknown keys and type errors raise ConfigError with a JSON pointer.
RunConfig config_from_json(const json& j);
RunConfig parse_config(const std::string& path);
json to_json(const RunConfig& c);

// Everything needed to propagate and check a trajectory of one case.
struct CaseProblem {
    ContinuousOCP ocp;
    ScalingMap scaling;
    TimeGrid grid;
    disc::Scheme scheme = disc::Scheme::foh;
    std::vector<std::string> x_names, u_names;
    // absolute time of normalized time t
    std::function<double(const Trajectory&, double t)> absolute_time;
    // largest lcvx equality gap; empty when the case has none
    std::function<double(const Trajectory&)> lcvx_gap;
    // inputs at the last node are not used by ZOH
    bool last_input_unused = false;
    // worst violation of all node constraints at node k
    std::function<double(int k, const Trajectory&)> node_violation;
};

// tf is the time of flight of the lcvx-pdg case and ignored otherwise.
CaseProblem make_problem(const RunConfig& cfg, int N, double tf = 0.0);

struct Checks {
    bool integrator_ok = true;
    std::string integrator_error;
    double max_defect = 0.0;          // restarted at every node, scaled
    double max_defect_unscaled = 0.0;
    std::vector<double> node_deviation; // single simulation vs nodes, scaled
    double max_node_deviation = 0.0;
    double lcvx_gap = 0.0;
    bool has_lcvx_gap = false;
    double max_constraint_violation = 0.0; // at the nodes
    double max_dense_violation = 0.0;      // along the propagated trajectory
    double boundary_residual = 0.0;
};

json to_json(const Checks& c);

inline constexpr double kFeasibilityTol = 1e-6;

// integrator succeeded and defects, node violations, boundary residual and
// lcvx gap are all within tol
bool checks_pass(const Checks& c, double tol = kFeasibilityTol);

struct Dense {
    std::vector<disc::Flow> segments;
};

Checks propagate_and_verify(const CaseProblem& prob, const Trajectory& z, int samples = 10, Dense* dense = nullptr);

struct RunResult {
    RunConfig config;
    bool converged = false;
    bool soft_failure = false;
    bool error = false;
    std::string message;
    double cost = 0.0;
    std::optional<scp::SCPReport> scp;
    json lcvx_details; // lcvx cases
    Trajectory solution;
    TimeGrid grid;
    Checks checks;
    Dense dense;
    std::vector<std::string> x_names, u_names;
    std::vector<double> time; // absolute node times
    double wall_ms = 0.0;
};

RunResult run_case(const RunConfig& cfg);

// Converged and feasible -> 0, converged with nonzero virtual control or
// lambda overflow -> 2, error -> 1.
int exit_code(const RunResult& r);

json report_json(const RunResult& r);
json trajectory_json(const RunResult& r);

// report.json, trajectory.json, convergence.csv, timeseries.csv
void emit(const RunResult& r, const std::string& dir);

// Rebuilds the case from a trajectory artifact and re-runs the checks.
Checks verify_trajectory(const json& artifact, Case expected);

} // namespace trajopt::report
