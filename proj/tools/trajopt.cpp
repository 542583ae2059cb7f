#include "trajopt/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

namespace rep = trajopt::report;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level g_level = Level::warn;

Level level_from_env() {
    const char* env = std::getenv("TRAJOPT_LOG");
    if (!env) return Level::warn;
    const std::string s = env;
    if (s == "error") return Level::error;
    if (s == "warn" || s == "warning") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    std::fprintf(stderr, "[warn] unknown TRAJOPT_LOG value '%s' (error, warn, info, debug)\n", env);
    return Level::warn;
}

void log(Level l, const std::string& msg) {
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (l <= g_level) std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(l)], msg.c_str());
}

std::string iteration_line(const trajopt::scp::IterationRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "iter %2d  J* %.6e  L* %.6e  rho %.3e  eta %.3e  lambda %.3e  %s  vc %.2e",
                  r.iter, r.cost_nonlinear, r.cost_linear, r.rho, r.eta_before, r.lambda,
                  r.accepted ? "accept" : "reject", r.vc_norm);
    return buf;
}

int cmd_run(const std::string& config_path, const std::string& out, const std::string& algorithm, int max_iters) {
    rep::RunConfig cfg = rep::parse_config(config_path);
    if (!algorithm.empty()) {
        const auto a = rep::algorithm_from_string(algorithm);
        const bool lc = cfg.kind == rep::Case::lcvx_toy || cfg.kind == rep::Case::lcvx_pdg;
        if (lc != (a == rep::Algorithm::lcvx))
            throw std::invalid_argument("algorithm '" + algorithm + "' does not apply to case " + rep::to_string(cfg.kind));
        cfg.algorithm = a;
    }
    if (max_iters > 0) {
        cfg.scvx.max_iters = max_iters;
        cfg.gusto.max_iters = max_iters;
    }
    if (!out.empty()) cfg.output_dir = out;
    auto on_iter = [](const trajopt::scp::IterationRecord& r, const trajopt::ocp::Trajectory&) {
        log(Level::info, iteration_line(r));
    };
    cfg.scvx.on_iteration = on_iter;
    cfg.gusto.on_iteration = on_iter;

    log(Level::info, "running " + rep::to_string(cfg.kind) + " with " + rep::to_string(cfg.algorithm));
    const rep::RunResult r = rep::run_case(cfg);
    if (r.error) log(Level::error, r.message);
    else if (!r.message.empty()) log(Level::info, r.message);
    if (r.solution.x.size()) {
        rep::emit(r, cfg.output_dir);
        log(Level::info, "wrote artifacts to " + cfg.output_dir);
    }
    const int code = rep::exit_code(r);
    std::printf("%s %s: %s, cost %.9g, max_defect %.3e, max_violation %.3e -> exit %d\n",
                rep::to_string(cfg.kind).c_str(), rep::to_string(cfg.algorithm).c_str(),
                r.error ? "error" : (r.converged ? "converged" : (r.soft_failure ? "soft failure" : "not converged")),
                r.cost, r.checks.max_defect, r.checks.max_constraint_violation, code);
    return code;
}

int cmd_verify(const std::string& path, const std::string& case_name) {
    const auto c = rep::case_from_string(case_name);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory file '" + path + "'");
    const auto artifact = nlohmann::json::parse(in);
    const rep::Checks checks = rep::verify_trajectory(artifact, c);
    std::printf("%s\n", rep::to_json(checks).dump(2).c_str());
    const bool ok = rep::checks_pass(checks);
    log(ok ? Level::info : Level::warn, ok ? "trajectory verified" : "trajectory fails the feasibility checks");
    return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    g_level = level_from_env();
    CLI::App app{"trajectory optimization cases: lossless convexification, SCvx and GuSTO"};
    app.require_subcommand(1);

    std::string config, out, algorithm;
    int max_iters = 0;
    auto* run = app.add_subcommand("run", "solve a case and write report.json, trajectory.json and CSV series");
    run->add_option("--config", config, "case configuration (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory (overrides output_dir)");
    run->add_option("--algorithm", algorithm, "scvx or gusto")->check(CLI::IsMember({"scvx", "gusto", "lcvx"}));
    run->add_option("--max-iters", max_iters, "iteration limit for SCvx/GuSTO")->check(CLI::PositiveNumber);

    std::string traj, case_name;
    auto* verify = app.add_subcommand("verify", "re-run the propagation checks on a trajectory artifact");
    verify->add_option("--trajectory", traj, "trajectory.json")->required()->check(CLI::ExistingFile);
    verify->add_option("--case", case_name, "case name")
        ->required()
        ->check(CLI::IsMember({"lcvx-toy", "lcvx-pdg", "quadrotor", "freeflyer"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return cmd_run(config, out, algorithm, max_iters);
        return cmd_verify(traj, case_name);
    } catch (const std::exception& e) {
        log(Level::error, e.what());
        return 1;
    }
}
