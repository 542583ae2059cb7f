#include "trajopt/json_reader.hpp"
#include "trajopt/report.hpp"

#include <fstream>
#include <sstream>

namespace trajopt::report {

namespace {

constexpr double kDeg = M_PI / 180.0;

template <class F>
void as_config_error(const std::string& ptr, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ptr.empty() ? "/" : ptr, e.what());
    }
}

conic::Method method_from_string(const std::string& s, const std::string& ptr) {
    if (s == "interior_point") return conic::Method::interior_point;
    if (s == "operator_splitting") return conic::Method::operator_splitting;
    throw ConfigError(ptr, "unknown solver method '" + s + "' (interior_point, operator_splitting)");
}

std::string method_to_string(conic::Method m) {
    return m == conic::Method::interior_point ? "interior_point" : "operator_splitting";
}

conic::NormKind read_norm(ObjectReader& r, const std::string& key, conic::NormKind fallback) {
    if (!r.has(key)) return fallback;
    const std::string s = r.string(key, "");
    try {
        return scp::norm_from_string(s);
    } catch (const std::invalid_argument&) {
        throw ConfigError(r.path(key), "unknown norm '" + s + "' (1, 2, 2+, inf)");
    }
}

void read_solver(const json& j, const std::string& ptr, conic::SolverSettings& s) {
    ObjectReader r(j, ptr);
    s.eps_abs = r.number("eps_abs", s.eps_abs);
    s.eps_rel = r.number("eps_rel", s.eps_rel);
    s.max_iters = r.integer("max_iters", s.max_iters);
    s.scaling_enabled = r.boolean("scaling_enabled", s.scaling_enabled);
    if (r.has("method")) s.method = method_from_string(r.string("method", ""), r.path("method"));
    r.finish();
    as_config_error(ptr, [&] { s.validate(); });
}

json solver_json(const conic::SolverSettings& s) {
    return {{"eps_abs", s.eps_abs},
            {"eps_rel", s.eps_rel},
            {"max_iters", s.max_iters},
            {"scaling_enabled", s.scaling_enabled},
            {"method", method_to_string(s.method)}};
}

void read_scvx(const json& j, const std::string& ptr, scvx::Config& c) {
    ObjectReader r(j, ptr);
    c.lambda = r.number("lambda", c.lambda);
    c.rho0 = r.number("rho0", c.rho0);
    c.rho1 = r.number("rho1", c.rho1);
    c.rho2 = r.number("rho2", c.rho2);
    c.beta_sh = r.number("beta_sh", c.beta_sh);
    c.beta_gr = r.number("beta_gr", c.beta_gr);
    c.eta_init = r.number("eta_init", c.eta_init);
    c.eta_min = r.number("eta_min", c.eta_min);
    c.eta_max = r.number("eta_max", c.eta_max);
    c.q = read_norm(r, "q", c.q);
    c.q_stop = read_norm(r, "q_stop", c.q_stop);
    c.alpha_x = r.boolean("alpha_x", c.alpha_x);
    c.alpha_u = r.boolean("alpha_u", c.alpha_u);
    c.alpha_p = r.boolean("alpha_p", c.alpha_p);
    c.eps = r.number("eps", c.eps);
    c.eps_r = r.number("eps_r", c.eps_r);
    c.max_iters = r.integer("max_iters", c.max_iters);
    c.vc_tol = r.number("vc_tol", c.vc_tol);
    if (r.has("solver")) read_solver(r.at("solver"), r.path("solver"), c.solver);
    r.finish();
    as_config_error(ptr, [&] { c.validate(); });
}

json scvx_json(const scvx::Config& c) {
    return {{"lambda", c.lambda},       {"rho0", c.rho0},
            {"rho1", c.rho1},           {"rho2", c.rho2},
            {"beta_sh", c.beta_sh},     {"beta_gr", c.beta_gr},
            {"eta_init", c.eta_init},   {"eta_min", c.eta_min},
            {"eta_max", c.eta_max},     {"q", scp::norm_to_string(c.q)},
            {"q_stop", scp::norm_to_string(c.q_stop)},
            {"alpha_x", c.alpha_x},     {"alpha_u", c.alpha_u},
            {"alpha_p", c.alpha_p},     {"eps", c.eps},
            {"eps_r", c.eps_r},         {"max_iters", c.max_iters},
            {"vc_tol", c.vc_tol},       {"solver", solver_json(c.solver)}};
}

void read_gusto(const json& j, const std::string& ptr, gusto::Config& c) {
    ObjectReader r(j, ptr);
    c.lambda0 = r.number("lambda0", c.lambda0);
    c.lambda_max = r.number("lambda_max", c.lambda_max);
    c.gamma_fail = r.number("gamma_fail", c.gamma_fail);
    c.rho0 = r.number("rho0", c.rho0);
    c.rho1 = r.number("rho1", c.rho1);
    c.beta_sh = r.number("beta_sh", c.beta_sh);
    c.beta_gr = r.number("beta_gr", c.beta_gr);
    c.eta_init = r.number("eta_init", c.eta_init);
    c.eta_min = r.number("eta_min", c.eta_min);
    c.eta_max = r.number("eta_max", c.eta_max);
    c.mu = r.number("mu", c.mu);
    c.k_star = r.integer("k_star", c.k_star);
    if (r.has("penalty")) {
        const std::string s = r.string("penalty", "");
        try {
            c.penalty = gusto::penalty_kind_from_string(s);
        } catch (const std::invalid_argument&) {
            throw ConfigError(r.path("penalty"), "unknown penalty '" + s + "' (quadratic_rectifier, softplus)");
        }
    }
    c.sharpness = r.number("sharpness", c.sharpness);
    c.softplus_pieces = r.integer("softplus_pieces", c.softplus_pieces);
    c.q = read_norm(r, "q", c.q);
    c.q_stop = read_norm(r, "q_stop", c.q_stop);
    c.alpha_x = r.boolean("alpha_x", c.alpha_x);
    c.alpha_p = r.boolean("alpha_p", c.alpha_p);
    c.eps = r.number("eps", c.eps);
    c.eps_r = r.number("eps_r", c.eps_r);
    c.max_iters = r.integer("max_iters", c.max_iters);
    c.trust_tol = r.number("trust_tol", c.trust_tol);
    c.state_tol = r.number("state_tol", c.state_tol);
    if (r.has("solver")) read_solver(r.at("solver"), r.path("solver"), c.solver);
    r.finish();
    as_config_error(ptr, [&] { c.validate(); });
}

json gusto_json(const gusto::Config& c) {
    return {{"lambda0", c.lambda0},
            {"lambda_max", c.lambda_max},
            {"gamma_fail", c.gamma_fail},
            {"rho0", c.rho0},
            {"rho1", c.rho1},
            {"beta_sh", c.beta_sh},
            {"beta_gr", c.beta_gr},
            {"eta_init", c.eta_init},
            {"eta_min", c.eta_min},
            {"eta_max", c.eta_max},
            {"mu", c.mu},
            {"k_star", c.k_star},
            {"penalty", gusto::to_string(c.penalty)},
            {"sharpness", c.sharpness},
            {"softplus_pieces", c.softplus_pieces},
            {"q", scp::norm_to_string(c.q)},
            {"q_stop", scp::norm_to_string(c.q_stop)},
            {"alpha_x", c.alpha_x},
            {"alpha_p", c.alpha_p},
            {"eps", c.eps},
            {"eps_r", c.eps_r},
            {"max_iters", c.max_iters},
            {"trust_tol", c.trust_tol},
            {"state_tol", c.state_tol},
            {"solver", solver_json(c.solver)}};
}

lcvx::ToyParams toy_from_json(const json& j, const std::string& ptr, lcvx::ToyParams p) {
    ObjectReader r(j, ptr);
    p.g = r.number("g", p.g);
    p.s = r.number("s", p.s);
    p.tf = r.number("tf", p.tf);
    p.u_min = r.number("u_min", p.u_min);
    p.u_max = r.number("u_max", p.u_max);
    r.finish();
    return p;
}

lcvx::PDGParams pdg_from_json(const json& j, const std::string& ptr, lcvx::PDGParams p) {
    ObjectReader r(j, ptr);
    p.g = r.vec3("g", p.g);
    p.m_dry = r.number("m_dry", p.m_dry);
    p.m_wet = r.number("m_wet", p.m_wet);
    p.isp = r.number("isp", p.isp);
    p.g_e = r.number("g_e", p.g_e);
    p.omega = r.vec3("omega", p.omega);
    p.rho_min = r.number("rho_min", p.rho_min);
    p.rho_max = r.number("rho_max", p.rho_max);
    p.gamma_gs = r.number("gamma_gs_deg", p.gamma_gs / kDeg) * kDeg;
    p.gamma_p = r.number("gamma_p_deg", p.gamma_p / kDeg) * kDeg;
    p.v_max = r.number("v_max", p.v_max);
    p.r0 = r.vec3("r0", p.r0);
    p.v0 = r.vec3("v0", p.v0);
    p.dt = r.number("dt", p.dt);
    r.finish();
    as_config_error(ptr, [&] { p.validate(); });
    return p;
}

json pdg_json(const lcvx::PDGParams& p) {
    return {{"g", trajopt::to_json(Vec(p.g))},
            {"m_dry", p.m_dry},
            {"m_wet", p.m_wet},
            {"isp", p.isp},
            {"g_e", p.g_e},
            {"omega", trajopt::to_json(Vec(p.omega))},
            {"rho_min", p.rho_min},
            {"rho_max", p.rho_max},
            {"gamma_gs_deg", p.gamma_gs / kDeg},
            {"gamma_p_deg", p.gamma_p / kDeg},
            {"v_max", p.v_max},
            {"r0", trajopt::to_json(Vec(p.r0))},
            {"v0", trajopt::to_json(Vec(p.v0))},
            {"dt", p.dt}};
}

bool is_lcvx(Case c) { return c == Case::lcvx_toy || c == Case::lcvx_pdg; }

} // namespace

Case case_from_string(const std::string& s) {
    if (s == "lcvx-toy") return Case::lcvx_toy;
    if (s == "lcvx-pdg") return Case::lcvx_pdg;
    if (s == "quadrotor") return Case::quadrotor;
    if (s == "freeflyer") return Case::freeflyer;
    throw std::invalid_argument("unknown case '" + s + "' (lcvx-toy, lcvx-pdg, quadrotor, freeflyer)");
}

std::string to_string(Case c) {
    switch (c) {
    case Case::lcvx_toy: return "lcvx-toy";
    case Case::lcvx_pdg: return "lcvx-pdg";
    case Case::quadrotor: return "quadrotor";
    case Case::freeflyer: return "freeflyer";
    }
    return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "lcvx") return Algorithm::lcvx;
    if (s == "scvx") return Algorithm::scvx;
    if (s == "gusto") return Algorithm::gusto;
    throw std::invalid_argument("unknown algorithm '" + s + "' (lcvx, scvx, gusto)");
}

std::string to_string(Algorithm a) {
    switch (a) {
    case Algorithm::lcvx: return "lcvx";
    case Algorithm::scvx: return "scvx";
    case Algorithm::gusto: return "gusto";
    }
    return "?";
}

RunConfig default_config(Case c) {
    RunConfig cfg;
    cfg.kind = c;
    cfg.output_dir = "out/" + to_string(c);
    switch (c) {
    case Case::lcvx_toy:
        cfg.algorithm = Algorithm::lcvx;
        cfg.N = cfg.toy.N;
        cfg.scheme = disc::Scheme::foh;
        break;
    case Case::lcvx_pdg:
        cfg.algorithm = Algorithm::lcvx;
        cfg.scheme = disc::Scheme::zoh;
        cfg.N = 0; // follows from tf and dt
        break;
    case Case::quadrotor:
        cfg.algorithm = Algorithm::scvx;
        cfg.N = 30;
        cfg.scheme = disc::Scheme::foh;
        cfg.scvx.lambda = 300.0;
        cfg.scvx.eta_init = 0.25;
        cfg.scvx.max_iters = 15;
        cfg.gusto.lambda0 = 10.0;
        cfg.gusto.max_iters = 15;
        cfg.gusto.solver.eps_abs = cfg.gusto.solver.eps_rel = 1e-9;
        break;
    case Case::freeflyer:
        cfg.algorithm = Algorithm::scvx;
        cfg.N = 30;
        cfg.scheme = disc::Scheme::foh;
        cfg.scvx.lambda = 100.0;
        cfg.scvx.eps_r = 1e-4;
        cfg.scvx.max_iters = 15;
        cfg.gusto.lambda0 = 10.0;
        cfg.gusto.eps_r = 1e-4;
        cfg.gusto.max_iters = 15;
        cfg.gusto.solver.eps_abs = cfg.gusto.solver.eps_rel = 1e-9;
        break;
    }
    return cfg;
}

json RunConfig::params_json() const {
    switch (kind) {
    case Case::lcvx_toy:
        return {{"g", toy.g}, {"s", toy.s}, {"tf", toy.tf}, {"u_min", toy.u_min}, {"u_max", toy.u_max}};
    case Case::lcvx_pdg: return pdg_json(pdg);
    case Case::quadrotor: return quad.to_json();
    case Case::freeflyer: return ff.to_json();
    }
    return json::object();
}

RunConfig config_from_json(const json& j) {
    ObjectReader r(j, "");
    if (!r.has("case")) throw ConfigError("/case", "missing required key");
    Case kind;
    const std::string cs = r.string("case", "");
    try {
        kind = case_from_string(cs);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/case", e.what());
    }
    RunConfig cfg = default_config(kind);
    const bool lc = is_lcvx(kind);

    if (r.has("algorithm")) {
        try {
            cfg.algorithm = algorithm_from_string(r.string("algorithm", ""));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("/algorithm", e.what());
        }
        if (lc != (cfg.algorithm == Algorithm::lcvx))
            throw ConfigError("/algorithm", lc ? "lcvx cases only run the lcvx algorithm"
                                               : "SCP cases run scvx or gusto");
    }
    if (r.has("params")) {
        const json& pj = r.at("params");
        switch (kind) {
        case Case::lcvx_toy: cfg.toy = toy_from_json(pj, "/params", cfg.toy); break;
        case Case::lcvx_pdg: cfg.pdg = pdg_from_json(pj, "/params", cfg.pdg); break;
        case Case::quadrotor: cfg.quad = vehicles::QuadrotorParams::from_json(pj, "/params"); break;
        case Case::freeflyer: cfg.ff = vehicles::FreeFlyerParams::from_json(pj, "/params"); break;
        }
    }
    if (r.has("grid")) {
        ObjectReader g(r.at("grid"), "/grid");
        if (g.has("N")) {
            if (kind == Case::lcvx_pdg) throw ConfigError("/grid/N", "the PDG grid follows from params.dt");
            cfg.N = g.integer("N", cfg.N);
            if (cfg.N < 2) throw ConfigError("/grid/N", "need at least 2 nodes");
        }
        g.finish();
    }
    cfg.toy.N = cfg.N;
    if (kind == Case::lcvx_toy) as_config_error("/params", [&] { cfg.toy.validate(); });

    if (r.has("scheme")) {
        try {
            cfg.scheme = disc::scheme_from_string(r.string("scheme", ""));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("/scheme", e.what());
        }
        if (kind == Case::lcvx_toy && cfg.scheme != disc::Scheme::foh)
            throw ConfigError("/scheme", "the toy problem is discretized with FOH");
        if (kind == Case::lcvx_pdg && cfg.scheme != disc::Scheme::zoh)
            throw ConfigError("/scheme", "the PDG problem is discretized with ZOH");
    }
    if (r.has("seed")) {
        const json& s = r.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
            throw ConfigError("/seed", "expected a nonnegative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    cfg.output_dir = r.string("output_dir", cfg.output_dir);

    if (r.has("search")) {
        if (kind != Case::lcvx_pdg) throw ConfigError("/search", "only the lcvx-pdg case has a time-of-flight search");
        ObjectReader s(r.at("search"), "/search");
        cfg.tf_lo = s.number("tf_lo", cfg.tf_lo);
        cfg.tf_hi = s.number("tf_hi", cfg.tf_hi);
        s.finish();
        if (!(0 < cfg.tf_lo && cfg.tf_lo < cfg.tf_hi)) throw ConfigError("/search", "need 0 < tf_lo < tf_hi");
    }
    if (r.has("scvx")) {
        if (lc) throw ConfigError("/scvx", "only SCP cases use the scvx block");
        read_scvx(r.at("scvx"), "/scvx", cfg.scvx);
    }
    if (r.has("gusto")) {
        if (lc) throw ConfigError("/gusto", "only SCP cases use the gusto block");
        read_gusto(r.at("gusto"), "/gusto", cfg.gusto);
    }
    if (r.has("solver")) {
        if (!lc) throw ConfigError("/solver", "SCP cases take solver settings inside the scvx or gusto block");
        read_solver(r.at("solver"), "/solver", cfg.solver);
    }
    r.finish();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

json to_json(const RunConfig& c) {
    json j;
    j["case"] = to_string(c.kind);
    j["algorithm"] = to_string(c.algorithm);
    j["params"] = c.params_json();
    if (c.kind != Case::lcvx_pdg) j["grid"] = {{"N", c.N}};
    j["scheme"] = disc::to_string(c.scheme);
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    if (c.kind == Case::lcvx_pdg) j["search"] = {{"tf_lo", c.tf_lo}, {"tf_hi", c.tf_hi}};
    if (is_lcvx(c.kind)) {
        j["solver"] = solver_json(c.solver);
    } else {
        j["scvx"] = scvx_json(c.scvx);
        j["gusto"] = gusto_json(c.gusto);
    }
    return j;
}

} // namespace trajopt::report
