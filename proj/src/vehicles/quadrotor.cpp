#include "trajopt/json_reader.hpp"
#include "json_common.hpp"

#include <cmath>
#include <stdexcept>

namespace trajopt::vehicles {

using conic::ExprVec;
using conic::LinExpr;
using conic::ProblemBuilder;
using nlohmann::json;

namespace {

Ellipsoid ellipsoid_from_json(const json& j, const std::string& ptr) {
    ObjectReader r(j, ptr);
    Ellipsoid e;
    e.c = r.vec3("center", Vec3::Zero());
    if (r.has("H") && r.has("radii")) throw ConfigError(ptr, "give either H or radii, not both");
    if (r.has("radii")) {
        Vec3 radii = r.vec3("radii", Vec3::Ones());
        if ((radii.array() <= 0).any()) throw ConfigError(r.path("radii"), "radii must be positive");
        e.H = radii.cwiseInverse().asDiagonal();
    } else {
        e.H = r.mat3("H", Mat3::Identity());
    }
    r.finish();
    try {
        e.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ptr, ex.what());
    }
    return e;
}

} // namespace

// shared with the free-flyer
std::vector<Ellipsoid> obstacles_from_json(const json& j, const std::string& ptr) {
    if (!j.is_array()) throw ConfigError(ptr, "expected an array of obstacles");
    std::vector<Ellipsoid> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(ellipsoid_from_json(j[i], ptr + "/" + std::to_string(i)));
    return out;
}

json obstacles_to_json(const std::vector<Ellipsoid>& obs) {
    json out = json::array();
    for (const auto& o : obs) out.push_back({{"center", to_json(Vec(o.c))}, {"H", to_json(o.H)}});
    return out;
}

void QuadrotorParams::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("quadrotor: ") + what);
    };
    need(g > 0, "g must be positive");
    need(0 < a_min && a_min < a_max, "need 0 < a_min < a_max");
    need(theta_max > 0 && theta_max <= M_PI, "theta_max must lie in (0, 180] deg");
    need(0 < tf_min && tf_min <= tf_max, "need 0 < tf_min <= tf_max");
    need(r0.allFinite() && v0.allFinite() && rf.allFinite() && vf.allFinite(), "boundary values must be finite");
    for (const auto& o : obstacles) o.validate();
}

QuadrotorParams QuadrotorParams::defaults() {
    QuadrotorParams p;
    p.r0 = Vec3(0, 0, 0);
    p.rf = Vec3(2.5, 6.0, 0.0);
    // tall ellipsoids, nearly columns
    auto column = [](Vec3 c, double radius) {
        Ellipsoid e;
        e.c = c;
        e.H = Vec3(1 / radius, 1 / radius, 1 / 5.0).asDiagonal();
        return e;
    };
    p.obstacles = {column(Vec3(1.0, 2.0, 0.0), 0.35), column(Vec3(2.0, 5.0, 0.0), 0.35),
                   column(Vec3(0.6, 3.8, 0.0), 0.3)};
    return p;
}

QuadrotorParams QuadrotorParams::from_json(const json& j, const std::string& pointer) {
    QuadrotorParams p = defaults();
    ObjectReader r(j, pointer);
    p.g = r.number("g", p.g);
    p.a_min = r.number("a_min", p.a_min);
    p.a_max = r.number("a_max", p.a_max);
    p.theta_max = r.number("theta_max_deg", p.theta_max * 180 / M_PI) * M_PI / 180;
    p.tf_min = r.number("tf_min", p.tf_min);
    p.tf_max = r.number("tf_max", p.tf_max);
    p.r0 = r.vec3("r0", p.r0);
    p.v0 = r.vec3("v0", p.v0);
    p.rf = r.vec3("rf", p.rf);
    p.vf = r.vec3("vf", p.vf);
    if (r.has("obstacles")) p.obstacles = obstacles_from_json(r.at("obstacles"), r.path("obstacles"));
    r.finish();
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(pointer.empty() ? "/" : pointer, e.what());
    }
    return p;
}

json QuadrotorParams::to_json() const {
    return {{"g", g},
            {"a_min", a_min},
            {"a_max", a_max},
            {"theta_max_deg", theta_max * 180 / M_PI},
            {"tf_min", tf_min},
            {"tf_max", tf_max},
            {"r0", trajopt::to_json(Vec(r0))},
            {"v0", trajopt::to_json(Vec(v0))},
            {"rf", trajopt::to_json(Vec(rf))},
            {"vf", trajopt::to_json(Vec(vf))},
            {"obstacles", obstacles_to_json(obstacles)}};
}

ContinuousOCP quadrotor_ocp(const QuadrotorParams& prm) {
    prm.validate();
    const QuadrotorParams P = prm;
    const int n = 6, m = 4, d = 1;
    const int n_obs = static_cast<int>(P.obstacles.size());
    const Vec3 nhat = Vec3::UnitZ();

    ContinuousOCP o;
    o.name = "quadrotor";
    o.n = n;
    o.m = m;
    o.d = d;

    auto f_abs = [P, nhat](const Vec& x, const Vec& u) -> Vec {
        Vec f(6);
        f.head<3>() = x.tail<3>();
        f.tail<3>() = u.head<3>() - P.g * nhat;
        return f;
    };
    auto df_abs = [](const Vec&, const Vec&, Mat& A, Mat& B) {
        A = Mat::Zero(6, 6);
        A.topRightCorner(3, 3).setIdentity();
        B = Mat::Zero(6, 4);
        B.bottomLeftCorner(3, 3).setIdentity();
    };
    auto dil = ocp::dilate_dynamics(f_abs, df_abs, n, m, d, 0);
    o.f = dil.f;
    o.df = dil.df;

    o.n_s = n_obs;
    o.s = [P, n_obs](int, double, const Vec& x, const Vec&, const Vec&) -> Vec {
        Vec s(n_obs);
        for (int j = 0; j < n_obs; ++j) s[j] = P.obstacles[j].value(x.head<3>());
        return s;
    };
    o.ds = [P, n_obs](int, double, const Vec& x, const Vec&, const Vec&, Mat& C, Mat& D, Mat& G) {
        C = Mat::Zero(n_obs, 6);
        for (int j = 0; j < n_obs; ++j) C.block(j, 0, 1, 3) = P.obstacles[j].gradient(x.head<3>()).transpose();
        D = Mat::Zero(n_obs, 4);
        G = Mat::Zero(n_obs, 1);
    };

    ocp::ConvexConstraint tf_lo, tf_hi;
    tf_lo.name = "tf min";
    tf_lo.value = [P](int, const Vec&, const Vec& p) { return P.tf_min - p[0]; };
    tf_lo.emit = [P](int, const ExprVec&, const ExprVec& p, const LinExpr& slack, ProblemBuilder& pb) {
        pb.add_le(P.tf_min - p[0], slack, "tf min");
    };
    tf_hi.name = "tf max";
    tf_hi.value = [P](int, const Vec&, const Vec& p) { return p[0] - P.tf_max; };
    tf_hi.emit = [P](int, const ExprVec&, const ExprVec& p, const LinExpr& slack, ProblemBuilder& pb) {
        pb.add_le(p[0] - P.tf_max, slack, "tf max");
    };
    o.state_constraints = {tf_lo, tf_hi};

    const double cmax = std::cos(P.theta_max);
    o.input_constraints = [P, cmax](int, const ExprVec& u, const ExprVec&, ProblemBuilder& pb) {
        pb.add_le(LinExpr(P.a_min), u[3], "sigma min");
        pb.add_le(u[3], LinExpr(P.a_max), "sigma max");
        pb.add_soc(u[3], {u[0], u[1], u[2]}, "lcvx");
        pb.add_le(cmax * u[3], u[2], "tilt");
    };
    o.input_violation = [P, cmax](int, const Vec& u, const Vec&) {
        const double a = u.head<3>().norm(), s = u[3];
        return std::max({0.0, P.a_min - s, s - P.a_max, a - s, cmax * s - u[2]});
    };

    o.n_ic = o.n_tc = 6;
    Vec xi(6), xf(6);
    xi << P.r0, P.v0;
    xf << P.rf, P.vf;
    o.g_ic = [xi](const Vec& x, const Vec&) -> Vec { return x - xi; };
    o.g_tc = [xf](const Vec& x, const Vec&) -> Vec { return x - xf; };
    o.dg_ic = o.dg_tc = [](const Vec&, const Vec&, Mat& H, Mat& K) {
        H = Mat::Identity(6, 6);
        K = Mat::Zero(6, 1);
    };

    const double g2 = P.g * P.g;
    o.running_cost = [g2](const Vec&, const Vec& u, const Vec&) { return u[3] * u[3] / g2; };
    o.running_cost_grad = [g2](const Vec&, const Vec& u, const Vec&, Vec& ax, Vec& bu, Vec& fp) {
        ax = Vec::Zero(6);
        bu = Vec::Zero(4);
        bu[3] = 2 * u[3] / g2;
        fp = Vec::Zero(1);
    };
    o.running_cost_epigraph = [P](int, const ExprVec&, const ExprVec& u, const ExprVec&, ProblemBuilder& pb) {
        LinExpr t = LinExpr::var(pb.add_var("gamma"));
        pb.add_square_le((1.0 / P.g) * u[3], t, "running cost");
        return t;
    };

    ocp::QuadraticRunningCost q;
    q.S = [g2](const Vec&) {
        Mat S = Mat::Zero(4, 4);
        S(3, 3) = 1.0 / g2;
        return S;
    };
    q.ell = [](const Vec&, const Vec&) { return Vec::Zero(4); };
    q.g = [](const Vec&, const Vec&) { return 0.0; };
    q.f0 = [P, nhat](double, const Vec& x, const Vec& p) -> Vec {
        Vec f(6);
        f.head<3>() = x.tail<3>();
        f.tail<3>() = -P.g * nhat;
        return p[0] * f;
    };
    q.f1 = [](double, const Vec&, const Vec& p) -> Mat {
        Mat F = Mat::Zero(6, 4);
        F.bottomLeftCorner(3, 3).setIdentity();
        return p[0] * F;
    };
    o.quadratic = q;

    o.dense_violation = [P](double, const Vec& x, const Vec&, const Vec&) {
        double worst = 0.0;
        for (const auto& ob : P.obstacles) worst = std::max(worst, ob.value(x.head<3>()));
        return worst;
    };
    return o;
}

Trajectory quadrotor_guess(const QuadrotorParams& P, const TimeGrid& grid) {
    Vec xi(6), xf(6), u(4), p(1);
    xi << P.r0, P.v0;
    xf << P.rf, P.vf;
    u << 0, 0, P.g, P.g;
    p << 0.5 * (P.tf_min + P.tf_max);
    return ocp::straight_line_guess(xi, xf, u, u, p, grid);
}

ScalingMap quadrotor_scaling(const QuadrotorParams& P) {
    Vec3 lo = P.r0.cwiseMin(P.rf).array() - 1.0, hi = P.r0.cwiseMax(P.rf).array() + 1.0;
    double vb = std::max(1.0, (P.rf - P.r0).norm() / P.tf_max * 2.0);
    Vec xlo(6), xhi(6), ulo(4), uhi(4), plo(1), phi(1);
    xlo << lo, Vec3::Constant(-vb);
    xhi << hi, Vec3::Constant(vb);
    ulo << -P.a_max, -P.a_max, 0.0, P.a_min;
    uhi << P.a_max, P.a_max, P.a_max, P.a_max;
    plo << P.tf_min;
    phi << P.tf_max;
    return ocp::make_scaling({xlo, xhi}, {ulo, uhi}, {plo, phi});
}

} // namespace trajopt::vehicles
