#include "trajopt/json_reader.hpp"
#include "json_common.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajopt::vehicles {

using conic::ExprVec;
using conic::LinExpr;
using conic::ProblemBuilder;
using nlohmann::json;

namespace {

Mat3 skew(const Vec3& w) {
    Mat3 S;
    S << 0, -w[2], w[1], w[2], 0, -w[0], -w[1], w[0], 0;
    return S;
}

Vec4 quat4(const Vec& v) { return Vec4(v[0], v[1], v[2], v[3]); }

} // namespace

void FreeFlyerParams::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw std::invalid_argument("freeflyer: " + what);
    };
    need(m > 0, "mass must be positive");
    need(J.allFinite() && (J - J.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * J.cwiseAbs().maxCoeff(),
         "J must be symmetric");
    need(Eigen::LLT<Mat3>(J).info() == Eigen::Success, "J must be positive definite");
    need(T_max > 0 && M_max > 0, "T_max and M_max must be positive");
    need(v_max > 0 && omega_max > 0, "v_max and omega_max must be positive");
    need(0 < tf_min && tf_min <= tf_max, "need 0 < tf_min <= tf_max");
    need(!rooms.empty(), "at least one room is required");
    for (std::size_t i = 0; i < rooms.size(); ++i)
        need((rooms[i].hi.array() > rooms[i].lo.array()).all(), "room " + std::to_string(i) + " needs hi > lo");
    need(std::abs(q0.norm() - 1) <= 1e-9 && std::abs(qf.norm() - 1) <= 1e-9, "q0 and qf must be unit quaternions");
    need(sharpness > 0, "sharpness must be positive");
    need(eps_iss >= 0, "eps_iss must be nonnegative");
    for (const auto& o : obstacles) o.validate();
}

FreeFlyerParams FreeFlyerParams::defaults() {
    FreeFlyerParams p;
    // start module, corridor along x, junction, corridor along y, junction, module above
    p.rooms = {
        {Vec3(-1.0, -1.0, -1.0), Vec3(1.0, 1.0, 1.0)}, {Vec3(1.0, -0.6, -0.6), Vec3(7.0, 0.6, 0.6)},
        {Vec3(7.0, -1.0, -1.0), Vec3(9.0, 1.0, 1.0)},  {Vec3(7.4, 1.0, -0.6), Vec3(8.6, 7.0, 0.6)},
        {Vec3(7.0, 7.0, -1.0), Vec3(9.0, 9.0, 1.0)},   {Vec3(7.0, 7.0, 1.0), Vec3(9.0, 9.0, 4.0)},
    };
    auto ball = [](Vec3 c, double radius) {
        Ellipsoid e;
        e.c = c;
        e.H = Mat3::Identity() / radius;
        return e;
    };
    p.obstacles = {ball(Vec3(4.0, 0.25, 0.0), 0.3), ball(Vec3(7.75, 4.0, -0.2), 0.3)};
    p.r0 = Vec3(0.0, 0.0, 0.0);
    p.rf = Vec3(8.0, 8.0, 3.0);
    p.q0 = quat_identity();
    p.qf = Vec4(0.0, 0.0, std::sqrt(0.5), std::sqrt(0.5));
    return p;
}

FreeFlyerParams FreeFlyerParams::from_json(const json& j, const std::string& pointer) {
    FreeFlyerParams p = defaults();
    ObjectReader r(j, pointer);
    p.m = r.number("m", p.m);
    p.J = r.mat3("J", p.J);
    p.T_max = r.number("T_max", p.T_max);
    p.M_max = r.number("M_max", p.M_max);
    p.v_max = r.number("v_max", p.v_max);
    p.omega_max = r.number("omega_max", p.omega_max);
    p.tf_min = r.number("tf_min", p.tf_min);
    p.tf_max = r.number("tf_max", p.tf_max);
    p.sharpness = r.number("sharpness", p.sharpness);
    p.eps_iss = r.number("eps_iss", p.eps_iss);
    p.r0 = r.vec3("r0", p.r0);
    p.v0 = r.vec3("v0", p.v0);
    p.rf = r.vec3("rf", p.rf);
    p.vf = r.vec3("vf", p.vf);
    for (auto [key, q] : {std::pair{"q0", &p.q0}, std::pair{"qf", &p.qf}}) {
        Vec v = r.vector(key, *q);
        if (v.size() != 4) throw ConfigError(r.path(key), "expected 4 numbers (x, y, z, w)");
        *q = quat4(v);
    }
    if (r.has("rooms")) {
        const json& jr = r.at("rooms");
        const std::string rp = r.path("rooms");
        if (!jr.is_array()) throw ConfigError(rp, "expected an array of rooms");
        p.rooms.clear();
        for (std::size_t i = 0; i < jr.size(); ++i) {
            ObjectReader rr(jr[i], rp + "/" + std::to_string(i));
            Room room;
            room.lo = rr.vec3("lo", room.lo);
            room.hi = rr.vec3("hi", room.hi);
            rr.finish();
            p.rooms.push_back(room);
        }
    }
    if (r.has("obstacles")) p.obstacles = obstacles_from_json(r.at("obstacles"), r.path("obstacles"));
    r.finish();
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(pointer.empty() ? "/" : pointer, e.what());
    }
    return p;
}

json FreeFlyerParams::to_json() const {
    json rj = json::array();
    for (const auto& room : rooms) rj.push_back({{"lo", trajopt::to_json(Vec(room.lo))}, {"hi", trajopt::to_json(Vec(room.hi))}});
    return {{"m", m},
            {"J", trajopt::to_json(J)},
            {"T_max", T_max},
            {"M_max", M_max},
            {"v_max", v_max},
            {"omega_max", omega_max},
            {"tf_min", tf_min},
            {"tf_max", tf_max},
            {"sharpness", sharpness},
            {"eps_iss", eps_iss},
            {"r0", trajopt::to_json(Vec(r0))},
            {"v0", trajopt::to_json(Vec(v0))},
            {"rf", trajopt::to_json(Vec(rf))},
            {"vf", trajopt::to_json(Vec(vf))},
            {"q0", trajopt::to_json(Vec(q0))},
            {"qf", trajopt::to_json(Vec(qf))},
            {"rooms", rj},
            {"obstacles", obstacles_to_json(obstacles)}};
}

Vec freeflyer_dynamics(const FreeFlyerParams& P, const Vec& x, const Vec& u) {
    const Vec3 v = x.segment<3>(3), w = x.segment<3>(10);
    const Vec4 q = quat4(x.segment<4>(6));
    Vec f(13);
    f.segment<3>(0) = v;
    f.segment<3>(3) = u.head<3>() / P.m;
    Vec4 wq(w[0], w[1], w[2], 0.0);
    f.segment<4>(6) = 0.5 * quat_mul(q, wq);
    f.segment<3>(10) = P.J.inverse() * (u.tail<3>() - w.cross(P.J * w));
    return f;
}

void freeflyer_jacobians(const FreeFlyerParams& P, const Vec& x, const Vec& u, Mat& A, Mat& B) {
    (void)u;
    const Vec3 w = x.segment<3>(10);
    const Vec3 qv = x.segment<3>(6);
    const double qw = x[9];
    const Mat3 Jinv = P.J.inverse();
    A = Mat::Zero(13, 13);
    B = Mat::Zero(13, 6);
    A.block<3, 3>(0, 3).setIdentity();
    // qv' = (qw w - w x qv) / 2, qw' = -w.qv / 2
    A.block<3, 3>(6, 6) = -0.5 * skew(w);
    A.block<3, 1>(6, 9) = 0.5 * w;
    A.block<1, 3>(9, 6) = -0.5 * w.transpose();
    A.block<3, 3>(6, 10) = 0.5 * (qw * Mat3::Identity() + skew(qv));
    A.block<1, 3>(9, 10) = -0.5 * qv.transpose();
    A.block<3, 3>(10, 10) = -Jinv * (skew(w) * P.J - skew(P.J * w));
    B.block<3, 3>(3, 0) = Mat3::Identity() / P.m;
    B.block<3, 3>(10, 3) = Jinv;
}

ContinuousOCP freeflyer_ocp(const FreeFlyerParams& prm, int N) {
    prm.validate();
    if (N < 2) throw std::invalid_argument("freeflyer: grid needs at least two nodes");
    const FreeFlyerParams P = prm;
    const int n = 13, m = 6, nr = P.n_rooms(), d = 1 + N * nr;
    const int n_obs = static_cast<int>(P.obstacles.size());

    ContinuousOCP o;
    o.name = "freeflyer";
    o.n = n;
    o.m = m;
    o.d = d;
    o.d_dyn = 1;

    auto dil = ocp::dilate_dynamics([P](const Vec& x, const Vec& u) { return freeflyer_dynamics(P, x, u); },
                                    [P](const Vec& x, const Vec& u, Mat& A, Mat& B) {
                                        freeflyer_jacobians(P, x, u, A, B);
                                    },
                                    n, m, d, 0);
    o.f = dil.f;
    o.df = dil.df;

    auto chi_at = [P, nr, N, d](int k, const Vec& p) {
        if (p.size() != d || k < 0 || k >= N)
            throw std::invalid_argument("freeflyer: parameter vector does not match the grid it was built for");
        Vec c(nr);
        for (int i = 0; i < nr; ++i) c[i] = p[P.chi_index(i, k)];
        return c;
    };

    o.n_s = n_obs + 1;
    o.s = [P, n_obs, chi_at](int k, double, const Vec& x, const Vec&, const Vec& p) -> Vec {
        Vec s(n_obs + 1);
        for (int j = 0; j < n_obs; ++j) s[j] = P.obstacles[j].value(x.head<3>());
        s[n_obs] = -softmax(chi_at(k, p), P.sharpness).value;
        return s;
    };
    o.ds = [P, n_obs, nr, d, chi_at](int k, double, const Vec& x, const Vec&, const Vec& p, Mat& C, Mat& D,
                                     Mat& G) {
        C = Mat::Zero(n_obs + 1, 13);
        for (int j = 0; j < n_obs; ++j) C.block(j, 0, 1, 3) = P.obstacles[j].gradient(x.head<3>()).transpose();
        D = Mat::Zero(n_obs + 1, 6);
        G = Mat::Zero(n_obs + 1, d);
        Vec grad = softmax(chi_at(k, p), P.sharpness).grad;
        for (int i = 0; i < nr; ++i) G(n_obs, P.chi_index(i, k)) = -grad[i];
    };

    auto norm_bound = [](std::string name, int offset, double bound) {
        ocp::ConvexConstraint c;
        c.name = name;
        c.value = [offset, bound](int, const Vec& x, const Vec&) { return x.segment<3>(offset).norm() - bound; };
        c.emit = [offset, bound, name](int, const ExprVec& x, const ExprVec&, const LinExpr& slack,
                                       ProblemBuilder& pb) {
            pb.add_soc(bound + slack, {x[offset], x[offset + 1], x[offset + 2]}, name);
        };
        return c;
    };
    o.state_constraints.push_back(norm_bound("v max", 3, P.v_max));
    o.state_constraints.push_back(norm_bound("omega max", 10, P.omega_max));

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
    o.state_constraints.push_back(tf_lo);
    o.state_constraints.push_back(tf_hi);

    // chi_ik <= d_i(r_k), written as six halfspaces per room and node
    for (int i = 0; i < nr; ++i) {
        ocp::ConvexConstraint c;
        c.name = "room " + std::to_string(i) + " slack";
        const Room room = P.rooms[i];
        c.value = [P, room, i](int k, const Vec& x, const Vec& p) {
            return p[P.chi_index(i, k)] - room_sdf(x.head<3>(), room);
        };
        c.emit = [P, room, i](int k, const ExprVec& x, const ExprVec& p, const LinExpr& slack, ProblemBuilder& pb) {
            const Vec3 ctr = room.center(), half = room.half();
            const LinExpr& chi = p[P.chi_index(i, k)];
            for (int j = 0; j < 3; ++j) {
                LinExpr rel = (1.0 / half[j]) * (x[j] - ctr[j]);
                pb.add_le(chi - 1.0 + rel, slack, "room slack");
                pb.add_le(chi - 1.0 - rel, slack, "room slack");
            }
        };
        o.state_constraints.push_back(c);
    }

    o.input_constraints = [P](int, const ExprVec& u, const ExprVec&, ProblemBuilder& pb) {
        pb.add_soc(LinExpr(P.T_max), {u[0], u[1], u[2]}, "thrust");
        pb.add_soc(LinExpr(P.M_max), {u[3], u[4], u[5]}, "torque");
    };
    o.input_violation = [P](int, const Vec& u, const Vec&) {
        return std::max({0.0, u.head<3>().norm() - P.T_max, u.tail<3>().norm() - P.M_max});
    };

    o.n_ic = o.n_tc = 13;
    Vec xi(13), xf(13);
    xi << P.r0, P.v0, P.q0, Vec3::Zero();
    xf << P.rf, P.vf, P.qf, Vec3::Zero();
    o.g_ic = [xi](const Vec& x, const Vec&) -> Vec { return x - xi; };
    o.g_tc = [xf](const Vec& x, const Vec&) -> Vec { return x - xf; };
    o.dg_ic = o.dg_tc = [d](const Vec&, const Vec&, Mat& H, Mat& K) {
        H = Mat::Identity(13, 13);
        K = Mat::Zero(13, d);
    };

    const double eps = P.eps_iss;
    o.terminal_cost = [eps](const Vec&, const Vec& p) { return -eps * p.tail(p.size() - 1).sum(); };
    o.terminal_cost_epigraph = [eps, d](const ExprVec&, const ExprVec& p, ProblemBuilder&) {
        LinExpr out;
        for (int j = 1; j < d; ++j) out += (-eps) * p[j];
        return out;
    };

    const double iT2 = 1.0 / (P.T_max * P.T_max), iM2 = 1.0 / (P.M_max * P.M_max);
    o.running_cost = [iT2, iM2](const Vec&, const Vec& u, const Vec&) {
        return iT2 * u.head<3>().squaredNorm() + iM2 * u.tail<3>().squaredNorm();
    };
    o.running_cost_grad = [iT2, iM2, d](const Vec&, const Vec& u, const Vec&, Vec& ax, Vec& bu, Vec& fp) {
        ax = Vec::Zero(13);
        bu.resize(6);
        bu.head<3>() = 2 * iT2 * u.head<3>();
        bu.tail<3>() = 2 * iM2 * u.tail<3>();
        fp = Vec::Zero(d);
    };
    o.running_cost_epigraph = [P](int, const ExprVec&, const ExprVec& u, const ExprVec&, ProblemBuilder& pb) {
        LinExpr t = LinExpr::var(pb.add_var("gamma"));
        ExprVec e;
        for (int j = 0; j < 3; ++j) e.push_back((1.0 / P.T_max) * u[j]);
        for (int j = 3; j < 6; ++j) e.push_back((1.0 / P.M_max) * u[j]);
        pb.add_sumsq_le(e, t, "running cost");
        return t;
    };

    ocp::QuadraticRunningCost q;
    q.S = [iT2, iM2](const Vec&) {
        Vec diag(6);
        diag << iT2, iT2, iT2, iM2, iM2, iM2;
        return Mat(diag.asDiagonal());
    };
    q.ell = [](const Vec&, const Vec&) { return Vec::Zero(6); };
    q.g = [](const Vec&, const Vec&) { return 0.0; };
    q.f0 = [P](double, const Vec& x, const Vec& p) -> Vec { return p[0] * freeflyer_dynamics(P, x, Vec::Zero(6)); };
    q.f1 = [P](double, const Vec&, const Vec& p) -> Mat {
        Mat F = Mat::Zero(13, 6);
        F.block<3, 3>(3, 0) = Mat3::Identity() / P.m;
        F.block<3, 3>(10, 3) = P.J.inverse();
        return p[0] * F;
    };
    o.quadratic = q;

    // between nodes the slacks are not defined; use the smooth SDF with tight slacks
    o.dense_violation = [P](double, const Vec& x, const Vec&, const Vec&) {
        double worst = -smooth_flight_space_sdf(x.head<3>(), P.rooms, P.sharpness);
        for (const auto& ob : P.obstacles) worst = std::max(worst, ob.value(x.head<3>()));
        return std::max(worst, 0.0);
    };
    return o;
}

Trajectory freeflyer_guess(const FreeFlyerParams& P, const TimeGrid& grid) {
    const int N = grid.N, nr = P.n_rooms();
    const double alpha = 0.5 * (P.tf_min + P.tf_max);
    const Vec3 gap = P.rf - P.r0;
    const double L = gap.cwiseAbs().sum();
    const Vec3 wrot = slerp_rotation(P.q0, P.qf);

    Trajectory z;
    z.x = Mat::Zero(13, N);
    z.u = Mat::Zero(6, N);
    z.p = Vec::Zero(1 + N * nr);
    z.p[0] = alpha;
    for (int k = 0; k < N; ++k) {
        const double t = grid.t[k];
        // distance travelled along the axis-by-axis path
        const double s = t * L;
        Vec3 r = P.r0, v = Vec3::Zero();
        double start = 0.0;
        int active = -1;
        for (int j = 0; j < 3; ++j) {
            const double leg = std::abs(gap[j]);
            if (leg == 0) continue;
            const double sgn = gap[j] > 0 ? 1.0 : -1.0;
            r[j] += sgn * std::clamp(s - start, 0.0, leg);
            // corners belong to the next leg, the end to the last one
            if (active < 0 || s >= start) active = j;
            start += leg;
        }
        if (active >= 0) v[active] = (gap[active] > 0 ? 1.0 : -1.0) * L / alpha;
        z.x.block<3, 1>(0, k) = r;
        z.x.block<3, 1>(3, k) = v;
        z.x.block<4, 1>(6, k) = slerp(P.q0, P.qf, t);
        z.x.block<3, 1>(10, k) = wrot / alpha;
        for (int i = 0; i < nr; ++i) z.p[P.chi_index(i, k)] = room_sdf(r, P.rooms[i]);
    }
    return z;
}

ScalingMap freeflyer_scaling(const FreeFlyerParams& P, int N) {
    Vec3 lo = P.rooms[0].lo, hi = P.rooms[0].hi;
    for (const auto& room : P.rooms) {
        lo = lo.cwiseMin(room.lo);
        hi = hi.cwiseMax(room.hi);
    }
    // the lowest room SDF over the bounding box sits at one of its corners
    double chi_lo = 0.0;
    for (int c = 0; c < 8; ++c) {
        Vec3 r((c & 1) ? hi[0] : lo[0], (c & 2) ? hi[1] : lo[1], (c & 4) ? hi[2] : lo[2]);
        for (const auto& room : P.rooms) chi_lo = std::min(chi_lo, room_sdf(r, room));
    }
    const int nr = P.n_rooms(), d = 1 + N * nr;
    Vec xlo(13), xhi(13), ulo(6), uhi(6), plo(d), phi(d);
    xlo << lo, Vec3::Constant(-P.v_max), Vec4::Constant(-1), Vec3::Constant(-P.omega_max);
    xhi << hi, Vec3::Constant(P.v_max), Vec4::Constant(1), Vec3::Constant(P.omega_max);
    ulo << Vec3::Constant(-P.T_max), Vec3::Constant(-P.M_max);
    uhi << Vec3::Constant(P.T_max), Vec3::Constant(P.M_max);
    plo.setConstant(chi_lo);
    phi.setConstant(1.0);
    plo[0] = P.tf_min;
    phi[0] = P.tf_max;
    return ocp::make_scaling({xlo, xhi}, {ulo, uhi}, {plo, phi});
}

} // namespace trajopt::vehicles
