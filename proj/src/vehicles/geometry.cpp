#include "trajopt/vehicles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace trajopt::vehicles {

void Ellipsoid::validate() const {
    if (!H.allFinite() || !c.allFinite()) throw std::invalid_argument("obstacle: non-finite shape or center");
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("obstacle: H must be symmetric");
    Eigen::LLT<Mat3> llt(H);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("obstacle: H must be positive definite");
}

double Ellipsoid::value(const Vec3& r) const { return 1.0 - (H * (r - c)).norm(); }

Vec3 Ellipsoid::gradient(const Vec3& r) const {
    Vec3 y = H * (r - c);
    double ny = y.norm();
    // at the center any direction is a subgradient; take the first axis
    if (ny < 1e-12) {
        Vec3 d = H.transpose() * (H * Vec3::UnitX());
        return -d / (H * Vec3::UnitX()).norm();
    }
    return -H.transpose() * y / ny;
}

// ---------------------------------------------------------------------------

Vec4 quat_identity() { return Vec4(0, 0, 0, 1); }

Vec4 quat_mul(const Vec4& q, const Vec4& r) {
    Vec3 qv = q.head<3>(), rv = r.head<3>();
    Vec4 out;
    out.head<3>() = q[3] * rv + r[3] * qv + qv.cross(rv);
    out[3] = q[3] * r[3] - qv.dot(rv);
    return out;
}

Vec4 quat_conj(const Vec4& q) { return Vec4(-q[0], -q[1], -q[2], q[3]); }

Mat3 quat_to_matrix(const Vec4& q) {
    return Eigen::Quaterniond(q[3], q[0], q[1], q[2]).normalized().toRotationMatrix();
}

AngleAxis quat_exp_map(const Vec4& q) {
    AngleAxis out;
    Vec3 v = q.head<3>();
    double s = v.norm();
    if (s < 1e-15) return out;
    out.angle = 2.0 * std::atan2(s, q[3]);
    out.axis = v / s;
    return out;
}

Vec4 quat_log_map(double angle, const Vec3& axis) {
    Vec4 q;
    q.head<3>() = axis * std::sin(angle / 2);
    q[3] = std::cos(angle / 2);
    return q;
}

Vec3 quat_rotation_vector(const Vec4& q) {
    AngleAxis a = quat_exp_map(q);
    return a.angle * a.axis;
}

Vec4 quat_from_rotation_vector(const Vec3& w) {
    double a = w.norm();
    if (a < 1e-15) return quat_identity();
    return quat_log_map(a, w / a);
}

Vec3 slerp_rotation(const Vec4& q0, const Vec4& qf) {
    Vec4 qe = quat_mul(quat_conj(q0), qf);
    if (qe[3] < 0) qe = -qe;
    return quat_rotation_vector(qe);
}

Vec4 slerp(const Vec4& q0, const Vec4& qf, double t) {
    if (t < 0 || t > 1) throw std::invalid_argument("slerp: t must lie in [0, 1]");
    return quat_mul(q0, quat_from_rotation_vector(t * slerp_rotation(q0, qf)));
}

// ---------------------------------------------------------------------------

double room_sdf(const Vec3& r, const Room& room) {
    return 1.0 - (r - room.center()).cwiseQuotient(room.half()).cwiseAbs().maxCoeff();
}

Softmax softmax(const Vec& v, double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("softmax: sharpness must be positive");
    if (v.size() == 0) throw std::invalid_argument("softmax: empty input");
    const double vmax = v.maxCoeff();
    Vec e = (sigma * (v.array() - vmax)).exp().matrix();
    const double sum = e.sum();
    Softmax out;
    out.value = vmax + std::log(sum) / sigma;
    out.grad = e / sum;
    return out;
}

double flight_space_sdf(const Vec3& r, const std::vector<Room>& rooms) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& room : rooms) best = std::max(best, room_sdf(r, room));
    return best;
}

double smooth_flight_space_sdf(const Vec3& r, const std::vector<Room>& rooms, double sigma) {
    Vec d(static_cast<Eigen::Index>(rooms.size()));
    for (std::size_t i = 0; i < rooms.size(); ++i) d[static_cast<Eigen::Index>(i)] = room_sdf(r, rooms[i]);
    return softmax(d, sigma).value;
}

} // namespace trajopt::vehicles
