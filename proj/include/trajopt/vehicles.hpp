#pragma once

#include "trajopt/ocp.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <string>
#include <vector>

namespace trajopt::vehicles {

using ocp::ContinuousOCP;
using ocp::Mat;
using ocp::ScalingMap;
using ocp::TimeGrid;
using ocp::Trajectory;
using ocp::Vec;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

// Keep-out zone ||H (r - c)|| >= 1 with H symmetric positive definite.
struct Ellipsoid {
    Mat3 H = Mat3::Identity();
    Vec3 c = Vec3::Zero();

    void validate() const;
    // s = 1 - ||H (r - c)||, positive inside
    double value(const Vec3& r) const;
    Vec3 gradient(const Vec3& r) const;
};

// ---------------------------------------------------------------------------
// Quadrotor: point mass r'' = a - g n, input (a, sigma), parameter p = tf.

struct QuadrotorParams {
    double g = 9.81;
    double a_min = 0.6 * 9.81, a_max = 2.5 * 9.81;
    double theta_max = 60.0 * M_PI / 180.0;
    double tf_min = 0.5, tf_max = 2.5;
    std::vector<Ellipsoid> obstacles;
    Vec3 r0 = Vec3::Zero(), v0 = Vec3::Zero(), rf = Vec3::Zero(), vf = Vec3::Zero();

    void validate() const;
    static QuadrotorParams defaults();
    static QuadrotorParams from_json(const nlohmann::json& j, const std::string& pointer = "");
    nlohmann::json to_json() const;
};

ContinuousOCP quadrotor_ocp(const QuadrotorParams& p);
Trajectory quadrotor_guess(const QuadrotorParams& p, const TimeGrid& grid);
ScalingMap quadrotor_scaling(const QuadrotorParams& p);

// ---------------------------------------------------------------------------
// Unit quaternions, stored (x, y, z, w) with the Hamilton product.

Vec4 quat_identity();
Vec4 quat_mul(const Vec4& q, const Vec4& r);
Vec4 quat_conj(const Vec4& q);
// rotation matrix of q, so that quat_mul(q, (v, 0), conj(q)) = R v
Mat3 quat_to_matrix(const Vec4& q);

struct AngleAxis {
    double angle = 0.0;
    Vec3 axis = Vec3::UnitZ();
};
// unit quaternion -> (angle, axis); a zero rotation reports axis (0, 0, 1)
AngleAxis quat_exp_map(const Vec4& q);
// (angle, axis) -> (axis sin(angle/2), cos(angle/2))
Vec4 quat_log_map(double angle, const Vec3& axis);
// angle * axis as a single vector, and its inverse
Vec3 quat_rotation_vector(const Vec4& q);
Vec4 quat_from_rotation_vector(const Vec3& w);

// Constant-rate rotation from q0 to qf.  The error quaternion is flipped to a
// nonnegative scalar part first, so the path always takes the short way round.
Vec4 slerp(const Vec4& q0, const Vec4& qf, double t);
// the error rotation vector used by slerp: q(t) = q0 (x) Log(t * w)
Vec3 slerp_rotation(const Vec4& q0, const Vec4& qf);

// ---------------------------------------------------------------------------
// Flight space as a union of boxes.

struct Room {
    Vec3 lo = Vec3::Zero(), hi = Vec3::Ones();
    Vec3 center() const { return 0.5 * (hi + lo); }
    Vec3 half() const { return 0.5 * (hi - lo); }
};

// 1 - ||(r - c) ./ s||_inf; concave, nonnegative exactly inside the room
double room_sdf(const Vec3& r, const Room& room);

struct Softmax {
    double value = 0.0;
    Vec grad;
};
// sigma^-1 log sum exp(sigma v_i), evaluated after shifting by max(v)
Softmax softmax(const Vec& v, double sigma);

// exact max over rooms and its smooth version with tight slacks
double flight_space_sdf(const Vec3& r, const std::vector<Room>& rooms);
double smooth_flight_space_sdf(const Vec3& r, const std::vector<Room>& rooms, double sigma);

// ---------------------------------------------------------------------------
// 6-DoF free-flyer: x = (r, v, q, omega), u = (T, M), p = (alpha_t, chi).

struct FreeFlyerParams {
    double m = 7.2;
    Mat3 J = 0.1083 * Mat3::Identity();
    double T_max = 0.72, M_max = 0.1;
    double v_max = 0.4, omega_max = 1.0;
    double tf_min = 60.0, tf_max = 80.0;
    std::vector<Room> rooms;
    std::vector<Ellipsoid> obstacles;
    double sharpness = 50.0;
    double eps_iss = 1e-4;
    Vec3 r0 = Vec3::Zero(), v0 = Vec3::Zero(), rf = Vec3::Zero(), vf = Vec3::Zero();
    Vec4 q0 = quat_identity(), qf = quat_identity();

    void validate() const;
    static FreeFlyerParams defaults();
    static FreeFlyerParams from_json(const nlohmann::json& j, const std::string& pointer = "");
    nlohmann::json to_json() const;

    int n_rooms() const { return static_cast<int>(rooms.size()); }
    // index of chi_ik in p
    int chi_index(int i, int k) const { return 1 + i + k * n_rooms(); }
};

// Absolute-time dynamics and Jacobians, exposed for tests and propagation.
Vec freeflyer_dynamics(const FreeFlyerParams& p, const Vec& x, const Vec& u);
void freeflyer_jacobians(const FreeFlyerParams& p, const Vec& x, const Vec& u, Mat& A, Mat& B);

// The parameter vector has 1 + N * n_rooms entries, so the grid size is fixed here.
ContinuousOCP freeflyer_ocp(const FreeFlyerParams& p, int N);
Trajectory freeflyer_guess(const FreeFlyerParams& p, const TimeGrid& grid);
ScalingMap freeflyer_scaling(const FreeFlyerParams& p, int N);

} // namespace trajopt::vehicles
