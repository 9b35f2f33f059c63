#include "stewart_cbf/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "stewart_cbf/errors.hpp"

namespace stewart_cbf {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kCircleTolerance = 1e-12;

void check_circle(const std::array<Vec3, kDof>& points, double radius, const char* which) {
    if (!(radius > 0.0)) {
        throw ConfigError(std::string(which) + " radius must be positive");
    }
    for (int i = 0; i < kDof; ++i) {
        const Vec3& p = points[i];
        if (!p.allFinite()) {
            throw ConfigError(std::string(which) + " point " + std::to_string(i) + " is not finite");
        }
        if (std::abs(p.z()) > kCircleTolerance ||
            std::abs(p.head<2>().norm() - radius) > kCircleTolerance) {
            std::ostringstream os;
            os << which << " point " << i << " is not on the radius-" << radius
               << " circle in the z = 0 plane";
            throw ConfigError(os.str());
        }
    }
}

}  // namespace

PlatformGeometry PlatformGeometry::symmetric(double base_radius, double platform_radius,
                                             double base_half_angle_deg,
                                             double platform_half_angle_deg) {
    PlatformGeometry g;
    g.effective_base_radius = base_radius;
    g.effective_platform_radius = platform_radius;
    for (int pair = 0; pair < 3; ++pair) {
        const double centre = 120.0 * pair;
        for (int side = 0; side < 2; ++side) {
            const double sign = side == 0 ? -1.0 : 1.0;
            const double ab = (centre + sign * base_half_angle_deg) * kDegToRad;
            const double ap = (centre + sign * platform_half_angle_deg) * kDegToRad;
            g.base_points[2 * pair + side] =
                Vec3(base_radius * std::cos(ab), base_radius * std::sin(ab), 0.0);
            g.platform_points[2 * pair + side] =
                Vec3(platform_radius * std::cos(ap), platform_radius * std::sin(ap), 0.0);
        }
    }
    return g;
}

void PlatformGeometry::validate() const {
    check_circle(base_points, effective_base_radius, "base");
    check_circle(platform_points, effective_platform_radius, "platform");
}

void InertiaParams::validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) {
        throw ConfigError("mass must be positive and finite");
    }
    if (!body_inertia.allFinite() ||
        (body_inertia - body_inertia.transpose()).norm() > 1e-12 * body_inertia.norm()) {
        throw ConfigError("body inertia must be finite and symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(body_inertia, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
        throw ConfigError("body inertia must be positive definite");
    }
    if (!std::isfinite(gravity)) {
        throw ConfigError("gravity must be finite");
    }
}

Vec12 PlantState::stacked() const {
    Vec12 x;
    x << q, qdot;
    return x;
}

PlantState PlantState::from_stacked(const Vec12& x) {
    return PlantState{x.head<6>(), x.tail<6>()};
}

void validate_state(const PlantState& state) {
    if (!state.q.allFinite() || !state.qdot.allFinite()) {
        throw DomainError("state has non-finite entries");
    }
    if (std::abs(state.q[kPitch]) >= std::numbers::pi / 2.0 - kPitchMargin) {
        throw DomainError("pitch too close to the Euler-angle singularity");
    }
}

Mat3 rotation_matrix(const Vec3& eta) {
    if (!(std::abs(eta[1]) < std::numbers::pi / 2.0)) {
        throw DomainError("rotation_matrix: pitch at or beyond +-pi/2");
    }
    const double cf = std::cos(eta[0]), sf = std::sin(eta[0]);
    const double ct = std::cos(eta[1]), st = std::sin(eta[1]);
    const double cp = std::cos(eta[2]), sp = std::sin(eta[2]);
    Mat3 R;
    R << cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf,
         sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf,
         -st,     ct * sf,                ct * cf;
    return R;
}

Mat3 euler_rate_matrix(const Vec3& eta) {
    const double ct = std::cos(eta[1]), st = std::sin(eta[1]);
    const double cp = std::cos(eta[2]), sp = std::sin(eta[2]);
    Mat3 T;
    T << cp * ct, -sp, 0.0,
         sp * ct,  cp, 0.0,
         -st,      0.0, 1.0;
    return T;
}

Mat3 body_rate_matrix(const Vec3& eta) {
    const double cf = std::cos(eta[0]), sf = std::sin(eta[0]);
    const double ct = std::cos(eta[1]), st = std::sin(eta[1]);
    Mat3 E;
    E << 1.0, 0.0, -st,
         0.0,  cf, sf * ct,
         0.0, -sf, cf * ct;
    return E;
}

LegVectors leg_vectors(const PlantState& state, const PlatformGeometry& geom) {
    const Mat3 R = rotation_matrix(state.euler());
    const Vec3 xi = state.position();
    LegVectors legs;
    for (int i = 0; i < kDof; ++i) {
        legs.vectors[i] = xi + R * geom.platform_points[i] - geom.base_points[i];
        legs.lengths[i] = legs.vectors[i].norm();
    }
    return legs;
}

Mat6 jacobian(const PlantState& state, const PlatformGeometry& geom) {
    const Vec3 eta = state.euler();
    const Mat3 R = rotation_matrix(eta);
    const Mat3 T = euler_rate_matrix(eta);
    const LegVectors legs = leg_vectors(state, geom);
    Mat6 J;
    for (int i = 0; i < kDof; ++i) {
        if (!(legs.lengths[i] > 0.0)) {
            throw SingularGeometryError("leg " + std::to_string(i) + " has zero length");
        }
        const Vec3 n = legs.vectors[i] / legs.lengths[i];
        const Vec3 moment = (R * geom.platform_points[i]).cross(n);
        J.block<1, 3>(i, 0) = n.transpose();
        J.block<1, 3>(i, 3) = moment.transpose() * T;
    }
    return J;
}

Mat6 inertia_matrix(const Vec6& q, const InertiaParams& inertia) {
    const Mat3 E = body_rate_matrix(q.tail<3>());
    Mat6 M = Mat6::Zero();
    M.topLeftCorner<3, 3>() = inertia.mass * Mat3::Identity();
    M.bottomRightCorner<3, 3>() = E.transpose() * inertia.body_inertia * E;
    return M;
}

std::array<Mat6, kDof> inertia_partials(const Vec6& q, const InertiaParams& inertia) {
    const double cf = std::cos(q[kRoll]), sf = std::sin(q[kRoll]);
    const double ct = std::cos(q[kPitch]), st = std::sin(q[kPitch]);
    const Mat3 E = body_rate_matrix(q.tail<3>());
    const Mat3& Ib = inertia.body_inertia;

    Mat3 dE_droll;
    dE_droll << 0.0, 0.0, 0.0,
                0.0, -sf, cf * ct,
                0.0, -cf, -sf * ct;
    Mat3 dE_dpitch;
    dE_dpitch << 0.0, 0.0, -ct,
                 0.0, 0.0, -sf * st,
                 0.0, 0.0, -cf * st;

    std::array<Mat6, kDof> dM;
    for (auto& m : dM) m.setZero();
    auto rot_partial = [&](const Mat3& dE) -> Mat3 {
        const Mat3 half = dE.transpose() * Ib * E;
        return half + half.transpose();
    };
    dM[kRoll].bottomRightCorner<3, 3>() = rot_partial(dE_droll);
    dM[kPitch].bottomRightCorner<3, 3>() = rot_partial(dE_dpitch);
    return dM;
}

Mat6 coriolis_matrix(const Vec6& q, const Vec6& qdot, const InertiaParams& inertia) {
    const auto dM = inertia_partials(q, inertia);
    // C_ij = sum_k 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qdot_k
    Mat6 dM_qdot = Mat6::Zero();  // sum_k dM/dq_k qdot_k
    for (int k = 0; k < kDof; ++k) dM_qdot += dM[k] * qdot[k];
    Mat6 C;
    for (int i = 0; i < kDof; ++i) {
        for (int j = 0; j < kDof; ++j) {
            const double t2 = dM[j].row(i).dot(qdot);
            const double t3 = dM[i].row(j).dot(qdot);
            C(i, j) = 0.5 * (dM_qdot(i, j) + t2 - t3);
        }
    }
    return C;
}

Vec6 gravity_vector(const InertiaParams& inertia) {
    Vec6 G = Vec6::Zero();
    G[kZ] = inertia.mass * inertia.gravity;
    return G;
}

DynamicsEval dynamics_terms(const PlantState& state, const PlatformModel& model) {
    DynamicsEval d;
    d.J = jacobian(state, model.geometry);
    const Eigen::PartialPivLU<Mat6> lu(d.J);
    d.det_J = lu.determinant();
    if (!(std::abs(d.det_J) >= kJacobianDetTolerance)) {
        std::ostringstream os;
        os << "near-singular pose: |det J| = " << std::abs(d.det_J);
        throw NearSingularPoseError(os.str(), d.det_J);
    }
    d.H = lu.inverse().transpose();
    d.M = inertia_matrix(state.q, model.inertia);
    d.C = coriolis_matrix(state.q, state.qdot, model.inertia);
    d.G = gravity_vector(model.inertia);
    return d;
}

Vec6 generalized_acceleration(const DynamicsEval& dyn, const Vec6& qdot, const Vec6& force) {
    return dyn.M.llt().solve(dyn.H * force - dyn.C * qdot - dyn.G);
}

Vec12 control_affine_rhs(const PlantState& state, const Vec6& force, const PlatformModel& model) {
    const DynamicsEval dyn = dynamics_terms(state, model);
    Vec12 xdot;
    xdot << state.qdot, generalized_acceleration(dyn, state.qdot, force);
    return xdot;
}

}  // namespace stewart_cbf
