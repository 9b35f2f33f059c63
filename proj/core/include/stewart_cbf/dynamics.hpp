#pragma once

#include <array>

#include "stewart_cbf/types.hpp"

namespace stewart_cbf {

// Attachment points of the six legs. Leg i runs from base_points[i] (frame {B})
// to platform_points[i] (frame {P}).
struct PlatformGeometry {
    std::array<Vec3, kDof> base_points;
    std::array<Vec3, kDof> platform_points;
    double effective_base_radius = 0.0;
    double effective_platform_radius = 0.0;

    // Three attachment pairs at 120 deg spacing; each pair is split by
    // +-half_angle around its centre. Angles in degrees.
    static PlatformGeometry symmetric(double base_radius, double platform_radius,
                                      double base_half_angle_deg, double platform_half_angle_deg);
    static PlatformGeometry make_default() { return symmetric(0.20, 0.16, 15.0, 50.0); }

    // Throws ConfigError when a point is off its circle or plane.
    void validate() const;
};

struct InertiaParams {
    double mass = 2.0;
    Mat3 body_inertia = Vec3(0.02, 0.02, 0.04).asDiagonal();
    double gravity = 9.81;

    void validate() const;
};

struct PlatformModel {
    PlatformGeometry geometry = PlatformGeometry::make_default();
    InertiaParams inertia;
};

// Pitch must stay this far from +-pi/2 for a state to be admissible.
inline constexpr double kPitchMargin = 1e-3;
// |det J| below this is reported as a near-singular pose.
inline constexpr double kJacobianDetTolerance = 1e-9;

struct PlantState {
    Vec6 q = Vec6::Zero();
    Vec6 qdot = Vec6::Zero();

    Vec3 position() const { return q.head<3>(); }
    Vec3 euler() const { return q.tail<3>(); }
    Vec12 stacked() const;
    static PlantState from_stacked(const Vec12& x);
};

// Throws DomainError for non-finite entries or pitch within kPitchMargin of +-pi/2.
void validate_state(const PlantState& state);

struct DynamicsEval {
    Mat6 M;
    Mat6 C;
    Vec6 G;
    Mat6 H;  // J^{-T}
    Mat6 J;
    double det_J = 0.0;
};

// R(eta) from {P} to {B}, Z-Y-X convention: R = Rz(psi) Ry(theta) Rx(phi).
Mat3 rotation_matrix(const Vec3& eta);

// T(eta): angular velocity in {B} = T(eta) * eta_dot.
Mat3 euler_rate_matrix(const Vec3& eta);

// E(eta) = R^T T: angular velocity in {P} = E(eta) * eta_dot. Independent of yaw.
Mat3 body_rate_matrix(const Vec3& eta);

struct LegVectors {
    std::array<Vec3, kDof> vectors;
    Vec6 lengths;
};

LegVectors leg_vectors(const PlantState& state, const PlatformGeometry& geom);

// Row i maps qdot to the rate of change of leg length i.
Mat6 jacobian(const PlantState& state, const PlatformGeometry& geom);

Mat6 inertia_matrix(const Vec6& q, const InertiaParams& inertia);

// dM/dq_k for k = 0..5. Only the roll and pitch partials are nonzero.
std::array<Mat6, kDof> inertia_partials(const Vec6& q, const InertiaParams& inertia);

// Christoffel-symbol Coriolis matrix; Mdot - 2C is skew-symmetric.
Mat6 coriolis_matrix(const Vec6& q, const Vec6& qdot, const InertiaParams& inertia);

Vec6 gravity_vector(const InertiaParams& inertia);

DynamicsEval dynamics_terms(const PlantState& state, const PlatformModel& model);

// qddot = M^{-1}(H F - C qdot - G)
Vec6 generalized_acceleration(const DynamicsEval& dyn, const Vec6& qdot, const Vec6& force);

// [qdot; M^{-1}(H F - C qdot - G)]
Vec12 control_affine_rhs(const PlantState& state, const Vec6& force, const PlatformModel& model);

inline double kinetic_energy(const DynamicsEval& dyn, const Vec6& qdot) {
    return 0.5 * qdot.dot(dyn.M * qdot);
}

}  // namespace stewart_cbf
