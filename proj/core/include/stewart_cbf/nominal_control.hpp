#pragma once

#include "stewart_cbf/dynamics.hpp"
#include "stewart_cbf/types.hpp"

namespace stewart_cbf {

using GainMatrix = Eigen::Matrix<double, kDof, 2 * kDof>;

struct LqrWeights {
    Mat12 Q = (Vec12() << Vec6::Constant(50.0), Vec6::Constant(10.0)).finished().asDiagonal();
    Mat6 R = Mat6::Identity();

    static LqrWeights diagonal(const Vec6& q_pos, const Vec6& q_vel, const Vec6& r);
    bool is_diagonal() const;
    void validate() const;
};

struct TrackingTarget {
    Vec6 q_des = Vec6::Zero();
    Vec6 qdot_des = Vec6::Zero();
};

// Double-integrator pair A = [[0, I], [0, 0]], B = [[0], [I]].
Mat12 double_integrator_A();
Eigen::Matrix<double, 2 * kDof, kDof> double_integrator_B();

// Per-axis closed-form CARE roots for diagonal weights.
GainMatrix lqr_gain_diagonal(const LqrWeights& w);

// Stabilizing CARE solution via the matrix sign function of the Hamiltonian.
Mat12 solve_care_sign(const Mat12& A, const Eigen::Matrix<double, 12, 6>& B, const Mat12& Q,
                      const Mat6& R);

// K = R^{-1} B^T P. Uses the per-axis closed form when both weights are diagonal.
GainMatrix lqr_gain(const LqrWeights& w);

// -K ([q; qdot] - [q_des; qdot_des])
Vec6 u_des(const PlantState& state, const TrackingTarget& target, const GainMatrix& K);

// H^{-1}(M u + C qdot + G); H^{-1} = J^T.
Vec6 f_des(const PlantState& state, const DynamicsEval& dyn, const Vec6& u);
Vec6 f_des(const PlantState& state, const PlatformModel& model, const Vec6& u);

}  // namespace stewart_cbf
