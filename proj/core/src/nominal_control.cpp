#include "stewart_cbf/nominal_control.hpp"

#include <cmath>

#include "stewart_cbf/errors.hpp"

namespace stewart_cbf {

namespace {

bool is_diag(const auto& m) {
    auto off = m;
    off.diagonal().setZero();
    return off.isZero(0.0);
}

}  // namespace

LqrWeights LqrWeights::diagonal(const Vec6& q_pos, const Vec6& q_vel, const Vec6& r) {
    LqrWeights w;
    w.Q.setZero();
    w.Q.diagonal() << q_pos, q_vel;
    w.R = r.asDiagonal();
    return w;
}

bool LqrWeights::is_diagonal() const { return is_diag(Q) && is_diag(R); }

void LqrWeights::validate() const {
    if (!Q.allFinite() || !R.allFinite()) throw ArgumentError("LQR weights must be finite");
    if ((Q - Q.transpose()).norm() > 1e-12 * std::max(1.0, Q.norm()) ||
        (R - R.transpose()).norm() > 1e-12 * std::max(1.0, R.norm())) {
        throw ArgumentError("LQR weights must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat6> er(R, Eigen::EigenvaluesOnly);
    if (!(er.eigenvalues().minCoeff() > 0.0)) throw ArgumentError("R must be positive definite");
    Eigen::SelfAdjointEigenSolver<Mat12> eq(Q, Eigen::EigenvaluesOnly);
    if (eq.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, Q.norm())) {
        throw ArgumentError("Q must be positive semidefinite");
    }
}

Mat12 double_integrator_A() {
    Mat12 A = Mat12::Zero();
    A.topRightCorner<6, 6>().setIdentity();
    return A;
}

Eigen::Matrix<double, 2 * kDof, kDof> double_integrator_B() {
    Eigen::Matrix<double, 12, 6> B = Eigen::Matrix<double, 12, 6>::Zero();
    B.bottomRows<6>().setIdentity();
    return B;
}

GainMatrix lqr_gain_diagonal(const LqrWeights& w) {
    // Per axis: p12 = sqrt(q_p r), p22 = sqrt(r (2 p12 + q_v)), K = [p12, p22] / r.
    GainMatrix K = GainMatrix::Zero();
    for (int i = 0; i < kDof; ++i) {
        const double qp = w.Q(i, i);
        const double qv = w.Q(kDof + i, kDof + i);
        const double r = w.R(i, i);
        const double p12 = std::sqrt(qp * r);
        const double p22 = std::sqrt(r * (2.0 * p12 + qv));
        K(i, i) = p12 / r;
        K(i, kDof + i) = p22 / r;
    }
    return K;
}

Mat12 solve_care_sign(const Mat12& A, const Eigen::Matrix<double, 12, 6>& B, const Mat12& Q,
                      const Mat6& R) {
    using Mat24 = Eigen::Matrix<double, 24, 24>;
    Mat24 Z;
    Z << A, -B * R.llt().solve(B.transpose()), -Q, -A.transpose();
    // Newton iteration with determinant scaling.
    for (int it = 0; it < 100; ++it) {
        const Eigen::PartialPivLU<Mat24> lu(Z);
        const double det = std::abs(lu.determinant());
        const double c = std::pow(det, -1.0 / 24.0);
        const Mat24 next = 0.5 * (c * Z + lu.inverse() / c);
        const double change = (next - Z).norm() / std::max(1.0, Z.norm());
        Z = next;
        if (change < 1e-13) break;
    }
    // (W + I) [I; P] = 0 on the stable subspace: [W12; W22 + I] P = -[W11 + I; W21]
    Eigen::Matrix<double, 24, 12> lhs, rhs;
    lhs << Z.topRightCorner<12, 12>(), Z.bottomRightCorner<12, 12>() + Mat12::Identity();
    rhs << -(Z.topLeftCorner<12, 12>() + Mat12::Identity()), -Z.bottomLeftCorner<12, 12>();
    Mat12 P = lhs.colPivHouseholderQr().solve(rhs);
    return 0.5 * (P + P.transpose());
}

GainMatrix lqr_gain(const LqrWeights& w) {
    w.validate();
    if (w.is_diagonal()) return lqr_gain_diagonal(w);
    const auto B = double_integrator_B();
    const Mat12 P = solve_care_sign(double_integrator_A(), B, w.Q, w.R);
    return w.R.llt().solve(B.transpose() * P);
}

Vec6 u_des(const PlantState& state, const TrackingTarget& target, const GainMatrix& K) {
    Vec12 err;
    err << state.q - target.q_des, state.qdot - target.qdot_des;
    return -K * err;
}

Vec6 f_des(const PlantState& state, const DynamicsEval& dyn, const Vec6& u) {
    return dyn.J.transpose() * (dyn.M * u + dyn.C * state.qdot + dyn.G);
}

Vec6 f_des(const PlantState& state, const PlatformModel& model, const Vec6& u) {
    return f_des(state, dynamics_terms(state, model), u);
}

}  // namespace stewart_cbf
