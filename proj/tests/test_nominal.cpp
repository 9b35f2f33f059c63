#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "stewart_cbf/errors.hpp"
#include "stewart_cbf/nominal_control.hpp"
#include "stewart_cbf/simulation.hpp"
#include "support.hpp"

using namespace stewart_cbf;
using namespace testing_support;

namespace {

const PlatformModel kModel{};

double care_residual(const LqrWeights& w, const Mat12& P) {
    const Mat12 A = double_integrator_A();
    const auto B = double_integrator_B();
    const Mat12 res = A.transpose() * P + P * A - P * B * w.R.inverse() * B.transpose() * P + w.Q;
    return res.norm() / std::max(1.0, w.Q.norm());
}

double max_real_eig(const GainMatrix& K) {
    const Mat12 Acl = double_integrator_A() - double_integrator_B() * K;
    return Eigen::EigenSolver<Mat12>(Acl).eigenvalues().real().maxCoeff();
}

Mat12 random_spd12(Rng& rng) {
    Mat12 L;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) L(i, j) = rng.uniform(-1, 1);
    return L * L.transpose() + 0.5 * Mat12::Identity();
}

}  // namespace

TEST(Lqr, UnitWeightsGiveClassicalGain) {
    const GainMatrix K = lqr_gain(LqrWeights::diagonal(Vec6::Ones(), Vec6::Zero(), Vec6::Ones()));
    for (int i = 0; i < kDof; ++i) {
        EXPECT_NEAR(K(i, i), 1.0, 1e-15);
        EXPECT_NEAR(K(i, kDof + i), std::sqrt(2.0), 1e-15);
    }
    Mat6 off = K.leftCols<6>();
    off.diagonal().setZero();
    EXPECT_EQ(off.norm(), 0.0);
}

TEST(Lqr, DefaultWeights) {
    const LqrWeights w;
    EXPECT_TRUE(w.is_diagonal());
    EXPECT_EQ(w.Q(0, 0), 50.0);
    EXPECT_EQ(w.Q(11, 11), 10.0);
    EXPECT_EQ(w.R, Mat6::Identity());
    const GainMatrix K = lqr_gain(w);
    EXPECT_NEAR(K(0, 0), std::sqrt(50.0), 1e-14);
    EXPECT_NEAR(K(0, 6), std::sqrt(2.0 * std::sqrt(50.0) + 10.0), 1e-14);
}

TEST(Lqr, HomogeneousInWeightScale) {
    Rng rng(61);
    for (int i = 0; i < 50; ++i) {
        const Vec6 qp = rng.vec6(0.01, 100), qv = rng.vec6(0.0, 50), r = rng.vec6(0.1, 10);
        const double k = rng.uniform(0.01, 100);
        const GainMatrix K1 = lqr_gain(LqrWeights::diagonal(qp, qv, r));
        const GainMatrix K2 = lqr_gain(LqrWeights::diagonal(k * qp, k * qv, k * r));
        EXPECT_LE((K1 - K2).norm(), 1e-12 * K1.norm());
    }
}

TEST(Lqr, ClosedLoopHurwitz) {
    Rng rng(62);
    for (int i = 0; i < 100; ++i) {
        const GainMatrix K =
            lqr_gain(LqrWeights::diagonal(rng.vec6(1e-4, 100), rng.vec6(0.0, 50), rng.vec6(0.1, 10)));
        EXPECT_LT(max_real_eig(K), 0.0);
    }
}

TEST(Lqr, DiagonalRootsSolveRiccati) {
    Rng rng(63);
    for (int i = 0; i < 50; ++i) {
        const LqrWeights w = LqrWeights::diagonal(rng.vec6(0.01, 100), rng.vec6(0.0, 50), rng.vec6(0.1, 10));
        const GainMatrix K = lqr_gain_diagonal(w);
        // P = [[P11, P12], [P12, P22]] with B^T P = R K
        Mat12 P = Mat12::Zero();
        for (int a = 0; a < kDof; ++a) {
            const double r = w.R(a, a), p12 = r * K(a, a), p22 = r * K(a, kDof + a);
            P(a, kDof + a) = P(kDof + a, a) = p12;
            P(kDof + a, kDof + a) = p22;
            P(a, a) = p12 * p22 / r;
        }
        EXPECT_LT(care_residual(w, P), 1e-12);
    }
}

TEST(Lqr, SignIterationAgreesWithDiagonalRoots) {
    Rng rng(64);
    for (int i = 0; i < 20; ++i) {
        const LqrWeights w = LqrWeights::diagonal(rng.vec6(0.1, 60), rng.vec6(0.0, 20), rng.vec6(0.5, 2));
        const auto B = double_integrator_B();
        const Mat12 P = solve_care_sign(double_integrator_A(), B, w.Q, w.R);
        const GainMatrix K = w.R.inverse() * B.transpose() * P;
        EXPECT_LT(care_residual(w, P), 1e-9);
        EXPECT_LE((K - lqr_gain_diagonal(w)).norm(), 1e-8 * K.norm());
    }
}

TEST(Lqr, DenseWeightsUseSignIteration) {
    Rng rng(65);
    for (int i = 0; i < 20; ++i) {
        LqrWeights w;
        w.Q = random_spd12(rng);
        Mat6 L = Mat6::Random();
        w.R = L * L.transpose() + Mat6::Identity();
        ASSERT_FALSE(w.is_diagonal());
        const GainMatrix K = lqr_gain(w);
        const auto B = double_integrator_B();
        const Mat12 P = solve_care_sign(double_integrator_A(), B, w.Q, w.R);
        EXPECT_LT(care_residual(w, P), 1e-9);
        EXPECT_LT(max_real_eig(K), 0.0);
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat12>(P).eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Lqr, InvalidWeightsRejected) {
    LqrWeights w;
    w.R(2, 2) = 0.0;
    EXPECT_THROW(lqr_gain(w), ArgumentError);
    w = LqrWeights{};
    w.R(0, 1) = 0.5;
    EXPECT_THROW(lqr_gain(w), ArgumentError);
    w = LqrWeights{};
    w.Q(3, 3) = -1.0;
    EXPECT_THROW(lqr_gain(w), ArgumentError);
}

TEST(Command, ZeroErrorGivesZero) {
    Rng rng(66);
    const GainMatrix K = lqr_gain(LqrWeights{});
    const PlantState s = random_state(rng);
    EXPECT_EQ(u_des(s, {s.q, s.qdot}, K), Vec6::Zero());
}

TEST(Command, DecoupledAxes) {
    const GainMatrix K = lqr_gain(LqrWeights{});
    PlantState s;
    TrackingTarget t;
    t.q_des[kX] = 0.1;
    const Vec6 u = u_des(s, t, K);
    EXPECT_GT(u[kX], 0.0);
    for (int i = 1; i < kDof; ++i) EXPECT_EQ(u[i], 0.0);
}

TEST(Command, MatchesMatrixVectorProduct) {
    Rng rng(67);
    const GainMatrix K = Eigen::Matrix<double, 6, 12>::Random();
    for (int i = 0; i < 50; ++i) {
        const PlantState s = random_state(rng);
        const TrackingTarget t{rng.vec6(-1, 1), rng.vec6(-1, 1)};
        Vec6 expect = Vec6::Zero();
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c)
                expect[r] -= K(r, c) * (s.q[c] - t.q_des[c]) + K(r, 6 + c) * (s.qdot[c] - t.qdot_des[c]);
        EXPECT_LT((u_des(s, t, K) - expect).norm(), 1e-14 * (1 + expect.norm()));
    }
}

TEST(Command, ZeroRotationalPositionWeightIgnoresRotationalOffsets) {
    Vec6 qp = Vec6::Constant(5.0), qv = Vec6::Constant(1.0);
    qp.tail<3>().setZero();
    const GainMatrix K = lqr_gain(LqrWeights::diagonal(qp, qv, Vec6::Ones()));
    Vec12 e = Vec12::Zero();
    e.segment<3>(3) << 0.2, -0.1, 0.3;
    EXPECT_EQ((K * e).norm(), 0.0);
}

TEST(Force, HoverCompensatesGravity) {
    Rng rng(68);
    for (int i = 0; i < 20; ++i) {
        PlantState s = random_state(rng);
        s.qdot.setZero();
        const DynamicsEval d = dynamics_terms(s, kModel);
        const Vec6 F = f_des(s, d, Vec6::Zero());
        EXPECT_LT(rel_err(Vec6(d.H * F), d.G), 1e-12);
        EXPECT_LT(rel_err(F, Vec6(d.J.transpose() * d.G)), 1e-15);
    }
}

TEST(Force, RoundTripRecoversCommand) {
    Rng rng(69);
    for (int i = 0; i < 1000; ++i) {
        const PlantState s = random_state(rng);
        const Vec6 u = rng.vec6(-3, 3);
        const Vec6 acc = control_affine_rhs(s, f_des(s, kModel, u), kModel).tail<6>();
        EXPECT_LE(rel_err(acc, u), 1e-10);
    }
}

TEST(Tracking, DefaultGainsConverge) {
    ScenarioConfig c = ScenarioConfig::reproduction_scenario();
    c.lqr = LqrDiagonal{};
    c.duration = 10.0;
    c.filter_mode = FilterMode::none;
    WaypointSegment seg;
    seg.t_start = 0.0;
    seg.t_end = 10.0;
    seg.q_des << 0.02, -0.01, 0.42, 0.05, 0.0, -0.05;
    c.schedule = {seg};
    const ScenarioResult r = run_scenario(c);
    ASSERT_TRUE(r.log.completed);
    // The LQR value function decreases along the exactly linearized loop.
    const LqrWeights w = LqrWeights::diagonal(c.lqr.q_pos, c.lqr.q_vel, c.lqr.r);
    const Mat12 P = solve_care_sign(double_integrator_A(), double_integrator_B(), w.Q, w.R);
    auto err = [&](const LogRecord& rec) {
        Vec12 e;
        e << rec.q - rec.q_des, rec.qdot;
        return e;
    };
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.log.records.size(); i += 250) {
        const Vec12 e = err(r.log.records[i]);
        const double v = e.dot(P * e);
        if (v < 1e-20) break;
        EXPECT_LT(v, prev) << "t = " << r.log.records[i].t;
        prev = v;
    }
    EXPECT_LT(err(r.log.records.back()).norm(), 1e-6);
}
