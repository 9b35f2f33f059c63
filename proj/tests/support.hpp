#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "stewart_cbf/barriers.hpp"
#include "stewart_cbf/dynamics.hpp"
#include "stewart_cbf/qp_baseline.hpp"
#include "stewart_cbf/types.hpp"

namespace testing_support {

using namespace stewart_cbf;

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
    Vec6 vec6(double lo, double hi) {
        Vec6 v;
        for (int i = 0; i < kDof; ++i) v[i] = uniform(lo, hi);
        return v;
    }
    Vec3 vec3(double lo, double hi) { return Vec3(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)); }
    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

// Poses around the working height of the default platform, well inside its workspace.
inline PlantState random_state(Rng& rng, double speed = 0.3) {
    PlantState s;
    s.q << rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.3, 0.5),
        rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5);
    s.qdot.head<3>() = rng.vec3(-speed, speed);
    s.qdot.tail<3>() = rng.vec3(-3.0 * speed, 3.0 * speed);
    return s;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

template <typename A, typename B>
double rel_err(const A& a, const B& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// Rz(psi) Ry(theta) Rx(phi) written out entry by entry.
inline Mat3 rotation_by_expansion(double phi, double theta, double psi) {
    const double cf = std::cos(phi), sf = std::sin(phi);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cp = std::cos(psi), sp = std::sin(psi);
    Mat3 R;
    R << cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf,
         sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf,
         -st, ct * sf, ct * cf;
    return R;
}

inline Vec12 stacked(const PlantState& s) {
    Vec12 x;
    x << s.q, s.qdot;
    return x;
}

inline PlantState unstack(const Vec12& x) {
    PlantState s;
    s.q = x.head<6>();
    s.qdot = x.tail<6>();
    return s;
}

// Central differences of f along each coordinate of x.
inline Vec12 central_gradient(const std::function<double(const Vec12&)>& f, const Vec12& x, double eps) {
    Vec12 g;
    for (int i = 0; i < 12; ++i) {
        Vec12 xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        g[i] = (f(xp) - f(xm)) / (2.0 * eps);
    }
    return g;
}

// min ||dF|| s.t. a_p^T dF = psi_p, a_v^T dF = psi_v through the 2x2 normal equations.
inline Vec6 least_norm_pair(const Vec6& a_p, const Vec6& a_v, double psi_p, double psi_v) {
    Eigen::Matrix<double, 6, 2> A;
    A << a_p, a_v;
    const Mat2 g = A.transpose() * A;
    return A * g.fullPivLu().solve(Vec2(psi_p, psi_v));
}

struct EnumerationResult {
    Vec6 F = Vec6::Zero();
    double objective = std::numeric_limits<double>::infinity();
    bool feasible = false;
};

// Projects F_des onto every affine set {A_S F = b_S} with |S| <= 6 and keeps
// the closest point satisfying every row. Exponential, meant for small problems.
inline EnumerationResult enumerate_qp(const QpProblem& p, double feas_tol = 1e-9) {
    const int n = static_cast<int>(p.rows());
    EnumerationResult best;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        std::vector<int> rows;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) rows.push_back(i);
        if (rows.size() > 6) continue;
        Vec6 F = p.f_des;
        if (!rows.empty()) {
            MatX As(rows.size(), 6);
            VecX bs(rows.size());
            for (std::size_t k = 0; k < rows.size(); ++k) {
                As.row(k) = p.A.row(rows[k]);
                bs[k] = p.b[rows[k]];
            }
            const MatX gram = As * As.transpose();
            Eigen::FullPivLU<MatX> lu(gram);
            if (lu.rank() < static_cast<Eigen::Index>(rows.size())) continue;
            F += As.transpose() * lu.solve(bs - As * p.f_des);
        }
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            ok = p.A.row(i).dot(F) - p.b[i] <= feas_tol * std::max(1.0, std::abs(p.b[i]));
        }
        if (!ok) continue;
        const double obj = (F - p.f_des).squaredNorm();
        if (obj < best.objective) {
            best.objective = obj;
            best.F = F;
            best.feasible = true;
        }
    }
    return best;
}

// Random feasible problem: rows through a random interior point, F_des far away.
inline QpProblem random_qp(Rng& rng, int rows) {
    QpProblem p;
    p.A.resize(rows, 6);
    p.b.resize(rows);
    const Vec6 inside = rng.vec6(-1.0, 1.0);
    for (int i = 0; i < rows; ++i) {
        p.A.row(i) = rng.vec6(-1.0, 1.0).transpose() * rng.uniform(0.1, 10.0);
        p.b[i] = p.A.row(i).dot(inside) + rng.uniform(0.0, 1.0);
    }
    p.f_des = inside + rng.vec6(-5.0, 5.0);
    p.labels.resize(rows);
    return p;
}

struct KktReport {
    double stationarity = 0.0;
    double max_violation = 0.0;
    double min_multiplier = 0.0;
    double max_slackness = 0.0;
};

// Certificate for min ||F - F_des||^2 s.t. A F <= b.
inline KktReport kkt_report(const QpProblem& p, const QpSolution& s) {
    KktReport r;
    const Vec6 grad = 2.0 * (s.F_star - p.f_des) + p.A.transpose() * s.multipliers;
    r.stationarity = grad.norm();
    const VecX resid = p.A * s.F_star - p.b;
    r.max_violation = resid.maxCoeff();
    r.min_multiplier = s.multipliers.minCoeff();
    r.max_slackness = (s.multipliers.array() * resid.array()).abs().maxCoeff();
    return r;
}

// All six position and velocity bounds, upper and lower, around the random state box.
inline BarrierConfig full_box_config() {
    BarrierConfig c;
    for (int i = 0; i < kDof; ++i) {
        c.q_max[i] = (i < 3 ? 0.6 : 0.8);
        c.q_min[i] = (i < 3 ? -0.6 : -0.8);
        c.qdot_max[i] = 2.0;
        c.qdot_min[i] = -2.0;
    }
    c.q_min[kZ] = 0.1;
    c.beta = 50.0;
    return c;
}

}  // namespace testing_support
