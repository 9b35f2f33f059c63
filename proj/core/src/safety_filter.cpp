#include "stewart_cbf/safety_filter.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <sstream>

namespace stewart_cbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Mat2 gram(const ConstraintPair& pair) {
    Mat2 g;
    g << pair.a_p.squaredNorm(), pair.a_p.dot(pair.a_v),
         pair.a_v.dot(pair.a_p), pair.a_v.squaredNorm();
    return g;
}

FilterDecision finish(const ConstraintPair& pair, const Vec6& f_des, const Vec6& correction,
                      FilterBranch branch) {
    FilterDecision d;
    d.F_safe = correction;
    d.F_out = f_des + correction;
    d.branch = branch;
    d.gamma = gram(pair);
    d.gamma_det = d.gamma(0, 0) * d.gamma(1, 1) - d.gamma(0, 1) * d.gamma(0, 1);
    d.psi = Vec2(pair.psi_p, pair.psi_v);
    d.psi_out = Vec2(pair.psi_p - pair.a_p.dot(correction), pair.psi_v - pair.a_v.dot(correction));
    return d;
}

// Aggregated pair without per-constraint rows. Every position term shares
// a_p = H^T qdot, and the velocity rows only enter through
// c^T M^{-1} H with c = sum_k w_k sign_k e_k, so one solve with M replaces the
// full M^{-1} H.
// Only the first n entries are written and read.
struct Family {
    std::array<double, 2 * kDof> z;
    std::array<double, 2 * kDof> scale;
    std::array<double, 2 * kDof> sign;
    std::array<int, 2 * kDof> axis;
    int n = 0;
};

// exp(-44) < 2^-63: such a term cannot change a sum that is at least one, and
// its weight is below rounding of the dominant one.
constexpr double kNegligibleExponent = -44.0;

// Fills w with the (scaled) softmax weights and returns the soft-min.
double soft_min(const Family& f, double beta, std::array<double, 2 * kDof>& w) {
    if (f.n == 0) throw ArgumentError("aggregate: no barrier terms");
    if (!(beta > 0.0)) throw ArgumentError("beta must be positive");
    double m = f.z[0];
    for (int j = 1; j < f.n; ++j) m = std::min(m, f.z[j]);
    double sum = 0.0;
    for (int j = 0; j < f.n; ++j) {
        const double e = -beta * (f.z[j] - m);
        w[j] = e < kNegligibleExponent ? 0.0 : std::exp(e);
        sum += w[j];
    }
    for (int j = 0; j < f.n; ++j) w[j] = f.scale[j] * (w[j] / sum);
    return sum == 1.0 ? m : m - std::log(sum) / beta;
}

double scaling_at(const std::vector<double>& given, int j, Aggregation mode, const char* what) {
    if (mode == Aggregation::plain || given.empty()) return 1.0;
    if (j >= static_cast<int>(given.size())) {
        throw ArgumentError(std::string(what) + " does not match the enabled constraints");
    }
    return given[j];
}

Vec6 solve_mass(const Mat6& M, const Vec6& c) {
    if (M.topRightCorner<3, 3>().isZero(0.0) && M.bottomLeftCorner<3, 3>().isZero(0.0)) {
        Vec6 y;
        y.head<3>() = c.head<3>().isZero(0.0) ? Vec3::Zero() : Vec3(M.topLeftCorner<3, 3>().inverse() * c.head<3>());
        y.tail<3>() = c.tail<3>().isZero(0.0) ? Vec3::Zero()
                                               : Vec3(M.bottomRightCorner<3, 3>().inverse() * c.tail<3>());
        return y;
    }
    return M.llt().solve(c);
}

ConstraintPair aggregated_pair(const PlantState& state, const DynamicsEval& dyn, const BarrierConfig& cfg,
                               const Vec6& f_des, Aggregation mode) {
    const Vec6& qd = state.qdot;
    const double kinetic = kinetic_energy(dyn, qd);
    const bool weighted = mode == Aggregation::weighted;
    Family pos, vel;
    std::array<double, 2 * kDof> pos_drift;
    for (int axis = 0; axis < kDof; ++axis) {
        for (int side = 0; side < 2; ++side) {
            const double sg = side == 0 ? 1.0 : -1.0;
            if (const auto& qb = side == 0 ? cfg.q_max[axis] : cfg.q_min[axis]; qb) {
                const double h = -kinetic + cfg.alpha_e * sg * (*qb - state.q[axis]);
                const double sc = weighted ? scaling_at(cfg.alpha_Dj, pos.n, mode, "alpha_Dj") : 1.0;
                pos.z[pos.n] = weighted ? sc * h : h;
                pos.scale[pos.n] = sc;
                pos_drift[pos.n] = -cfg.alpha_e * sg * qd[axis];
                ++pos.n;
            }
            if (const auto& vb = side == 0 ? cfg.qdot_max[axis] : cfg.qdot_min[axis]; vb) {
                const double h = sg * (*vb - qd[axis]);
                const double sc = weighted ? scaling_at(cfg.alpha_vk, vel.n, mode, "alpha_vk") : 1.0;
                vel.z[vel.n] = weighted ? sc * h : h;
                vel.scale[vel.n] = sc;
                vel.sign[vel.n] = sg;
                vel.axis[vel.n] = axis;
                ++vel.n;
            }
        }
    }
    std::array<double, 2 * kDof> w;
    ConstraintPair pair;

    const double h_p = soft_min(pos, cfg.beta, w);
    double wsum = 0.0, drift_p = 0.0;
    for (int j = 0; j < pos.n; ++j) {
        wsum += w[j];
        drift_p += w[j] * pos_drift[j];
    }
    const double g_qd = dyn.G.dot(qd);
    pair.a_p = wsum * (dyn.H.transpose() * qd);
    drift_p += wsum * g_qd;
    pair.psi_p = (drift_p - pair.a_p.dot(f_des)) + cfg.alpha_D * h_p;

    const double h_v = soft_min(vel, cfg.beta, w);
    Vec6 c = Vec6::Zero();
    for (int j = 0; j < vel.n; ++j) c[vel.axis[j]] += w[j] * vel.sign[j];
    const Vec6 y = solve_mass(dyn.M, c);
    pair.a_v = dyn.H.transpose() * y;
    const double drift_v = y.dot(dyn.C * qd + dyn.G);
    pair.psi_v = (drift_v - pair.a_v.dot(f_des)) + cfg.alpha_v * h_v;
    return pair;
}

Vec6 project(const Vec6& a, double psi) { return (psi / a.squaredNorm()) * a; }

FilterDecision both_active(const ConstraintPair& pair, const Vec6& f_des,
                           const FilterOptions& options) {
    const GammaDiagnosis diag = gamma_diagnosis(pair.a_p, pair.a_v, options.gamma_tolerance);
    if (diag.singular) {
        return fallback_on_singularity(pair, f_des, diag, options.fallback);
    }
    const Mat2 g = gram(pair);
    // mu = Gamma^{-1} [psi_p, psi_v]
    const double mu_p = (g(1, 1) * pair.psi_p - g(0, 1) * pair.psi_v) / diag.det;
    const double mu_v = (g(0, 0) * pair.psi_v - g(1, 0) * pair.psi_p) / diag.det;
    return finish(pair, f_des, mu_p * pair.a_p + mu_v * pair.a_v, FilterBranch::both_active);
}

[[noreturn]] void throw_degenerate(const char* which, double norm2) {
    std::ostringstream os;
    os << which << " constraint is violated but its sensitivity ||a||^2 = " << norm2
       << " is degenerate";
    throw DegenerateSensitivityError(os.str());
}

}  // namespace

const char* to_string(FilterBranch b) {
    switch (b) {
        case FilterBranch::none_active: return "none_active";
        case FilterBranch::position_active: return "position_active";
        case FilterBranch::velocity_active: return "velocity_active";
        case FilterBranch::both_active: return "both_active";
    }
    return "unknown";
}

const char* to_string(GammaCause c) {
    switch (c) {
        case GammaCause::ok: return "ok";
        case GammaCause::zero_velocity: return "zero_velocity";
        case GammaCause::collinear: return "collinear";
    }
    return "unknown";
}

const char* to_string(FallbackPolicy p) {
    switch (p) {
        case FallbackPolicy::error: return "error";
        case FallbackPolicy::position_priority: return "position_priority";
        case FallbackPolicy::damped: return "damped";
    }
    return "unknown";
}

const char* to_string(BranchRule r) {
    return r == BranchRule::kkt ? "kkt" : "residual_sign";
}

GammaDiagnosis gamma_diagnosis(const Vec6& a_p, const Vec6& a_v, double tolerance) {
    GammaDiagnosis d;
    d.norm_ap = a_p.norm();
    d.norm_av = a_v.norm();
    const double pp = a_p.squaredNorm();
    const double vv = a_v.squaredNorm();
    const double pv = a_p.dot(a_v);
    d.det = pp * vv - pv * pv;
    d.cosine = (d.norm_ap > 0.0 && d.norm_av > 0.0) ? pv / (d.norm_ap * d.norm_av) : 0.0;
    if (d.norm_ap <= tolerance) {
        d.singular = true;
        d.cause = GammaCause::zero_velocity;
    } else if (d.norm_av <= tolerance || d.det <= tolerance * pp * vv) {
        d.singular = true;
        d.cause = GammaCause::collinear;
    }
    return d;
}

FilterDecision fallback_on_singularity(const ConstraintPair& pair, const Vec6& f_des,
                                       const GammaDiagnosis& diagnosis, FallbackPolicy policy) {
    FilterDecision d;
    switch (policy) {
        case FallbackPolicy::error: {
            std::ostringstream os;
            os << "two-constraint branch with singular Gamma (" << to_string(diagnosis.cause)
               << ", det = " << diagnosis.det << ")";
            throw SingularGammaError(os.str(), diagnosis);
        }
        case FallbackPolicy::position_priority: {
            Vec6 correction = Vec6::Zero();
            if (pair.psi_p < 0.0) {
                const double npp = pair.a_p.squaredNorm();
                if (npp <= kSensitivityTolerance) throw_degenerate("position", npp);
                correction = project(pair.a_p, pair.psi_p);
            }
            d = finish(pair, f_des, correction, FilterBranch::position_active);
            break;
        }
        case FallbackPolicy::damped: {
            Mat2 g = gram(pair);
            const double lambda = 1e-8 * g.trace();
            g.diagonal().array() += lambda;
            const Vec2 mu = g.inverse() * Vec2(pair.psi_p, pair.psi_v);
            d = finish(pair, f_des, mu[0] * pair.a_p + mu[1] * pair.a_v,
                       FilterBranch::both_active);
            break;
        }
    }
    d.fallback_applied = true;
    d.fallback_policy = policy;
    return d;
}

FilterDecision solve_constraint_pair(const ConstraintPair& pair, const Vec6& f_des,
                                     const FilterOptions& options) {
    // Psi = 0 counts as satisfied; every branch agrees on that boundary.
    const bool viol_p = pair.psi_p < 0.0;
    const bool viol_v = pair.psi_v < 0.0;
    const double npp = pair.a_p.squaredNorm();
    const double nvv = pair.a_v.squaredNorm();
    FilterDecision d;

    if (!viol_p && !viol_v) {
        d = finish(pair, f_des, Vec6::Zero(), FilterBranch::none_active);
    } else if (options.rule == BranchRule::residual_sign) {
        if (viol_p && !viol_v) {
            if (npp <= kSensitivityTolerance) throw_degenerate("position", npp);
            d = finish(pair, f_des, project(pair.a_p, pair.psi_p), FilterBranch::position_active);
        } else if (!viol_p && viol_v) {
            if (nvv <= kSensitivityTolerance) throw_degenerate("velocity", nvv);
            d = finish(pair, f_des, project(pair.a_v, pair.psi_v), FilterBranch::velocity_active);
        } else {
            d = both_active(pair, f_des, options);
        }
    } else {
        bool done = false;
        if (viol_p) {
            if (npp > kSensitivityTolerance) {
                const Vec6 c = project(pair.a_p, pair.psi_p);
                if (pair.psi_v - pair.a_v.dot(c) >= 0.0) {
                    d = finish(pair, f_des, c, FilterBranch::position_active);
                    done = true;
                }
            } else if (!viol_v) {
                throw_degenerate("position", npp);
            }
        }
        if (!done && viol_v) {
            if (nvv > kSensitivityTolerance) {
                const Vec6 c = project(pair.a_v, pair.psi_v);
                if (pair.psi_p - pair.a_p.dot(c) >= 0.0) {
                    d = finish(pair, f_des, c, FilterBranch::velocity_active);
                    done = true;
                }
            } else if (!viol_p) {
                throw_degenerate("velocity", nvv);
            }
        }
        if (!done) d = both_active(pair, f_des, options);
    }
    if (!d.fallback_applied) d.fallback_policy = options.fallback;
    return d;
}

ConstraintPair make_pair(const AggregateBarrier& pos, const AggregateBarrier& vel) {
    return {pos.a, vel.a, pos.residual, vel.residual};
}

FilterDecision closed_form_single(const PlantState& state, const DynamicsEval& dyn,
                                  const Vec6& f_des, const BarrierConfig& cfg, std::size_t j,
                                  std::size_t k, const FilterOptions& options) {
    const auto start = Clock::now();
    const BarrierLinearization lin = linearize(state, dyn);
    const auto pos_terms = position_terms(state, lin, cfg);
    const auto vel_terms = velocity_terms(state, lin, cfg);
    if (j >= pos_terms.size() || k >= vel_terms.size()) {
        throw ArgumentError("closed_form_single: constraint index out of range");
    }
    auto single = [&](const BarrierTerm& t, double gain) {
        AggregateBarrier s;
        s.h = t.h;
        s.weights = VecX::Ones(1);
        s.a = t.a;
        s.drift = t.drift;
        s.gain = gain;
        s.residual = s.residual_at(f_des);
        return s;
    };
    FilterDecision d = solve_constraint_pair(
        make_pair(single(pos_terms[j], cfg.alpha_D), single(vel_terms[k], cfg.alpha_v)), f_des,
        options);
    d.solve_time = seconds_since(start);
    return d;
}

FilterDecision closed_form_single(const PlantState& state, const PlatformModel& model,
                                  const Vec6& f_des, const BarrierConfig& cfg, std::size_t j,
                                  std::size_t k, const FilterOptions& options) {
    return closed_form_single(state, dynamics_terms(state, model), f_des, cfg, j, k, options);
}

FilterDecision closed_form_multi(const PlantState& state, const DynamicsEval& dyn,
                                 const Vec6& f_des, const BarrierConfig& cfg, Aggregation mode,
                                 const FilterOptions& options) {
    const auto start = Clock::now();
    FilterDecision d = solve_constraint_pair(aggregated_pair(state, dyn, cfg, f_des, mode), f_des, options);
    d.solve_time = seconds_since(start);
    return d;
}

FilterDecision closed_form_multi(const PlantState& state, const PlatformModel& model,
                                 const Vec6& f_des, const BarrierConfig& cfg, Aggregation mode,
                                 const FilterOptions& options) {
    return closed_form_multi(state, dynamics_terms(state, model), f_des, cfg, mode, options);
}

}  // namespace stewart_cbf
