#include "stewart_cbf/barriers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stewart_cbf/errors.hpp"

namespace stewart_cbf {

namespace {

double bound_of(const BarrierConfig& cfg, const ConstraintId& id) {
    const OptionalBounds& src = id.family == BarrierFamily::position
                                    ? (id.side == BoundSide::upper ? cfg.q_max : cfg.q_min)
                                    : (id.side == BoundSide::upper ? cfg.qdot_max : cfg.qdot_min);
    if (!src[id.axis]) {
        throw ArgumentError("constraint " + id.label() + " is not enabled");
    }
    return *src[id.axis];
}

std::vector<ConstraintId> enumerate(const OptionalBounds& upper, const OptionalBounds& lower,
                                    BarrierFamily family) {
    std::vector<ConstraintId> ids;
    for (int axis = 0; axis < kDof; ++axis) {
        if (upper[axis]) ids.push_back({family, axis, BoundSide::upper});
        if (lower[axis]) ids.push_back({family, axis, BoundSide::lower});
    }
    return ids;
}

std::vector<double> scalings_or_ones(const std::vector<double>& given, std::size_t n) {
    return given.empty() ? std::vector<double>(n, 1.0) : given;
}

void check_scalings(std::span<const double> values, std::span<const double> scalings) {
    if (values.empty()) {
        throw ArgumentError("soft-min of an empty set");
    }
    if (!scalings.empty() && scalings.size() != values.size()) {
        throw ArgumentError("scalings and values differ in length");
    }
}

void validate_pair(const OptionalBounds& upper, const OptionalBounds& lower, const char* name) {
    for (int axis = 0; axis < kDof; ++axis) {
        for (const auto* b : {&upper[axis], &lower[axis]}) {
            if (*b && !std::isfinite(**b)) {
                throw ConfigError(std::string(name) + " bound on axis " + kAxisNames[axis] +
                                  " is not finite");
            }
        }
        if (upper[axis] && lower[axis] && !(*upper[axis] > *lower[axis])) {
            throw ConfigError(std::string(name) + "_max must exceed " + name + "_min on axis " +
                              kAxisNames[axis]);
        }
    }
}

void validate_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(name) + " must be positive");
    }
}

}  // namespace

std::string ConstraintId::label() const {
    return std::string(kAxisNames[axis]) + (side == BoundSide::upper ? "_max" : "_min");
}

std::vector<ConstraintId> BarrierConfig::position_constraints() const {
    return enumerate(q_max, q_min, BarrierFamily::position);
}

std::vector<ConstraintId> BarrierConfig::velocity_constraints() const {
    return enumerate(qdot_max, qdot_min, BarrierFamily::velocity);
}

std::vector<double> BarrierConfig::position_scalings() const {
    return scalings_or_ones(alpha_Dj, position_constraints().size());
}

std::vector<double> BarrierConfig::velocity_scalings() const {
    return scalings_or_ones(alpha_vk, velocity_constraints().size());
}

void BarrierConfig::validate() const {
    validate_pair(q_max, q_min, "q");
    validate_pair(qdot_max, qdot_min, "qdot");
    validate_positive(alpha_e, "alpha_e");
    validate_positive(alpha_D, "alpha_D");
    validate_positive(alpha_v, "alpha_v");
    validate_positive(beta, "beta");
    const auto np = position_constraints().size();
    const auto nv = velocity_constraints().size();
    if (np == 0) throw ConfigError("at least one position constraint must be enabled");
    if (nv == 0) throw ConfigError("at least one velocity constraint must be enabled");
    if (!alpha_Dj.empty() && alpha_Dj.size() != np) {
        throw ConfigError("alpha_Dj must have one entry per enabled position constraint (" +
                          std::to_string(np) + ")");
    }
    if (!alpha_vk.empty() && alpha_vk.size() != nv) {
        throw ConfigError("alpha_vk must have one entry per enabled velocity constraint (" +
                          std::to_string(nv) + ")");
    }
    for (double s : alpha_Dj) validate_positive(s, "alpha_Dj entries");
    for (double s : alpha_vk) validate_positive(s, "alpha_vk entries");
}

double h_position(const PlantState& state, const BarrierConfig& cfg, const ConstraintId& id) {
    const double bound = bound_of(cfg, {BarrierFamily::position, id.axis, id.side});
    const double qj = state.q[id.axis];
    return id.side == BoundSide::upper ? bound - qj : qj - bound;
}

double h_energy(const PlantState& state, const Mat6& M, const BarrierConfig& cfg,
                const ConstraintId& id) {
    return -0.5 * state.qdot.dot(M * state.qdot) + cfg.alpha_e * h_position(state, cfg, id);
}

double h_energy(const PlantState& state, const PlatformModel& model, const BarrierConfig& cfg,
                const ConstraintId& id) {
    return h_energy(state, inertia_matrix(state.q, model.inertia), cfg, id);
}

double h_velocity(const PlantState& state, const BarrierConfig& cfg, const ConstraintId& id) {
    const double bound = bound_of(cfg, {BarrierFamily::velocity, id.axis, id.side});
    const double v = state.qdot[id.axis];
    return id.side == BoundSide::upper ? bound - v : v - bound;
}

double softmin_lse(std::span<const double> values, double beta, std::span<const double> scalings) {
    check_scalings(values, scalings);
    if (!(beta > 0.0)) throw ArgumentError("beta must be positive");
    const auto z = [&](std::size_t j) { return scalings.empty() ? values[j] : scalings[j] * values[j]; };
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < values.size(); ++j) m = std::min(m, z(j));
    double sum = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) sum += std::exp(-beta * (z(j) - m));
    return m - std::log(sum) / beta;
}

VecX softmax_weights(std::span<const double> values, double beta, std::span<const double> scalings) {
    check_scalings(values, scalings);
    if (!(beta > 0.0)) throw ArgumentError("beta must be positive");
    const auto n = static_cast<Eigen::Index>(values.size());
    VecX z(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        z[j] = scalings.empty() ? values[j] : scalings[j] * values[j];
    }
    const double m = z.minCoeff();
    VecX w(n);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        w[j] = std::exp(-beta * (z[j] - m));
        sum += w[j];
    }
    return w / sum;
}

std::vector<double> BarrierEval::h_D() const {
    std::vector<double> out;
    for (const auto& t : position) out.push_back(t.h);
    return out;
}

std::vector<double> BarrierEval::h_v() const {
    std::vector<double> out;
    for (const auto& t : velocity) out.push_back(t.h);
    return out;
}

BarrierLinearization linearize(const PlantState& state, const DynamicsEval& dyn) {
    BarrierLinearization lin;
    lin.a_p = dyn.H.transpose() * state.qdot;
    const Vec6 bias = dyn.C * state.qdot + dyn.G;
    if (dyn.M.topRightCorner<3, 3>().isZero(0.0) && dyn.M.bottomLeftCorner<3, 3>().isZero(0.0)) {
        // Translational and rotational blocks decouple; both are small SPD
        // blocks, so closed-form 3x3 inverses are accurate and much cheaper
        // than a factorization.
        const Mat3 it = dyn.M.topLeftCorner<3, 3>().inverse();
        const Mat3 ir = dyn.M.bottomRightCorner<3, 3>().inverse();
        lin.MinvH.topRows<3>() = it * dyn.H.topRows<3>();
        lin.MinvH.bottomRows<3>() = ir * dyn.H.bottomRows<3>();
        lin.Minv_bias.head<3>() = it * bias.head<3>();
        lin.Minv_bias.tail<3>() = ir * bias.tail<3>();
    } else {
        const Eigen::LLT<Mat6> llt(dyn.M);
        lin.MinvH = llt.solve(dyn.H);
        lin.Minv_bias = llt.solve(bias);
    }
    lin.G_dot_qdot = dyn.G.dot(state.qdot);
    lin.kinetic = kinetic_energy(dyn, state.qdot);
    return lin;
}

template <typename F>
void for_each_enabled(const OptionalBounds& upper, const OptionalBounds& lower, BarrierFamily family, F&& f) {
    for (int axis = 0; axis < kDof; ++axis) {
        if (upper[axis]) f(ConstraintId{family, axis, BoundSide::upper}, *upper[axis]);
        if (lower[axis]) f(ConstraintId{family, axis, BoundSide::lower}, *lower[axis]);
    }
}

std::vector<BarrierTerm> position_terms(const PlantState& state, const BarrierLinearization& lin,
                                        const BarrierConfig& cfg) {
    std::vector<BarrierTerm> terms;
    terms.reserve(kDof);
    for_each_enabled(cfg.q_max, cfg.q_min, BarrierFamily::position, [&](const ConstraintId& id, double bound) {
        BarrierTerm& t = terms.emplace_back();
        t.id = id;
        const double hp = id.sign() * (bound - state.q[id.axis]);
        t.h = -lin.kinetic + cfg.alpha_e * hp;
        // hdot_D = -qdot^T H F + G^T qdot + alpha_e * hdot_p, hdot_p = -sign * qdot_j
        t.a = lin.a_p;
        t.drift = lin.G_dot_qdot - cfg.alpha_e * id.sign() * state.qdot[id.axis];
    });
    return terms;
}

std::vector<BarrierTerm> velocity_terms(const PlantState& state, const BarrierLinearization& lin,
                                        const BarrierConfig& cfg) {
    std::vector<BarrierTerm> terms;
    terms.reserve(kDof);
    for_each_enabled(cfg.qdot_max, cfg.qdot_min, BarrierFamily::velocity, [&](const ConstraintId& id, double bound) {
        BarrierTerm& t = terms.emplace_back();
        t.id = id;
        t.h = id.sign() * (bound - state.qdot[id.axis]);
        // hdot_v = -sign * qddot_k, qddot = M^{-1} H F - M^{-1}(C qdot + G)
        t.a = id.sign() * lin.MinvH.row(id.axis).transpose();
        t.drift = id.sign() * lin.Minv_bias[id.axis];
    });
    return terms;
}

AggregateBarrier aggregate(std::span<const BarrierTerm> terms, double beta,
                           std::span<const double> scalings, double gain, const Vec6& f_des) {
    if (terms.empty()) throw ArgumentError("aggregate: no barrier terms");
    if (!scalings.empty() && scalings.size() != terms.size()) {
        throw ArgumentError("aggregate: scalings do not match the barrier terms");
    }
    if (!(beta > 0.0)) throw ArgumentError("beta must be positive");
    const auto n = static_cast<Eigen::Index>(terms.size());
    AggregateBarrier agg;
    VecX z(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        z[j] = scalings.empty() ? terms[j].h : scalings[j] * terms[j].h;
    }
    // Same max-shifted evaluation as softmin_lse / softmax_weights, in one pass.
    const double m = z.minCoeff();
    agg.weights.resize(n);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        agg.weights[j] = std::exp(-beta * (z[j] - m));
        sum += agg.weights[j];
    }
    agg.h = m - std::log(sum) / beta;
    agg.weights /= sum;
    agg.gain = gain;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const double w = scalings.empty() ? agg.weights[j] : scalings[j] * agg.weights[j];
        agg.a += w * terms[j].a;
        agg.drift += w * terms[j].drift;
    }
    agg.residual = agg.residual_at(f_des);
    return agg;
}

BarrierEval evaluate_barriers(const PlantState& state, const DynamicsEval& dyn,
                              const BarrierConfig& cfg, const Vec6& f_des, Aggregation mode) {
    const BarrierLinearization lin = linearize(state, dyn);
    BarrierEval eval;
    eval.mode = mode;
    eval.position = position_terms(state, lin, cfg);
    eval.velocity = velocity_terms(state, lin, cfg);
    std::vector<double> sp, sv;
    if (mode == Aggregation::weighted) {
        sp = cfg.position_scalings();
        sv = cfg.velocity_scalings();
    }
    eval.pos = aggregate(eval.position, cfg.beta, sp, cfg.alpha_D, f_des);
    eval.vel = aggregate(eval.velocity, cfg.beta, sv, cfg.alpha_v, f_des);
    return eval;
}

BarrierEval evaluate_barriers(const PlantState& state, const PlatformModel& model,
                              const BarrierConfig& cfg, const Vec6& f_des, Aggregation mode) {
    return evaluate_barriers(state, dynamics_terms(state, model), cfg, f_des, mode);
}

SensitivityPair sensitivity_vectors(const BarrierEval& eval) {
    return {eval.pos.a, eval.vel.a};
}

SensitivityPair single_sensitivities(const PlantState& state, const DynamicsEval& dyn,
                                     const ConstraintId& velocity_id) {
    const Mat6 MinvH = dyn.M.llt().solve(dyn.H);
    return {dyn.H.transpose() * state.qdot,
            velocity_id.sign() * MinvH.row(velocity_id.axis).transpose()};
}

ResidualPair residuals(const BarrierEval& eval, const Vec6& force) {
    return {eval.pos.residual_at(force), eval.vel.residual_at(force)};
}

double aggregate_value(const PlantState& state, const PlatformModel& model,
                       const BarrierConfig& cfg, BarrierFamily family, Aggregation mode) {
    std::vector<double> h;
    std::vector<double> s;
    if (family == BarrierFamily::position) {
        const Mat6 M = inertia_matrix(state.q, model.inertia);
        for (const auto& id : cfg.position_constraints()) h.push_back(h_energy(state, M, cfg, id));
        if (mode == Aggregation::weighted) s = cfg.position_scalings();
    } else {
        for (const auto& id : cfg.velocity_constraints()) h.push_back(h_velocity(state, cfg, id));
        if (mode == Aggregation::weighted) s = cfg.velocity_scalings();
    }
    return softmin_lse(h, cfg.beta, s);
}

Vec12 aggregate_gradient(const PlantState& state, const PlatformModel& model,
                         const BarrierConfig& cfg, BarrierFamily family, Aggregation mode) {
    std::vector<ConstraintId> ids;
    std::vector<double> h;
    std::vector<double> s;
    std::vector<Vec12> grads;
    if (family == BarrierFamily::position) {
        ids = cfg.position_constraints();
        const Mat6 M = inertia_matrix(state.q, model.inertia);
        const auto dM = inertia_partials(state.q, model.inertia);
        Vec12 kinetic_grad;  // gradient of -1/2 qdot^T M qdot
        for (int k = 0; k < kDof; ++k) kinetic_grad[k] = -0.5 * state.qdot.dot(dM[k] * state.qdot);
        kinetic_grad.tail<6>() = -M * state.qdot;
        for (const auto& id : ids) {
            h.push_back(h_energy(state, M, cfg, id));
            Vec12 g = kinetic_grad;
            g[id.axis] -= cfg.alpha_e * id.sign();
            grads.push_back(g);
        }
        if (mode == Aggregation::weighted) s = cfg.position_scalings();
    } else {
        ids = cfg.velocity_constraints();
        for (const auto& id : ids) {
            h.push_back(h_velocity(state, cfg, id));
            Vec12 g = Vec12::Zero();
            g[kDof + id.axis] = -id.sign();
            grads.push_back(g);
        }
        if (mode == Aggregation::weighted) s = cfg.velocity_scalings();
    }
    const VecX w = softmax_weights(h, cfg.beta, s);
    Vec12 out = Vec12::Zero();
    for (std::size_t j = 0; j < ids.size(); ++j) {
        out += (s.empty() ? w[j] : s[j] * w[j]) * grads[j];
    }
    return out;
}

}  // namespace stewart_cbf
