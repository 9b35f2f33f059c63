#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stewart_cbf/dynamics.hpp"
#include "stewart_cbf/types.hpp"

namespace stewart_cbf {

enum class BarrierFamily { position, velocity };
enum class BoundSide { upper, lower };

struct ConstraintId {
    BarrierFamily family = BarrierFamily::position;
    int axis = 0;
    BoundSide side = BoundSide::upper;

    // +1 for upper bounds, -1 for lower bounds.
    double sign() const { return side == BoundSide::upper ? 1.0 : -1.0; }
    // e.g. "Z_max", "phi_min"
    std::string label() const;
    bool operator==(const ConstraintId&) const = default;
};

using OptionalBounds = std::array<std::optional<double>, kDof>;

// Linear class-K maps alpha(s) = gain * s are used for both families.
struct BarrierConfig {
    OptionalBounds q_max{};
    OptionalBounds q_min{};
    OptionalBounds qdot_max{};
    OptionalBounds qdot_min{};
    double alpha_e = 1.0;
    double alpha_D = 1.0;
    double alpha_v = 1.0;
    double beta = 1e4;
    // Per-constraint LSE scalings aligned with position_constraints() /
    // velocity_constraints(). Empty means all ones.
    std::vector<double> alpha_Dj;
    std::vector<double> alpha_vk;

    // Enabled constraints, axis-major, upper bound before lower bound.
    std::vector<ConstraintId> position_constraints() const;
    std::vector<ConstraintId> velocity_constraints() const;

    std::vector<double> position_scalings() const;
    std::vector<double> velocity_scalings() const;

    // Throws ConfigError naming the offending axis or field.
    void validate() const;
};

double h_position(const PlantState& state, const BarrierConfig& cfg, const ConstraintId& id);

// -1/2 qdot^T M qdot + alpha_e * h_position
double h_energy(const PlantState& state, const Mat6& M, const BarrierConfig& cfg,
                const ConstraintId& id);
double h_energy(const PlantState& state, const PlatformModel& model, const BarrierConfig& cfg,
                const ConstraintId& id);

double h_velocity(const PlantState& state, const BarrierConfig& cfg, const ConstraintId& id);

// -(1/beta) log sum_j exp(-beta s_j h_j), max-shift stabilized. Empty scalings mean s = 1.
double softmin_lse(std::span<const double> values, double beta,
                   std::span<const double> scalings = {});

VecX softmax_weights(std::span<const double> values, double beta,
                     std::span<const double> scalings = {});

// One barrier linearized in the actuator force: hdot(F) = drift - a^T F.
struct BarrierTerm {
    ConstraintId id;
    double h = 0.0;
    double drift = 0.0;
    Vec6 a = Vec6::Zero();

    double rate(const Vec6& force) const { return drift - a.dot(force); }
};

enum class Aggregation { plain, weighted };

// Soft-min of one barrier family, linearized the same way as BarrierTerm.
struct AggregateBarrier {
    double h = 0.0;
    VecX weights;  // softmax weights pi (or pi^(alpha) when weighted)
    Vec6 a = Vec6::Zero();
    double drift = 0.0;
    double gain = 1.0;
    double residual = 0.0;  // at the nominal force

    double rate(const Vec6& force) const { return drift - a.dot(force); }
    // Psi(F) = hdot(F) + gain * h. Equals residual - a^T (F - F_des).
    double residual_at(const Vec6& force) const { return rate(force) + gain * h; }
};

struct BarrierEval {
    Aggregation mode = Aggregation::plain;
    std::vector<BarrierTerm> position;  // energy barriers h_D
    std::vector<BarrierTerm> velocity;  // h_v
    AggregateBarrier pos;
    AggregateBarrier vel;

    std::vector<double> h_D() const;
    std::vector<double> h_v() const;
};

// Quantities shared by every barrier at one state.
struct BarrierLinearization {
    Vec6 a_p = Vec6::Zero();   // H^T qdot
    Mat6 MinvH = Mat6::Zero();
    Vec6 Minv_bias = Vec6::Zero();  // M^{-1}(C qdot + G)
    double G_dot_qdot = 0.0;
    double kinetic = 0.0;
};

BarrierLinearization linearize(const PlantState& state, const DynamicsEval& dyn);

std::vector<BarrierTerm> position_terms(const PlantState& state, const BarrierLinearization& lin,
                                        const BarrierConfig& cfg);
std::vector<BarrierTerm> velocity_terms(const PlantState& state, const BarrierLinearization& lin,
                                        const BarrierConfig& cfg);

// Chain rule through the soft-min: a = sum_j s_j pi_j a_j, drift likewise.
AggregateBarrier aggregate(std::span<const BarrierTerm> terms, double beta,
                           std::span<const double> scalings, double gain, const Vec6& f_des);

BarrierEval evaluate_barriers(const PlantState& state, const DynamicsEval& dyn,
                              const BarrierConfig& cfg, const Vec6& f_des,
                              Aggregation mode = Aggregation::plain);
BarrierEval evaluate_barriers(const PlantState& state, const PlatformModel& model,
                              const BarrierConfig& cfg, const Vec6& f_des,
                              Aggregation mode = Aggregation::plain);

struct SensitivityPair {
    Vec6 a_p;
    Vec6 a_v;
};

SensitivityPair sensitivity_vectors(const BarrierEval& eval);

// Single-constraint sensitivities: a_p = H^T qdot, a_v = sign * (M^{-1} H)^T e_axis.
SensitivityPair single_sensitivities(const PlantState& state, const DynamicsEval& dyn,
                                     const ConstraintId& velocity_id);

struct ResidualPair {
    double psi_p;
    double psi_v;
};

// Aggregated residuals evaluated at an arbitrary force.
ResidualPair residuals(const BarrierEval& eval, const Vec6& force);

// Soft-min value of one family at a state (no linearization).
double aggregate_value(const PlantState& state, const PlatformModel& model,
                       const BarrierConfig& cfg, BarrierFamily family, Aggregation mode);

// Analytic gradient of aggregate_value with respect to x = [q; qdot].
Vec12 aggregate_gradient(const PlantState& state, const PlatformModel& model,
                         const BarrierConfig& cfg, BarrierFamily family, Aggregation mode);

}  // namespace stewart_cbf
