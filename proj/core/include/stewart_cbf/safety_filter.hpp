#pragma once

#include <cstddef>
#include <string>

#include "stewart_cbf/barriers.hpp"
#include "stewart_cbf/dynamics.hpp"
#include "stewart_cbf/errors.hpp"
#include "stewart_cbf/types.hpp"

namespace stewart_cbf {

enum class FilterBranch { none_active, position_active, velocity_active, both_active };

const char* to_string(FilterBranch b);

enum class GammaCause { ok, zero_velocity, collinear };

const char* to_string(GammaCause c);

struct GammaDiagnosis {
    double det = 0.0;
    double norm_ap = 0.0;
    double norm_av = 0.0;
    double cosine = 0.0;
    bool singular = false;
    GammaCause cause = GammaCause::ok;
};

inline constexpr double kGammaTolerance = 1e-12;
// ||a||^2 at or below this cannot carry a single-constraint projection.
inline constexpr double kSensitivityTolerance = 1e-24;

// det(Gamma) = ||a_p||^2 ||a_v||^2 - (a_p^T a_v)^2. Singular when ||a_p|| <= tol
// (zero velocity) or det <= tol * ||a_p||^2 ||a_v||^2 (collinear).
GammaDiagnosis gamma_diagnosis(const Vec6& a_p, const Vec6& a_v, double tolerance = kGammaTolerance);

class SingularGammaError : public StewartError {
  public:
    SingularGammaError(const std::string& what, const GammaDiagnosis& d)
        : StewartError(what), diagnosis_(d) {}
    const GammaDiagnosis& diagnosis() const noexcept { return diagnosis_; }

  private:
    GammaDiagnosis diagnosis_;
};

class DegenerateSensitivityError : public StewartError {
  public:
    using StewartError::StewartError;
};

enum class FallbackPolicy { error, position_priority, damped };

const char* to_string(FallbackPolicy p);

// kkt: choose the branch whose result satisfies the KKT conditions of the
// two-constraint QP (a single projection is only kept when it leaves the other
// constraint satisfied). residual_sign: choose the branch from the signs of the
// residuals at the nominal force alone.
enum class BranchRule { kkt, residual_sign };

const char* to_string(BranchRule r);

struct FilterOptions {
    FallbackPolicy fallback = FallbackPolicy::damped;
    BranchRule rule = BranchRule::kkt;
    double gamma_tolerance = kGammaTolerance;
};

// Two affine constraints Psi_i - a_i^T dF >= 0 on the correction dF = F - F_des.
struct ConstraintPair {
    Vec6 a_p = Vec6::Zero();
    Vec6 a_v = Vec6::Zero();
    double psi_p = 0.0;
    double psi_v = 0.0;
};

struct FilterDecision {
    Vec6 F_safe = Vec6::Zero();
    Vec6 F_out = Vec6::Zero();
    FilterBranch branch = FilterBranch::none_active;
    double gamma_det = 0.0;
    Mat2 gamma = Mat2::Zero();
    Vec2 psi = Vec2::Zero();      // residuals at F_des
    Vec2 psi_out = Vec2::Zero();  // residuals at F_out
    double solve_time = 0.0;      // seconds
    bool fallback_applied = false;
    FallbackPolicy fallback_policy = FallbackPolicy::damped;
    std::size_t qp_iterations = 0;  // set by the QP filter only
};

// Four-branch closed form on an already linearized pair.
FilterDecision solve_constraint_pair(const ConstraintPair& pair, const Vec6& f_des,
                                     const FilterOptions& options = {});

FilterDecision fallback_on_singularity(const ConstraintPair& pair, const Vec6& f_des,
                                       const GammaDiagnosis& diagnosis, FallbackPolicy policy);

ConstraintPair make_pair(const AggregateBarrier& pos, const AggregateBarrier& vel);

// One energy barrier (index j into position_constraints()) and one velocity
// barrier (index k into velocity_constraints()).
FilterDecision closed_form_single(const PlantState& state, const DynamicsEval& dyn,
                                  const Vec6& f_des, const BarrierConfig& cfg, std::size_t j,
                                  std::size_t k, const FilterOptions& options = {});
FilterDecision closed_form_single(const PlantState& state, const PlatformModel& model,
                                  const Vec6& f_des, const BarrierConfig& cfg, std::size_t j,
                                  std::size_t k, const FilterOptions& options = {});

// LSE-aggregated filter over every enabled constraint. solve_time covers
// barrier evaluation and the closed-form solve.
FilterDecision closed_form_multi(const PlantState& state, const DynamicsEval& dyn,
                                 const Vec6& f_des, const BarrierConfig& cfg,
                                 Aggregation mode = Aggregation::plain,
                                 const FilterOptions& options = {});
FilterDecision closed_form_multi(const PlantState& state, const PlatformModel& model,
                                 const Vec6& f_des, const BarrierConfig& cfg,
                                 Aggregation mode = Aggregation::plain,
                                 const FilterOptions& options = {});

}  // namespace stewart_cbf
