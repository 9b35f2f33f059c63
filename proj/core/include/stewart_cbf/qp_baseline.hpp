#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stewart_cbf/barriers.hpp"
#include "stewart_cbf/dynamics.hpp"
#include "stewart_cbf/errors.hpp"
#include "stewart_cbf/safety_filter.hpp"
#include "stewart_cbf/types.hpp"

namespace stewart_cbf {

struct QpRowLabel {
    BarrierFamily family = BarrierFamily::position;
    bool aggregated = false;
    ConstraintId id;  // meaningful when !aggregated

    std::string name() const;
};

// min ||F - F_des||^2  s.t.  A F <= b
struct QpProblem {
    Vec6 f_des = Vec6::Zero();
    MatX A;
    VecX b;
    std::vector<QpRowLabel> labels;

    Eigen::Index rows() const { return A.rows(); }
};

struct QpSolution {
    Vec6 F_star = Vec6::Zero();
    std::vector<Eigen::Index> active_set;
    VecX multipliers;  // one per row, for the ||F - F_des||^2 objective
    std::size_t iterations = 0;
    double solve_time = 0.0;
};

class InfeasibleQpError : public StewartError {
  public:
    InfeasibleQpError(const std::string& what, std::vector<Eigen::Index> rows)
        : StewartError(what), rows_(std::move(rows)) {}
    // Rows whose combination certifies infeasibility.
    const std::vector<Eigen::Index>& rows() const noexcept { return rows_; }

  private:
    std::vector<Eigen::Index> rows_;
};

class QpNonterminationError : public StewartError {
  public:
    using StewartError::StewartError;
};

enum class ConstraintMode { individual, aggregated };

// individual: one row per enabled barrier, a_i^T F <= drift_i + gain * h_i.
// aggregated: the two soft-min rows consumed by the closed-form filter.
QpProblem build_constraints(const PlantState& state, const DynamicsEval& dyn,
                            const BarrierConfig& cfg, const Vec6& f_des, ConstraintMode mode,
                            Aggregation aggregation = Aggregation::plain);

// Dual active-set method (Goldfarb-Idnani) specialised to the identity
// Hessian. Starts at F_des, adds the most violated row (normalized by row
// norm, lowest index on ties), drops rows whose multiplier would turn negative.
QpSolution solve_qp(const QpProblem& problem);

FilterDecision qp_filter(const PlantState& state, const DynamicsEval& dyn, const Vec6& f_des,
                         const BarrierConfig& cfg);
FilterDecision qp_filter(const PlantState& state, const PlatformModel& model, const Vec6& f_des,
                         const BarrierConfig& cfg);

}  // namespace stewart_cbf
