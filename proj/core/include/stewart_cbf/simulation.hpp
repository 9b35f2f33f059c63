#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stewart_cbf/barriers.hpp"
#include "stewart_cbf/dynamics.hpp"
#include "stewart_cbf/nominal_control.hpp"
#include "stewart_cbf/safety_filter.hpp"
#include "stewart_cbf/types.hpp"

namespace stewart_cbf {

enum class FilterMode { none, qp, cf, cf_weighted };

const char* to_string(FilterMode m);
// Accepts "none", "qp", "cf", "cf-weighted". Throws ConfigError otherwise.
FilterMode filter_mode_from_string(const std::string& s);

// Holds q_des on [t_start, t_end).
struct WaypointSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    Vec6 q_des = Vec6::Zero();
    Vec6 qdot_des = Vec6::Zero();
};

struct LqrDiagonal {
    Vec6 q_pos = Vec6::Constant(50.0);
    Vec6 q_vel = Vec6::Constant(10.0);
    Vec6 r = Vec6::Ones();

    LqrWeights weights() const { return LqrWeights::diagonal(q_pos, q_vel, r); }
};

// step: the force computed at the start of a step is held over the whole RK4
// step. stage: controller and filter are re-evaluated at every RK4 stage (the
// waypoint target stays sampled at the step start).
enum class InputHold { step, stage };

const char* to_string(InputHold h);
InputHold input_hold_from_string(const std::string& s);

struct ScenarioConfig {
    PlantState initial_state;
    double duration = 60.0;
    double dt = 1e-3;
    std::vector<WaypointSegment> schedule;
    FilterMode filter_mode = FilterMode::cf;
    FilterOptions filter_options;
    BarrierConfig barrier;
    LqrDiagonal lqr;
    PlatformModel model;
    std::uint64_t rng_seed = 0;
    // Active steps separated by at least this much inactivity start a new region.
    double region_gap = 0.5;
    double speedup_threshold = 2.0;
    InputHold input_hold = InputHold::stage;

    // The reproduction scenario: 60 s waypoint tour with X/Y/Z position and
    // velocity upper bounds.
    static ScenarioConfig reproduction_scenario();

    // Types, invariants and schedule coverage; throws ConfigError.
    void validate() const;
};

TrackingTarget waypoint(double t, const std::vector<WaypointSegment>& schedule, double duration);

// Classical RK4 with the force held over the step. Throws DivergenceError on
// a non-finite result.
PlantState rk4_step(const PlantState& state, const Vec6& force, const PlatformModel& model,
                    double dt, double t = 0.0);

// RK4 with the force given by a state feedback; first_force is used for the
// first stage.
PlantState rk4_step(const PlantState& state, const Vec6& first_force,
                    const std::function<Vec6(const PlantState&)>& feedback,
                    const PlatformModel& model, double dt, double t = 0.0);

struct LogRecord {
    double t = 0.0;
    Vec6 q, qdot, q_des, F_des, F_out;
    std::vector<double> h_D;
    std::vector<double> h_v;
    double hbar_D = 0.0;
    double hbar_v = 0.0;
    FilterBranch branch = FilterBranch::none_active;
    double solve_time = 0.0;
    bool cbf_active = false;
};

struct ScenarioLog {
    FilterMode mode = FilterMode::none;
    double dt = 0.0;
    std::vector<ConstraintId> position_ids;
    std::vector<ConstraintId> velocity_ids;
    std::vector<LogRecord> records;
    bool completed = false;
    std::string error;  // set when the run stopped early
};

struct TimingRegion {
    int index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t steps = 0;
    double avg_solve_time = 0.0;
    double max_solve_time = 0.0;
};

struct TimingReport {
    std::vector<TimingRegion> regions;
    std::string notice;
    double overall_avg = 0.0;  // over every active step
    double overall_max = 0.0;
};

struct SafetyAudit {
    double min_h_D = 0.0;
    double min_h_v = 0.0;
    double min_hbar_D = 0.0;
    double min_hbar_v = 0.0;
    bool position_violation = false;
    bool velocity_violation = false;

    bool violations() const { return position_violation || velocity_violation; }
};

inline constexpr double kAuditTolerance = 1e-6;

struct ScenarioResult {
    ScenarioLog log;
    TimingReport timing;
    SafetyAudit audit;
};

TimingReport timing_report(const ScenarioLog& log, double region_gap = 0.5);

SafetyAudit audit_log(const ScenarioLog& log, double tolerance = kAuditTolerance);

struct PairedRegion {
    int index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t steps = 0;
    double qp_avg = 0.0;
    double qp_max = 0.0;
    double cf_avg = 0.0;
    double cf_max = 0.0;
};

struct TimingComparison {
    ScenarioResult run;  // the trajectory the timings were taken on
    std::vector<PairedRegion> regions;
    double qp_avg = 0.0;
    double qp_max = 0.0;
    double cf_avg = 0.0;
    double cf_max = 0.0;
    double ratio = 0.0;  // qp_avg / cf_avg
};

// Runs the scenario with its configured filter (qp, cf or cf-weighted), then
// at every step of the detected active regions times both filters on the
// logged state and nominal force. Three sweeps over the active states in
// trajectory order, one call of each filter per state and sweep in alternating
// order; each state keeps its median sweep.
// Throws ConfigError for filter none.
TimingComparison compare_timing(const ScenarioConfig& config);

// Throws ConfigError if a filter is enabled and the initial state is outside
// the aggregated safe set. Dynamics failures during the run stop it and are
// reported through ScenarioLog::error.
ScenarioResult run_scenario(const ScenarioConfig& config);

}  // namespace stewart_cbf
