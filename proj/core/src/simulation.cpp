#include "stewart_cbf/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "stewart_cbf/errors.hpp"
#include "stewart_cbf/qp_baseline.hpp"

namespace stewart_cbf {

namespace {

constexpr int kTimingSweeps = 3;

Aggregation aggregation_for(FilterMode mode) {
    return mode == FilterMode::cf_weighted ? Aggregation::weighted : Aggregation::plain;
}

}  // namespace

const char* to_string(FilterMode m) {
    switch (m) {
        case FilterMode::none: return "none";
        case FilterMode::qp: return "qp";
        case FilterMode::cf: return "cf";
        case FilterMode::cf_weighted: return "cf-weighted";
    }
    return "unknown";
}

FilterMode filter_mode_from_string(const std::string& s) {
    if (s == "none") return FilterMode::none;
    if (s == "qp") return FilterMode::qp;
    if (s == "cf") return FilterMode::cf;
    if (s == "cf-weighted") return FilterMode::cf_weighted;
    throw ConfigError("unknown filter mode '" + s + "' (expected none, qp, cf, cf-weighted)");
}

const char* to_string(InputHold h) { return h == InputHold::step ? "step" : "stage"; }

InputHold input_hold_from_string(const std::string& s) {
    if (s == "step") return InputHold::step;
    if (s == "stage") return InputHold::stage;
    throw ConfigError("unknown input_hold '" + s + "' (expected step or stage)");
}

ScenarioConfig ScenarioConfig::reproduction_scenario() {
    ScenarioConfig c;
    c.initial_state.q << 0.0, 0.0, 0.4, 0.0, 0.0, 0.0;
    c.duration = 60.0;
    c.dt = 1e-3;
    auto seg = [](double t0, double t1, double x, double y, double z) {
        WaypointSegment s;
        s.t_start = t0;
        s.t_end = t1;
        s.q_des << x, y, z, 0.0, 0.0, 0.0;
        return s;
    };
    c.schedule = {seg(0.0, 15.0, 0.1, 0.0, 0.4), seg(15.0, 30.0, 0.0, 0.1, 0.4),
                  seg(30.0, 45.0, 0.0, 0.0, 0.45), seg(45.0, 60.0, 0.0, 0.0, 0.5)};
    c.filter_mode = FilterMode::cf;
    c.barrier.q_max = {0.1, 0.1, 0.5, std::nullopt, std::nullopt, std::nullopt};
    c.barrier.qdot_max = {2e-3, 2e-3, 10e-3, std::nullopt, std::nullopt, std::nullopt};
    c.barrier.alpha_e = 1.0;
    c.barrier.alpha_D = 1.0;
    c.barrier.alpha_v = 1.0;
    c.barrier.beta = 1e4;
    c.barrier.alpha_Dj = {1.0, 1.0, 1.0};
    c.barrier.alpha_vk = {1.0, 1.0, 2.0};
    // Slow translational tracking. Each waypoint switch leaves the filters idle
    // for more than region_gap before the next bound is approached, and stiff
    // translational gains would spill large rotational corrections out of the
    // minimum-norm force projection.
    c.lqr.q_pos << 1.44e-4, 1.44e-4, 4.0, 50.0, 50.0, 50.0;
    c.lqr.q_vel << 0.1785, 0.1785, 0.0, 10.0, 10.0, 10.0;
    c.lqr.r = Vec6::Ones();
    return c;
}

void ScenarioConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
    if (!(duration >= dt) || !std::isfinite(duration)) throw ConfigError("duration must be >= dt");
    if (!(region_gap >= 0.0)) throw ConfigError("region_gap must be nonnegative");
    if (!(speedup_threshold > 0.0)) throw ConfigError("speedup_threshold must be positive");
    try {
        validate_state(initial_state);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("initial state: ") + e.what());
    }
    model.geometry.validate();
    model.inertia.validate();
    barrier.validate();
    try {
        lqr.weights().validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string("lqr: ") + e.what());
    }
    if (schedule.empty()) throw ConfigError("waypoint schedule is empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& s = schedule[i];
        if (!(s.t_end > s.t_start) || !s.q_des.allFinite() || !s.qdot_des.allFinite()) {
            throw ConfigError("waypoint segment " + std::to_string(i) + " is malformed");
        }
        const double expected_start = i == 0 ? 0.0 : schedule[i - 1].t_end;
        if (s.t_start != expected_start) {
            throw ConfigError("waypoint segment " + std::to_string(i) +
                              " must start where the previous one ends (schedule must cover "
                              "[0, duration) without overlap)");
        }
    }
    if (schedule.back().t_end < duration) {
        throw ConfigError("waypoint schedule ends before the run duration");
    }
}

TrackingTarget waypoint(double t, const std::vector<WaypointSegment>& schedule, double duration) {
    if (!(t >= 0.0 && t < duration)) {
        std::ostringstream os;
        os << "waypoint: t = " << t << " outside [0, " << duration << ")";
        throw ArgumentError(os.str());
    }
    for (const auto& s : schedule) {
        if (t >= s.t_start && t < s.t_end) return {s.q_des, s.qdot_des};
    }
    throw ArgumentError("waypoint: no schedule segment covers t");
}

namespace {

// A non-finite stage would otherwise reach the next kinematics evaluation.
Vec12 finite_or_diverge(const Vec12& v, double t) {
    if (!v.allFinite()) {
        std::ostringstream os;
        os << "integration diverged after t = " << t;
        throw DivergenceError(os.str(), t);
    }
    return v;
}

}  // namespace

PlantState rk4_step(const PlantState& state, const Vec6& force, const PlatformModel& model,
                    double dt, double t) {
    const Vec12 x = state.stacked();
    auto f = [&](const Vec12& xi) {
        return finite_or_diverge(control_affine_rhs(PlantState::from_stacked(xi), force, model), t);
    };
    const Vec12 k1 = f(x);
    const Vec12 k2 = f(x + 0.5 * dt * k1);
    const Vec12 k3 = f(x + 0.5 * dt * k2);
    const Vec12 k4 = f(x + dt * k3);
    const Vec12 next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return PlantState::from_stacked(finite_or_diverge(next, t));
}

PlantState rk4_step(const PlantState& state, const Vec6& first_force,
                    const std::function<Vec6(const PlantState&)>& feedback,
                    const PlatformModel& model, double dt, double t) {
    const Vec12 x = state.stacked();
    auto f = [&](const Vec12& xi) {
        const PlantState s = PlantState::from_stacked(xi);
        validate_state(s);
        return finite_or_diverge(control_affine_rhs(s, feedback(s), model), t);
    };
    const Vec12 k1 = finite_or_diverge(control_affine_rhs(state, first_force, model), t);
    const Vec12 k2 = f(x + 0.5 * dt * k1);
    const Vec12 k3 = f(x + 0.5 * dt * k2);
    const Vec12 k4 = f(x + dt * k3);
    const Vec12 next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return PlantState::from_stacked(finite_or_diverge(next, t));
}

TimingReport timing_report(const ScenarioLog& log, double region_gap) {
    TimingReport report;
    double total = 0.0;
    std::size_t count = 0;
    double last_active = -std::numeric_limits<double>::infinity();
    for (const auto& rec : log.records) {
        if (!rec.cbf_active) continue;
        const double idle = rec.t - last_active - log.dt;
        if (report.regions.empty() || idle >= region_gap) {
            TimingRegion r;
            r.index = static_cast<int>(report.regions.size()) + 1;
            r.t_start = rec.t;
            report.regions.push_back(r);
        }
        TimingRegion& r = report.regions.back();
        r.t_end = rec.t + log.dt;
        ++r.steps;
        r.avg_solve_time += rec.solve_time;  // sum until normalized below
        r.max_solve_time = std::max(r.max_solve_time, rec.solve_time);
        total += rec.solve_time;
        ++count;
        report.overall_max = std::max(report.overall_max, rec.solve_time);
        last_active = rec.t;
    }
    for (auto& r : report.regions) r.avg_solve_time /= static_cast<double>(r.steps);
    if (count > 0) {
        report.overall_avg = total / static_cast<double>(count);
    } else {
        report.notice = "no CBF-active region in this run";
    }
    return report;
}

SafetyAudit audit_log(const ScenarioLog& log, double tolerance) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    SafetyAudit a{inf, inf, inf, inf, false, false};
    for (const auto& rec : log.records) {
        for (double h : rec.h_D) a.min_h_D = std::min(a.min_h_D, h);
        for (double h : rec.h_v) a.min_h_v = std::min(a.min_h_v, h);
        a.min_hbar_D = std::min(a.min_hbar_D, rec.hbar_D);
        a.min_hbar_v = std::min(a.min_hbar_v, rec.hbar_v);
    }
    a.position_violation = a.min_h_D < -tolerance;
    a.velocity_violation = a.min_h_v < -tolerance;
    return a;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    const FilterMode mode = config.filter_mode;
    const Aggregation agg = aggregation_for(mode);
    const PlatformModel& model = config.model;
    const BarrierConfig& cfg = config.barrier;

    if (mode != FilterMode::none) {
        const double hd = aggregate_value(config.initial_state, model, cfg, BarrierFamily::position, agg);
        const double hv = aggregate_value(config.initial_state, model, cfg, BarrierFamily::velocity, agg);
        if (hd < 0.0 || hv < 0.0) {
            std::ostringstream os;
            os << "initial state is outside the aggregated safe set: hbar_D = " << hd
               << ", hbar_v = " << hv;
            throw ConfigError(os.str());
        }
    }

    const GainMatrix K = lqr_gain(config.lqr.weights());
    ScenarioResult result;
    ScenarioLog& log = result.log;
    log.mode = mode;
    log.dt = config.dt;
    log.position_ids = cfg.position_constraints();
    log.velocity_ids = cfg.velocity_constraints();
    const auto steps = static_cast<std::size_t>(std::llround(config.duration / config.dt));
    log.records.reserve(steps);

    PlantState state = config.initial_state;
    double t = 0.0;
    try {
        for (std::size_t i = 0; i < steps; ++i) {
            t = static_cast<double>(i) * config.dt;
            validate_state(state);
            const TrackingTarget target = waypoint(t, config.schedule, config.duration);
            auto control = [&](const PlantState& x, const DynamicsEval& dyn, Vec6& nominal) {
                nominal = f_des(x, dyn, u_des(x, target, K));
                switch (mode) {
                    case FilterMode::none: {
                        FilterDecision d;
                        d.F_out = nominal;
                        return d;
                    }
                    case FilterMode::qp:
                        return qp_filter(x, dyn, nominal, cfg);
                    case FilterMode::cf:
                    case FilterMode::cf_weighted:
                        break;
                }
                return closed_form_multi(x, dyn, nominal, cfg, agg, config.filter_options);
            };
            const DynamicsEval dyn = dynamics_terms(state, model);
            Vec6 nominal;
            const FilterDecision decision = control(state, dyn, nominal);

            const BarrierEval eval = evaluate_barriers(state, dyn, cfg, nominal, agg);
            LogRecord rec;
            rec.t = t;
            rec.q = state.q;
            rec.qdot = state.qdot;
            rec.q_des = target.q_des;
            rec.F_des = nominal;
            rec.F_out = decision.F_out;
            rec.h_D = eval.h_D();
            rec.h_v = eval.h_v();
            rec.hbar_D = eval.pos.h;
            rec.hbar_v = eval.vel.h;
            rec.branch = decision.branch;
            rec.solve_time = decision.solve_time;
            rec.cbf_active = decision.branch != FilterBranch::none_active;
            log.records.push_back(std::move(rec));

            if (config.input_hold == InputHold::step) {
                state = rk4_step(state, decision.F_out, model, config.dt, t);
            } else {
                auto feedback = [&](const PlantState& x) {
                    Vec6 unused;
                    return control(x, dynamics_terms(x, model), unused).F_out;
                };
                state = rk4_step(state, decision.F_out, feedback, model, config.dt, t);
            }
        }
        log.completed = true;
    } catch (const StewartError& e) {
        log.completed = false;
        std::ostringstream os;
        os << "run stopped at t = " << t << ": " << e.what();
        log.error = os.str();
    }
    result.timing = timing_report(log, config.region_gap);
    result.audit = audit_log(log);
    return result;
}

TimingComparison compare_timing(const ScenarioConfig& config) {
    if (config.filter_mode == FilterMode::none) {
        throw ConfigError("timing comparison needs a filtered scenario (filter is 'none')");
    }
    TimingComparison out;
    out.run = run_scenario(config);
    const ScenarioLog& log = out.run.log;
    const Aggregation agg = aggregation_for(config.filter_mode);

    struct Sample {
        std::size_t region;
        const LogRecord* rec;
        DynamicsEval dyn;
        std::array<double, kTimingSweeps> qp{};
        std::array<double, kTimingSweeps> cf{};
    };
    std::vector<Sample> samples;
    const auto& regions = out.run.timing.regions;
    std::size_t i = 0;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        while (i < log.records.size() && log.records[i].t < regions[r].t_start) ++i;
        for (; i < log.records.size() && log.records[i].t < regions[r].t_end; ++i) {
            const LogRecord& rec = log.records[i];
            if (!rec.cbf_active) continue;
            samples.push_back({r, &rec, dynamics_terms({rec.q, rec.qdot}, config.model)});
        }
    }

    // Whole sweeps in trajectory order, one call per state per sweep; each
    // state keeps its median sweep. A sum of sub-microsecond calls is
    // otherwise dominated by a single preemption.
    bool qp_first = true;
    for (int sweep = 0; sweep < kTimingSweeps; ++sweep) {
        for (Sample& smp : samples) {
            const PlantState x{smp.rec->q, smp.rec->qdot};
            auto time_qp = [&] {
                smp.qp[sweep] = qp_filter(x, smp.dyn, smp.rec->F_des, config.barrier).solve_time;
            };
            auto time_cf = [&] {
                smp.cf[sweep] =
                    closed_form_multi(x, smp.dyn, smp.rec->F_des, config.barrier, agg, config.filter_options)
                        .solve_time;
            };
            if (qp_first) {
                time_qp();
                time_cf();
            } else {
                time_cf();
                time_qp();
            }
            qp_first = !qp_first;
        }
    }

    for (const auto& region : regions) {
        PairedRegion pr;
        pr.index = region.index;
        pr.t_start = region.t_start;
        pr.t_end = region.t_end;
        out.regions.push_back(pr);
    }
    auto median = [](std::array<double, kTimingSweeps> v) {
        std::nth_element(v.begin(), v.begin() + kTimingSweeps / 2, v.end());
        return v[kTimingSweeps / 2];
    };
    for (const Sample& smp : samples) {
        const double tq = median(smp.qp), tc = median(smp.cf);
        PairedRegion& pr = out.regions[smp.region];
        ++pr.steps;
        pr.qp_avg += tq;
        pr.cf_avg += tc;
        pr.qp_max = std::max(pr.qp_max, tq);
        pr.cf_max = std::max(pr.cf_max, tc);
        out.qp_avg += tq;
        out.cf_avg += tc;
        out.qp_max = std::max(out.qp_max, tq);
        out.cf_max = std::max(out.cf_max, tc);
    }
    for (PairedRegion& pr : out.regions) {
        if (pr.steps > 0) {
            pr.qp_avg /= static_cast<double>(pr.steps);
            pr.cf_avg /= static_cast<double>(pr.steps);
        }
    }
    if (!samples.empty()) {
        out.qp_avg /= static_cast<double>(samples.size());
        out.cf_avg /= static_cast<double>(samples.size());
    }
    out.ratio = out.cf_avg > 0.0 ? out.qp_avg / out.cf_avg : 0.0;
    return out;
}

}  // namespace stewart_cbf
