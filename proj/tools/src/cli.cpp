#include "stewart_cbf_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>

#include "json.hpp"
#include "stewart_cbf/errors.hpp"
#include "stewart_cbf/scenario_io.hpp"

namespace stewart_cbf::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json audit_json(const SafetyAudit& a) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"violations", a.violations()},
            {"position_violation", a.position_violation},
            {"velocity_violation", a.velocity_violation},
            {"min_h_D", num(a.min_h_D)},
            {"min_h_v", num(a.min_h_v)},
            {"min_hbar_D", num(a.min_hbar_D)},
            {"min_hbar_v", num(a.min_hbar_v)}};
}

ScenarioResult run_mode(ScenarioConfig config, FilterMode mode) {
    config.filter_mode = mode;
    return run_scenario(config);
}

bool filtered(FilterMode m) { return m != FilterMode::none; }

void report_run(const char* name, const ScenarioResult& r, std::ostream& out) {
    out << name << ": " << r.log.records.size() << " steps, " << r.timing.regions.size()
        << " active region(s), min h_D " << r.audit.min_h_D << ", min h_v " << r.audit.min_h_v
        << (r.audit.violations() ? ", VIOLATION" : ", safe") << "\n";
}

}  // namespace

ScenarioConfig resolve_config(const CommandOptions& opts) {
    ScenarioConfig c = opts.config_path.empty() ? ScenarioConfig::reproduction_scenario()
                                                : load_scenario(opts.config_path);
    const Overrides& o = opts.overrides;
    if (o.filter) c.filter_mode = filter_mode_from_string(*o.filter);
    if (o.duration) c.duration = *o.duration;
    if (o.dt) c.dt = *o.dt;
    if (o.seed) c.rng_seed = *o.seed;
    if (o.speedup_threshold) c.speedup_threshold = *o.speedup_threshold;
    c.validate();
    return c;
}

std::array<AxisDeviation, kDof> trajectory_deviation(const ScenarioLog& a, const ScenarioLog& b) {
    std::array<AxisDeviation, kDof> dev{};
    const std::size_t n = std::min(a.records.size(), b.records.size());
    for (int k = 0; k < kDof; ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < n; ++i) {
            const double qa = a.records[i].q(k);
            const double qb = b.records[i].q(k);
            dev[k].max_abs = std::max(dev[k].max_abs, std::abs(qa - qb));
            lo = std::min({lo, qa, qb});
            hi = std::max({hi, qa, qb});
        }
        dev[k].span = n > 0 ? hi - lo : 0.0;
        dev[k].relative = dev[k].max_abs / std::max(dev[k].span, kMinAxisSpan);
    }
    return dev;
}

int run(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    const ScenarioConfig config = resolve_config(opts);
    const ScenarioResult r = run_scenario(config);
    write_file_atomic(opts.out_dir / "trajectory.csv", trajectory_csv(r.log));
    write_file_atomic(opts.out_dir / "summary.json", summary_json(r));
    report_run(to_string(config.filter_mode), r, out);
    if (!r.log.completed) {
        err << "error: " << r.log.error << "\n";
        return kAuditFailed;
    }
    if (filtered(config.filter_mode) && r.audit.violations()) {
        err << "error: safety audit failed for filter " << to_string(config.filter_mode) << "\n";
        return kAuditFailed;
    }
    return kOk;
}

int compare(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    const ScenarioConfig config = resolve_config(opts);
    const ScenarioResult none = run_mode(config, FilterMode::none);
    const ScenarioResult qp = run_mode(config, FilterMode::qp);
    const ScenarioResult cf = run_mode(config, FilterMode::cf);
    write_file_atomic(opts.out_dir / "trajectory_none.csv", trajectory_csv(none.log));
    write_file_atomic(opts.out_dir / "trajectory_qp.csv", trajectory_csv(qp.log));
    write_file_atomic(opts.out_dir / "trajectory_cf.csv", trajectory_csv(cf.log));

    const auto dev = trajectory_deviation(qp.log, cf.log);
    json axes = json::object();
    bool within = true;
    for (int k = 0; k < kDof; ++k) {
        axes[kAxisNames[k]] = {{"max_abs_deviation", dev[k].max_abs},
                               {"axis_span", dev[k].span},
                               {"relative_deviation", dev[k].relative}};
        within = within && dev[k].relative <= kDeviationLimit;
    }
    json doc;
    doc["qp_vs_cf"] = {{"axes", axes}, {"limit", kDeviationLimit}, {"within_limit", within}};
    doc["audit"] = {{"none", audit_json(none.audit)}, {"qp", audit_json(qp.audit)}, {"cf", audit_json(cf.audit)}};
    doc["active_regions"] = {{"qp", qp.timing.regions.size()}, {"cf", cf.timing.regions.size()}};
    write_file_atomic(opts.out_dir / "comparison.json", doc.dump(2) + "\n");

    report_run("none", none, out);
    report_run("qp", qp, out);
    report_run("cf", cf, out);
    for (int k = 0; k < kDof; ++k) {
        out << "  " << kAxisNames[k] << ": max |qp - cf| = " << dev[k].max_abs << " (" << 100.0 * dev[k].relative
            << "% of span)\n";
    }
    for (const auto* r : {&qp, &cf}) {
        if (!r->log.completed) {
            err << "error: " << r->log.error << "\n";
            return kAuditFailed;
        }
    }
    if (qp.audit.violations() || cf.audit.violations()) {
        err << "error: safety audit failed for a filtered run\n";
        return kAuditFailed;
    }
    return kOk;
}

int bench(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    const ScenarioConfig config = resolve_config(opts);
    if (!filtered(config.filter_mode)) {
        err << "error: bench needs a filtered scenario (filter is 'none')\n";
        return kConfigError;
    }
    const TimingComparison tc = compare_timing(config);
    if (!tc.run.log.completed) {
        err << "error: " << tc.run.log.error << "\n";
        return kAuditFailed;
    }
    json regions = json::array();
    for (const auto& r : tc.regions) {
        regions.push_back({{"region", r.index},
                           {"t_start", r.t_start},
                           {"t_end", r.t_end},
                           {"steps", r.steps},
                           {"qp", {{"avg_s", r.qp_avg}, {"max_s", r.qp_max}}},
                           {"closed_form", {{"avg_s", r.cf_avg}, {"max_s", r.cf_max}}}});
    }
    const bool pass = tc.ratio >= config.speedup_threshold;
    json doc;
    doc["trajectory_filter"] = to_string(config.filter_mode);
    doc["region_count"] = tc.regions.size();
    doc["regions"] = regions;
    doc["overall"] = {{"qp_avg_s", tc.qp_avg},
                      {"qp_max_s", tc.qp_max},
                      {"closed_form_avg_s", tc.cf_avg},
                      {"closed_form_max_s", tc.cf_max}};
    doc["ratio"] = tc.ratio;
    doc["threshold"] = config.speedup_threshold;
    doc["pass"] = pass;
    doc["reference"] = {{"qp_avg_s", 4.98e-3},
                        {"closed_form_avg_s", 5.83e-4},
                        {"qp_max_s", 1.372e-2},
                        {"closed_form_max_s", 2.427e-3}};
    write_file_atomic(opts.out_dir / "bench.json", doc.dump(2) + "\n");

    out << "active regions: " << tc.regions.size() << "\n";
    for (const auto& r : tc.regions) {
        out << "  region " << r.index << " [" << r.t_start << ", " << r.t_end << ") s: qp avg " << r.qp_avg
            << " s, closed form avg " << r.cf_avg << " s\n";
    }
    out << "avg solve time: qp " << tc.qp_avg << " s, closed form " << tc.cf_avg << " s, ratio " << tc.ratio
        << " (threshold " << config.speedup_threshold << ")\n";
    if (!pass) {
        err << "error: speedup " << tc.ratio << " below threshold " << config.speedup_threshold << "\n";
        return kThresholdUnmet;
    }
    return kOk;
}

int check(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    const ScenarioConfig config = resolve_config(opts);
    const PlantState& x0 = config.initial_state;
    const Aggregation agg =
        config.filter_mode == FilterMode::cf_weighted ? Aggregation::weighted : Aggregation::plain;
    const double hd = aggregate_value(x0, config.model, config.barrier, BarrierFamily::position, agg);
    const double hv = aggregate_value(x0, config.model, config.barrier, BarrierFamily::velocity, agg);
    const DynamicsEval dyn = dynamics_terms(x0, config.model);
    const BarrierEval eval = evaluate_barriers(x0, dyn, config.barrier, Vec6::Zero(), agg);
    const GammaDiagnosis gd =
        gamma_diagnosis(eval.pos.a, eval.vel.a, config.filter_options.gamma_tolerance);

    if (opts.emit_normalized) {
        out << normalized_json(config);
    } else {
        out << "config ok: " << config.barrier.position_constraints().size() << " position and "
            << config.barrier.velocity_constraints().size() << " velocity constraints, filter "
            << to_string(config.filter_mode) << "\n";
        out << "initial hbar_D = " << hd << ", hbar_v = " << hv << "\n";
        out << "initial Gamma: det = " << gd.det << ", cause " << to_string(gd.cause)
            << (gd.singular ? " (singular at this state)" : "") << "\n";
    }
    if (hd < 0.0 || hv < 0.0) {
        err << "error: initial state outside the aggregated safe set: hbar_D = " << hd << ", hbar_v = " << hv
            << "\n";
        for (const auto& t : eval.position) err << "  hD_" << t.id.label() << " = " << t.h << "\n";
        for (const auto& t : eval.velocity) err << "  hv_" << t.id.label() << " = " << t.h << "\n";
        return kConfigError;
    }
    return kOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stewart platform CBF safety filter scenarios"};
    app.require_subcommand(1);
    CommandOptions opts;
    std::string filter;
    double duration = 0.0, dt = 0.0, threshold = 0.0;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "Scenario JSON (default: built-in reproduction scenario)");
        sub->add_option("--filter", filter, "none, qp, cf or cf-weighted")
            ->check(CLI::IsMember({"none", "qp", "cf", "cf-weighted"}));
        sub->add_option("--out", opts.out_dir, "Output directory");
        sub->add_option("--duration", duration, "Run length [s]");
        sub->add_option("--dt", dt, "Step size [s]");
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--speedup-threshold", threshold, "Minimum qp/closed-form time ratio for bench");
    };
    CLI::App* run_cmd = app.add_subcommand("run", "Run one scenario and write trajectory.csv and summary.json");
    CLI::App* cmp_cmd = app.add_subcommand("compare", "Run none, qp and cf and compare trajectories");
    CLI::App* bench_cmd = app.add_subcommand("bench", "Time qp against the closed form over active regions");
    CLI::App* check_cmd = app.add_subcommand("check", "Validate a config");
    for (auto* sub : {run_cmd, cmp_cmd, bench_cmd, check_cmd}) add_common(sub);
    check_cmd->add_flag("--emit-normalized", opts.emit_normalized, "Print the normalized config as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }

    CLI::App* active = app.get_subcommands().front();
    if (active->count("--filter")) opts.overrides.filter = filter;
    if (active->count("--duration")) opts.overrides.duration = duration;
    if (active->count("--dt")) opts.overrides.dt = dt;
    if (active->count("--seed")) opts.overrides.seed = seed;
    if (active->count("--speedup-threshold")) opts.overrides.speedup_threshold = threshold;

    try {
        if (active == run_cmd) return run(opts, out, err);
        if (active == cmp_cmd) return compare(opts, out, err);
        if (active == bench_cmd) return bench(opts, out, err);
        return check(opts, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const StewartError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }
}

}  // namespace stewart_cbf::cli
