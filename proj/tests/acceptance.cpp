// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.
#include <cstdio>
#include <string>

#include "stewart_cbf/nominal_control.hpp"
#include "stewart_cbf/qp_baseline.hpp"
#include "stewart_cbf/safety_filter.hpp"
#include "stewart_cbf/simulation.hpp"
#include "support.hpp"

using namespace stewart_cbf;
using namespace testing_support;

namespace {

const PlatformModel kModel{};
int failures = 0;

void report(int n, const char* what, bool ok, const std::string& detail) {
    std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", n, what, detail.c_str());
    failures += !ok;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

void closed_form_equivalence() {
    Rng rng(1001);
    const BarrierConfig c = full_box_config();
    double worst = 0.0;
    int compared = 0;
    for (int i = 0; i < 10000; ++i) {
        const PlantState s = random_state(rng);
        const DynamicsEval d = dynamics_terms(s, kModel);
        const Vec6 F = f_des(s, d, rng.vec6(-30, 30));
        const QpProblem agg = build_constraints(s, d, c, F, ConstraintMode::aggregated);
        if (gamma_diagnosis(agg.A.row(0).transpose(), agg.A.row(1).transpose()).singular) continue;
        const Vec6 cf = closed_form_multi(s, d, F, c).F_out;
        const Vec6 qp = solve_qp(agg).F_star;
        worst = std::max(worst, (cf - qp).norm() / std::max(1.0, qp.norm()));
        ++compared;
    }
    double worst_single = 0.0;
    for (int i = 0; i < 1000; ++i) {
        BarrierConfig one;
        one.q_max[rng.integer(0, 2)] = 0.55;
        one.qdot_max[rng.integer(0, 5)] = 0.5;
        one.beta = 30.0;
        const PlantState s = random_state(rng);
        const DynamicsEval d = dynamics_terms(s, kModel);
        const Vec6 F = f_des(s, d, rng.vec6(-30, 30));
        const Vec6 a = closed_form_single(s, d, F, one, 0, 0).F_out;
        const Vec6 b = closed_form_multi(s, d, F, one).F_out;
        worst_single = std::max(worst_single, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.norm()));
    }
    report(1, "closed form equals aggregated QP", worst <= 1e-8 && worst_single <= 1e-14 && compared > 5000,
           fmt("%.0f nonsingular states, max rel diff %.2e; single vs multi %.2e", compared, worst, worst_single));
}

void scenario_safety() {
    ScenarioConfig c = ScenarioConfig::reproduction_scenario();
    double min_h = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (FilterMode m : {FilterMode::qp, FilterMode::cf}) {
        c.filter_mode = m;
        const ScenarioResult r = run_scenario(c);
        const SafetyAudit a = audit_log(r.log, 1e-6);
        ok = ok && r.log.completed && !a.violations();
        min_h = std::min({min_h, a.min_h_D, a.min_h_v});
    }
    c.filter_mode = FilterMode::none;
    const ScenarioResult base = run_scenario(c);
    const SafetyAudit a = audit_log(base.log, 1e-6);
    report(2, "filtered runs stay safe, unfiltered violates", ok && a.velocity_violation,
           fmt("min h over qp/cf %.3e; unfiltered min h_v %.3e", min_h, a.min_h_v));
}

void timing() {
    const TimingComparison t = compare_timing(ScenarioConfig::reproduction_scenario());
    const bool ok = t.ratio >= 2.0 && t.regions.size() == 4;
    report(3, "closed form speedup over QP", ok,
           fmt("ratio %.2f over %.0f active regions", t.ratio, static_cast<double>(t.regions.size())) +
               fmt(" (qp avg %.3g s, cf avg %.3g s)", t.qp_avg, t.cf_avg));
}

void softmin_bounds() {
    Rng rng(1004);
    double worst = 0.0;
    bool ok = true;
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = rng.integer(1, 12);
        std::vector<double> h(n);
        for (auto& x : h) x = rng.uniform(-5.0, 5.0);
        const double m = *std::min_element(h.begin(), h.end());
        double prev_gap = std::numeric_limits<double>::infinity();
        for (double beta : {1.0, 10.0, 100.0}) {
            const double s = softmin_lse(h, beta);
            const double gap = m - s;
            ok = ok && s <= m && s >= m - std::log(static_cast<double>(n)) / beta && gap <= prev_gap;
            worst = std::max(worst, gap * beta / std::max(1.0, std::log(static_cast<double>(n))));
            prev_gap = gap;
        }
    }
    report(4, "soft minimum bounds", ok, fmt("10000 vectors, max gap relative to log(N)/beta %.4f", worst));
}

void qp_correctness() {
    Rng rng(1005);
    double worst_obj = 0.0, worst_kkt = 0.0;
    bool ok = true;
    for (int i = 0; i < 500; ++i) {
        const QpProblem p = random_qp(rng, rng.integer(1, 8));
        const QpSolution s = solve_qp(p);
        const EnumerationResult e = enumerate_qp(p);
        const KktReport k = kkt_report(p, s);
        const double d = std::max(rel_err((s.F_star - p.f_des).squaredNorm(), e.objective), rel_err(s.F_star, e.F));
        worst_obj = std::max(worst_obj, d);
        worst_kkt = std::max({worst_kkt, k.stationarity, k.max_violation, k.max_slackness});
        ok = ok && e.feasible && d <= 1e-9 && k.stationarity <= 1e-8 && k.max_violation <= 1e-9 &&
             k.min_multiplier >= 0.0 && k.max_slackness <= 1e-8;
    }
    report(5, "QP baseline optimal", ok, fmt("500 instances, enumeration diff %.2e, kkt residual %.2e", worst_obj, worst_kkt));
}

void dynamics_structure() {
    Rng rng(1006);
    double worst_skew = 0.0, worst_round = 0.0, worst_sym = 0.0;
    bool ok = true;
    for (int i = 0; i < 1000; ++i) {
        const PlantState s = random_state(rng);
        const DynamicsEval d = dynamics_terms(s, kModel);
        const auto dM = inertia_partials(s.q, kModel.inertia);
        Mat6 Mdot = Mat6::Zero();
        for (int k = 0; k < kDof; ++k) Mdot += dM[k] * s.qdot[k];
        const double sym = (d.M - d.M.transpose()).norm() / d.M.norm();
        const bool pd = Eigen::LLT<Mat6>(d.M).info() == Eigen::Success;
        const double skew = std::abs(s.qdot.dot((Mdot - 2.0 * d.C) * s.qdot));
        const double scale = s.qdot.squaredNorm() * std::max(Mdot.norm(), 1e-300);
        const Vec6 u = rng.vec6(-3, 3);
        const Vec6 acc = control_affine_rhs(s, f_des(s, d, u), kModel).tail<6>();
        const double round = rel_err(acc, u);
        worst_sym = std::max(worst_sym, sym);
        worst_skew = std::max(worst_skew, skew / scale);
        worst_round = std::max(worst_round, round);
        ok = ok && pd && sym <= 1e-14 && skew <= 1e-8 * scale && round <= 1e-10;
    }
    report(6, "dynamics structure", ok,
           fmt("M asymmetry %.1e, skew residual %.2e, command round trip %.2e", worst_sym, worst_skew, worst_round));
}

void gamma_cases() {
    Rng rng(1007);
    bool ok = true;
    PlantState rest = random_state(rng);
    rest.qdot.setZero();
    const SensitivityPair a0 = sensitivity_vectors(evaluate_barriers(rest, kModel, full_box_config(), Vec6::Zero()));
    const GammaDiagnosis g0 = gamma_diagnosis(a0.a_p, a0.a_v);
    ok = ok && g0.singular && g0.cause == GammaCause::zero_velocity;
    for (int i = 0; i < 100; ++i) {
        const Vec6 a = rng.vec6(-1, 1);
        const GammaDiagnosis g = gamma_diagnosis(a, -3.0 * a);
        ok = ok && g.singular && g.cause == GammaCause::collinear;
    }
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec6 a = rng.vec6(-1, 1), b = rng.vec6(-1, 1);
        const GammaDiagnosis g = gamma_diagnosis(a, b);
        const double det = a.squaredNorm() * b.squaredNorm() - a.dot(b) * a.dot(b);
        const double e = rel_err(g.det, det);
        worst = std::max(worst, e);
        ok = ok && !g.singular && g.cause == GammaCause::ok && e <= 1e-12;
    }
    report(7, "Gamma singularity diagnosis", ok, fmt("rest and collinear flagged; 1000 pairs, det rel err %.2e", worst));
}

void gradients() {
    Rng rng(1008);
    BarrierConfig c = full_box_config();
    c.alpha_Dj.assign(12, 1.5);
    c.alpha_vk.assign(12, 0.7);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const PlantState s = random_state(rng);
        const BarrierFamily fam = i % 2 ? BarrierFamily::velocity : BarrierFamily::position;
        const Aggregation mode = (i / 2) % 2 ? Aggregation::weighted : Aggregation::plain;
        auto f = [&](const Vec12& x) { return aggregate_value(unstack(x), kModel, c, fam, mode); };
        const Vec12 fd = central_gradient(f, stacked(s), 1e-6);
        worst = std::max(worst, rel_err(aggregate_gradient(s, kModel, c, fam, mode), fd));
    }
    report(8, "aggregate barrier gradients", worst <= 1e-5, fmt("1000 points, max rel err %.2e", worst));
}

}  // namespace

int main() {
    closed_form_equivalence();
    scenario_safety();
    timing();
    softmin_bounds();
    qp_correctness();
    dynamics_structure();
    gamma_cases();
    gradients();
    return failures;
}
