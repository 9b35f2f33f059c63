#include "stewart_cbf/qp_baseline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace stewart_cbf {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Active rows never exceed the dimension of F.
using ActiveBasis = Eigen::Matrix<double, kDof, Eigen::Dynamic, 0, kDof, kDof>;
using ActiveGram = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kDof, kDof>;
using ActiveVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kDof, 1>;

std::string describe_rows(const QpProblem& p, const std::vector<Eigen::Index>& rows) {
    std::ostringstream os;
    os << "QP infeasible; irreducible violated rows:";
    for (auto r : rows) {
        os << ' ' << r;
        if (static_cast<std::size_t>(r) < p.labels.size()) os << " (" << p.labels[r].name() << ")";
    }
    return os.str();
}

}  // namespace

std::string QpRowLabel::name() const {
    const char* fam = family == BarrierFamily::position ? "hD" : "hv";
    if (aggregated) return std::string(fam) + "_aggregate";
    return std::string(fam) + "_" + id.label();
}

QpProblem build_constraints(const PlantState& state, const DynamicsEval& dyn,
                            const BarrierConfig& cfg, const Vec6& f_des, ConstraintMode mode,
                            Aggregation aggregation) {
    QpProblem p;
    p.f_des = f_des;
    if (mode == ConstraintMode::aggregated) {
        const BarrierEval eval = evaluate_barriers(state, dyn, cfg, f_des, aggregation);
        p.A.resize(2, kDof);
        p.b.resize(2);
        p.A.row(0) = eval.pos.a.transpose();
        p.A.row(1) = eval.vel.a.transpose();
        p.b[0] = eval.pos.drift + eval.pos.gain * eval.pos.h;
        p.b[1] = eval.vel.drift + eval.vel.gain * eval.vel.h;
        p.labels = {{BarrierFamily::position, true, {}}, {BarrierFamily::velocity, true, {}}};
        return p;
    }
    const BarrierLinearization lin = linearize(state, dyn);
    const auto pos = position_terms(state, lin, cfg);
    const auto vel = velocity_terms(state, lin, cfg);
    const auto n = static_cast<Eigen::Index>(pos.size() + vel.size());
    p.A.resize(n, kDof);
    p.b.resize(n);
    p.labels.reserve(static_cast<std::size_t>(n));
    Eigen::Index row = 0;
    for (const auto& t : pos) {
        p.A.row(row) = t.a.transpose();
        p.b[row] = t.drift + cfg.alpha_D * t.h;
        p.labels.push_back({BarrierFamily::position, false, t.id});
        ++row;
    }
    for (const auto& t : vel) {
        p.A.row(row) = t.a.transpose();
        p.b[row] = t.drift + cfg.alpha_v * t.h;
        p.labels.push_back({BarrierFamily::velocity, false, t.id});
        ++row;
    }
    return p;
}

QpSolution solve_qp(const QpProblem& problem) {
    const auto start = Clock::now();
    const Eigen::Index n = problem.rows();
    if (n < 1 || problem.A.cols() != kDof || problem.b.size() != n) {
        throw ArgumentError("solve_qp: malformed problem");
    }
    if (!problem.A.allFinite() || !problem.b.allFinite() || !problem.f_des.allFinite()) {
        throw ArgumentError("solve_qp: non-finite problem data");
    }

    const VecX row_norm = problem.A.rowwise().norm();
    auto violation = [&](Eigen::Index i, const Vec6& x) {
        return problem.A.row(i).dot(x) - problem.b[i];
    };
    auto feas_tol = [&](Eigen::Index i) { return 1e-12 * std::max(1.0, std::abs(problem.b[i])); };

    Vec6 x = problem.f_des;
    std::vector<Eigen::Index> active;
    std::vector<double> u;  // multipliers of 1/2 ||F - F_des||^2
    std::vector<char> in_active(static_cast<std::size_t>(n), 0);
    const std::size_t max_iter = 10 * static_cast<std::size_t>(n);
    std::size_t iter = 0;

    for (;;) {
        Eigen::Index p = -1;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (in_active[i]) continue;
            const double v = violation(i, x);
            if (v <= feas_tol(i)) continue;
            if (row_norm[i] == 0.0) throw InfeasibleQpError(describe_rows(problem, {i}), {i});
            const double score = v / row_norm[i];
            if (score > worst) {
                worst = score;
                p = i;
            }
        }
        if (p < 0) break;

        const Vec6 a_p = problem.A.row(p).transpose();
        double u_p = 0.0;
        for (;;) {
            if (++iter > max_iter) {
                throw QpNonterminationError("solve_qp: iteration limit reached (cycling guard)");
            }
            const auto k = static_cast<Eigen::Index>(active.size());
            Vec6 z = a_p;
            ActiveVec r(k);
            if (k > 0) {
                ActiveBasis N(kDof, k);
                for (Eigen::Index j = 0; j < k; ++j) N.col(j) = problem.A.row(active[j]).transpose();
                const ActiveGram gram = N.transpose() * N;
                r = gram.ldlt().solve(N.transpose() * a_p);
                z -= N * r;
            }
            const double zz = z.squaredNorm();
            const double t_full =
                zz > 1e-13 * row_norm[p] * row_norm[p] ? violation(p, x) / zz : kInf;
            double t_partial = kInf;
            Eigen::Index blocking = -1;
            for (Eigen::Index j = 0; j < k; ++j) {
                if (r[j] > 1e-12) {
                    const double ratio = u[j] / r[j];
                    if (ratio < t_partial) {
                        t_partial = ratio;
                        blocking = j;
                    }
                }
            }
            if (t_full == kInf && t_partial == kInf) {
                std::vector<Eigen::Index> rows = active;
                rows.push_back(p);
                std::sort(rows.begin(), rows.end());
                throw InfeasibleQpError(describe_rows(problem, rows), rows);
            }
            const double t = std::min(t_full, t_partial);
            if (t_full < kInf) x -= t * z;
            for (Eigen::Index j = 0; j < k; ++j) u[j] -= t * r[j];
            u_p += t;
            if (t_full <= t_partial) {
                active.push_back(p);
                u.push_back(u_p);
                in_active[p] = 1;
                break;
            }
            in_active[active[blocking]] = 0;
            active.erase(active.begin() + blocking);
            u.erase(u.begin() + blocking);
        }
    }

    QpSolution sol;
    sol.F_star = x;
    sol.multipliers = VecX::Zero(n);
    for (std::size_t j = 0; j < active.size(); ++j) {
        sol.multipliers[active[j]] = 2.0 * std::max(0.0, u[j]);
    }
    sol.active_set = active;
    std::sort(sol.active_set.begin(), sol.active_set.end());
    sol.iterations = iter;
    sol.solve_time = std::chrono::duration<double>(Clock::now() - start).count();
    return sol;
}

FilterDecision qp_filter(const PlantState& state, const DynamicsEval& dyn, const Vec6& f_des,
                         const BarrierConfig& cfg) {
    const auto start = Clock::now();
    const QpProblem problem = build_constraints(state, dyn, cfg, f_des, ConstraintMode::individual);
    const QpSolution sol = solve_qp(problem);
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();

    FilterDecision d;
    d.F_out = sol.F_star;
    d.F_safe = sol.F_star - f_des;
    bool pos_active = false, vel_active = false;
    for (auto i : sol.active_set) {
        (problem.labels[i].family == BarrierFamily::position ? pos_active : vel_active) = true;
    }
    d.branch = pos_active ? (vel_active ? FilterBranch::both_active : FilterBranch::position_active)
                          : (vel_active ? FilterBranch::velocity_active : FilterBranch::none_active);
    d.gamma_det = std::numeric_limits<double>::quiet_NaN();
    d.gamma.setConstant(std::numeric_limits<double>::quiet_NaN());
    // Worst individual residual per family, before and after filtering.
    d.psi.setConstant(kInf);
    d.psi_out.setConstant(kInf);
    for (Eigen::Index i = 0; i < problem.rows(); ++i) {
        const int fam = problem.labels[i].family == BarrierFamily::position ? 0 : 1;
        d.psi[fam] = std::min(d.psi[fam], problem.b[i] - problem.A.row(i).dot(f_des));
        d.psi_out[fam] = std::min(d.psi_out[fam], problem.b[i] - problem.A.row(i).dot(sol.F_star));
    }
    d.solve_time = elapsed;
    d.qp_iterations = sol.iterations;
    return d;
}

FilterDecision qp_filter(const PlantState& state, const PlatformModel& model, const Vec6& f_des,
                         const BarrierConfig& cfg) {
    return qp_filter(state, dynamics_terms(state, model), f_des, cfg);
}

}  // namespace stewart_cbf
