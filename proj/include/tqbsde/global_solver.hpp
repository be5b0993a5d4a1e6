#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tqbsde/constants.hpp"
#include "tqbsde/errors.hpp"
#include "tqbsde/fixedpoint.hpp"
#include "tqbsde/grid_paths.hpp"

namespace tqbsde {

struct GlobalHypothesesReport {
    bool pass = true;
    double worst_h = 0.0;  // max positive part of h over probes
    double worst_l = 0.0;  // max of |l| - C over probes
    std::vector<std::string> violations;
};

/// Probes the extra global-solvability hypotheses: every h_i <= 0 and every
/// |l_i| <= C with no growth in y. Violations are listed, not thrown.
inline GlobalHypothesesReport check_global_hypotheses(const ProblemSpec& spec,
                                                      long probes = 2000,
                                                      std::uint64_t seed = 811502,
                                                      double tolerance = 1e-9) {
    GlobalHypothesesReport rep;
    const std::size_t d = static_cast<std::size_t>(spec.d);
    std::vector<double> lv(d);
    std::vector<double> worst_h_comp(static_cast<std::size_t>(spec.n), 0.0);
    std::vector<double> worst_l_comp(static_cast<std::size_t>(spec.n), 0.0);
    for (long p = 0; p < probes; ++p) {
        auto pt = detail::sample_probe(spec, seed, static_cast<std::uint64_t>(p));
        const MatView z{pt.z.data(), static_cast<std::size_t>(spec.n), d};
        for (int i = 1; i <= spec.n; ++i) {
            const double hv = evaluate_h(spec, i, pt.t, pt.y, z);
            evaluate_l(spec, i, pt.t, pt.y, z, lv);
            double lnorm = 0.0;
            for (double v : lv) lnorm += v * v;
            lnorm = std::sqrt(lnorm);
            auto& wh = worst_h_comp[static_cast<std::size_t>(i - 1)];
            auto& wl = worst_l_comp[static_cast<std::size_t>(i - 1)];
            wh = std::max(wh, hv);
            wl = std::max(wl, lnorm - spec.lipschitz_C);
        }
    }
    for (int i = 1; i <= spec.n; ++i) {
        const double wh = worst_h_comp[static_cast<std::size_t>(i - 1)];
        const double wl = worst_l_comp[static_cast<std::size_t>(i - 1)];
        rep.worst_h = std::max(rep.worst_h, wh);
        rep.worst_l = std::max(rep.worst_l, wl);
        if (wh > tolerance)
            rep.violations.push_back("component " + std::to_string(i) +
                                     ": h exceeds 0 by " + std::to_string(wh));
        if (wl > tolerance)
            rep.violations.push_back("component " + std::to_string(i) +
                                     ": |l| exceeds C by " + std::to_string(wl));
    }
    rep.pass = rep.violations.empty();
    return rep;
}

/// Backward partition of [0, T] into intervals short enough for the local
/// theory at terminal bound lambda.
struct GlobalPlan {
    double lambda = 0.0;
    double eta_lambda = 0.0;
    std::vector<double> knots;  // T = s_0 > s_1 > ... > s_K = 0
    std::size_t intervals = 0;
};

inline GlobalPlan plan_global(const ProblemSpec& spec,
                              const ConstantProviders& providers) {
    GlobalPlan plan;
    const BetaOdeResult ode = beta_ode(spec);
    plan.lambda = ode.lambda;
    if (!std::isfinite(plan.lambda))
        throw Error("plan_global: lambda overflows for this spec");
    plan.eta_lambda = eta_for_bound(spec, providers, plan.lambda);
    if (!(plan.eta_lambda > 0.0))
        throw Error("plan_global: degenerate eta_lambda = " +
                    std::to_string(plan.eta_lambda) +
                    " (lambda overflow or provider breach)");
    const double T = spec.horizon;
    double raw = 1.0;
    if (T > plan.eta_lambda)
        raw = std::ceil(T / (plan.eta_lambda * (1.0 - 1e-9)));
    if (!(raw >= 1.0) || raw > 1e6)
        throw Error("plan_global: interval count " + std::to_string(raw) +
                    " exceeds cap (eta_lambda = " + std::to_string(plan.eta_lambda) +
                    ")");
    plan.intervals = static_cast<std::size_t>(raw);
    plan.knots.resize(plan.intervals + 1);
    for (std::size_t j = 0; j <= plan.intervals; ++j)
        plan.knots[j] = T * static_cast<double>(plan.intervals - j) /
                        static_cast<double>(plan.intervals);
    return plan;
}

struct BoundBreachError : Error {
    BoundBreachError(const std::string& msg, std::size_t interval)
        : Error(msg, ExitCode::solver_failure), interval_index(interval) {}
    std::size_t interval_index;
};

struct GlobalReport {
    GlobalPlan plan;
    std::vector<FixedPointReport> interval_reports;
    double beta_margin = 0.0;  // max over grid of |Y_t| - beta_t
    bool beta_ok = true;
    double z_bmo_sq = 0.0;
    double bmo_bound = 0.0;  // 8 lambda
    bool bmo_ok = true;
    double mc_se = 0.0;
    double bound_tolerance = 0.0;
    // max |old - new| where consecutive intervals share a knot column; zero
    // by the pasting contract
    double knot_discontinuity = 0.0;
};

struct GlobalOutcome {
    ProcessPair pair;  // over the full stitched grid
    BrownianBundle bundle;
    GlobalReport report;
};

/// Per-interval hook factory; receives the interval's global step offset and
/// length so path-dependent callers can slice their exogenous fields.
using HookFactory = std::function<PicardHooks(std::size_t, std::size_t)>;

/// Solves on [0, T] by stitching: plan intervals of length <= eta_lambda,
/// solve backward with the pasted per-path terminal samples, enforce the
/// uniform beta_t bound and the final BMO budget 8 lambda.
inline GlobalOutcome solve_global(const ProblemSpec& spec, std::size_t paths,
                                  std::size_t steps_per_interval, std::uint64_t seed,
                                  const BasisSpec& basis, double tol, int max_iter,
                                  const ConstantProviders& providers,
                                  Backend backend = Backend::colehopf,
                                  const HookFactory& hook_factory = {}) {
    GlobalOutcome out;
    out.report.plan = plan_global(spec, providers);
    const std::size_t K = out.report.plan.intervals;
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    const std::size_t N_total = K * steps_per_interval;
    const BetaOdeResult ode = beta_ode(spec);

    TimeGrid grid;
    grid.times.reserve(N_total + 1);
    grid.times.push_back(0.0);
    for (std::size_t j = K; j-- > 0;)
        append_subdivision(grid.times, out.report.plan.knots[j + 1],
                           out.report.plan.knots[j], steps_per_interval);
    out.bundle = simulate_brownian(grid, paths, d, seed);

    out.pair = zero_pair(paths, N_total, n, d, seed);
    Array2 terminal = evaluate_terminal(spec, out.bundle);
    double mc_se = 0.0;

    for (std::size_t r = 0; r < K; ++r) {
        const std::size_t step_begin = (K - 1 - r) * steps_per_interval;
        const BundleView view(out.bundle, step_begin, steps_per_interval);
        PicardHooks hooks;
        if (hook_factory) hooks = hook_factory(step_begin, steps_per_interval);
        PicardOutcome local;
        try {
            local = run_picard(spec, view, terminal, basis, tol, max_iter, providers,
                               backend, hooks);
        } catch (PicardError& e) {
            e.report.note = "interval " + std::to_string(r);
            out.report.interval_reports.push_back(e.report);
            throw;
        }
        mc_se = std::max(mc_se, local.report.mc_se);
        out.report.interval_reports.push_back(local.report);

        // paste into the global fields; the shared knot column is written
        // with identical values by construction
        if (r >= 1) {
            const std::size_t shared = step_begin + steps_per_interval;
            for (std::size_t m = 0; m < paths; ++m)
                for (std::size_t i = 0; i < n; ++i)
                    out.report.knot_discontinuity = std::max(
                        out.report.knot_discontinuity,
                        std::fabs(out.pair.Y(m, shared, i) -
                                  local.pair.Y(m, steps_per_interval, i)));
        }
        for (std::size_t m = 0; m < paths; ++m) {
            for (std::size_t k = 0; k <= steps_per_interval; ++k)
                for (std::size_t i = 0; i < n; ++i)
                    out.pair.Y(m, step_begin + k, i) = local.pair.Y(m, k, i);
            for (std::size_t k = 0; k < steps_per_interval; ++k)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        out.pair.Z(m, step_begin + k, i, j) = local.pair.Z(m, k, i, j);
        }

        // uniform bound |Y_t| <= beta_t within MC tolerance on this interval
        const double bound_tol = 3.0 * mc_se + 1e-9 * (1.0 + ode.lambda);
        double margin = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k <= steps_per_interval; ++k) {
            const double beta_t = ode.beta(view.time(k));
            for (std::size_t m = 0; m < paths; ++m) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double v = local.pair.Y(m, k, i);
                    s += v * v;
                }
                margin = std::max(margin, std::sqrt(s) - beta_t);
            }
        }
        out.report.beta_margin = std::max(out.report.beta_margin, margin);
        out.report.bound_tolerance = bound_tol;
        if (margin > bound_tol)
            throw BoundBreachError("solve_global: |Y| exceeds beta_t by " +
                                       std::to_string(margin) + " on interval " +
                                       std::to_string(r),
                                   r);

        // next interval's terminal: this interval's left-endpoint samples
        if (r + 1 < K) {
            for (std::size_t m = 0; m < paths; ++m)
                for (std::size_t i = 0; i < n; ++i) terminal(m, i) = local.pair.Y(m, 0, i);
        }
    }

    out.report.mc_se = mc_se;
    out.report.beta_ok = true;
    out.report.bmo_bound = 8.0 * ode.lambda;
    out.report.z_bmo_sq =
        bmo_norm_estimate(out.pair.Z, BundleView(out.bundle), basis).value;
    const double bmo_tol = 3.0 * mc_se + 1e-9 * (1.0 + ode.lambda);
    out.report.bmo_ok = out.report.z_bmo_sq <= out.report.bmo_bound + bmo_tol;
    if (!out.report.bmo_ok)
        throw BoundBreachError("solve_global: BMO estimate " +
                                   std::to_string(out.report.z_bmo_sq) +
                                   " exceeds 8 lambda = " +
                                   std::to_string(out.report.bmo_bound),
                               K - 1);
    return out;
}

}  // namespace tqbsde
