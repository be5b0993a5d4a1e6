#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tqbsde/constants.hpp"
#include "tqbsde/errors.hpp"
#include "tqbsde/grid_paths.hpp"
#include "tqbsde/scalar_solver.hpp"

namespace tqbsde {

enum class Backend { colehopf, euler };

/// Discrete (Y, Z) fields over paths and grid times.
struct ProcessPair {
    Array3 Y;  // paths x (steps+1) x n
    Array4 Z;  // paths x steps x n x d
    std::uint64_t bundle_seed = 0;

    std::size_t paths() const { return Y.dim0(); }
    std::size_t steps() const { return Z.dim1(); }
    std::size_t components() const { return Y.dim2(); }
};

inline ProcessPair zero_pair(std::size_t paths, std::size_t steps, std::size_t n,
                             std::size_t d, std::uint64_t seed = 0) {
    ProcessPair p;
    p.Y = Array3(paths, steps + 1, n);
    p.Z = Array4(paths, steps, n, d);
    p.bundle_seed = seed;
    return p;
}

struct IterationStat {
    double dY_sup = 0.0;
    double dZ_bmo_sq = 0.0;
    double combined = 0.0;
    double ratio = 0.0;  // combined[j] / combined[j-1], meaningful from j = 2
};

struct FixedPointReport {
    std::vector<IterationStat> iterations;
    bool converged = false;
    double tol = 0.0;
    // a-priori bound compliance on the final pair
    double y_sup = 0.0;
    double z_bmo_sq = 0.0;
    double bound_A = 0.0;
    double bound_B_sq = 0.0;
    bool y_sup_ok = false;
    bool z_bmo_ok = false;
    bool eta_satisfied = false;
    double eta = 0.0;
    double mc_se = 0.0;
    std::vector<double> y0;
    std::vector<double> y0_se;
    std::string note;
};

/// Non-convergence carrying the full iteration report.
struct PicardError : Error {
    PicardError(const std::string& msg, FixedPointReport rep)
        : Error(msg, ExitCode::solver_failure), report(std::move(rep)) {}
    FixedPointReport report;
};

/// Hooks that generalize the map to its path-dependent variants. y_field
/// builds the per-component generator y argument from the frozen iterate
/// (identity when absent); extra_features appends regression feature columns.
struct PicardHooks {
    std::function<Array3(int, const Array3&)> y_field;
    std::function<Array3(int, const Array3&)> extra_features;
};

/// One sweep of the triangular map: component 1 from the frozen pair alone,
/// component i >= 2 additionally consuming the control rows computed earlier
/// in the same sweep.
inline ProcessPair picard_map(const ProblemSpec& spec, const BundleView& view,
                              const ProcessPair& input, const Array2& terminal,
                              const BasisSpec& basis,
                              Backend backend = Backend::colehopf,
                              const PicardHooks& hooks = {},
                              std::vector<ScalarDiagnostics>* diagnostics = nullptr,
                              const ScalarOptions& scalar_options = {}) {
    const std::size_t M = view.paths();
    const std::size_t N = view.steps();
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    if (input.Y.dim0() != M || input.Y.dim1() != N + 1 || input.Y.dim2() != n ||
        input.Z.dim0() != M || input.Z.dim1() != N || input.Z.dim2() != n ||
        input.Z.dim3() != d)
        throw Error("picard_map: input shape mismatch");
    if (terminal.rows() != M || terminal.cols() != n)
        throw Error("picard_map: terminal shape mismatch");

    ProcessPair out = zero_pair(M, N, n, d, input.bundle_seed);
    if (diagnostics) diagnostics->clear();

    // the positivity floor budget comes from the samples actually pasted in,
    // which on inner stitching intervals can exceed the descriptor bound
    double xi_bound = 0.0;
    for (std::size_t p = 0; p < terminal.size(); ++p)
        xi_bound = std::max(xi_bound, std::fabs(terminal.data()[p]));

    std::vector<double> xi(M);
    for (int i = 1; i <= spec.n; ++i) {
        const std::size_t ci = static_cast<std::size_t>(i - 1);
        for (std::size_t m = 0; m < M; ++m) xi[m] = terminal(m, ci);

        Array3 y_storage;
        const Array3* y_ptr = &input.Y;
        if (hooks.y_field) {
            y_storage = hooks.y_field(i, input.Y);
            y_ptr = &y_storage;
        }
        Array3 extras;
        FeatureContext ctx;
        if (hooks.extra_features) {
            extras = hooks.extra_features(i, input.Y);
            if (extras.size() > 0) ctx.extras = &extras;
        }

        FrozenInputs frozen{y_ptr, &input.Z, &out.Z};
        ScalarSolution sol;
        try {
            sol = backend == Backend::colehopf
                      ? solve_scalar_colehopf(spec, i, frozen, view, basis, xi,
                                              xi_bound, ctx, scalar_options)
                      : solve_scalar_euler(spec, i, frozen, view, basis, xi, xi_bound,
                                           ctx, scalar_options);
        } catch (const Error& e) {
            throw Error("component " + std::to_string(i) + ": " + e.what(),
                        e.exit_code);
        }

        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t k = 0; k <= N; ++k) out.Y(m, k, ci) = sol.Y(m, k);
            for (std::size_t k = 0; k < N; ++k)
                for (std::size_t j = 0; j < d; ++j) out.Z(m, k, ci, j) = sol.Z(m, k, j);
        }
        if (diagnostics) diagnostics->push_back(sol.diagnostics);
    }
    return out;
}

struct DistanceParts {
    double dY_sup = 0.0;
    double dZ_bmo_sq = 0.0;
    double combined = 0.0;  // dY_sup^2 + dZ_bmo_sq
};

/// Squared iteration distance: sup-norm of the Y difference plus the BMO
/// estimate of the Z difference.
inline DistanceParts distance(const ProcessPair& a, const ProcessPair& b,
                              const BundleView& view, const BasisSpec& basis) {
    if (a.Y.size() != b.Y.size() || a.Z.size() != b.Z.size())
        throw Error("distance: shape mismatch");
    DistanceParts out;
    for (std::size_t p = 0; p < a.Y.size(); ++p)
        out.dY_sup = std::max(out.dY_sup, std::fabs(a.Y.data()[p] - b.Y.data()[p]));
    Array4 dz(a.Z.dim0(), a.Z.dim1(), a.Z.dim2(), a.Z.dim3());
    for (std::size_t p = 0; p < a.Z.size(); ++p)
        dz.data()[p] = a.Z.data()[p] - b.Z.data()[p];
    out.dZ_bmo_sq = bmo_norm_estimate(dz, view, basis).value;
    out.combined = out.dY_sup * out.dY_sup + out.dZ_bmo_sq;
    return out;
}

struct PicardOutcome {
    ProcessPair pair;
    FixedPointReport report;
};

/// Iterates the map from the zero pair until the combined distance falls
/// under tol. Non-convergence at max_iter throws a PicardError carrying the
/// report; a horizon above eta only flags eta_satisfied = false.
inline PicardOutcome run_picard(const ProblemSpec& spec, const BundleView& view,
                                const Array2& terminal, const BasisSpec& basis,
                                double tol, int max_iter,
                                const ConstantProviders& providers,
                                Backend backend = Backend::colehopf,
                                const PicardHooks& hooks = {}) {
    if (!(tol > 0.0)) throw Error("run_picard: tol must be positive");
    if (max_iter < 1) throw Error("run_picard: max_iter must be >= 1");
    const std::size_t M = view.paths();
    const std::size_t N = view.steps();
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);

    PicardOutcome out;
    out.report.tol = tol;
    ProcessPair current = zero_pair(M, N, n, d, view.bundle->seed);
    std::vector<ScalarDiagnostics> diag;
    ScalarOptions scalar_options;
    scalar_options.compute_bmo = false;

    for (int it = 1; it <= max_iter; ++it) {
        ProcessPair next = picard_map(spec, view, current, terminal, basis, backend,
                                      hooks, &diag, scalar_options);
        const DistanceParts dist = distance(next, current, view, basis);
        IterationStat stat;
        stat.dY_sup = dist.dY_sup;
        stat.dZ_bmo_sq = dist.dZ_bmo_sq;
        stat.combined = dist.combined;
        if (out.report.iterations.size() >= 1) {
            const double prev = out.report.iterations.back().combined;
            stat.ratio = prev > 0.0 ? dist.combined / prev : 0.0;
        }
        out.report.iterations.push_back(stat);
        current = std::move(next);
        if (dist.combined <= tol) {
            out.report.converged = true;
            break;
        }
    }

    // a-priori bound compliance and the horizon flag
    const LocalConstants lc = local_constants(spec, providers);
    out.report.bound_A = lc.A;
    out.report.bound_B_sq = lc.B * lc.B;
    out.report.eta = lc.eta;
    const double interval = view.time(N) - view.time(0);
    out.report.eta_satisfied = interval <= lc.eta;

    double y_sup = 0.0;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k <= N; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = current.Y(m, k, i);
                s += v * v;
            }
            y_sup = std::max(y_sup, std::sqrt(s));
        }
    out.report.y_sup = y_sup;
    out.report.z_bmo_sq = bmo_norm_estimate(current.Z, view, basis).value;
    double mc_se = 0.0;
    out.report.y0.clear();
    out.report.y0_se.clear();
    for (const auto& dg : diag) {
        out.report.y0.push_back(dg.y0_mean);
        out.report.y0_se.push_back(dg.y0_se);
        mc_se = std::max(mc_se, dg.y0_se);
    }
    out.report.mc_se = mc_se;
    const double slack = 3.0 * mc_se + 1e-12;
    out.report.y_sup_ok = y_sup <= lc.A + slack;
    out.report.z_bmo_ok = out.report.z_bmo_sq <= lc.B * lc.B + slack;

    if (!out.report.converged)
        throw PicardError("run_picard: no convergence after " +
                              std::to_string(max_iter) + " iterations (last combined " +
                              std::to_string(out.report.iterations.back().combined) +
                              ", tol " + std::to_string(tol) + ")",
                          out.report);
    out.pair = std::move(current);
    return out;
}

/// Default iteration tolerance.
inline double default_picard_tol(const ProblemSpec& spec) {
    return 1e-4 * (1.0 + spec.terminal_bound());
}

/// Top-level solve from a terminal descriptor. The reported standard errors
/// are the maximum of the one-shot payoff error and a replicate estimate from
/// `se_replicates` independent sub-runs at M/R paths; the replicates see the
/// control-field regression noise that the payoff error alone cannot.
inline PicardOutcome run_picard(const ProblemSpec& spec, const BrownianBundle& bundle,
                                const BasisSpec& basis, double tol, int max_iter,
                                const ConstantProviders& providers,
                                Backend backend = Backend::colehopf,
                                const PicardHooks& hooks = {}, int se_replicates = 6) {
    const Array2 terminal = evaluate_terminal(spec, bundle);
    PicardOutcome out = run_picard(spec, BundleView(bundle), terminal, basis, tol,
                                   max_iter, providers, backend, hooks);

    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t sub_paths =
        se_replicates > 1 ? bundle.paths / static_cast<std::size_t>(se_replicates) : 0;
    if (se_replicates > 1 && sub_paths >= 500) {
        std::vector<std::vector<double>> y0_samples(n);
        for (int r = 0; r < se_replicates; ++r) {
            const std::uint64_t sub_seed =
                rng::counter_hash(bundle.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(r));
            try {
                const BrownianBundle sub =
                    simulate_brownian(bundle.grid, sub_paths, bundle.dim, sub_seed);
                const Array2 sub_terminal = evaluate_terminal(spec, sub);
                PicardOutcome rep = run_picard(spec, BundleView(sub), sub_terminal,
                                               basis, tol, max_iter, providers, backend,
                                               hooks);
                for (std::size_t i = 0; i < n; ++i)
                    y0_samples[i].push_back(rep.report.y0[i]);
            } catch (const Error&) {
                // a failed replicate only degrades the error estimate
            }
        }
        double mc_se = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = y0_samples[i];
            if (s.size() >= 2) {
                double mean = 0.0;
                for (double v : s) mean += v;
                mean /= static_cast<double>(s.size());
                double var = 0.0;
                for (double v : s) var += (v - mean) * (v - mean);
                var /= static_cast<double>(s.size() - 1);
                // sub-runs carry R times the full-run variance
                const double rep_se = std::sqrt(var / static_cast<double>(s.size()));
                out.report.y0_se[i] = std::max(out.report.y0_se[i], rep_se);
            }
            mc_se = std::max(mc_se, out.report.y0_se[i]);
        }
        out.report.mc_se = mc_se;
        const double slack = 3.0 * mc_se + 1e-12;
        out.report.y_sup_ok = out.report.y_sup <= out.report.bound_A + slack;
        out.report.z_bmo_ok = out.report.z_bmo_sq <= out.report.bound_B_sq + slack;
    }
    return out;
}

}  // namespace tqbsde
