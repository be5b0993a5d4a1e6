#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tqbsde/bmo.hpp"
#include "tqbsde/errors.hpp"
#include "tqbsde/grid_paths.hpp"
#include "tqbsde/model.hpp"
#include "tqbsde/regress.hpp"
#include "tqbsde/tensor.hpp"

namespace tqbsde {

/// Inputs a scalar component solve reads but does not own. y_paths and
/// z_paths are the frozen fixed-point iterate; fresh_z carries the control
/// rows already computed for lower components in the current sweep.
struct FrozenInputs {
    const Array3* y_paths = nullptr;  // paths x (steps+1) x n
    const Array4* z_paths = nullptr;  // paths x steps x n x d
    const Array4* fresh_z = nullptr;  // paths x steps x n x d; rows < i-1 valid
};

struct ScalarDiagnostics {
    double sup_norm = 0.0;
    double bmo_sq = 0.0;
    double min_hat_y = 0.0;
    double y0_mean = 0.0;
    double y0_se = 0.0;
    long floor_hits = 0;
    long nodes = 0;
};

struct ScalarSolution {
    Array2 Y;  // paths x (steps+1)
    Array3 Z;  // paths x steps x d
    ScalarDiagnostics diagnostics;
    // populated only when ScalarOptions::keep_transform_fields is set
    Array2 hat_y;      // paths x (steps+1)
    Array2 h_minus_k;  // paths x steps, the per-node driver remainder
};

struct ScalarOptions {
    bool keep_transform_fields = false;
    bool compute_bmo = true;
    double floor_budget_extra = 5.0;
    double max_floor_fraction = 1e-3;
};

namespace detail {

inline MatView block_view(const Array4& a, std::size_t m, std::size_t k) {
    return MatView{a.block(m, k).data(), a.dim2(), a.dim3()};
}

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double se_of(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mean = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1)) /
           std::sqrt(static_cast<double>(v.size()));
}

}  // namespace detail

/// Exponential-transform backend. Solves the scalar component i with frozen
/// (y, z) fields: lifts the terminal to hatY = exp(xi), steps backward under
/// the drift-adjusted measure given by the stochastic exponential of
/// l_i(t, y, Z), folding exp((h_i - k_i) dt) into each conditional
/// expectation, and recovers Y = ln hatY. The control comes from a centered
/// martingale-increment regression on relative increments, whose conditional
/// mean is Z itself with O(1) rather than O(1/dt) target variance.
inline ScalarSolution solve_scalar_colehopf(const ProblemSpec& spec, int i,
                                            const FrozenInputs& frozen,
                                            const BundleView& view,
                                            const BasisSpec& basis,
                                            std::span<const double> xi,
                                            double xi_bound,
                                            const FeatureContext& ctx = {},
                                            const ScalarOptions& options = {}) {
    const std::size_t M = view.paths();
    const std::size_t N = view.steps();
    const std::size_t d = static_cast<std::size_t>(spec.d);
    if (i < 1 || i > spec.n) throw Error("solve_scalar: component index out of range");
    if (xi.size() != M) throw Error("solve_scalar: terminal sample count mismatch");
    if (!frozen.y_paths || !frozen.z_paths)
        throw Error("solve_scalar: frozen inputs missing");
    if (i >= 2 && !frozen.fresh_z)
        throw Error("solve_scalar: fresh control rows required for component >= 2");
    const Array4& fresh = frozen.fresh_z ? *frozen.fresh_z : *frozen.z_paths;

    ScalarSolution sol;
    sol.Y = Array2(M, N + 1);
    sol.Z = Array3(M, N, d);
    if (options.keep_transform_fields) {
        sol.hat_y = Array2(M, N + 1);
        sol.h_minus_k = Array2(M, N);
    }

    // drift of the measure change: a_k = l_i(t_k, y_k, Z_k)
    Array3 drift(M, N, d);
    parallel::for_chunks(M, parallel::kDefaultChunk,
                         [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> lv(d);
        for (std::size_t m = begin; m < end; ++m)
            for (std::size_t k = 0; k < N; ++k) {
                evaluate_l(spec, i, view.time(k), frozen.y_paths->slice(m, k),
                           detail::block_view(fresh, m, k), lv);
                for (std::size_t j = 0; j < d; ++j) drift(m, k, j) = lv[j];
            }
    });
    const WeightPaths weights =
        stochastic_exponential(drift, view, "l_" + std::to_string(i));

    std::vector<double> hat_next(M), hat_here(M);
    std::vector<double> g(M);             // (h - k) at the current node
    std::vector<double> grown(M);         // hatY_{k+1} * exp(g dt)
    std::vector<double> targets(M), ztargets(M);
    std::vector<double> abs_g_budget(M, 0.0);
    std::vector<double> g_accum(M, 0.0);  // signed integral of (h - k) per path
    double max_budget = 0.0;

    for (std::size_t m = 0; m < M; ++m) {
        hat_next[m] = std::exp(xi[m]);
        sol.Y(m, N) = xi[m];
        if (options.keep_transform_fields) sol.hat_y(m, N) = hat_next[m];
    }

    long floor_hits = 0;
    double min_hat = hat_next[0];
    for (std::size_t m = 0; m < M; ++m) min_hat = std::min(min_hat, hat_next[m]);

    for (std::size_t kk = N; kk-- > 0;) {
        const double t = view.time(kk);
        const double dt = view.dt(kk);

        parallel::for_chunks(M, parallel::kDefaultChunk,
                             [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t m = begin; m < end; ++m) {
                const auto y_here = frozen.y_paths->slice(m, kk);
                double gv = evaluate_h(spec, i, t, y_here,
                                       detail::block_view(*frozen.z_paths, m, kk));
                if (i >= 2)
                    gv -= evaluate_k(spec, i, t, y_here, detail::block_view(fresh, m, kk));
                g[m] = gv;
                grown[m] = hat_next[m] * std::exp(gv * dt);
                targets[m] = weights.terminal_ratio(m, kk) * grown[m];
                abs_g_budget[m] += std::fabs(gv) * dt;
                g_accum[m] += gv * dt;
            }
        });
        for (std::size_t m = 0; m < M; ++m) max_budget = std::max(max_budget, abs_g_budget[m]);
        const double floor =
            std::exp(-(xi_bound + max_budget + options.floor_budget_extra));

        const Array2 features = gather_features(view, kk, ctx);
        hat_here = fit_predict(features, targets, {}, basis);
        for (std::size_t m = 0; m < M; ++m) {
            if (!(hat_here[m] >= floor)) {
                if (!std::isfinite(hat_here[m]))
                    throw Error("solve_scalar_colehopf: non-finite value at path " +
                                std::to_string(m) + " step " + std::to_string(kk));
                ++floor_hits;
                hat_here[m] = floor;
            }
            min_hat = std::min(min_hat, hat_here[m]);
        }

        // centered martingale-increment regression for each control column,
        // on relative increments so the target's conditional mean is Z itself
        // (a flat function the basis carries with negligible misfit, unlike
        // the ratio of two separately fitted exponential-shaped surfaces)
        for (std::size_t j = 0; j < d; ++j) {
            parallel::for_chunks(M, parallel::kDefaultChunk,
                                 [&](std::size_t, std::size_t begin, std::size_t end) {
                for (std::size_t m = begin; m < end; ++m) {
                    const double dwt = view.dw(m, kk, j) - drift(m, kk, j) * dt;
                    ztargets[m] = weights.terminal_ratio(m, kk) *
                                  (grown[m] - hat_here[m]) * dwt /
                                  (dt * hat_here[m]);
                }
            });
            auto zfit = fit_predict(features, ztargets, {}, basis);
            for (std::size_t m = 0; m < M; ++m) sol.Z(m, kk, j) = zfit[m];
        }

        for (std::size_t m = 0; m < M; ++m) {
            sol.Y(m, kk) = std::log(hat_here[m]);
            if (options.keep_transform_fields) {
                sol.hat_y(m, kk) = hat_here[m];
                sol.h_minus_k(m, kk) = g[m];
            }
        }
        hat_next.swap(hat_here);
    }

    const long nodes = static_cast<long>(M * N);
    if (floor_hits > options.max_floor_fraction * static_cast<double>(nodes))
        throw Error("solve_scalar_colehopf: positivity floor hit on " +
                    std::to_string(floor_hits) + " of " + std::to_string(nodes) +
                    " nodes (component " + std::to_string(i) + ")");

    double sup = 0.0;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k <= N; ++k) sup = std::max(sup, std::fabs(sol.Y(m, k)));
    sol.diagnostics.sup_norm = sup;
    sol.diagnostics.min_hat_y = min_hat;
    sol.diagnostics.floor_hits = floor_hits;
    sol.diagnostics.nodes = nodes;
    // Y at t=0 is the same prediction on every path; its standard error is
    // the CLT error of the one-shot weighted payoff exp(xi + int(h-k)) E_T,
    // computed shift-invariantly in log space. The smoothed k=0 regression
    // targets would understate it.
    double y0_sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) y0_sum += sol.Y(m, 0);
    sol.diagnostics.y0_mean = y0_sum / static_cast<double>(M);
    {
        double shift = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < M; ++m)
            shift = std::max(shift,
                             xi[m] + g_accum[m] + weights.log_values(m, N));
        double s = 0.0, s2 = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            const double r =
                std::exp(xi[m] + g_accum[m] + weights.log_values(m, N) - shift);
            s += r;
            s2 += r * r;
        }
        const double mean = s / static_cast<double>(M);
        const double var =
            std::max(s2 / static_cast<double>(M) - mean * mean, 0.0);
        sol.diagnostics.y0_se =
            mean > 0.0 ? std::sqrt(var / static_cast<double>(M)) / mean : 0.0;
    }
    if (options.compute_bmo) {
        Array4 zw(M, N, 1, d);
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < N; ++k)
                for (std::size_t j = 0; j < d; ++j) zw(m, k, 0, j) = sol.Z(m, k, j);
        sol.diagnostics.bmo_sq = bmo_norm_estimate(zw, view, basis, nullptr, ctx).value;
    }
    return sol;
}

/// Direct explicit backward scheme on the untransformed driver, used as the
/// independent oracle backend: Z from the centered increment regression, then
/// Y_k = E[Y_{k+1} | F_k] + f(t_k, ., Z_k) dt with the same fresh/frozen
/// argument split as the transform backend.
inline ScalarSolution solve_scalar_euler(const ProblemSpec& spec, int i,
                                         const FrozenInputs& frozen,
                                         const BundleView& view,
                                         const BasisSpec& basis,
                                         std::span<const double> xi, double xi_bound,
                                         const FeatureContext& ctx = {},
                                         const ScalarOptions& options = {}) {
    const std::size_t M = view.paths();
    const std::size_t N = view.steps();
    const std::size_t d = static_cast<std::size_t>(spec.d);
    if (i < 1 || i > spec.n) throw Error("solve_scalar: component index out of range");
    if (xi.size() != M) throw Error("solve_scalar: terminal sample count mismatch");
    if (!frozen.y_paths || !frozen.z_paths)
        throw Error("solve_scalar: frozen inputs missing");
    if (i >= 2 && !frozen.fresh_z)
        throw Error("solve_scalar: fresh control rows required for component >= 2");
    const Array4& fresh = frozen.fresh_z ? *frozen.fresh_z : *frozen.z_paths;
    (void)xi_bound;

    ScalarSolution sol;
    sol.Y = Array2(M, N + 1);
    sol.Z = Array3(M, N, d);

    std::vector<double> y_next(M), y_cond(M), ztargets(M);
    std::vector<double> f_accum(M, 0.0);  // integral of the driver per path
    for (std::size_t m = 0; m < M; ++m) {
        y_next[m] = xi[m];
        sol.Y(m, N) = xi[m];
    }

    for (std::size_t kk = N; kk-- > 0;) {
        const double t = view.time(kk);
        const double dt = view.dt(kk);
        const Array2 features = gather_features(view, kk, ctx);
        y_cond = fit_predict(features, y_next, {}, basis);

        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t m = 0; m < M; ++m)
                ztargets[m] = (y_next[m] - y_cond[m]) * view.dw(m, kk, j) / dt;
            auto zfit = fit_predict(features, ztargets, {}, basis);
            for (std::size_t m = 0; m < M; ++m) sol.Z(m, kk, j) = zfit[m];
        }

        parallel::for_chunks(M, parallel::kDefaultChunk,
                             [&](std::size_t, std::size_t begin, std::size_t end) {
            std::vector<double> lv(d);
            for (std::size_t m = begin; m < end; ++m) {
                const auto y_here = frozen.y_paths->slice(m, kk);
                const MatView fresh_view = detail::block_view(fresh, m, kk);
                evaluate_l(spec, i, t, y_here, fresh_view, lv);
                double f = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double zij = sol.Z(m, kk, j);
                    f += 0.5 * zij * zij + zij * lv[j];
                }
                if (i >= 2) f -= evaluate_k(spec, i, t, y_here, fresh_view);
                f += evaluate_h(spec, i, t, y_here,
                                detail::block_view(*frozen.z_paths, m, kk));
                f_accum[m] += f * dt;
                const double v = y_cond[m] + f * dt;
                sol.Y(m, kk) = v;
            }
        });
        for (std::size_t m = 0; m < M; ++m) {
            if (!std::isfinite(sol.Y(m, kk)))
                throw Error("solve_scalar_euler: non-finite value at path " +
                            std::to_string(m) + " step " + std::to_string(kk));
            y_next[m] = sol.Y(m, kk);
        }
    }

    double sup = 0.0, s0 = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        s0 += sol.Y(m, 0);
        for (std::size_t k = 0; k <= N; ++k) sup = std::max(sup, std::fabs(sol.Y(m, k)));
    }
    sol.diagnostics.sup_norm = sup;
    sol.diagnostics.min_hat_y = 1.0;  // no transform in this backend
    sol.diagnostics.nodes = static_cast<long>(M * N);
    sol.diagnostics.y0_mean = s0 / static_cast<double>(M);
    // CLT error of the one-shot payoff xi + int f dt
    std::vector<double> raw(M);
    for (std::size_t m = 0; m < M; ++m) raw[m] = xi[m] + f_accum[m];
    sol.diagnostics.y0_se = detail::se_of(raw);
    if (options.compute_bmo) {
        Array4 zw(M, N, 1, d);
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < N; ++k)
                for (std::size_t j = 0; j < d; ++j) zw(m, k, 0, j) = sol.Z(m, k, j);
        sol.diagnostics.bmo_sq = bmo_norm_estimate(zw, view, basis, nullptr, ctx).value;
    }
    return sol;
}

}  // namespace tqbsde
