#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tqbsde/constants.hpp"
#include "tqbsde/errors.hpp"
#include "tqbsde/fixedpoint.hpp"
#include "tqbsde/global_solver.hpp"

namespace tqbsde {

enum class FunctionalKind {
    delayed_value,
    running_max,
    moving_average,
    cumulative_integral,
};

inline const char* functional_kind_name(FunctionalKind k) {
    switch (k) {
        case FunctionalKind::delayed_value: return "delayed_value";
        case FunctionalKind::running_max: return "running_max";
        case FunctionalKind::moving_average: return "moving_average";
        case FunctionalKind::cumulative_integral: return "cumulative_integral";
    }
    return "?";
}

/// Nonanticipative window functional of the value path. Window kinds read the
/// path only on [(t - epsilon)+, t]; epsilon = 0 makes delayed_value the
/// identity on grid points.
struct PathFunctional {
    FunctionalKind kind = FunctionalKind::delayed_value;
    double epsilon = 0.0;

    static PathFunctional delayed_value(double eps) {
        return {FunctionalKind::delayed_value, eps};
    }
    static PathFunctional running_max(double eps) {
        return {FunctionalKind::running_max, eps};
    }
    static PathFunctional moving_average(double eps) {
        return {FunctionalKind::moving_average, eps};
    }
    static PathFunctional cumulative_integral(double eps) {
        return {FunctionalKind::cumulative_integral, eps};
    }
};

namespace detail {

/// Largest grid index j with t_j <= (t_k - eps)+, i.e. the window start
/// snapped down to the grid.
inline std::size_t window_start(const std::vector<double>& times, std::size_t k,
                                double eps) {
    const double target = std::max(times[k] - eps, times.front());
    // scan down from k; windows are short relative to the grid in practice
    std::size_t j = k;
    while (j > 0 && times[j] > target + 1e-14 * (1.0 + std::fabs(target))) --j;
    return j;
}

}  // namespace detail

/// Evaluates the functional at grid index k for every path, writing a
/// paths x n block.
inline void evaluate_functional(const PathFunctional& g,
                                const std::vector<double>& times, const Array3& y,
                                std::size_t k, Array2& out) {
    const std::size_t M = y.dim0();
    const std::size_t n = y.dim2();
    if (out.rows() != M || out.cols() != n) out = Array2(M, n);
    const std::size_t j0 = detail::window_start(times, k, g.epsilon);

    switch (g.kind) {
        case FunctionalKind::delayed_value: {
            const std::size_t j = g.epsilon == 0.0 ? k : j0;
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t i = 0; i < n; ++i) out(m, i) = y(m, j, i);
            return;
        }
        case FunctionalKind::running_max: {
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t i = 0; i < n; ++i) {
                    double mx = y(m, j0, i);
                    for (std::size_t j = j0 + 1; j <= k; ++j)
                        mx = std::max(mx, y(m, j, i));
                    out(m, i) = mx;
                }
            return;
        }
        case FunctionalKind::moving_average: {
            // left-endpoint Riemann sum divided by the realized window length;
            // a degenerate window falls back to the instantaneous value
            const double len = times[k] - times[j0];
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t i = 0; i < n; ++i) {
                    if (len <= 0.0) {
                        out(m, i) = y(m, k, i);
                        continue;
                    }
                    double s = 0.0;
                    for (std::size_t j = j0; j < k; ++j)
                        s += y(m, j, i) * (times[j + 1] - times[j]);
                    out(m, i) = s / len;
                }
            return;
        }
        case FunctionalKind::cumulative_integral: {
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t j = j0; j < k; ++j)
                        s += y(m, j, i) * (times[j + 1] - times[j]);
                    out(m, i) = s;
                }
            return;
        }
    }
}

/// All grid indices at once into a paths x (steps+1) x n field.
inline Array3 evaluate_functional_field(const PathFunctional& g,
                                        const std::vector<double>& times,
                                        const Array3& y) {
    const std::size_t M = y.dim0();
    const std::size_t K = y.dim1();
    const std::size_t n = y.dim2();
    Array3 field(M, K, n);
    Array2 buf(M, n);
    for (std::size_t k = 0; k < K; ++k) {
        evaluate_functional(g, times, y, k, buf);
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t i = 0; i < n; ++i) field(m, k, i) = buf(m, i);
    }
    return field;
}

/// Generic functional signature for validation probes: (times, path matrix
/// (steps+1) x n, index k) -> n values.
using RawFunctional = std::function<std::vector<double>(
    const std::vector<double>&, const Array2&, std::size_t)>;

inline RawFunctional as_raw_functional(const PathFunctional& g) {
    return [g](const std::vector<double>& times, const Array2& path, std::size_t k) {
        Array3 y(1, path.rows(), path.cols());
        for (std::size_t j = 0; j < path.rows(); ++j)
            for (std::size_t i = 0; i < path.cols(); ++i) y(0, j, i) = path(j, i);
        Array2 out;
        evaluate_functional(g, times, y, k, out);
        return std::vector<double>(out.row(0).begin(), out.row(0).end());
    };
}

/// Probe check of the windowed-functional contract: vanishing at the zero
/// path, nonanticipativity under future perturbations, and the 1-Lipschitz
/// bound in the (windowed) sup norm. Norms are taken coordinatewise (max
/// norm), under which all four registry kinds are exactly 1-Lipschitz.
inline ValidationCheck validate_functional_fn(const RawFunctional& fn,
                                              const std::vector<double>& times,
                                              std::size_t n, double epsilon,
                                              bool windowed, long probes,
                                              std::uint64_t seed,
                                              double tolerance = 1e-12) {
    const std::size_t K = times.size();
    ValidationCheck check;
    check.assumption_id = windowed ? "A6" : "A5";
    check.probes_run = probes;
    double worst = 0.0;

    // zero path maps to zero
    {
        Array2 zero(K, n, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            auto v = fn(times, zero, k);
            for (double x : v) worst = std::max(worst, std::fabs(x));
        }
    }

    for (long p = 0; p < probes; ++p) {
        const auto up = static_cast<std::uint64_t>(p);
        Array2 path(K, n), other(K, n);
        // random-walk style probe paths with occasional large jumps
        for (std::size_t i = 0; i < n; ++i) {
            double a = rng::normal(seed, up, 0, i), b = rng::normal(seed, up, 1, i);
            for (std::size_t k = 0; k < K; ++k) {
                a += 0.4 * rng::normal(seed, up, 10 + k, i);
                b += 0.4 * rng::normal(seed, up, 900 + k, i);
                path(k, i) = a;
                other(k, i) = b;
            }
        }
        const std::size_t k = static_cast<std::size_t>(
            rng::uniform(seed, up, 2, 0) * static_cast<double>(K));
        const std::size_t kk = std::min(k, K - 1);

        const auto base = fn(times, path, kk);

        // nonanticipativity: perturb strictly after t_k
        if (kk + 1 < K) {
            Array2 future = path;
            for (std::size_t j = kk + 1; j < K; ++j)
                for (std::size_t i = 0; i < n; ++i)
                    future(j, i) += 1.0 + rng::uniform(seed, up, 3, j * n + i);
            const auto shifted = fn(times, future, kk);
            for (std::size_t i = 0; i < n; ++i)
                worst = std::max(worst, std::fabs(shifted[i] - base[i]));
        }

        // Lipschitz bound against the (windowed) sup of the path difference
        const auto alt = fn(times, other, kk);
        const std::size_t j0 = windowed ? detail::window_start(times, kk, epsilon) : 0;
        double sup_diff = 0.0;
        for (std::size_t j = j0; j <= kk; ++j)
            for (std::size_t i = 0; i < n; ++i)
                sup_diff = std::max(sup_diff, std::fabs(path(j, i) - other(j, i)));
        double g_diff = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            g_diff = std::max(g_diff, std::fabs(base[i] - alt[i]));
        worst = std::max(worst, g_diff - sup_diff);
    }

    check.worst_violation = std::max(worst, 0.0);
    check.pass = check.worst_violation <= tolerance;
    return check;
}

inline ValidationCheck validate_functional(const PathFunctional& g,
                                           const std::vector<double>& times,
                                           std::size_t n, long probes,
                                           std::uint64_t seed,
                                           double tolerance = 1e-12) {
    return validate_functional_fn(as_raw_functional(g), times, n, g.epsilon,
                                  /*windowed=*/true, probes, seed, tolerance);
}

struct PathdepOutcome {
    ProcessPair pair;
    FixedPointReport report;
};

namespace detail {

/// Hooks realizing the path-dependent map: the generator y argument becomes
/// G_i of the frozen iterate, and (for epsilon > 0 on components whose l or h
/// actually reads y) the functional values join the regression features.
inline PicardHooks pathdep_hooks(const ProblemSpec& spec,
                                 const std::vector<PathFunctional>& functionals,
                                 const std::vector<double>& times) {
    PicardHooks hooks;
    hooks.y_field = [&spec, functionals, times](int i, const Array3& y) {
        return evaluate_functional_field(functionals[static_cast<std::size_t>(i - 1)],
                                         times, y);
    };
    hooks.extra_features = [&spec, functionals, times](int i, const Array3& y) {
        const auto& g = functionals[static_cast<std::size_t>(i - 1)];
        const bool reads_y = spec.l_parts[static_cast<std::size_t>(i - 1)].reads_y() ||
                             spec.h_parts[static_cast<std::size_t>(i - 1)].reads_y();
        if (g.epsilon <= 0.0 || !reads_y) return Array3();
        return evaluate_functional_field(g, times, y);
    };
    return hooks;
}

}  // namespace detail

/// Local solve of the path-dependent system: the fixed-point map with every
/// generator's y argument replaced by G_i of the frozen iterate. Reuses the
/// memoryless constants for the bound checks (flagged in the report note).
inline PathdepOutcome solve_pathdep_local(const ProblemSpec& spec,
                                          const std::vector<PathFunctional>& functionals,
                                          const BrownianBundle& bundle,
                                          const BasisSpec& basis, double tol,
                                          int max_iter,
                                          const ConstantProviders& providers,
                                          Backend backend = Backend::colehopf) {
    if (functionals.size() != static_cast<std::size_t>(spec.n))
        throw Error("solve_pathdep_local: one functional per component required");
    PicardHooks hooks = detail::pathdep_hooks(spec, functionals, bundle.grid.times);
    PicardOutcome res =
        run_picard(spec, bundle, basis, tol, max_iter, providers, backend, hooks);
    res.report.note = "bound constants reused from the memoryless case";
    return {std::move(res.pair), std::move(res.report)};
}

struct DelayReport {
    std::vector<double> outer_distances;
    std::vector<double> outer_ratios;
    bool converged = false;
    double epsilon = 0.0;
    double epsilon0 = 0.0;
    double gamma = 0.0;  // 1/epsilon, diagnostic only
    GlobalReport last_inner;
};

struct DelayOutcome {
    ProcessPair pair;
    BrownianBundle bundle;
    DelayReport report;
};

/// Delay solver: outer iteration on the Y path. Each pass freezes the
/// windowed functional of the previous Y field, solves the resulting
/// y-decoupled system globally, and measures the sup-norm change. Requires a
/// window epsilon <= epsilon0, no k parts (the delayed equation carries
/// none), bounded l and nonpositive h.
inline DelayOutcome solve_delay(const ProblemSpec& spec,
                                const std::vector<PathFunctional>& functionals,
                                double epsilon, std::size_t paths,
                                std::size_t steps_per_interval, std::uint64_t seed,
                                const BasisSpec& basis, double tol, int max_iter,
                                double outer_tol, int outer_max_iter,
                                const ConstantProviders& providers,
                                Backend backend = Backend::colehopf) {
    if (functionals.size() != static_cast<std::size_t>(spec.n))
        throw Error("solve_delay: one functional per component required");
    for (const auto& g : spec.k_parts)
        if (g.family != GeneratorFamily::zero)
            throw ValidationError("solve_delay: the delayed equation carries no k parts");

    const double eps0 = epsilon0(spec, providers);
    if (!(epsilon > 0.0) || epsilon > eps0) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "solve_delay: epsilon = %.9g must lie in (0, epsilon0 = %.9g]",
                      epsilon, eps0);
        throw ValidationError(msg);
    }
    // (A7)/(A8)-style hypotheses: bounded l, nonpositive h
    const GlobalHypothesesReport hyp = check_global_hypotheses(spec);
    if (!hyp.pass) {
        std::string msg = "solve_delay: hypotheses violated:";
        for (const auto& v : hyp.violations) msg += " " + v + ";";
        throw ValidationError(msg);
    }

    DelayOutcome out;
    out.report.epsilon = epsilon;
    out.report.epsilon0 = eps0;
    out.report.gamma = 1.0 / epsilon;

    plan_global(spec, providers);  // fail fast on degenerate plans
    const std::size_t n = static_cast<std::size_t>(spec.n);

    Array3 y_field;  // frozen outer iterate over the full grid
    bool have_field = false;
    double prev_dist = 0.0;

    for (int outer = 1; outer <= outer_max_iter; ++outer) {
        // functional of the frozen iterate, per component, over the full grid
        std::shared_ptr<std::vector<Array3>> g_fields;
        if (have_field) {
            g_fields = std::make_shared<std::vector<Array3>>();
            g_fields->reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                PathFunctional g = functionals[i];
                g.epsilon = epsilon;
                g_fields->push_back(
                    evaluate_functional_field(g, out.bundle.grid.times, y_field));
            }
        }
        const ProblemSpec* spec_ptr = &spec;
        HookFactory factory = [g_fields, spec_ptr, epsilon](std::size_t step_begin,
                                                            std::size_t steps) {
            PicardHooks hooks;
            if (!g_fields) return hooks;  // first pass: zero field, G(0) = 0
            hooks.y_field = [g_fields, step_begin, steps](int i, const Array3& y) {
                const Array3& full = (*g_fields)[static_cast<std::size_t>(i - 1)];
                Array3 slice(y.dim0(), steps + 1, full.dim2());
                for (std::size_t m = 0; m < y.dim0(); ++m)
                    for (std::size_t k = 0; k <= steps; ++k)
                        for (std::size_t c = 0; c < full.dim2(); ++c)
                            slice(m, k, c) = full(m, step_begin + k, c);
                return slice;
            };
            const bool any_reads_y = [&] {
                for (int i = 1; i <= spec_ptr->n; ++i)
                    if (spec_ptr->l_parts[static_cast<std::size_t>(i - 1)].reads_y() ||
                        spec_ptr->h_parts[static_cast<std::size_t>(i - 1)].reads_y())
                        return true;
                return false;
            }();
            if (epsilon > 0.0 && any_reads_y) hooks.extra_features = hooks.y_field;
            return hooks;
        };

        GlobalOutcome inner = solve_global(spec, paths, steps_per_interval, seed, basis,
                                           tol, max_iter, providers, backend, factory);

        double dist = 0.0;
        if (have_field) {
            for (std::size_t p = 0; p < inner.pair.Y.size(); ++p)
                dist = std::max(dist,
                                std::fabs(inner.pair.Y.data()[p] - y_field.data()[p]));
        } else {
            for (std::size_t p = 0; p < inner.pair.Y.size(); ++p)
                dist = std::max(dist, std::fabs(inner.pair.Y.data()[p]));
        }
        out.report.outer_distances.push_back(dist);
        if (out.report.outer_distances.size() >= 2 && prev_dist > 0.0)
            out.report.outer_ratios.push_back(dist / prev_dist);
        prev_dist = dist;

        y_field = inner.pair.Y;
        have_field = true;
        out.pair = std::move(inner.pair);
        out.bundle = std::move(inner.bundle);
        out.report.last_inner = std::move(inner.report);

        if (dist <= outer_tol) {
            out.report.converged = true;
            return out;
        }
    }
    throw Error("solve_delay: outer iteration did not converge after " +
                std::to_string(outer_max_iter) + " passes (last distance " +
                std::to_string(out.report.outer_distances.back()) + ")");
}

/// Default outer tolerance.
inline double default_outer_tol(const ProblemSpec& spec) {
    return 1e-3 * (1.0 + spec.terminal_bound());
}

}  // namespace tqbsde
