#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tqbsde/errors.hpp"
#include "tqbsde/grid_paths.hpp"
#include "tqbsde/parallel.hpp"
#include "tqbsde/regress.hpp"
#include "tqbsde/tensor.hpp"

namespace tqbsde {

/// u(x) = e^x - 1 - x with derivatives. u'' - u' is exactly 1 in floating
/// point because u' is computed literally as exp(x) - 1.
struct UTransform {
    double u;
    double du;
    double d2u;
};

inline UTransform u_transform(double x) {
    const double ex = std::exp(x);
    if (!std::isfinite(ex)) throw Error("u_transform: overflow at x = " + std::to_string(x));
    return {std::expm1(x) - x, ex - 1.0, ex};
}

/// Stochastic exponential values per path and grid time, kept in log space so
/// ratios between times never overflow.
struct WeightPaths {
    Array2 log_values;  // paths x (steps+1), log E_{t_k}; log E_0 = 0
    std::string drift_label;

    std::size_t paths() const { return log_values.rows(); }
    std::size_t knots() const { return log_values.cols(); }
    double value(std::size_t m, std::size_t k) const {
        return std::exp(log_values(m, k));
    }
    /// E_T / E_{t_k} for path m.
    double terminal_ratio(std::size_t m, std::size_t k) const {
        return std::exp(log_values(m, knots() - 1) - log_values(m, k));
    }
};

/// E_{t_{k+1}} = E_{t_k} * exp(a_k . dW_k - 0.5 |a_k|^2 dt_k), E_0 = 1.
inline WeightPaths stochastic_exponential(const Array3& a_paths, const BundleView& view,
                                          std::string drift_label = {}) {
    const std::size_t M = view.paths();
    const std::size_t N = view.steps();
    const std::size_t d = view.dim();
    if (a_paths.dim0() != M || a_paths.dim1() != N || a_paths.dim2() != d)
        throw Error("stochastic_exponential: drift shape mismatch");
    WeightPaths w;
    w.drift_label = std::move(drift_label);
    w.log_values = Array2(M, N + 1);

    std::atomic<std::uint64_t> first_bad{UINT64_MAX};
    parallel::for_chunks(M, parallel::kDefaultChunk,
                         [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            double acc = 0.0;
            w.log_values(m, 0) = 0.0;
            for (std::size_t k = 0; k < N; ++k) {
                const double dt = view.dt(k);
                double dot = 0.0, sq = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double a = a_paths(m, k, j);
                    dot += a * view.dw(m, k, j);
                    sq += a * a;
                }
                acc += dot - 0.5 * sq * dt;
                if (!std::isfinite(acc) || std::fabs(acc) > 690.0) {
                    std::uint64_t packed = (static_cast<std::uint64_t>(m) << 20) | k;
                    std::uint64_t expected = UINT64_MAX;
                    first_bad.compare_exchange_strong(expected, packed);
                    acc = 0.0;
                }
                w.log_values(m, k + 1) = acc;
            }
        }
    });
    if (first_bad.load() != UINT64_MAX) {
        const std::uint64_t packed = first_bad.load();
        throw Error("stochastic_exponential: weight overflow on path " +
                    std::to_string(packed >> 20) + " step " +
                    std::to_string(packed & 0xfffffULL));
    }
    return w;
}

inline WeightPaths stochastic_exponential(const Array3& a_paths,
                                          const BrownianBundle& bundle,
                                          std::string drift_label = {}) {
    return stochastic_exponential(a_paths, BundleView(bundle), std::move(drift_label));
}

/// Regression features at grid index k: Brownian coordinates W_{t_k}, plus
/// any extra per-path columns (path-functional values).
struct FeatureContext {
    const Array3* extras = nullptr;  // paths x (steps+1) x q, optional
};

inline Array2 gather_features(const BundleView& view, std::size_t k,
                              const FeatureContext& ctx = {}) {
    const std::size_t M = view.paths();
    const std::size_t d = view.dim();
    const std::size_t q = ctx.extras ? ctx.extras->dim2() : 0;
    Array2 f(M, d + q);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t j = 0; j < d; ++j) f(m, j) = view.w(m, k, j);
        for (std::size_t j = 0; j < q; ++j) f(m, d + j) = (*ctx.extras)(m, k, j);
    }
    return f;
}

/// Estimates E^Q[X | F_{t_k}] = E[(E_T / E_{t_k}) X | F_{t_k}] by regressing
/// the ratio-weighted payoff on time-t_k features. k = steps returns X as is.
inline std::vector<double> conditional_weighted(std::span<const double> x,
                                                const WeightPaths& weights,
                                                std::size_t k, const BundleView& view,
                                                const BasisSpec& basis,
                                                const FeatureContext& ctx = {}) {
    const std::size_t M = view.paths();
    if (x.size() != M) throw Error("conditional_weighted: payoff length mismatch");
    if (k == view.steps()) return {x.begin(), x.end()};
    std::vector<double> targets(M);
    for (std::size_t m = 0; m < M; ++m) targets[m] = weights.terminal_ratio(m, k) * x[m];
    const Array2 features = gather_features(view, k, ctx);
    return fit_predict(features, targets, {}, basis);
}

inline std::vector<double> conditional_weighted(std::span<const double> x,
                                                const WeightPaths& weights,
                                                std::size_t k,
                                                const BrownianBundle& bundle,
                                                const BasisSpec& basis) {
    return conditional_weighted(x, weights, k, BundleView(bundle), basis);
}

enum class BmoMethod { regression, deterministic_sum };

/// Discrete BMO(2)-norm estimate of the squared control integral. The sup
/// over stopping times is restricted to grid times; per-time values are the
/// per-path maxima of regression predictions (a lower-biased estimator).
struct BmoEstimate {
    double value = 0.0;
    std::vector<double> per_time_profile;
    BmoMethod method = BmoMethod::regression;
};

/// Regresses tail sums sum_{j >= k} |Z_j|^2 dt_j on time-t_k features.
/// Optional weights make the estimate one under the weighted measure.
inline BmoEstimate bmo_norm_estimate(const Array4& z, const BundleView& view,
                                     const BasisSpec& basis,
                                     const WeightPaths* weights = nullptr,
                                     const FeatureContext& ctx = {}) {
    const std::size_t M = view.paths();
    const std::size_t N = view.steps();
    if (z.dim0() != M || z.dim1() != N || z.dim3() != view.dim())
        throw Error("bmo_norm_estimate: control shape mismatch");

    BmoEstimate est;
    est.per_time_profile.assign(N + 1, 0.0);
    std::vector<double> tail(M, 0.0);
    std::vector<double> targets(M);
    const std::size_t block = z.dim2() * z.dim3();

    for (std::size_t kk = N; kk-- > 0;) {
        const double dt = view.dt(kk);
        parallel::for_chunks(M, parallel::kDefaultChunk,
                             [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t m = begin; m < end; ++m) {
                auto zb = z.block(m, kk);
                double s = 0.0;
                for (std::size_t p = 0; p < block; ++p) s += zb[p] * zb[p];
                tail[m] += s * dt;
            }
        });
        if (weights) {
            for (std::size_t m = 0; m < M; ++m)
                targets[m] = weights->terminal_ratio(m, kk) * tail[m];
        } else {
            targets = tail;
        }
        const Array2 features = gather_features(view, kk, ctx);
        auto pred = fit_predict(features, targets, {}, basis);
        double mx = 0.0;
        for (double v : pred) mx = std::max(mx, v);
        est.per_time_profile[kk] = mx;
    }
    for (double v : est.per_time_profile) est.value = std::max(est.value, v);
    return est;
}

inline BmoEstimate bmo_norm_estimate(const Array4& z, const BrownianBundle& bundle,
                                     const BasisSpec& basis) {
    return bmo_norm_estimate(z, BundleView(bundle), basis);
}

/// Closed-form profile for a deterministic integrand g(t): max_k of the tail
/// sums. Used as the oracle counterpart of the regression estimator.
inline BmoEstimate bmo_norm_deterministic(const TimeGrid& grid,
                                          const std::function<double(double)>& g) {
    const std::size_t N = grid.steps();
    BmoEstimate est;
    est.method = BmoMethod::deterministic_sum;
    est.per_time_profile.assign(N + 1, 0.0);
    double tail = 0.0;
    for (std::size_t kk = N; kk-- > 0;) {
        const double gv = g(grid.times[kk]);
        tail += gv * gv * grid.dt(kk);
        est.per_time_profile[kk] = tail;
    }
    for (double v : est.per_time_profile) est.value = std::max(est.value, v);
    return est;
}

/// Pluggable Kazamaki / energy constants. The shipped default is an explicit
/// surrogate satisfying the required monotonicity and range constraints; the
/// true constants are not reconstructible here, so any provider obeying the
/// invariants may be swapped in per run.
struct ConstantProviders {
    std::function<double(double)> delta_fn;  // gamma -> delta(gamma) in (0, 1]
    std::function<double(double)> Delta_fn;  // gamma -> Delta(gamma) in [1, inf)
    std::function<double(double)> L_fn;      // p -> L_p >= 1
    std::string name = "surrogate";

    double delta(double gamma) const {
        const double v = delta_fn(gamma);
        if (!(v > 0.0 && v <= 1.0))
            throw ProviderError("delta(" + std::to_string(gamma) +
                                ") outside (0, 1]: " + std::to_string(v));
        return v;
    }
    double Delta(double gamma) const {
        const double v = Delta_fn(gamma);
        if (!(v >= 1.0))
            throw ProviderError("Delta(" + std::to_string(gamma) +
                                ") below 1: " + std::to_string(v));
        return v;
    }
    double L(double p) const {
        const double v = L_fn(p);
        if (!(v >= 1.0))
            throw ProviderError("L_" + std::to_string(p) + " below 1: " + std::to_string(v));
        return v;
    }
};

inline ConstantProviders surrogate_providers() {
    // delta(g) = exp(-g(g+2)), Delta(g) = exp(+g(g+2)), L_p = 2 (p!)^(1/p),
    // clamped to the representable range so the invariants survive extreme
    // arguments.
    ConstantProviders p;
    p.name = "surrogate";
    p.delta_fn = [](double g) {
        return std::clamp(std::exp(-g * (g + 2.0)), 1e-300, 1.0);
    };
    p.Delta_fn = [](double g) {
        return std::clamp(std::exp(g * (g + 2.0)), 1.0, 1e300);
    };
    p.L_fn = [](double q) { return 2.0 * std::pow(std::tgamma(q + 1.0), 1.0 / q); };
    return p;
}

namespace detail {

struct InterpTable {
    std::vector<double> xs, ys;

    double eval(double x) const {
        if (xs.empty()) throw ProviderError("empty provider table");
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        const std::size_t lo = hi - 1;
        const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
        return ys[lo] + t * (ys[hi] - ys[lo]);
    }
};

inline InterpTable load_two_column_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open provider table " + path);
    InterpTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double x, y;
        if (row >> x >> y) {
            if (!t.xs.empty() && x <= t.xs.back())
                throw ConfigError("provider table abscissae must increase: " + path);
            t.xs.push_back(x);
            t.ys.push_back(y);
        }
    }
    if (t.xs.size() < 2) throw ConfigError("provider table needs >= 2 rows: " + path);
    return t;
}

}  // namespace detail

/// Providers backed by two-column (gamma, value) text tables with linear
/// interpolation, clamped outside the tabulated range.
inline ConstantProviders table_providers(const std::string& delta_path,
                                         const std::string& Delta_path,
                                         double L4 = -1.0) {
    ConstantProviders p;
    p.name = "custom-table";
    auto dt = detail::load_two_column_table(delta_path);
    auto Dt = detail::load_two_column_table(Delta_path);
    for (std::size_t i = 1; i < dt.ys.size(); ++i)
        if (dt.ys[i] > dt.ys[i - 1] + 1e-15)
            throw ConfigError("delta table must be nonincreasing: " + delta_path);
    for (std::size_t i = 1; i < Dt.ys.size(); ++i)
        if (Dt.ys[i] + 1e-15 < Dt.ys[i - 1])
            throw ConfigError("Delta table must be nondecreasing: " + Delta_path);
    p.delta_fn = [dt](double g) { return dt.eval(g); };
    p.Delta_fn = [Dt](double g) { return Dt.eval(g); };
    auto fallback = surrogate_providers().L_fn;
    p.L_fn = [L4, fallback](double q) {
        if (L4 > 0.0 && std::fabs(q - 4.0) < 1e-12) return L4;
        return fallback(q);
    };
    return p;
}

}  // namespace tqbsde
