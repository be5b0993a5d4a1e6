#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tqbsde/errors.hpp"
#include "tqbsde/model.hpp"
#include "tqbsde/parallel.hpp"
#include "tqbsde/rng.hpp"
#include "tqbsde/tensor.hpp"

namespace tqbsde {

/// Strictly increasing time grid t_0 = start < ... < t_N.
struct TimeGrid {
    std::vector<double> times;

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double start() const { return times.front(); }
    double end() const { return times.back(); }
    double dt(std::size_t k) const { return times[k + 1] - times[k]; }
};

/// Uniform grid with N steps on [0, T].
inline TimeGrid make_grid(double horizon, std::size_t steps) {
    if (!(horizon > 0.0)) throw Error("make_grid: horizon must be positive");
    if (steps < 1) throw Error("make_grid: steps must be >= 1");
    TimeGrid g;
    g.times.resize(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
        g.times[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    g.times[steps] = horizon;
    return g;
}

/// Subdivides [lo, hi] into `steps` uniform pieces; endpoints are exact.
inline void append_subdivision(std::vector<double>& times, double lo, double hi,
                               std::size_t steps) {
    for (std::size_t k = 1; k <= steps; ++k)
        times.push_back(lo + (hi - lo) * static_cast<double>(k) /
                                 static_cast<double>(steps));
    times.back() = hi;
}

/// M discrete d-dimensional Brownian paths on a grid, plus the seed that made
/// them. Each increment is a pure function of (seed, path, step, coordinate),
/// so bundles are reproducible for any worker count.
struct BrownianBundle {
    TimeGrid grid;
    std::size_t paths = 0;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    Array3 increments;  // paths x steps x dim
    Array3 cumulative;  // paths x (steps+1) x dim, W_0 = 0
};

inline BrownianBundle simulate_brownian(const TimeGrid& grid, std::size_t paths,
                                        std::size_t dim, std::uint64_t seed) {
    if (paths < 1 || dim < 1) throw Error("simulate_brownian: paths and dim must be >= 1");
    const std::size_t steps = grid.steps();
    BrownianBundle b;
    b.grid = grid;
    b.paths = paths;
    b.dim = dim;
    b.seed = seed;
    b.increments = Array3(paths, steps, dim);
    b.cumulative = Array3(paths, steps + 1, dim);

    std::vector<double> sqrt_dt(steps);
    for (std::size_t k = 0; k < steps; ++k) sqrt_dt[k] = std::sqrt(grid.dt(k));

    parallel::for_chunks(paths, parallel::kDefaultChunk,
                         [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            for (std::size_t j = 0; j < dim; ++j) b.cumulative(m, 0, j) = 0.0;
            for (std::size_t k = 0; k < steps; ++k) {
                for (std::size_t j = 0; j < dim; ++j) {
                    const double dw = sqrt_dt[k] * rng::normal(seed, m, k, j);
                    b.increments(m, k, j) = dw;
                    b.cumulative(m, k + 1, j) = b.cumulative(m, k, j) + dw;
                }
            }
        }
    });
    return b;
}

/// Non-owning window [step_begin, step_begin + step_count] of a bundle.
/// Cumulative values stay absolute (information at time t is W_t from 0).
struct BundleView {
    const BrownianBundle* bundle = nullptr;
    std::size_t step_begin = 0;
    std::size_t step_count = 0;

    BundleView() = default;
    explicit BundleView(const BrownianBundle& b)
        : bundle(&b), step_begin(0), step_count(b.grid.steps()) {}
    BundleView(const BrownianBundle& b, std::size_t begin, std::size_t count)
        : bundle(&b), step_begin(begin), step_count(count) {}

    std::size_t paths() const { return bundle->paths; }
    std::size_t dim() const { return bundle->dim; }
    std::size_t steps() const { return step_count; }
    double time(std::size_t k) const { return bundle->grid.times[step_begin + k]; }
    double dt(std::size_t k) const { return bundle->grid.dt(step_begin + k); }
    double dw(std::size_t m, std::size_t k, std::size_t j) const {
        return bundle->increments(m, step_begin + k, j);
    }
    double w(std::size_t m, std::size_t k, std::size_t j) const {
        return bundle->cumulative(m, step_begin + k, j);
    }
};

/// Per-path terminal samples (paths x n). Every entry is checked against the
/// descriptor's declared sup bound; a breach means a registry bug.
inline Array2 evaluate_terminal(const ProblemSpec& spec, const BrownianBundle& bundle) {
    if (bundle.dim != static_cast<std::size_t>(spec.d))
        throw Error("evaluate_terminal: bundle dimension mismatch");
    const std::size_t M = bundle.paths;
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    const std::size_t N = bundle.grid.steps();
    const TerminalDescriptor& term = spec.terminal;
    Array2 xi(M, n);

    parallel::for_chunks(M, parallel::kDefaultChunk,
                         [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            for (std::size_t i = 0; i < n; ++i) {
                double v = 0.0;
                switch (term.kind) {
                    case TerminalKind::constant_vec:
                        v = term.values[i];
                        break;
                    case TerminalKind::clamped_affine: {
                        v = term.intercepts[i];
                        for (std::size_t j = 0; j < d; ++j)
                            v += term.coeffs[i * d + j] * bundle.cumulative(m, N, j);
                        v = std::clamp(v, -term.clamps[i], term.clamps[i]);
                        break;
                    }
                    case TerminalKind::tanh_of_wt:
                        v = term.scales[i] *
                            std::tanh(bundle.cumulative(
                                m, N, static_cast<std::size_t>(term.coords[i])));
                        break;
                    case TerminalKind::clamped_running_max: {
                        const std::size_t c = static_cast<std::size_t>(term.coords[i]);
                        double mx = bundle.cumulative(m, 0, c);
                        for (std::size_t k = 1; k <= N; ++k)
                            mx = std::max(mx, bundle.cumulative(m, k, c));
                        v = std::clamp(mx, -term.clamps[i], term.clamps[i]);
                        break;
                    }
                }
                xi(m, i) = v;
            }
        }
    });

    const double bound = term.declared_bound();
    for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += xi(m, i) * xi(m, i);
        if (std::sqrt(s) > bound * (1.0 + 1e-12) + 1e-300)
            throw Error("terminal sample exceeds declared bound on path " +
                        std::to_string(m));
    }
    return xi;
}

/// Debug dump: one row per path, columns ordered time-major then coordinate.
inline void dump_bundle_csv(const BrownianBundle& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.precision(17);
    for (std::size_t m = 0; m < b.paths; ++m) {
        for (std::size_t k = 0; k <= b.grid.steps(); ++k)
            for (std::size_t j = 0; j < b.dim; ++j) {
                if (k + j > 0) out << ',';
                out << b.cumulative(m, k, j);
            }
        out << '\n';
    }
}

inline void dump_bundle_binary(const BrownianBundle& b, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    const std::uint64_t header[3] = {b.paths, b.grid.steps() + 1, b.dim};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(b.cumulative.data()),
              static_cast<std::streamsize>(b.cumulative.size() * sizeof(double)));
}

}  // namespace tqbsde
