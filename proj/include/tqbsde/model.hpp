#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tqbsde/errors.hpp"
#include "tqbsde/rng.hpp"
#include "tqbsde/tensor.hpp"

namespace tqbsde {

enum class PartKind { l, k, h };

enum class GeneratorFamily {
    zero,
    constant,
    linear_y,
    bounded_sine,
    z_power,
    z_block_quadratic,
    callback,
};

inline const char* family_name(GeneratorFamily f) {
    switch (f) {
        case GeneratorFamily::zero: return "zero";
        case GeneratorFamily::constant: return "constant";
        case GeneratorFamily::linear_y: return "linear_y";
        case GeneratorFamily::bounded_sine: return "bounded_sine";
        case GeneratorFamily::z_power: return "z_power";
        case GeneratorFamily::z_block_quadratic: return "z_block_quadratic";
        case GeneratorFamily::callback: return "callback";
    }
    return "?";
}

/// One parametric generator part. Registry families are closed and
/// serializable; raw callbacks are a library-only escape hatch and get no
/// structural guarantees beyond what probe validation confirms.
struct GeneratorDescriptor {
    GeneratorFamily family = GeneratorFamily::zero;
    int component_index = 0;  // 1-based; assigned when placed into a ProblemSpec

    double value = 0.0;                // constant
    std::vector<double> weights;       // linear_y (n), z_block_quadratic (i-1)
    double amplitude = 0.0;            // bounded_sine
    double frequency = 0.0;            // bounded_sine
    double coefficient = 0.0;          // z_power

    // Callback forms. vector_fn is for l parts (writes a d-vector), scalar_fn
    // for k and h parts.
    std::function<void(double, std::span<const double>, MatView, std::span<double>)>
        vector_fn;
    std::function<double(double, std::span<const double>, MatView)> scalar_fn;

    static GeneratorDescriptor zero() { return {}; }
    static GeneratorDescriptor constant(double c) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::constant;
        g.value = c;
        return g;
    }
    static GeneratorDescriptor linear_y(std::vector<double> w) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::linear_y;
        g.weights = std::move(w);
        return g;
    }
    static GeneratorDescriptor bounded_sine(double amplitude, double frequency) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::bounded_sine;
        g.amplitude = amplitude;
        g.frequency = frequency;
        return g;
    }
    static GeneratorDescriptor z_power(double coefficient) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::z_power;
        g.coefficient = coefficient;
        return g;
    }
    static GeneratorDescriptor z_block_quadratic(std::vector<double> w) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::z_block_quadratic;
        for (double x : w)
            if (x < 0.0)
                throw ConfigError("z_block_quadratic weights must be nonnegative");
        g.weights = std::move(w);
        return g;
    }
    static GeneratorDescriptor callback_vector(
        std::function<void(double, std::span<const double>, MatView, std::span<double>)>
            fn) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::callback;
        g.vector_fn = std::move(fn);
        return g;
    }
    static GeneratorDescriptor callback_scalar(
        std::function<double(double, std::span<const double>, MatView)> fn) {
        GeneratorDescriptor g;
        g.family = GeneratorFamily::callback;
        g.scalar_fn = std::move(fn);
        return g;
    }

    /// True if the part's value depends on its y argument.
    bool reads_y() const {
        return family == GeneratorFamily::linear_y ||
               family == GeneratorFamily::bounded_sine ||
               family == GeneratorFamily::callback;
    }
};

enum class TerminalKind { constant_vec, clamped_affine, tanh_of_wt, clamped_running_max };

inline const char* terminal_kind_name(TerminalKind k) {
    switch (k) {
        case TerminalKind::constant_vec: return "constant";
        case TerminalKind::clamped_affine: return "clamped_affine";
        case TerminalKind::tanh_of_wt: return "tanh_of_wt";
        case TerminalKind::clamped_running_max: return "clamped_running_max";
    }
    return "?";
}

/// Bounded terminal conditions. Every kind declares an explicit sup bound on
/// the Euclidean magnitude of the terminal vector; that bound feeds the
/// constants engine.
struct TerminalDescriptor {
    TerminalKind kind = TerminalKind::constant_vec;
    std::vector<double> values;      // constant_vec: n entries
    std::vector<double> coeffs;      // clamped_affine: n*d entries, row-major
    std::vector<double> intercepts;  // clamped_affine: n entries
    std::vector<double> clamps;      // clamped_affine / clamped_running_max: n entries
    std::vector<double> scales;      // tanh_of_wt: n entries
    std::vector<int> coords;         // tanh_of_wt / clamped_running_max: n entries

    static TerminalDescriptor constant(std::vector<double> v) {
        TerminalDescriptor t;
        t.kind = TerminalKind::constant_vec;
        t.values = std::move(v);
        return t;
    }
    static TerminalDescriptor clamped_affine(std::vector<double> coeffs,
                                             std::vector<double> intercepts,
                                             std::vector<double> clamps) {
        TerminalDescriptor t;
        t.kind = TerminalKind::clamped_affine;
        t.coeffs = std::move(coeffs);
        t.intercepts = std::move(intercepts);
        t.clamps = std::move(clamps);
        return t;
    }
    static TerminalDescriptor tanh_of_wt(std::vector<double> scales,
                                         std::vector<int> coords) {
        TerminalDescriptor t;
        t.kind = TerminalKind::tanh_of_wt;
        t.scales = std::move(scales);
        t.coords = std::move(coords);
        return t;
    }
    static TerminalDescriptor clamped_running_max(std::vector<int> coords,
                                                  std::vector<double> clamps) {
        TerminalDescriptor t;
        t.kind = TerminalKind::clamped_running_max;
        t.coords = std::move(coords);
        t.clamps = std::move(clamps);
        return t;
    }

    /// Declared sup bound on |xi| (Euclidean over components).
    double declared_bound() const {
        auto norm_of = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x * x;
            return std::sqrt(s);
        };
        switch (kind) {
            case TerminalKind::constant_vec: return norm_of(values);
            case TerminalKind::clamped_affine: return norm_of(clamps);
            case TerminalKind::tanh_of_wt: return norm_of(scales);
            case TerminalKind::clamped_running_max: return norm_of(clamps);
        }
        return 0.0;
    }
};

/// The coupled quadratic BSDE problem: dimensions, horizon, growth constants,
/// bounded terminal condition and the generator triple per component.
/// Component i's driver is
///   0.5*|z_i|^2 + z_i . l_i - (i >= 2 ? k_i : 0) + h_i.
struct ProblemSpec {
    int n = 1;
    int d = 1;
    double horizon = 1.0;
    double lipschitz_C = 0.0;
    double alpha = 0.0;
    double alpha_plus = 0.0;  // max(alpha, 0), kept in sync by check_structure()
    TerminalDescriptor terminal;
    std::vector<GeneratorDescriptor> l_parts;  // n entries
    std::vector<GeneratorDescriptor> k_parts;  // n-1 entries, components 2..n
    std::vector<GeneratorDescriptor> h_parts;  // n entries

    struct GlobalFlags {
        bool h_nonpositive = false;
        bool l_bounded = false;
    } global_flags;

    double terminal_bound() const { return terminal.declared_bound(); }

    /// Validates structural invariants and assigns component indices.
    /// Throws ConfigError on violation.
    void check_structure() {
        if (n < 1) throw ConfigError("n must be >= 1", "problem.n");
        if (d < 1) throw ConfigError("d must be >= 1", "problem.d");
        if (!(horizon > 0.0)) throw ConfigError("horizon must be positive", "problem.horizon");
        if (!(lipschitz_C >= 0.0))
            throw ConfigError("lipschitz_C must be nonnegative", "problem.lipschitz_C");
        if (!(alpha >= -1.0 && alpha < 1.0))
            throw ConfigError("alpha must lie in [-1, 1)", "problem.alpha");
        alpha_plus = std::max(alpha, 0.0);
        if (l_parts.size() != static_cast<std::size_t>(n))
            throw ConfigError("l must have exactly n parts", "problem.l");
        if (h_parts.size() != static_cast<std::size_t>(n))
            throw ConfigError("h must have exactly n parts", "problem.h");
        if (k_parts.size() != static_cast<std::size_t>(n - 1))
            throw ConfigError("k must have exactly n-1 parts (components 2..n)",
                              "problem.k");
        check_terminal();
        for (int i = 1; i <= n; ++i) {
            check_part(l_parts[i - 1], PartKind::l, i);
            check_part(h_parts[i - 1], PartKind::h, i);
            l_parts[i - 1].component_index = i;
            h_parts[i - 1].component_index = i;
        }
        for (int i = 2; i <= n; ++i) {
            check_part(k_parts[i - 2], PartKind::k, i);
            k_parts[i - 2].component_index = i;
        }
    }

private:
    void check_terminal() const {
        const auto un = static_cast<std::size_t>(n);
        switch (terminal.kind) {
            case TerminalKind::constant_vec:
                if (terminal.values.size() != un)
                    throw ConfigError("constant terminal needs n values",
                                      "problem.terminal.values");
                break;
            case TerminalKind::clamped_affine:
                if (terminal.coeffs.size() != un * static_cast<std::size_t>(d))
                    throw ConfigError("clamped_affine terminal needs n*d coefficients",
                                      "problem.terminal.coeffs");
                if (terminal.intercepts.size() != un)
                    throw ConfigError("clamped_affine terminal needs n intercepts",
                                      "problem.terminal.intercepts");
                if (terminal.clamps.size() != un)
                    throw ConfigError("clamped_affine terminal needs n clamps",
                                      "problem.terminal.clamps");
                for (double c : terminal.clamps)
                    if (!(c >= 0.0))
                        throw ConfigError("terminal clamps must be nonnegative",
                                          "problem.terminal.clamps");
                break;
            case TerminalKind::tanh_of_wt:
                if (terminal.scales.size() != un || terminal.coords.size() != un)
                    throw ConfigError("tanh_of_wt terminal needs n scales and n coords",
                                      "problem.terminal");
                for (int c : terminal.coords)
                    if (c < 0 || c >= d)
                        throw ConfigError("terminal coordinate out of range",
                                          "problem.terminal.coords");
                break;
            case TerminalKind::clamped_running_max:
                if (terminal.coords.size() != un || terminal.clamps.size() != un)
                    throw ConfigError(
                        "clamped_running_max terminal needs n coords and n clamps",
                        "problem.terminal");
                for (int c : terminal.coords)
                    if (c < 0 || c >= d)
                        throw ConfigError("terminal coordinate out of range",
                                          "problem.terminal.coords");
                break;
        }
    }

    void check_part(const GeneratorDescriptor& g, PartKind part, int i) const {
        const char* where = part == PartKind::l ? "problem.l"
                            : part == PartKind::k ? "problem.k"
                                                  : "problem.h";
        auto fail = [&](const std::string& msg) {
            throw ConfigError(msg + " (component " + std::to_string(i) + ")", where);
        };
        switch (g.family) {
            case GeneratorFamily::zero:
                break;
            case GeneratorFamily::constant:
                break;
            case GeneratorFamily::linear_y:
                if (part == PartKind::k) fail("linear_y is not a valid k family");
                if (g.weights.size() != static_cast<std::size_t>(n))
                    fail("linear_y needs n weights");
                break;
            case GeneratorFamily::bounded_sine:
                if (part == PartKind::k) fail("bounded_sine is not a valid k family");
                break;
            case GeneratorFamily::z_power:
                if (part != PartKind::h) fail("z_power is only a valid h family");
                break;
            case GeneratorFamily::z_block_quadratic:
                if (part != PartKind::k) fail("z_block_quadratic is only a valid k family");
                if (g.weights.size() != static_cast<std::size_t>(i - 1))
                    fail("z_block_quadratic needs i-1 weights");
                break;
            case GeneratorFamily::callback:
                if (part == PartKind::l && !g.vector_fn) fail("l callback missing");
                if (part != PartKind::l && !g.scalar_fn) fail("scalar callback missing");
                break;
        }
    }
};

namespace detail {

inline double frobenius(MatView z) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.rows * z.cols; ++i) s += z.data[i] * z.data[i];
    return std::sqrt(s);
}

inline double row_norm2_sq(MatView z, std::size_t row) {
    double s = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
        const double v = z(row, j);
        s += v * v;
    }
    return s;
}

inline double sum_all(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Shared sine argument: t + sum(y) + sum of visible z rows. Which rows are
// visible depends on the part: none for l_1, rows < i-1 for l_i, all for h.
inline double sine_argument(double t, std::span<const double> y, MatView z,
                            std::size_t visible_rows) {
    double arg = t + sum_all(y);
    for (std::size_t r = 0; r < visible_rows && r < z.rows; ++r)
        for (std::size_t j = 0; j < z.cols; ++j) arg += z(r, j);
    return arg;
}

}  // namespace detail

/// Evaluates l_i as a d-vector. Registry families read only what the
/// triangular structure allows: l_1 ignores z entirely, l_i (i >= 2) reads
/// rows 1..i-1 only.
inline void evaluate_l(const ProblemSpec& spec, int i, double t,
                       std::span<const double> y, MatView z, std::span<double> out) {
    const GeneratorDescriptor& g = spec.l_parts[static_cast<std::size_t>(i - 1)];
    std::fill(out.begin(), out.end(), 0.0);
    switch (g.family) {
        case GeneratorFamily::zero:
            return;
        case GeneratorFamily::constant:
            out[0] = g.value;
            return;
        case GeneratorFamily::linear_y: {
            double s = 0.0;
            double wnorm = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) {
                s += g.weights[j] * y[j];
                wnorm += g.weights[j] * g.weights[j];
            }
            wnorm = std::sqrt(wnorm);
            const double C = spec.lipschitz_C;
            if (wnorm > C && wnorm > 0.0) s *= C / wnorm;  // keep Lipschitz <= C
            double ynorm = 0.0;
            for (double v : y) ynorm += v * v;
            const double cap = C * (1.0 + std::sqrt(ynorm));
            out[0] = std::clamp(s, -cap, cap);
            return;
        }
        case GeneratorFamily::bounded_sine: {
            const std::size_t visible = i == 1 ? 0 : static_cast<std::size_t>(i - 1);
            out[0] = g.amplitude *
                     std::sin(g.frequency * detail::sine_argument(t, y, z, visible));
            return;
        }
        case GeneratorFamily::z_power:
        case GeneratorFamily::z_block_quadratic:
            throw Error("invalid family for l part");
        case GeneratorFamily::callback:
            g.vector_fn(t, y, z, out);
            return;
    }
}

/// Evaluates k_i (i >= 2), a scalar of the z rows 1..i-1.
inline double evaluate_k(const ProblemSpec& spec, int i, double t,
                         std::span<const double> y, MatView z) {
    const GeneratorDescriptor& g = spec.k_parts[static_cast<std::size_t>(i - 2)];
    switch (g.family) {
        case GeneratorFamily::zero:
            return 0.0;
        case GeneratorFamily::constant:
            return g.value;
        case GeneratorFamily::z_block_quadratic: {
            double s = 0.0;
            for (std::size_t j = 0; j + 1 < static_cast<std::size_t>(i); ++j)
                s += g.weights[j] * detail::row_norm2_sq(z, j);
            return s;
        }
        case GeneratorFamily::callback:
            return g.scalar_fn(t, y, z);
        default:
            throw Error("invalid family for k part");
    }
}

/// Evaluates h_i, a scalar of (t, y, z).
inline double evaluate_h(const ProblemSpec& spec, int i, double t,
                         std::span<const double> y, MatView z) {
    const GeneratorDescriptor& g = spec.h_parts[static_cast<std::size_t>(i - 1)];
    switch (g.family) {
        case GeneratorFamily::zero:
            return 0.0;
        case GeneratorFamily::constant:
            return g.value;
        case GeneratorFamily::linear_y: {
            double s = 0.0;
            double wnorm = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) {
                s += g.weights[j] * y[j];
                wnorm += g.weights[j] * g.weights[j];
            }
            wnorm = std::sqrt(wnorm);
            const double C = spec.lipschitz_C;
            if (wnorm > C && wnorm > 0.0) s *= C / wnorm;
            double ynorm = 0.0;
            for (double v : y) ynorm += v * v;
            const double cap = C * (1.0 + std::sqrt(ynorm));
            return std::clamp(s, -cap, cap);
        }
        case GeneratorFamily::bounded_sine:
            return g.amplitude *
                   std::sin(g.frequency * detail::sine_argument(t, y, z, z.rows));
        case GeneratorFamily::z_power: {
            const double f = detail::frobenius(z);
            return g.coefficient *
                   (std::pow(1.0 + f * f, 0.5 * (1.0 + spec.alpha)) - 1.0);
        }
        case GeneratorFamily::callback:
            return g.scalar_fn(t, y, z);
        default:
            throw Error("invalid family for h part");
    }
}

/// Full driver of component i at (t, y, z):
///   0.5*|z_i|^2 + z_i . l_i + h_i          for i = 1,
///   0.5*|z_i|^2 + z_i . l_i - k_i + h_i    for i >= 2.
inline double evaluate_driver(const ProblemSpec& spec, int i, double t,
                              std::span<const double> y, MatView z) {
    if (i < 1 || i > spec.n) throw Error("component index out of range");
    if (y.size() != static_cast<std::size_t>(spec.n) ||
        z.rows != static_cast<std::size_t>(spec.n) ||
        z.cols != static_cast<std::size_t>(spec.d))
        throw Error("evaluate_driver: shape mismatch");
    if (!std::isfinite(t)) throw Error("evaluate_driver: non-finite time");
    for (double v : y)
        if (!std::isfinite(v)) throw Error("evaluate_driver: non-finite y");
    for (std::size_t p = 0; p < z.rows * z.cols; ++p)
        if (!std::isfinite(z.data[p])) throw Error("evaluate_driver: non-finite z");

    const std::size_t row = static_cast<std::size_t>(i - 1);
    std::vector<double> l(static_cast<std::size_t>(spec.d), 0.0);
    evaluate_l(spec, i, t, y, z, l);
    double val = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
        const double zi = z(row, j);
        val += 0.5 * zi * zi + zi * l[j];
    }
    if (i >= 2) val -= evaluate_k(spec, i, t, y, z);
    val += evaluate_h(spec, i, t, y, z);
    return val;
}

struct ValidationCheck {
    std::string assumption_id;
    long probes_run = 0;
    double worst_violation = 0.0;
    bool pass = true;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    std::uint64_t probe_seed = 0;
    double tolerance = 1e-9;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    const ValidationCheck* find(const std::string& id) const {
        for (const auto& c : checks)
            if (c.assumption_id == id) return &c;
        return nullptr;
    }
};

namespace detail {

struct ProbePoint {
    double t;
    std::vector<double> y, ybar;
    Array2 z, zbar;
};

inline ProbePoint sample_probe(const ProblemSpec& spec, std::uint64_t seed,
                               std::uint64_t p) {
    // Cycle through magnitudes so both small- and large-argument behaviour is
    // probed (Lipschitz violations of superlinear callbacks show up at the
    // large scales).
    static constexpr double kScales[] = {0.3, 1.0, 3.0, 10.0};
    const double scale = kScales[p % 4];
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    ProbePoint pt;
    pt.t = spec.horizon * rng::uniform(seed, p, 0, 0);
    pt.y.resize(n);
    pt.ybar.resize(n);
    pt.z = Array2(n, d);
    pt.zbar = Array2(n, d);
    for (std::size_t j = 0; j < n; ++j) {
        pt.y[j] = scale * rng::normal(seed, p, 1, j);
        pt.ybar[j] = scale * rng::normal(seed, p, 2, j);
    }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) {
            pt.z(r, j) = scale * rng::normal(seed, p, 3, r * d + j);
            pt.zbar(r, j) = scale * rng::normal(seed, p, 4, r * d + j);
        }
    return pt;
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double diff_norm2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double dx = a[i] - b[i];
        s += dx * dx;
    }
    return std::sqrt(s);
}

}  // namespace detail

/// Probe-based check of the structural assumptions on (l, k, h): growth
/// bounds, Lipschitz difference quotients and triangular z visibility.
/// Violations are reported, never thrown. Deterministic for a given seed.
inline ValidationReport validate_assumptions(const ProblemSpec& spec, long probes,
                                             std::uint64_t seed,
                                             double tolerance = 1e-9) {
    if (probes < 1) throw Error("validate_assumptions: probes must be >= 1");
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    const double C = spec.lipschitz_C;
    const double ap = spec.alpha_plus;

    double worst_a1 = 0.0, worst_a2 = 0.0, worst_a3 = 0.0, worst_a4 = 0.0;
    std::vector<double> lv(d), lv2(d), lv3(d);

    for (long p = 0; p < probes; ++p) {
        auto pt = detail::sample_probe(spec, seed, static_cast<std::uint64_t>(p));
        const MatView z{pt.z.data(), n, d};
        const MatView zb{pt.zbar.data(), n, d};
        const double dy = detail::diff_norm2(pt.y, pt.ybar);

        // rows >= i-1 perturbed copy, for triangularity probes
        Array2 ztri = pt.z;

        for (int i = 1; i <= spec.n; ++i) {
            const std::size_t row = static_cast<std::size_t>(i - 1);

            // --- l part: growth, Lipschitz, visibility ---
            evaluate_l(spec, i, pt.t, pt.y, z, lv);
            evaluate_l(spec, i, pt.t, pt.ybar, zb, lv2);
            const double lmag = detail::norm2(lv);
            double& worst_l = (i == 1) ? worst_a1 : worst_a2;
            worst_l = std::max(worst_l, lmag - C * (1.0 + detail::norm2(pt.y)));
            double lip_rhs = C * dy;
            if (i >= 2) {
                for (std::size_t j = 0; j < row; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        const double dz = z(j, c) - zb(j, c);
                        s += dz * dz;
                    }
                    lip_rhs += C * std::sqrt(s);
                }
            }
            double ldiff = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double dd = lv[c] - lv2[c];
                ldiff += dd * dd;
            }
            worst_l = std::max(worst_l, std::sqrt(ldiff) - lip_rhs);

            // visibility: perturbing rows j >= i must leave l_i (and k_i) unchanged
            ztri = pt.z;
            for (std::size_t r = row; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c)
                    ztri(r, c) += 1.0 + rng::uniform(seed, static_cast<std::uint64_t>(p),
                                                     5, r * d + c);
            const MatView zt{ztri.data(), n, d};
            evaluate_l(spec, i, pt.t, pt.y, zt, lv3);
            double vis = 0.0;
            for (std::size_t c = 0; c < d; ++c) vis = std::max(vis, std::fabs(lv3[c] - lv[c]));
            worst_l = std::max(worst_l, vis);

            // --- k part (i >= 2): nonnegativity, growth, Lipschitz, visibility ---
            if (i >= 2) {
                const double kv = evaluate_k(spec, i, pt.t, pt.y, z);
                const double kvb = evaluate_k(spec, i, pt.t, pt.ybar, zb);
                double blocks = 0.0, lip_k = 0.0;
                for (std::size_t j = 0; j < row; ++j) {
                    blocks += detail::row_norm2_sq(z, j);
                    double s = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        const double dz = z(j, c) - zb(j, c);
                        s += dz * dz;
                    }
                    lip_k += C *
                             (1.0 + std::sqrt(detail::row_norm2_sq(z, j)) +
                              std::sqrt(detail::row_norm2_sq(zb, j))) *
                             std::sqrt(s);
                }
                worst_a3 = std::max(worst_a3, -kv);
                worst_a3 = std::max(worst_a3, kv - C * (1.0 + blocks));
                worst_a3 = std::max(worst_a3, std::fabs(kv - kvb) - lip_k);
                const double kvt = evaluate_k(spec, i, pt.t, pt.y, zt);
                worst_a3 = std::max(worst_a3, std::fabs(kvt - kv));
            }

            // --- h part: growth and Lipschitz with the alpha exponents ---
            const double zf = detail::frobenius(z);
            const double zfb = detail::frobenius(zb);
            const double hv = evaluate_h(spec, i, pt.t, pt.y, z);
            const double hvb = evaluate_h(spec, i, pt.t, pt.ybar, zb);
            worst_a4 = std::max(worst_a4, std::fabs(hv) - C * (1.0 + detail::norm2(pt.y) +
                                                               std::pow(zf, 1.0 + spec.alpha)));
            double dzf = 0.0;
            for (std::size_t q = 0; q < n * d; ++q) {
                const double dd = z.data[q] - zb.data[q];
                dzf += dd * dd;
            }
            dzf = std::sqrt(dzf);
            const double lip_h =
                C * dy + C * (1.0 + std::pow(zf, ap) + std::pow(zfb, ap)) * dzf;
            worst_a4 = std::max(worst_a4, std::fabs(hv - hvb) - lip_h);
        }
    }

    ValidationReport report;
    report.probe_seed = seed;
    report.tolerance = tolerance;
    auto push = [&](const char* id, double worst, long runs) {
        report.checks.push_back(
            {id, runs, std::max(worst, 0.0), std::max(worst, 0.0) <= tolerance});
    };
    push("A1", worst_a1, probes);
    push("A2", spec.n >= 2 ? worst_a2 : 0.0, spec.n >= 2 ? probes : 0);
    push("A3", spec.n >= 2 ? worst_a3 : 0.0, spec.n >= 2 ? probes : 0);
    push("A4", worst_a4, probes);
    return report;
}

}  // namespace tqbsde
