#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tqbsde/errors.hpp"
#include "tqbsde/parallel.hpp"
#include "tqbsde/tensor.hpp"

namespace tqbsde {

enum class BasisKind { polynomial, polynomial_with_functionals };

/// Polynomial regression basis. `degree` is the total degree over all feature
/// columns; `ridge` < 0 selects the automatic value 1e-8 * trace / p. The
/// intercept column is never penalized, so a constant-only fit is exactly the
/// weighted mean of the targets.
struct BasisSpec {
    BasisKind kind = BasisKind::polynomial;
    int degree = 2;
    double ridge = -1.0;
};

namespace detail {

/// Multi-indices of total degree <= degree over q variables, ordered by total
/// degree so index 0 is the constant.
inline std::vector<std::vector<int>> monomial_exponents(std::size_t q, int degree) {
    std::vector<std::vector<int>> all;
    std::vector<int> cur(q, 0);
    auto rec = [&](auto&& self, std::size_t pos, int remaining) -> void {
        if (pos == q) {
            all.push_back(cur);
            return;
        }
        for (int e = 0; e <= remaining; ++e) {
            cur[pos] = e;
            self(self, pos + 1, remaining - e);
        }
        cur[pos] = 0;
    };
    rec(rec, 0, degree);
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        int sa = 0, sb = 0;
        for (int v : a) sa += v;
        for (int v : b) sb += v;
        return sa < sb;
    });
    return all;
}

inline std::size_t basis_dimension(std::size_t q, int degree) {
    // C(q + degree, degree)
    std::size_t num = 1, den = 1;
    for (int i = 1; i <= degree; ++i) {
        num *= q + static_cast<std::size_t>(i);
        den *= static_cast<std::size_t>(i);
    }
    return num / den;
}

struct BasisLayout {
    std::vector<std::vector<int>> exponents;
    std::vector<double> means;   // per feature
    std::vector<double> scales;  // per feature, always > 0

    std::size_t dims() const { return exponents.size(); }
    std::size_t features() const { return means.size(); }

    void expand(std::span<const double> x, std::span<double> phi,
                std::span<double> powers) const {
        const std::size_t q = means.size();
        const int degree_max = q == 0 ? 0 : static_cast<int>(powers.size() / q) - 1;
        for (std::size_t j = 0; j < q; ++j) {
            const double s = (x[j] - means[j]) / scales[j];
            double p = 1.0;
            for (int e = 0; e <= degree_max; ++e) {
                powers[j * static_cast<std::size_t>(degree_max + 1) +
                       static_cast<std::size_t>(e)] = p;
                p *= s;
            }
        }
        for (std::size_t b = 0; b < exponents.size(); ++b) {
            double v = 1.0;
            for (std::size_t j = 0; j < q; ++j) {
                const int e = exponents[b][j];
                if (e > 0)
                    v *= powers[j * static_cast<std::size_t>(degree_max + 1) +
                                static_cast<std::size_t>(e)];
            }
            phi[b] = v;
        }
    }
};

/// Column means and scales over all rows, accumulated chunk-by-chunk in a
/// fixed order so the result does not depend on the worker count.
inline void standardize_layout(const Array2& features, BasisLayout& layout) {
    const std::size_t M = features.rows();
    const std::size_t q = features.cols();
    layout.means.assign(q, 0.0);
    layout.scales.assign(q, 1.0);
    if (q == 0 || M == 0) return;

    const std::size_t n_chunks = parallel::chunk_count(M);
    std::vector<double> partial_sum(n_chunks * q, 0.0);
    std::vector<double> partial_sq(n_chunks * q, 0.0);
    parallel::for_chunks(M, parallel::kDefaultChunk,
                         [&](std::size_t c, std::size_t begin, std::size_t end) {
        double* ps = partial_sum.data() + c * q;
        double* pq = partial_sq.data() + c * q;
        for (std::size_t m = begin; m < end; ++m)
            for (std::size_t j = 0; j < q; ++j) {
                const double v = features(m, j);
                ps[j] += v;
                pq[j] += v * v;
            }
    });
    for (std::size_t j = 0; j < q; ++j) {
        double s = 0.0, sq = 0.0;
        for (std::size_t c = 0; c < n_chunks; ++c) {
            s += partial_sum[c * q + j];
            sq += partial_sq[c * q + j];
        }
        const double mean = s / static_cast<double>(M);
        const double var = std::max(sq / static_cast<double>(M) - mean * mean, 0.0);
        layout.means[j] = mean;
        layout.scales[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
}

}  // namespace detail

struct RegressionModel {
    std::vector<double> coefficients;
    BasisSpec basis;
    double condition_estimate = 1.0;
    // standardization captured at fit time; predict() applies the same map
    std::vector<double> feature_means;
    std::vector<double> feature_scales;
};

/// Weighted ridge least squares of targets on the polynomial basis of the
/// feature columns. Escalates the ridge once (x100) on a singular normal
/// matrix before failing.
inline RegressionModel fit_conditional(const Array2& features,
                                       std::span<const double> targets,
                                       std::span<const double> weights,
                                       const BasisSpec& basis) {
    const std::size_t M = features.rows();
    const std::size_t q = features.cols();
    if (targets.size() != M) throw Error("fit_conditional: target length mismatch");
    if (!weights.empty() && weights.size() != M)
        throw Error("fit_conditional: weight length mismatch");
    if (basis.degree < 0) throw Error("fit_conditional: negative degree");

    detail::BasisLayout layout;
    layout.exponents = detail::monomial_exponents(q, basis.degree);
    detail::standardize_layout(features, layout);
    const std::size_t p = layout.dims();
    if (M <= p) throw SingularFitError("fit_conditional: fewer samples than basis dims");

    // chunked normal-matrix accumulation with a fixed combine order
    const std::size_t n_chunks = parallel::chunk_count(M);
    std::vector<double> partial_g(n_chunks * p * p, 0.0);
    std::vector<double> partial_rhs(n_chunks * p, 0.0);
    std::vector<double> partial_w(n_chunks, 0.0);
    const int pow_rows = basis.degree + 1;
    parallel::for_chunks(M, parallel::kDefaultChunk,
                         [&](std::size_t c, std::size_t begin, std::size_t end) {
        std::vector<double> phi(p);
        std::vector<double> powers(q * static_cast<std::size_t>(pow_rows));
        double* g = partial_g.data() + c * p * p;
        double* rhs = partial_rhs.data() + c * p;
        double wsum = 0.0;
        for (std::size_t m = begin; m < end; ++m) {
            layout.expand(features.row(m), phi, powers);
            const double w = weights.empty() ? 1.0 : weights[m];
            wsum += w;
            for (std::size_t a = 0; a < p; ++a) {
                const double wphi = w * phi[a];
                rhs[a] += wphi * targets[m];
                for (std::size_t b = 0; b <= a; ++b) g[a * p + b] += wphi * phi[b];
            }
        }
        partial_w[c] = wsum;
    });

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                              static_cast<Eigen::Index>(p));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    double weight_total = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const double* g = partial_g.data() + c * p * p;
        const double* r = partial_rhs.data() + c * p;
        for (std::size_t a = 0; a < p; ++a) {
            rhs(static_cast<Eigen::Index>(a)) += r[a];
            for (std::size_t b = 0; b <= a; ++b)
                G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
                    g[a * p + b];
        }
        weight_total += partial_w[c];
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a + 1; b < p; ++b)
            G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                G(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a));
    if (!(weight_total > 0.0))
        throw SingularFitError("fit_conditional: weights sum to zero");

    double dmin = G(0, 0), dmax = G(0, 0);
    for (std::size_t a = 0; a < p; ++a) {
        dmin = std::min(dmin, G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));
        dmax = std::max(dmax, G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));
    }

    const double auto_ridge = 1e-8 * G.trace() / static_cast<double>(p);
    double ridge = basis.ridge >= 0.0 ? basis.ridge : auto_ridge;

    RegressionModel model;
    model.basis = basis;
    model.feature_means = layout.means;
    model.feature_scales = layout.scales;
    model.condition_estimate = dmin > 0.0 ? std::max(dmax / dmin, 1.0)
                                          : std::numeric_limits<double>::infinity();

    for (int attempt = 0; attempt < 2; ++attempt) {
        Eigen::MatrixXd Greg = G;
        for (std::size_t a = 1; a < p; ++a)
            Greg(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Greg);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd coef = ldlt.solve(rhs);
            bool finite = true;
            for (Eigen::Index a = 0; a < coef.size(); ++a)
                if (!std::isfinite(coef(a))) finite = false;
            if (finite) {
                model.coefficients.assign(coef.data(), coef.data() + coef.size());
                return model;
            }
        }
        ridge = (ridge > 0.0 ? ridge : auto_ridge > 0.0 ? auto_ridge : 1e-12) * 100.0;
    }
    throw SingularFitError("fit_conditional: normal matrix singular beyond ridge rescue");
}

/// Basis expansion times coefficients, using the standardization captured at
/// fit time.
inline std::vector<double> predict(const RegressionModel& model, const Array2& features) {
    const std::size_t M = features.rows();
    const std::size_t q = features.cols();
    if (q != model.feature_means.size())
        throw Error("predict: feature dimension mismatch");
    detail::BasisLayout layout;
    layout.exponents = detail::monomial_exponents(q, model.basis.degree);
    layout.means = model.feature_means;
    layout.scales = model.feature_scales;
    const std::size_t p = layout.dims();
    if (p != model.coefficients.size()) throw Error("predict: coefficient count mismatch");

    std::vector<double> out(M, 0.0);
    const int pow_rows = model.basis.degree + 1;
    parallel::for_chunks(M, parallel::kDefaultChunk,
                         [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> phi(p);
        std::vector<double> powers(q * static_cast<std::size_t>(pow_rows));
        for (std::size_t m = begin; m < end; ++m) {
            layout.expand(features.row(m), phi, powers);
            double v = 0.0;
            for (std::size_t a = 0; a < p; ++a) v += model.coefficients[a] * phi[a];
            out[m] = v;
        }
    });
    return out;
}

/// fit + predict on the same cross-section (the common inner-loop pattern).
inline std::vector<double> fit_predict(const Array2& features,
                                       std::span<const double> targets,
                                       std::span<const double> weights,
                                       const BasisSpec& basis,
                                       RegressionModel* model_out = nullptr) {
    RegressionModel model = fit_conditional(features, targets, weights, basis);
    auto pred = predict(model, features);
    if (model_out) *model_out = std::move(model);
    return pred;
}

}  // namespace tqbsde
