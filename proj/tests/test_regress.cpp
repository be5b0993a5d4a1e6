#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "helpers.hpp"

using namespace tqbsde;
using Catch::Approx;

namespace {

Array2 random_features(std::size_t M, std::size_t p, std::uint64_t seed) {
    Array2 f(M, p);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t j = 0; j < p; ++j) f(m, j) = rng::normal(seed, m, j);
    return f;
}

}  // namespace

TEST_CASE("constant targets reproduce exactly", "[regress]") {
    const auto f = random_features(500, 2, 1);
    std::vector<double> targets(500, 7.0), weights(500, 1.0);
    BasisSpec basis;
    basis.degree = 2;
    auto model = fit_conditional(f, targets, weights, basis);
    auto pred = predict(model, f);
    for (double v : pred) CHECK(v == Approx(7.0).margin(1e-9));

    BasisSpec constant_only;
    constant_only.degree = 0;
    auto m0 = fit_conditional(f, targets, weights, constant_only);
    auto p0 = predict(m0, f);
    for (double v : p0) CHECK(v == 7.0);
}

TEST_CASE("exact linear fit at ridge zero", "[regress]") {
    const auto f = random_features(400, 1, 2);
    std::vector<double> targets(400);
    for (std::size_t m = 0; m < 400; ++m) targets[m] = 2.0 * f(m, 0);
    BasisSpec basis;
    basis.degree = 1;
    basis.ridge = 0.0;
    auto pred = fit_predict(f, targets, {}, basis);
    for (std::size_t m = 0; m < 400; ++m)
        CHECK(pred[m] == Approx(targets[m]).margin(1e-10));
}

TEST_CASE("normal equations agree with a direct dense solve", "[regress]") {
    // independent oracle: assemble the basis matrix explicitly and solve the
    // weighted normal equations with plain Eigen
    const std::size_t M = 600;
    const auto f = random_features(M, 1, 3);
    std::vector<double> targets(M), weights(M);
    for (std::size_t m = 0; m < M; ++m) {
        targets[m] = f(m, 0) * f(m, 0);  // quadratic truth, linear basis
        weights[m] = 1.0 + 0.5 * rng::uniform(3, m, 99);
    }
    BasisSpec basis;
    basis.degree = 1;
    basis.ridge = 0.0;
    RegressionModel model = fit_conditional(f, targets, weights, basis);
    auto pred = predict(model, f);

    // oracle on raw (unstandardized) features; the fitted subspace is the
    // same affine span, so predictions must agree
    Eigen::MatrixXd Phi(M, 2);
    Eigen::VectorXd t(M), w(M);
    for (std::size_t m = 0; m < M; ++m) {
        Phi(static_cast<Eigen::Index>(m), 0) = 1.0;
        Phi(static_cast<Eigen::Index>(m), 1) = f(m, 0);
        t(static_cast<Eigen::Index>(m)) = targets[m];
        w(static_cast<Eigen::Index>(m)) = weights[m];
    }
    Eigen::MatrixXd G = Phi.transpose() * w.asDiagonal() * Phi;
    Eigen::VectorXd rhs = Phi.transpose() * (w.array() * t.array()).matrix();
    Eigen::VectorXd coef = G.ldlt().solve(rhs);
    double worst = 0.0;
    double residual_dot = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        const double oracle = coef(0) + coef(1) * f(m, 0);
        worst = std::max(worst, std::fabs(pred[m] - oracle));
        residual_dot += weights[m] * (targets[m] - pred[m]) * f(m, 0);
    }
    CHECK(worst < 1e-8);
    // weighted residual orthogonal to the basis
    CHECK(std::fabs(residual_dot) / static_cast<double>(M) < 1e-8);
}

TEST_CASE("predict is linear in the coefficients", "[regress]") {
    const auto f = random_features(300, 2, 4);
    std::vector<double> targets(300);
    for (std::size_t m = 0; m < 300; ++m) targets[m] = f(m, 0) - 0.3 * f(m, 1);
    BasisSpec basis;
    basis.degree = 2;
    auto model = fit_conditional(f, targets, {}, basis);
    auto base = predict(model, f);
    RegressionModel scaled = model;
    for (double& c : scaled.coefficients) c *= 3.0;
    auto tripled = predict(scaled, f);
    for (std::size_t m = 0; m < 300; ++m)
        CHECK(tripled[m] == Approx(3.0 * base[m]).margin(1e-12));
}

TEST_CASE("weighted mean preservation with a constant-only basis", "[regress]") {
    const auto f = random_features(250, 1, 5);
    std::vector<double> targets(250), weights(250);
    double wsum = 0.0, wy = 0.0;
    for (std::size_t m = 0; m < 250; ++m) {
        targets[m] = rng::normal(6, m, 0);
        weights[m] = rng::uniform(7, m, 0);
        wsum += weights[m];
        wy += weights[m] * targets[m];
    }
    BasisSpec basis;
    basis.degree = 0;
    auto pred = fit_predict(f, targets, weights, basis);
    for (double v : pred) CHECK(v == wy / wsum);
}

TEST_CASE("ridge monotonicity of the coefficient norm", "[regress]") {
    const auto f = random_features(300, 2, 8);
    std::vector<double> targets(300);
    for (std::size_t m = 0; m < 300; ++m)
        targets[m] = std::sin(f(m, 0)) + 0.2 * f(m, 1) + 0.05 * rng::normal(9, m, 1);
    double prev = std::numeric_limits<double>::infinity();
    for (double ridge : {0.0, 1e-4, 1e-2, 1.0, 100.0}) {
        BasisSpec basis;
        basis.degree = 2;
        basis.ridge = ridge;
        auto model = fit_conditional(f, targets, {}, basis);
        double norm = 0.0;
        for (std::size_t c = 1; c < model.coefficients.size(); ++c)
            norm += model.coefficients[c] * model.coefficients[c];
        CHECK(norm <= prev * (1.0 + 1e-12));
        prev = norm;
    }
}

TEST_CASE("degenerate columns are rescued by ridge, not fatal", "[regress]") {
    Array2 f(100, 1, 0.0);  // all-identical features
    std::vector<double> targets(100, 3.25);
    BasisSpec basis;
    basis.degree = 2;
    auto pred = fit_predict(f, targets, {}, basis);
    for (double v : pred) CHECK(v == Approx(3.25).margin(1e-7));
}

TEST_CASE("all-zero weights are a singular fit", "[regress]") {
    const auto f = random_features(50, 1, 10);
    std::vector<double> targets(50, 1.0), weights(50, 0.0);
    BasisSpec basis;
    CHECK_THROWS_AS(fit_conditional(f, targets, weights, basis), SingularFitError);
}

TEST_CASE("fit is deterministic across worker counts", "[regress]") {
    const auto f = random_features(5000, 2, 11);
    std::vector<double> targets(5000);
    for (std::size_t m = 0; m < 5000; ++m)
        targets[m] = std::cos(f(m, 0)) * f(m, 1) + 0.1 * rng::normal(12, m, 0);
    BasisSpec basis;
    basis.degree = 2;
    parallel::set_worker_count(1);
    auto m1 = fit_conditional(f, targets, {}, basis);
    parallel::set_worker_count(3);
    auto m2 = fit_conditional(f, targets, {}, basis);
    parallel::set_worker_count(0);
    REQUIRE(m1.coefficients.size() == m2.coefficients.size());
    for (std::size_t c = 0; c < m1.coefficients.size(); ++c)
        CHECK(m1.coefficients[c] == m2.coefficients[c]);
}
