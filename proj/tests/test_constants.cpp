#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"

using namespace tqbsde;
using Catch::Approx;

namespace {

ProblemSpec unit_spec() {
    // n = 1, C = 0, |xi| = 0, alpha = 0
    return tt::zero_spec(1, 1, 0.25, 0.0);
}

}  // namespace

TEST_CASE("unit constant chain is exact", "[constants]") {
    const auto spec = unit_spec();
    const auto pr = surrogate_providers();
    const auto lc = local_constants(spec, pr);
    CHECK(lc.Delta_star == 1.0);
    CHECK(lc.delta_star == 1.0);
    CHECK(lc.A == Approx(2.0).margin(1e-12));
    CHECK(lc.B == Approx(std::sqrt(2.0)).margin(1e-12));
    CHECK(lc.eta == Approx(0.0625).margin(1e-12));

    const auto ode = beta_ode(spec);
    CHECK(ode.K2 == 0.0);
    CHECK(ode.K1 == Approx(6.0).margin(1e-12));
    CHECK(ode.lambda == Approx(6.0).margin(1e-12));
    CHECK(ode.beta(0.1) == Approx(6.0).margin(1e-12));

    CHECK(std::isinf(epsilon0(spec, pr)));
    // at bound 6: A = 8, B^2 = 2(e^6 + 6); the control term of eta dominates
    const double eta6 =
        std::min(1.0 / 100.0, 1.0 / (2.0 * (std::exp(6.0) + 6.0)));
    CHECK(eta_for_bound(spec, pr, 6.0) == Approx(eta6).margin(1e-12));
    CHECK(eta_for_bound(spec, pr, 0.0) == Approx(0.0625).margin(1e-12));
}

TEST_CASE("A grows with the terminal bound and eta respects its cap", "[constants]") {
    auto spec = tt::zero_spec(2, 1, 0.3, 0.7);
    const auto pr = surrogate_providers();
    double prev_A = -1.0;
    for (double bound : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        spec.terminal = TerminalDescriptor::constant({bound, 0.0});
        spec.check_structure();
        const auto lc = local_constants(spec, pr);
        CHECK(lc.A > prev_A);
        CHECK(lc.eta <= 1.0 / ((2.0 + lc.A) * (2.0 + lc.A)) + 1e-15);
        CHECK(lc.eta > 0.0);
        prev_A = lc.A;
    }
}

TEST_CASE("contraction constants: C = 0 collapses the bars", "[constants]") {
    const auto spec = unit_spec();
    const auto pr = surrogate_providers();
    const auto lc = local_constants(spec, pr);
    const auto s4 = step4_constants(spec, pr, lc.B);
    CHECK(s4.Abar == 0.0);
    CHECK(s4.Bbar == 0.0);
    CHECK(s4.Cbar == 0.0);
    CHECK(std::isinf(s4.etabar1));
    CHECK(std::isinf(s4.etabar2));
}

TEST_CASE("etabar2 exponent collapses at negative alpha", "[constants]") {
    auto spec = tt::zero_spec(2, 1, 0.3, 0.8);
    spec.alpha = -0.5;
    spec.check_structure();
    const auto pr = surrogate_providers();
    const auto lc = local_constants(spec, pr);
    const auto s4 = step4_constants(spec, pr, lc.B);
    // alpha+ = 0, so the exponent 1/(1 - alpha+) is 1: etabar2 equals its base
    const double L4 = pr.L(4.0);
    const double pile =
        2.0 + ((s4.Cbar * 16.0 + 8.0) / s4.delta_bar) *
                  (1.0 + std::pow(s4.Cbar / s4.delta_bar, 2.0));
    const double base =
        1.0 / (36.0 * 0.8 * 0.8 * L4 * L4 * s4.Delta_bar * s4.Delta_bar * 3.0 * pile);
    CHECK(s4.etabar2 == Approx(base).epsilon(1e-12));
}

TEST_CASE("Cbar increases with the control bound", "[constants]") {
    auto spec = tt::zero_spec(2, 1, 0.3, 0.8);
    const auto pr = surrogate_providers();
    double prev = -1.0;
    for (double B : {0.5, 1.0, 2.0, 3.0}) {
        const auto s4 = step4_constants(spec, pr, B);
        CHECK(s4.Cbar > prev);
        prev = s4.Cbar;
    }
}

TEST_CASE("beta closed form is checked against numeric integration", "[constants]") {
    // the internal RK4 self-check throws on disagreement; exercising a few
    // nontrivial specs is enough to arm it
    for (double C : {0.0, 0.2, 0.5}) {
        auto spec = tt::zero_spec(2, 1, 0.4, C);
        spec.terminal = TerminalDescriptor::constant({0.3, -0.2});
        spec.check_structure();
        const auto ode = beta_ode(spec);
        CHECK(ode.lambda >= ode.K1);
        CHECK(ode.beta(spec.horizon) == Approx(ode.K1).margin(1e-12));
        CHECK(ode.beta(0.0) == Approx(ode.lambda).margin(1e-12));
        // decreasing in t
        double prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 10; ++i) {
            const double t = spec.horizon * i / 10.0;
            const double b = ode.beta(t);
            CHECK(b <= prev * (1.0 + 1e-13));
            prev = b;
        }
    }
}

TEST_CASE("epsilon0 sentinel, positivity and monotonicity in C", "[constants]") {
    const auto pr = surrogate_providers();
    auto spec = tt::zero_spec(1, 1, 0.3, 0.0);
    CHECK(std::isinf(epsilon0(spec, pr)));

    double prev = std::numeric_limits<double>::infinity();
    for (double C : {0.05, 0.1, 0.2, 0.4}) {
        spec.lipschitz_C = C;
        spec.check_structure();
        const double e0 = epsilon0(spec, pr);
        CHECK(e0 > 0.0);
        CHECK(e0 < prev);
        prev = e0;
    }
}

TEST_CASE("eta_for_bound reproduces eta at the declared bound and shrinks at lambda",
          "[constants]") {
    auto spec = tt::zero_spec(2, 1, 0.3, 0.4);
    spec.terminal = TerminalDescriptor::constant({0.5, 0.0});
    spec.check_structure();
    const auto pr = surrogate_providers();
    const auto lc = local_constants(spec, pr);
    CHECK(eta_for_bound(spec, pr, spec.terminal_bound()) == lc.eta);
    const auto ode = beta_ode(spec);
    REQUIRE(ode.lambda > spec.terminal_bound());
    CHECK(eta_for_bound(spec, pr, ode.lambda) <= lc.eta);
    CHECK_THROWS_AS(eta_for_bound(spec, pr, -1.0), Error);
}

TEST_CASE("full report is pure and repeatable", "[constants]") {
    auto spec = tt::triangular_n2_spec();
    const auto pr = surrogate_providers();
    const auto a = full_constants_report(spec, pr);
    const auto b = full_constants_report(spec, pr);
    CHECK(a.A == b.A);
    CHECK(a.B == b.B);
    CHECK(a.eta == b.eta);
    CHECK(a.lambda == b.lambda);
    CHECK(a.eta_lambda == b.eta_lambda);
    CHECK(a.epsilon0 == b.epsilon0);
    CHECK(a.provider_name == "surrogate");
    CHECK_FALSE(a.notes.empty());
    CHECK(a.beta_bar == Approx(a.K1));
}

TEST_CASE("provider invariant breaches are rejected", "[constants]") {
    auto spec = tt::zero_spec(1, 1, 0.25, 0.5);
    ConstantProviders bad = surrogate_providers();
    bad.delta_fn = [](double) { return 1.5; };  // outside (0, 1]
    CHECK_THROWS_AS(local_constants(spec, bad), ProviderError);
    ConstantProviders bad2 = surrogate_providers();
    bad2.Delta_fn = [](double) { return 0.5; };  // below 1
    CHECK_THROWS_AS(local_constants(spec, bad2), ProviderError);
}
