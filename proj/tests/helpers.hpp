#pragma once

#include <vector>

#include "tqbsde/tqbsde.hpp"

namespace tt {

using namespace tqbsde;

/// n-component spec with zero generators and a constant-zero terminal.
inline ProblemSpec zero_spec(int n = 1, int d = 1, double T = 0.25, double C = 0.0) {
    ProblemSpec spec;
    spec.n = n;
    spec.d = d;
    spec.horizon = T;
    spec.lipschitz_C = C;
    spec.alpha = 0.0;
    spec.terminal = TerminalDescriptor::constant(std::vector<double>(n, 0.0));
    spec.l_parts.assign(n, GeneratorDescriptor::zero());
    spec.h_parts.assign(n, GeneratorDescriptor::zero());
    spec.k_parts.assign(n > 0 ? n - 1 : 0, GeneratorDescriptor::zero());
    spec.check_structure();
    return spec;
}

/// Scalar benchmark: xi = W_T clamped at +-3, zero generators; closed form
/// Y_t = W_t + (T - t)/2, Z = 1.
inline ProblemSpec scalar_wt_spec(double T = 0.25, double clamp = 3.0) {
    ProblemSpec spec = zero_spec(1, 1, T);
    spec.terminal = TerminalDescriptor::clamped_affine({1.0}, {0.0}, {clamp});
    spec.check_structure();
    return spec;
}

/// Two-component triangular benchmark: xi = (clamped W_T, 0), k2 = |z1|^2;
/// closed form Y1 = W_t + (T-t)/2, Z1 = 1, Y2 = -(T-t), Z2 = 0.
inline ProblemSpec triangular_n2_spec(double T = 0.25, double clamp = 3.0) {
    ProblemSpec spec = zero_spec(2, 1, T, 1.0);
    spec.terminal =
        TerminalDescriptor::clamped_affine({1.0, 0.0}, {0.0, 0.0}, {clamp, 0.0});
    spec.k_parts = {GeneratorDescriptor::z_block_quadratic({1.0})};
    spec.check_structure();
    return spec;
}

/// Manufactured global case: h_i = a_i <= 0, xi = 0, l = 0, k_i = sum of
/// lower squared rows; exact solution Y_i = a_i (T - t), Z = 0.
inline ProblemSpec manufactured_global_spec(double T, std::vector<double> a,
                                            double C = 1.0) {
    const int n = static_cast<int>(a.size());
    ProblemSpec spec = zero_spec(n, 1, T, C);
    for (int i = 0; i < n; ++i)
        spec.h_parts[static_cast<std::size_t>(i)] =
            GeneratorDescriptor::constant(a[static_cast<std::size_t>(i)]);
    for (int i = 2; i <= n; ++i)
        spec.k_parts[static_cast<std::size_t>(i - 2)] =
            GeneratorDescriptor::z_block_quadratic(
                std::vector<double>(static_cast<std::size_t>(i - 1), 1.0));
    spec.global_flags.h_nonpositive = true;
    spec.global_flags.l_bounded = true;
    spec.check_structure();
    return spec;
}

inline MatView mat_view(const Array2& a) { return MatView{a.data(), a.rows(), a.cols()}; }

}  // namespace tt
