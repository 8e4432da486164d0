#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/mesh.hpp"

namespace meshsim {

inline constexpr double kCompileTol = 1e-9;

struct CompileResult {
    PhaseConfig config;
    double residual = 0.0;      // max-abs error of reconstruct(config) * e^{-i global_phase} - U
    double global_phase = 0.0;  // reconstruct(config) = e^{i global_phase} U
};

/// Wrap every phase into [0, 2 pi). The cell transfer matrix is 2 pi
/// periodic in both theta and phi, so the implemented unitary is unchanged.
inline PhaseConfig canonicalize(PhaseConfig config) {
    for (auto* v : {&config.theta, &config.phi, &config.input_phases, &config.output_phases}) {
        for (double& x : *v) x = wrap_phase(x);
    }
    return config;
}

/// Unitary implemented by `config` on the ideal mesh.
inline UnitaryMatrix reconstruct(const PhaseConfig& config) {
    const MeshSpec spec = mesh_layout(config.n_modes);
    return UnitaryMatrix(forward(spec, config).matrix);
}

namespace detail {

struct PlacedCell {
    int top_mode;
    double theta;
    double phi;
};

inline double arg_or_zero(cplx z) { return z == cplx(0.0, 0.0) ? 0.0 : std::arg(z); }

inline constexpr double kNullThreshold = 1e-15;

/// Cell T(theta, phi) on columns (a, a+1), right-multiplied, that zeroes
/// w(r, a). Zero target: bar state.
inline PlacedCell null_from_right(const MatrixXc& w, Eigen::Index r, int a) {
    const cplx ua = w(r, a);
    const cplx ub = w(r, a + 1);
    if (std::abs(ua) <= kNullThreshold) return {a, kPi, 0.0};
    return {a, 2.0 * std::atan2(std::abs(ub), std::abs(ua)), arg_or_zero(ub) - std::arg(ua)};
}

/// Inverse cell T(theta, phi)^{-1} on rows (a, a+1), left-multiplied, that
/// zeroes w(a+1, col). Zero target: bar state.
inline PlacedCell null_from_left(const MatrixXc& w, int a, Eigen::Index col) {
    const cplx ua = w(a, col);
    const cplx ub = w(a + 1, col);
    if (std::abs(ub) <= kNullThreshold) return {a, kPi, 0.0};
    return {a, 2.0 * std::atan2(std::abs(ua), std::abs(ub)), kPi + arg_or_zero(ua) - std::arg(ub)};
}

inline Block cell_inverse(const PlacedCell& c) { return cell_block(c.theta, c.phi, 0.5, 0.5).adjoint(); }

/// w <- w * T on columns (a, a+1)
inline void apply_right(MatrixXc& w, const Block& b, int a) {
    const Eigen::VectorXcd left = w.col(a);
    const Eigen::VectorXcd right = w.col(a + 1);
    w.col(a) = left * b(0, 0) + right * b(1, 0);
    w.col(a + 1) = left * b(0, 1) + right * b(1, 1);
}

}  // namespace detail

/// Program the square mesh to implement U.
///
/// Elements below the anti-diagonals are nulled alternately by cells
/// applied from the right (U T) and inverse cells applied from the left
/// (T^-1 U), leaving a diagonal D:
///   U = T_1 ... T_p  D  R_q^-1 ... R_1^-1.
/// D is then moved through the inverse cells with D R^-1(theta, phi) =
/// R(theta, phi') D', which leaves only forward cells and a final diagonal
/// that is absorbed by the input phase shifters.
inline CompileResult decompose(const UnitaryMatrix& u) {
    const int n = static_cast<int>(u.dim());
    if (n < 2) throw DimensionError("decompose needs dimension >= 2");
    if (!is_unitary(u.matrix(), kUnitaryTol)) throw PreconditionError("decompose target is not unitary");

    MatrixXc w = u.eigen();
    std::vector<detail::PlacedCell> right;
    std::vector<detail::PlacedCell> left;
    for (int i = 0; i < n - 1; ++i) {
        if (i % 2 == 0) {
            for (int j = 0; j <= i; ++j) {
                const auto cell = detail::null_from_right(w, n - 1 - j, i - j);
                detail::apply_right(w, detail::cell_block(cell.theta, cell.phi, 0.5, 0.5), cell.top_mode);
                right.push_back(cell);
            }
        } else {
            for (int j = 0; j <= i; ++j) {
                const int row = n - 1 - i + j;
                const auto cell = detail::null_from_left(w, row - 1, j);
                detail::apply_left(w, detail::cell_inverse(cell), cell.top_mode);
                left.push_back(cell);
            }
        }
    }

    double worst = 0.0;
    int worst_j = 0;
    int worst_k = 0;
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            if (j != k && std::abs(w(j, k)) > worst) {
                worst = std::abs(w(j, k));
                worst_j = j;
                worst_k = k;
            }
        }
    }
    if (worst > kCompileTol) {
        std::ostringstream msg;
        msg << "nulling left |W(" << worst_j << "," << worst_k << ")| = " << worst;
        throw NumericalError(msg.str());
    }

    std::vector<cplx> d(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) d[static_cast<std::size_t>(k)] = w(k, k) / std::abs(w(k, k));

    // D R^-1(theta, phi) = R(theta, phi') D' on modes (m, m+1):
    //   phi' = arg d_m - arg d_{m+1},
    //   d'_m = e^{i(theta - pi)} d_m,  d'_{m+1} = e^{i(theta - pi)} d_m e^{i phi}.
    const cplx i1(0.0, 1.0);
    std::vector<detail::PlacedCell> propagation;
    propagation.reserve(right.size() + left.size());
    for (auto it = right.rbegin(); it != right.rend(); ++it) {
        const auto m = static_cast<std::size_t>(it->top_mode);
        const double phi_new = std::arg(d[m]) - std::arg(d[m + 1]);
        const cplx turn = std::exp(i1 * (it->theta - kPi));
        const cplx dm = d[m];
        d[m] = turn * dm;
        d[m + 1] = turn * dm * std::exp(i1 * it->phi);
        propagation.push_back({it->top_mode, it->theta, phi_new});
    }
    // `propagation` now holds R'_q ... R'_1 in matrix-product order; light meets R'_1 first.
    std::reverse(propagation.begin(), propagation.end());
    for (auto it = left.rbegin(); it != left.rend(); ++it) propagation.push_back(*it);

    const MeshSpec spec = mesh_layout(n);
    PhaseConfig config = PhaseConfig::uniform(spec, kPi, 0.0);
    std::vector<int> next_layer(static_cast<std::size_t>(n), 0);
    std::vector<bool> used(spec.cell_count(), false);
    for (const auto& cell : propagation) {
        const auto m = static_cast<std::size_t>(cell.top_mode);
        int layer = std::max(next_layer[m], next_layer[m + 1]);
        if ((layer - cell.top_mode) % 2 != 0) ++layer;
        const int id = spec.find(layer, cell.top_mode);
        if (id < 0 || used[static_cast<std::size_t>(id)]) {
            throw NumericalError("decomposed cells do not fit the square mesh layout");
        }
        used[static_cast<std::size_t>(id)] = true;
        config.theta[static_cast<std::size_t>(id)] = cell.theta;
        config.phi[static_cast<std::size_t>(id)] = cell.phi;
        next_layer[m] = next_layer[m + 1] = layer + 1;
    }

    // Input shifters apply e^{-i phase}; factor out d_0 as the global phase.
    const double global = -std::arg(d[0]);
    for (int k = 0; k < n; ++k) {
        config.input_phases[static_cast<std::size_t>(k)] = -(std::arg(d[static_cast<std::size_t>(k)]) + global);
    }

    CompileResult result;
    result.config = canonicalize(std::move(config));
    result.global_phase = wrap_phase(global);
    const MatrixXc rebuilt = forward(spec, result.config).matrix.eigen();
    result.residual = max_abs_diff(rebuilt * std::exp(-i1 * result.global_phase), u.eigen());
    if (!(result.residual < kCompileTol)) {
        std::ostringstream msg;
        msg << "reconstruction residual " << result.residual << " exceeds " << kCompileTol;
        throw NumericalError(msg.str());
    }
    return result;
}

}  // namespace meshsim
