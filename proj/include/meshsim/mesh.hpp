#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/random.hpp"

namespace meshsim {

/// One programmable node: a Mach-Zehnder interferometer coupling modes
/// `top_mode` and `top_mode + 1`, placed in column `layer` of the mesh.
struct CellSite {
    int cell_id = 0;
    int layer = 0;
    int top_mode = 0;
};

/// Square (rectangular-lattice) mesh topology.
struct MeshSpec {
    int n_modes = 0;
    std::vector<CellSite> cells;  // ordered by layer, then top_mode; cells[i].cell_id == i

    std::size_t cell_count() const noexcept { return cells.size(); }
    std::size_t heater_count() const noexcept { return 2 * cells.size(); }

    int depth() const noexcept {
        int d = 0;
        for (const auto& c : cells) d = std::max(d, c.layer + 1);
        return d;
    }

    /// Id of the cell at (layer, top_mode), or -1.
    int find(int layer, int top_mode) const noexcept {
        for (const auto& c : cells) {
            if (c.layer == layer && c.top_mode == top_mode) return c.cell_id;
        }
        return -1;
    }

    const CellSite& at(int cell_id) const {
        if (cell_id < 0 || static_cast<std::size_t>(cell_id) >= cells.size()) {
            throw RangeError("cell id " + std::to_string(cell_id) + " not in mesh");
        }
        return cells[static_cast<std::size_t>(cell_id)];
    }
};

/// Full phase program: internal (theta) and external (phi) phase of every
/// cell, indexed by cell_id, plus one phase per input and output mode.
/// Boundary phase shifters act as diag(exp(-i * phase)).
struct PhaseConfig {
    int n_modes = 0;
    std::vector<double> theta;
    std::vector<double> phi;
    std::vector<double> input_phases;
    std::vector<double> output_phases;

    static PhaseConfig uniform(const MeshSpec& spec, double theta_all, double phi_all) {
        PhaseConfig c;
        c.n_modes = spec.n_modes;
        c.theta.assign(spec.cell_count(), theta_all);
        c.phi.assign(spec.cell_count(), phi_all);
        c.input_phases.assign(static_cast<std::size_t>(spec.n_modes), 0.0);
        c.output_phases.assign(static_cast<std::size_t>(spec.n_modes), 0.0);
        return c;
    }

    void validate(const MeshSpec& spec) const {
        if (n_modes != spec.n_modes) {
            throw DimensionError("config has " + std::to_string(n_modes) + " modes, mesh has " +
                                 std::to_string(spec.n_modes));
        }
        if (theta.size() != spec.cell_count() || phi.size() != spec.cell_count()) {
            throw ConfigError("config must give theta and phi for all " +
                              std::to_string(spec.cell_count()) + " cells");
        }
        const auto n = static_cast<std::size_t>(n_modes);
        if (input_phases.size() != n || output_phases.size() != n) {
            throw ConfigError("config must give one input and one output phase per mode");
        }
        auto finite = [](const std::vector<double>& v) {
            for (double x : v) {
                if (!std::isfinite(x)) return false;
            }
            return true;
        };
        if (!finite(theta) || !finite(phi) || !finite(input_phases) || !finite(output_phases)) {
            throw ConfigError("config contains non-finite phases");
        }
    }
};

/// Deviations from the ideal device. Empty vectors mean "ideal" for that
/// field.
///
/// Heater index h addresses theta of cell h/2 when h is even and phi of cell
/// h/2 when h is odd; the same indexing is used for the two couplers of each
/// cell (2c = input-side coupler, 2c + 1 = output-side coupler).
struct ImperfectionModel {
    std::vector<double> coupler_splitting;        // power ratio k per coupler, 2 per cell
    std::vector<double> input_coupling_loss_db;   // per input mode
    std::vector<double> output_coupling_loss_db;  // per output mode
    double propagation_loss_db_per_layer = 0.0;
    double phase_noise_sigma = 0.0;  // radians
    Eigen::MatrixXd crosstalk;       // heater x heater, zero diagonal

    static ImperfectionModel ideal() { return {}; }

    /// Mode-uniform losses: `coupling_db` split evenly between input and
    /// output facets, `propagation_db` spread evenly over the mesh depth.
    static ImperfectionModel uniform_loss(int n_modes, double coupling_db, double propagation_db) {
        ImperfectionModel imp;
        imp.input_coupling_loss_db.assign(static_cast<std::size_t>(n_modes), coupling_db / 2.0);
        imp.output_coupling_loss_db.assign(static_cast<std::size_t>(n_modes), coupling_db / 2.0);
        imp.propagation_loss_db_per_layer = propagation_db / n_modes;
        return imp;
    }

    bool lossy() const noexcept {
        if (propagation_loss_db_per_layer > 0.0) return true;
        for (double x : input_coupling_loss_db) {
            if (x > 0.0) return true;
        }
        for (double x : output_coupling_loss_db) {
            if (x > 0.0) return true;
        }
        return false;
    }

    double splitting(std::size_t coupler) const {
        return coupler_splitting.empty() ? 0.5 : coupler_splitting[coupler];
    }

    void validate(const MeshSpec& spec) const {
        const auto n = static_cast<std::size_t>(spec.n_modes);
        if (!coupler_splitting.empty() && coupler_splitting.size() != 2 * spec.cell_count()) {
            throw DimensionError("coupler_splitting needs two entries per cell");
        }
        for (double k : coupler_splitting) {
            if (!(k >= 0.0 && k <= 1.0)) throw DomainError("splitting ratio outside [0, 1]");
        }
        for (const auto* v : {&input_coupling_loss_db, &output_coupling_loss_db}) {
            if (!v->empty() && v->size() != n) throw DimensionError("coupling loss needs one entry per mode");
            for (double x : *v) {
                if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("loss must be a finite value >= 0 dB");
            }
        }
        if (!(propagation_loss_db_per_layer >= 0.0) || !std::isfinite(propagation_loss_db_per_layer)) {
            throw DomainError("propagation loss must be a finite value >= 0 dB");
        }
        if (!(phase_noise_sigma >= 0.0) || !std::isfinite(phase_noise_sigma)) {
            throw DomainError("phase noise sigma must be >= 0");
        }
        if (crosstalk.size() != 0) {
            const auto h = static_cast<Eigen::Index>(spec.heater_count());
            if (crosstalk.rows() != h || crosstalk.cols() != h) {
                throw DimensionError("crosstalk must be a heater x heater matrix");
            }
            if (!crosstalk.allFinite()) throw DomainError("crosstalk contains non-finite entries");
            if (crosstalk.diagonal().cwiseAbs().maxCoeff() != 0.0) throw DomainError("crosstalk diagonal must be zero");
        }
    }
};

struct ScatteringMatrix {
    ComplexMatrix matrix;
    bool lossy = false;
};

namespace detail {

using Block = Eigen::Matrix2cd;

inline Block directional_coupler(double k) {
    const double t = std::sqrt(1.0 - k);
    const double r = std::sqrt(k);
    Block dc;
    dc << cplx(t, 0.0), cplx(0.0, -r), cplx(0.0, -r), cplx(t, 0.0);
    return dc;
}

inline Block cell_block(double theta, double phi, double k1, double k2) {
    if (!(k1 >= 0.0 && k1 <= 1.0) || !(k2 >= 0.0 && k2 <= 1.0)) {
        throw DomainError("splitting ratio outside [0, 1]");
    }
    if (!std::isfinite(theta) || !std::isfinite(phi)) throw DomainError("phases must be finite");
    const cplx i(0.0, 1.0);
    const cplx et = std::exp(-i * theta);
    const cplx ep = std::exp(-i * phi);
    Block s;
    if (k1 == 0.5 && k2 == 0.5) {
        s << 0.5 * (1.0 - et), -0.5 * i * (et + 1.0), -0.5 * i * (et + 1.0) * ep, -0.5 * (1.0 - et) * ep;
        return s;
    }
    // PS_ext(phi) * DC(k2) * PS(theta) * DC(k1); both phase shifters sit on the lower arm.
    Block internal = Block::Identity();
    internal(1, 1) = et;
    Block external = Block::Identity();
    external(1, 1) = ep;
    return external * directional_coupler(k2) * internal * directional_coupler(k1);
}

/// rows (m, m+1) of `s` <- block * rows (m, m+1)
inline void apply_left(MatrixXc& s, const Block& b, int m) {
    const Eigen::RowVectorXcd top = s.row(m);
    const Eigen::RowVectorXcd bottom = s.row(m + 1);
    s.row(m) = b(0, 0) * top + b(0, 1) * bottom;
    s.row(m + 1) = b(1, 0) * top + b(1, 1) * bottom;
}

inline double db_to_amplitude(double db) { return std::pow(10.0, -db / 20.0); }

}  // namespace detail

/// Transfer matrix of one unit cell. At k1 = k2 = 0.5 this is the ideal
/// closed form
///   1/2 [[1 - e^{-i theta},             -i (e^{-i theta} + 1)],
///        [-i (e^{-i theta} + 1) e^{-i phi}, -(1 - e^{-i theta}) e^{-i phi}]].
inline ComplexMatrix unit_cell_matrix(double theta, double phi, double k1 = 0.5, double k2 = 0.5) {
    return ComplexMatrix(MatrixXc(detail::cell_block(theta, phi, k1, k2)));
}

/// N x N identity with the 2x2 block on modes (top_mode, top_mode + 1).
inline ComplexMatrix embed_cell(const ComplexMatrix& block, int top_mode, int n_modes) {
    if (block.rows() != 2 || block.cols() != 2) throw DimensionError("cell block must be 2x2");
    if (n_modes < 2 || top_mode < 0 || top_mode > n_modes - 2) {
        throw DimensionError("top_mode " + std::to_string(top_mode) + " out of range for " +
                             std::to_string(n_modes) + " modes");
    }
    MatrixXc m = MatrixXc::Identity(n_modes, n_modes);
    m.block(top_mode, top_mode, 2, 2) = block.eigen();
    return ComplexMatrix(std::move(m));
}

/// Square mesh: n_modes layers, even layers hold cells at top modes
/// 0, 2, 4, ..., odd layers at 1, 3, 5, ...; n(n-1)/2 cells in total.
inline MeshSpec mesh_layout(int n_modes) {
    if (n_modes < 2) throw DimensionError("mesh needs at least 2 modes");
    MeshSpec spec;
    spec.n_modes = n_modes;
    int id = 0;
    for (int layer = 0; layer < n_modes; ++layer) {
        for (int m = layer % 2; m + 1 < n_modes; m += 2) {
            spec.cells.push_back(CellSite{id++, layer, m});
        }
    }
    return spec;
}

/// Phases actually seen by the light: programmed phases plus linear
/// crosstalk, plus Gaussian noise when a seed is given. Returned in heater
/// order (theta_0, phi_0, theta_1, phi_1, ...).
inline Eigen::VectorXd effective_heater_phases(const MeshSpec& spec, const PhaseConfig& config,
                                               const ImperfectionModel& imp,
                                               std::optional<std::uint64_t> noise_seed) {
    const auto cells = spec.cell_count();
    Eigen::VectorXd programmed(static_cast<Eigen::Index>(2 * cells));
    for (std::size_t c = 0; c < cells; ++c) {
        programmed(static_cast<Eigen::Index>(2 * c)) = config.theta[c];
        programmed(static_cast<Eigen::Index>(2 * c + 1)) = config.phi[c];
    }
    Eigen::VectorXd effective = programmed;
    if (imp.crosstalk.size() != 0) effective += imp.crosstalk * programmed;
    if (noise_seed && imp.phase_noise_sigma > 0.0) {
        Rng rng = make_rng(*noise_seed);
        std::normal_distribution<double> gauss(0.0, imp.phase_noise_sigma);
        for (Eigen::Index h = 0; h < effective.size(); ++h) effective(h) += gauss(rng);
    }
    return effective;
}

/// Classical scattering matrix of the programmed mesh:
///   S = D_out L_out (prod over layers, last layer leftmost) L_in D_in
/// with propagation loss applied once per layer.
inline ScatteringMatrix forward(const MeshSpec& spec, const PhaseConfig& config,
                                const ImperfectionModel& imp = {},
                                std::optional<std::uint64_t> noise_seed = std::nullopt) {
    config.validate(spec);
    imp.validate(spec);
    const int n = spec.n_modes;
    const Eigen::VectorXd phases = effective_heater_phases(spec, config, imp, noise_seed);
    const cplx i(0.0, 1.0);

    MatrixXc s = MatrixXc::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        double amp = 1.0;
        if (!imp.input_coupling_loss_db.empty()) amp = detail::db_to_amplitude(imp.input_coupling_loss_db[k]);
        s(k, k) = amp * std::exp(-i * config.input_phases[static_cast<std::size_t>(k)]);
    }

    const double layer_amp = detail::db_to_amplitude(imp.propagation_loss_db_per_layer);
    const int depth = spec.depth();
    std::size_t next = 0;
    for (int layer = 0; layer < depth; ++layer) {
        for (; next < spec.cells.size() && spec.cells[next].layer == layer; ++next) {
            const auto& site = spec.cells[next];
            const auto c = static_cast<std::size_t>(site.cell_id);
            const auto block = detail::cell_block(phases(static_cast<Eigen::Index>(2 * c)),
                                                  phases(static_cast<Eigen::Index>(2 * c + 1)),
                                                  imp.splitting(2 * c), imp.splitting(2 * c + 1));
            detail::apply_left(s, block, site.top_mode);
        }
        if (imp.propagation_loss_db_per_layer > 0.0) s *= layer_amp;
    }

    for (int j = 0; j < n; ++j) {
        double amp = 1.0;
        if (!imp.output_coupling_loss_db.empty()) amp = detail::db_to_amplitude(imp.output_coupling_loss_db[j]);
        s.row(j) *= amp * std::exp(-i * config.output_phases[static_cast<std::size_t>(j)]);
    }
    return ScatteringMatrix{ComplexMatrix(std::move(s)), imp.lossy()};
}

/// Per-entry transmission in dB, -10 log10 |S_jk|^2. Zero transmission maps
/// to +infinity.
inline Eigen::MatrixXd insertion_loss_matrix(const ScatteringMatrix& s) {
    const MatrixXc& m = s.matrix.eigen();
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            const double p = std::norm(m(j, k));
            out(j, k) = p > 0.0 ? -10.0 * std::log10(p) : std::numeric_limits<double>::infinity();
        }
    }
    return out;
}

}  // namespace meshsim
