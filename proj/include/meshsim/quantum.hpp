#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/mesh.hpp"

namespace meshsim {

using ModePair = std::pair<int, int>;

/// Photon-pair source. The wavepacket overlap at delay tau is
/// v(tau) = v0 exp(-tau^2 / (2 sigma^2)).
struct SourceModel {
    double base_indistinguishability = 1.0;  // v0
    double coherence_time_sigma = 1e-12;     // seconds
    double pair_rate = 1.0;                  // counts per second, scaling only

    void validate() const {
        if (!(base_indistinguishability >= 0.0 && base_indistinguishability <= 1.0)) {
            throw DomainError("indistinguishability must lie in [0, 1]");
        }
        if (!(coherence_time_sigma > 0.0) || !std::isfinite(coherence_time_sigma)) {
            throw DomainError("coherence time must be positive");
        }
        if (!(pair_rate >= 0.0)) throw DomainError("pair rate must be >= 0");
    }
};

/// Delay scan normalized so the distinguishable plateau averages to 1.
struct HomCurve {
    int cell_id = 0;
    std::vector<double> delays;           // seconds
    std::vector<double> coincidence_rate; // normalized
    double plateau_delay = 0.0;           // |tau| at or above this belongs to the plateau
};

struct VisibilityStats {
    std::map<int, double> per_cell_visibility;
    double average = 0.0;
    std::vector<int> outliers;
};

namespace detail {

inline void check_pair_indices(const ComplexMatrix& s, ModePair in, ModePair out) {
    const auto n = static_cast<int>(s.rows());
    if (!s.is_square()) throw DimensionError("scattering matrix must be square");
    for (int x : {in.first, in.second, out.first, out.second}) {
        if (x < 0 || x >= n) throw DimensionError("mode index out of range");
    }
    if (in.first == in.second || out.first == out.second) {
        throw DomainError("collision events are not coincidences; use distinct modes");
    }
}

inline void check_overlap(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("overlap must lie in [0, 1]");
}

}  // namespace detail

/// Probability of one photon in each of out = (j, k) given one photon in each
/// of in = (m, n), for wavepacket overlap v:
///   v |S_jm S_kn + S_km S_jn|^2 + (1 - v)(|S_jm S_kn|^2 + |S_km S_jn|^2).
inline double coincidence_probability(const ScatteringMatrix& s, ModePair in, ModePair out, double v) {
    detail::check_pair_indices(s.matrix, in, out);
    detail::check_overlap(v);
    const auto& a = s.matrix.eigen();
    const auto [m, n] = in;
    const auto [j, k] = out;
    const cplx direct = a(j, m) * a(k, n);
    const cplx exchange = a(k, m) * a(j, n);
    const double quantum = std::norm(direct + exchange);
    const double classical = std::norm(direct) + std::norm(exchange);
    return v * quantum + (1.0 - v) * classical;
}

/// Same event through the permanent: |perm S[{j,k},{m,n}]|^2 for
/// indistinguishable photons, perm of the |.|^2 submatrix otherwise.
inline double coincidence_via_permanent(const ScatteringMatrix& s, ModePair in, ModePair out, bool distinguishable) {
    detail::check_pair_indices(s.matrix, in, out);
    const auto& a = s.matrix.eigen();
    const int rows[2] = {out.first, out.second};
    const int cols[2] = {in.first, in.second};
    MatrixXc sub(2, 2);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            const cplx x = a(rows[r], cols[c]);
            sub(r, c) = distinguishable ? cplx(std::norm(x), 0.0) : x;
        }
    }
    const cplx p = permanent(ComplexMatrix(std::move(sub)));
    return distinguishable ? p.real() : std::norm(p);
}

/// Probability that both photons leave in output mode `out`. The
/// indistinguishable term carries the 1/2! bunching normalization.
inline double bunching_probability(const ScatteringMatrix& s, ModePair in, int out, double v) {
    detail::check_overlap(v);
    const auto& a = s.matrix.eigen();
    const auto n = static_cast<int>(a.rows());
    if (out < 0 || out >= n || in.first < 0 || in.first >= n || in.second < 0 || in.second >= n ||
        in.first == in.second) {
        throw DimensionError("bad mode indices for bunching probability");
    }
    MatrixXc sub(2, 2);
    sub << a(out, in.first), a(out, in.second), a(out, in.first), a(out, in.second);
    const double quantum = std::norm(permanent(ComplexMatrix(sub))) / 2.0;
    const double classical = std::norm(a(out, in.first)) * std::norm(a(out, in.second));
    return v * quantum + (1.0 - v) * classical;
}

inline double overlap_at_delay(double tau, const SourceModel& source) {
    const double x = tau / source.coherence_time_sigma;
    return source.base_indistinguishability * std::exp(-0.5 * x * x);
}

struct RoutedCell {
    PhaseConfig config;
    ModePair in_pair;
    ModePair out_pair;
};

/// Config that isolates one cell: target at the 50:50 point (theta = pi/2),
/// every other cell at theta = pi, phi = pi, which is the identity. Light
/// entering modes (m, m+1) then meets only the target cell.
inline RoutedCell route_to_cell(const MeshSpec& spec, int cell_id) {
    const CellSite& site = spec.at(cell_id);
    PhaseConfig config = PhaseConfig::uniform(spec, kPi, kPi);
    config.theta[static_cast<std::size_t>(cell_id)] = kPi / 2.0;
    config.phi[static_cast<std::size_t>(cell_id)] = 0.0;
    const ModePair pair{site.top_mode, site.top_mode + 1};
    return RoutedCell{std::move(config), pair, pair};
}

/// True when indistinguishable photons never leave in different modes of
/// `out` (coincidence below `tol` on the ideal mesh).
inline bool hom_suppressed(const MeshSpec& spec, const PhaseConfig& config, ModePair in, ModePair out,
                           double tol = 1e-10) {
    const auto s = forward(spec, config);
    return coincidence_probability(s, in, out, 1.0) < tol;
}

/// Delay grid for scans: `core` evenly spaced points on [-3 sigma, 3 sigma]
/// (odd count, so tau = 0 is sampled) plus `tail` points on each side over
/// [8 sigma, 12 sigma], where the residual overlap is below 1e-13.
inline std::vector<double> default_delay_grid(const SourceModel& source, int core = 121, int tail = 10) {
    const double s = source.coherence_time_sigma;
    if (core % 2 == 0) ++core;
    std::vector<double> grid;
    for (int i = tail - 1; i >= 0; --i) grid.push_back(-(8.0 + 4.0 * i / std::max(1, tail - 1)) * s);
    for (int i = 0; i < core; ++i) grid.push_back((-3.0 + 6.0 * i / (core - 1)) * s);
    for (int i = 0; i < tail; ++i) grid.push_back((8.0 + 4.0 * i / std::max(1, tail - 1)) * s);
    return grid;
}

inline constexpr double kPlateauSigmas = 4.0;
inline constexpr double kGridCoverSigmas = 5.0;

/// Coincidence rate at the routed cell's outputs versus delay, normalized to
/// the mean of samples with |tau| >= 4 sigma.
inline HomCurve hom_scan(const MeshSpec& spec, int cell_id, const SourceModel& source,
                         const std::vector<double>& delays, const ImperfectionModel& imp = {},
                         std::optional<std::uint64_t> noise_seed = std::nullopt) {
    source.validate();
    const double sigma = source.coherence_time_sigma;
    double reach = 0.0;
    for (double t : delays) reach = std::max(reach, std::abs(t));
    if (reach < kGridCoverSigmas * sigma) throw RangeError("delay grid must reach |tau| >= 5 sigma");

    const RoutedCell routed = route_to_cell(spec, cell_id);
    const ScatteringMatrix s = forward(spec, routed.config, imp, noise_seed);

    HomCurve curve;
    curve.cell_id = cell_id;
    curve.delays = delays;
    curve.plateau_delay = kPlateauSigmas * sigma;
    curve.coincidence_rate.reserve(delays.size());
    double plateau = 0.0;
    int count = 0;
    for (double t : delays) {
        const double p = coincidence_probability(s, routed.in_pair, routed.out_pair, overlap_at_delay(t, source));
        curve.coincidence_rate.push_back(p);
        if (std::abs(t) >= curve.plateau_delay) {
            plateau += p;
            ++count;
        }
    }
    plateau /= count;
    if (!(plateau > 0.0)) throw DegenerateError("zero coincidence plateau");
    for (double& p : curve.coincidence_rate) p /= plateau;
    return curve;
}

/// 1 - cc_ind / cc_dist, with cc_ind the curve minimum and cc_dist the
/// plateau mean.
inline double visibility(const HomCurve& curve) {
    if (curve.delays.size() != curve.coincidence_rate.size() || curve.delays.empty()) {
        throw DimensionError("HOM curve delays and rates differ in length");
    }
    double plateau = 0.0;
    int count = 0;
    double dip = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve.delays.size(); ++i) {
        dip = std::min(dip, curve.coincidence_rate[i]);
        if (std::abs(curve.delays[i]) >= curve.plateau_delay) {
            plateau += curve.coincidence_rate[i];
            ++count;
        }
    }
    if (count == 0) throw DegenerateError("HOM curve has no plateau samples");
    plateau /= count;
    if (!(plateau > 0.0)) throw DegenerateError("HOM curve plateau is zero");
    return 1.0 - dip / plateau;
}

/// Optional shot-noise layer: each normalized rate is scaled to
/// `plateau_counts`, replaced by a Poisson draw, and scaled back.
inline HomCurve with_counting_noise(HomCurve curve, double plateau_counts, std::uint64_t seed) {
    if (!(plateau_counts > 0.0)) throw DomainError("plateau counts must be positive");
    Rng rng = make_rng(seed);
    for (double& p : curve.coincidence_rate) {
        std::poisson_distribution<long long> counts(std::max(0.0, p) * plateau_counts);
        p = static_cast<double>(counts(rng)) / plateau_counts;
    }
    return curve;
}

/// Mean visibility over cells; cells below mean - 3 std (population) are
/// outliers.
inline VisibilityStats average_visibility(const std::vector<HomCurve>& curves) {
    if (curves.empty()) throw DomainError("no HOM curves to average");
    VisibilityStats stats;
    double sum = 0.0;
    for (const auto& c : curves) {
        const double v = visibility(c);
        stats.per_cell_visibility[c.cell_id] = v;
        sum += v;
    }
    const double n = static_cast<double>(stats.per_cell_visibility.size());
    stats.average = sum / n;
    double var = 0.0;
    for (const auto& [id, v] : stats.per_cell_visibility) var += (v - stats.average) * (v - stats.average);
    const double sd = std::sqrt(var / n);
    const double threshold = stats.average - 3.0 * sd - 1e-12;
    for (const auto& [id, v] : stats.per_cell_visibility) {
        if (v < threshold) stats.outliers.push_back(id);
    }
    return stats;
}

}  // namespace meshsim
