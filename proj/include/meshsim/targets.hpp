#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "meshsim/compiler.hpp"
#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/mesh.hpp"
#include "meshsim/random.hpp"

namespace meshsim {

/// Measured output power, entry (j, k) = power at output j for input k.
using IntensityMatrix = Eigen::MatrixXd;

inline UnitaryMatrix permutation_matrix(const std::vector<int>& perm) {
    const auto d = static_cast<int>(perm.size());
    if (d < 1) throw DomainError("empty permutation");
    std::vector<bool> seen(perm.size(), false);
    for (int p : perm) {
        if (p < 0 || p >= d || seen[static_cast<std::size_t>(p)]) throw DomainError("not a permutation");
        seen[static_cast<std::size_t>(p)] = true;
    }
    MatrixXc m = MatrixXc::Zero(d, d);
    for (int k = 0; k < d; ++k) m(perm[static_cast<std::size_t>(k)], k) = 1.0;
    return UnitaryMatrix(std::move(m));
}

/// X^n with X|j> = |j + 1 mod D>; n is taken modulo D.
inline UnitaryMatrix pauli_x_power(int d, int n) {
    if (d < 2) throw DimensionError("Pauli-X needs dimension >= 2");
    const int shift = ((n % d) + d) % d;
    std::vector<int> perm(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) perm[static_cast<std::size_t>(j)] = (j + shift) % d;
    return permutation_matrix(perm);
}

/// Transposition of modes a and b.
inline UnitaryMatrix switching_matrix(int d, int a, int b) {
    if (a < 0 || b < 0 || a >= d || b >= d) throw DimensionError("switch modes out of range");
    if (a == b) throw DomainError("switch needs two distinct modes");
    std::vector<int> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    return permutation_matrix(perm);
}

struct MaskResult {
    UnitaryMatrix unitary;
    double achieved_error = 0.0;       // Frobenius norm of |U|^2 - mask (columns normalized)
    std::vector<double> gap_history;   // distance between successive projections, nonincreasing
    int iterations = 0;
};

namespace detail {

inline MatrixXc polar_factor(const MatrixXc& m) {
    Eigen::JacobiSVD<MatrixXc> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

inline MatrixXc dft_matrix(Eigen::Index d) {
    MatrixXc f(d, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index k = 0; k < d; ++k) {
            f(j, k) = scale * std::polar(1.0, -kTwoPi * static_cast<double>(j * k) / static_cast<double>(d));
        }
    }
    return f;
}

}  // namespace detail

/// Unitary whose intensity pattern approximates a binary mask, by
/// alternating projections: keep the phases of the current unitary and
/// impose moduli sqrt(mask) (columns normalized to unit power), then return
/// to the nearest unitary. Starts from the DFT matrix. Stops when the
/// relative change of the unitary drops below `tol` or after `max_iters`.
inline MaskResult intensity_mask_unitary(const Eigen::MatrixXd& mask, int max_iters = 500, double tol = 1e-12) {
    if (mask.rows() != mask.cols() || mask.rows() < 1) throw DimensionError("mask must be square");
    for (Eigen::Index j = 0; j < mask.rows(); ++j) {
        for (Eigen::Index k = 0; k < mask.cols(); ++k) {
            if (mask(j, k) != 0.0 && mask(j, k) != 1.0) throw DomainError("mask entries must be 0 or 1");
        }
    }
    if (mask.sum() == 0.0) throw DomainError("mask is all zero");

    const Eigen::Index d = mask.rows();
    Eigen::MatrixXd target = mask;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double s = target.col(k).sum();
        if (s > 0.0) target.col(k) /= s;
    }
    const Eigen::MatrixXd amplitude = target.cwiseSqrt();
    auto mismatch = [&](const MatrixXc& u) { return (u.cwiseAbs2() - target).norm(); };

    MatrixXc u = detail::dft_matrix(d);
    MatrixXc best = u;
    double best_err = std::numeric_limits<double>::infinity();
    std::vector<double> gaps;
    int it = 0;
    for (; it < max_iters; ++it) {
        MatrixXc a(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index k = 0; k < d; ++k) {
                const double mag = std::abs(u(j, k));
                const cplx phase = mag > 0.0 ? u(j, k) / mag : cplx(1.0, 0.0);
                a(j, k) = amplitude(j, k) * phase;
            }
        }
        MatrixXc next = detail::polar_factor(a);
        gaps.push_back((a - next).norm());
        const double change = (next - u).norm() / std::sqrt(static_cast<double>(d));
        u = std::move(next);
        const double err = mismatch(u);
        if (err < best_err) {
            best_err = err;
            best = u;
        }
        if (change < tol) {
            ++it;
            break;
        }
    }
    return MaskResult{UnitaryMatrix(std::move(best), 1e-9), best_err, std::move(gaps), it};
}

/// Example 12x12 letter bitmaps for the logo targets. These are our own
/// drawings, not device data.
inline Eigen::MatrixXd letter_mask(char letter) {
    static constexpr std::string_view kQ[12] = {
        "...######...", "..##....##..", ".##......##.", ".#........#.", ".#........#.", ".#........#.",
        ".#........#.", ".#....#...#.", ".##....#.##.", "..##....##..", "...#######..", ".........##.",
    };
    static constexpr std::string_view kX[12] = {
        "#..........#", ".#........#.", "..#......#..", "...#....#...", "....#..#....", ".....##.....",
        ".....##.....", "....#..#....", "...#....#...", "..#......#..", ".#........#.", "#..........#",
    };
    const std::string_view* rows = nullptr;
    if (letter == 'Q' || letter == 'q') rows = kQ;
    if (letter == 'X' || letter == 'x') rows = kX;
    if (rows == nullptr) throw DomainError(std::string("no bitmap for letter ") + letter);
    Eigen::MatrixXd m(12, 12);
    for (int j = 0; j < 12; ++j) {
        for (int k = 0; k < 12; ++k) m(j, k) = rows[j][static_cast<std::size_t>(k)] == '#' ? 1.0 : 0.0;
    }
    return m;
}

/// (1/D) sum_jk |U_target|_jk |U_exp|_jk, where |U_exp| is the elementwise
/// square root of the measured intensities after each column is normalized
/// to unit total power.
inline double amplitude_fidelity(const UnitaryMatrix& target, const IntensityMatrix& measured) {
    const Eigen::Index d = target.dim();
    if (measured.rows() != d || measured.cols() != d) throw DimensionError("intensity matrix shape mismatch");
    double total = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double col = measured.col(k).sum();
        if (!(col > 0.0) || !std::isfinite(col)) {
            throw DegenerateError("measured column " + std::to_string(k) + " carries no power");
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            const double x = measured(j, k);
            if (x < 0.0) throw DomainError("negative measured intensity");
            total += std::abs(target(j, k)) * std::sqrt(x / col);
        }
    }
    return total / static_cast<double>(d);
}

enum class TargetFamily { permutation, pauli_x, switching, haar, mask };

inline std::string_view family_name(TargetFamily f) {
    switch (f) {
        case TargetFamily::permutation: return "perm";
        case TargetFamily::pauli_x: return "pauli_x";
        case TargetFamily::switching: return "switching";
        case TargetFamily::haar: return "haar";
        case TargetFamily::mask: return "mask";
    }
    return "unknown";
}

inline TargetFamily parse_family(std::string_view s) {
    if (s == "perm" || s == "permutation") return TargetFamily::permutation;
    if (s == "pauli_x" || s == "x") return TargetFamily::pauli_x;
    if (s == "switching" || s == "switch") return TargetFamily::switching;
    if (s == "haar") return TargetFamily::haar;
    if (s == "mask" || s == "logo") return TargetFamily::mask;
    throw DomainError("unknown target family '" + std::string(s) + "'");
}

/// Target number `index` of a family. Permutations, switch pairs, Haar
/// draws and random masks come from `seed`; Pauli-X cycles through
/// X^0 ... X^D; masks at D = 12 alternate the Q and X bitmaps.
inline UnitaryMatrix family_target(TargetFamily family, int d, std::uint64_t seed, std::size_t index) {
    Rng rng = make_rng(derive_seed(seed, 2 * index));
    switch (family) {
        case TargetFamily::permutation: {
            std::vector<int> perm(static_cast<std::size_t>(d));
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            return permutation_matrix(perm);
        }
        case TargetFamily::pauli_x:
            return pauli_x_power(d, static_cast<int>(index % static_cast<std::size_t>(d + 1)));
        case TargetFamily::switching: {
            std::uniform_int_distribution<int> pick(0, d - 1);
            const int a = pick(rng);
            int b = pick(rng);
            while (b == a) b = pick(rng);
            return switching_matrix(d, a, b);
        }
        case TargetFamily::haar:
            return haar_random_unitary(d, rng());
        case TargetFamily::mask: {
            Eigen::MatrixXd m;
            if (d == 12) {
                m = letter_mask(index % 2 == 0 ? 'Q' : 'X');
            } else {
                std::bernoulli_distribution bit(0.3);
                m = Eigen::MatrixXd::Identity(d, d);
                for (Eigen::Index j = 0; j < d; ++j) {
                    for (Eigen::Index k = 0; k < d; ++k) {
                        if (bit(rng)) m(j, k) = 1.0;
                    }
                }
            }
            return intensity_mask_unitary(m).unitary;
        }
    }
    throw DomainError("unknown target family");
}

struct FidelityReport {
    std::string family;
    std::size_t n_samples = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    std::vector<double> per_sample;
};

/// Sample error carrying the index of the failing draw.
class SampleError : public Error {
public:
    SampleError(std::size_t index, const std::string& what)
        : Error("sample " + std::to_string(index) + ": " + what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Simulated fidelity of one family under an imperfection model: each
/// sample is compiled, run through the imperfect mesh with its own noise
/// seed, and scored from |S|^2.
inline FidelityReport fidelity_report(TargetFamily family, std::size_t n_samples, const ImperfectionModel& imp,
                                      std::uint64_t seed, int d = 12) {
    if (n_samples < 1) throw DomainError("need at least one sample");
    const MeshSpec spec = mesh_layout(d);
    imp.validate(spec);
    FidelityReport report;
    report.family = std::string(family_name(family));
    report.n_samples = n_samples;
    report.per_sample.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        try {
            const UnitaryMatrix target = family_target(family, d, seed, i);
            const CompileResult compiled = decompose(target);
            const ScatteringMatrix s = forward(spec, compiled.config, imp, derive_seed(seed, 2 * i + 1));
            report.per_sample.push_back(amplitude_fidelity(target, s.matrix.eigen().cwiseAbs2()));
        } catch (const Error& e) {
            throw SampleError(i, e.what());
        }
    }
    const double n = static_cast<double>(n_samples);
    report.mean = std::accumulate(report.per_sample.begin(), report.per_sample.end(), 0.0) / n;
    double var = 0.0;
    for (double f : report.per_sample) var += (f - report.mean) * (f - report.mean);
    report.stddev = n_samples > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    return report;
}

}  // namespace meshsim
