#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "meshsim/errors.hpp"
#include "meshsim/random.hpp"

namespace meshsim {

using cplx = std::complex<double>;
using MatrixXc = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kUnitaryTol = 1e-10;

/// Dense complex matrix. Entry (j, k) is the amplitude from input mode k to
/// output mode j, so fields propagate as out = M * in.
///
/// Immutable after construction; every entry is finite and the shape is at
/// least 1x1.
class ComplexMatrix {
public:
    explicit ComplexMatrix(MatrixXc m) : m_(std::move(m)) {
        if (m_.rows() < 1 || m_.cols() < 1) {
            throw DimensionError("matrix must be at least 1x1");
        }
        if (!m_.allFinite()) {
            throw DomainError("matrix contains non-finite entries");
        }
    }

    static ComplexMatrix identity(Eigen::Index n) { return ComplexMatrix(MatrixXc::Identity(n, n)); }

    Eigen::Index rows() const noexcept { return m_.rows(); }
    Eigen::Index cols() const noexcept { return m_.cols(); }
    bool is_square() const noexcept { return m_.rows() == m_.cols(); }
    cplx operator()(Eigen::Index j, Eigen::Index k) const { return m_(j, k); }
    const MatrixXc& eigen() const noexcept { return m_; }

    ComplexMatrix adjoint() const { return ComplexMatrix(m_.adjoint()); }
    ComplexMatrix transpose() const { return ComplexMatrix(m_.transpose()); }

    friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
        if (a.cols() != b.rows()) throw DimensionError("matrix product shape mismatch");
        return ComplexMatrix(a.m_ * b.m_);
    }

private:
    MatrixXc m_;
};

/// Largest |M^dagger M - I| entry. M must be square.
inline double unitarity_defect(const ComplexMatrix& m) {
    if (!m.is_square()) throw DimensionError("unitarity check needs a square matrix");
    const auto n = m.rows();
    return (m.eigen().adjoint() * m.eigen() - MatrixXc::Identity(n, n)).cwiseAbs().maxCoeff();
}

inline bool is_unitary(const ComplexMatrix& m, double tol) {
    if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
    return unitarity_defect(m) <= tol;
}

/// Square matrix with U^dagger U = I to within 1e-10 (or a looser
/// tolerance chosen at construction).
class UnitaryMatrix {
public:
    explicit UnitaryMatrix(ComplexMatrix m, double tol = kUnitaryTol) : m_(std::move(m)) {
        if (!m_.is_square()) throw DimensionError("unitary must be square");
        const double defect = unitarity_defect(m_);
        if (defect > tol) {
            throw PreconditionError("matrix is not unitary (max |U^dagger U - I| = " +
                                    std::to_string(defect) + ")");
        }
    }
    explicit UnitaryMatrix(MatrixXc m, double tol = kUnitaryTol)
        : UnitaryMatrix(ComplexMatrix(std::move(m)), tol) {}

    static UnitaryMatrix identity(Eigen::Index n) { return UnitaryMatrix(MatrixXc::Identity(n, n)); }

    Eigen::Index dim() const noexcept { return m_.rows(); }
    cplx operator()(Eigen::Index j, Eigen::Index k) const { return m_(j, k); }
    const ComplexMatrix& matrix() const noexcept { return m_; }
    const MatrixXc& eigen() const noexcept { return m_.eigen(); }

    friend UnitaryMatrix operator*(const UnitaryMatrix& a, const UnitaryMatrix& b) {
        if (a.dim() != b.dim()) throw DimensionError("unitary product shape mismatch");
        return UnitaryMatrix(a.eigen() * b.eigen(), 1e-9);
    }

private:
    ComplexMatrix m_;
};

/// Haar-distributed unitary: complex Ginibre matrix, QR factorisation, and
/// the phases of diag(R) pushed back into Q so the result is exactly Haar.
inline UnitaryMatrix haar_random_unitary(Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw DimensionError("Haar dimension must be >= 1");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(2.0));
    MatrixXc z(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            z(j, k) = cplx(re, im);
        }
    }
    Eigen::HouseholderQR<MatrixXc> qr(z);
    MatrixXc q = qr.householderQ();
    const MatrixXc& r = qr.matrixQR();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double mag = std::abs(r(k, k));
        const cplx phase = mag > 0.0 ? r(k, k) / mag : cplx(1.0, 0.0);
        q.col(k) *= phase;
    }
    return UnitaryMatrix(std::move(q));
}

inline constexpr Eigen::Index kMaxPermanentDim = 20;

/// Exact permanent by Ryser's formula with Gray-code subset enumeration,
/// O(2^n n). Limited to n <= 20.
inline cplx permanent(const ComplexMatrix& m) {
    if (!m.is_square()) throw DimensionError("permanent needs a square matrix");
    const Eigen::Index n = m.rows();
    if (n > kMaxPermanentDim) throw SizeError("permanent limited to dimension 20");
    const MatrixXc& a = m.eigen();

    std::vector<cplx> row_sums(static_cast<std::size_t>(n), cplx(0.0, 0.0));
    cplx total(0.0, 0.0);
    std::uint64_t gray = 0;
    const std::uint64_t subsets = std::uint64_t{1} << n;
    for (std::uint64_t step = 1; step < subsets; ++step) {
        const std::uint64_t next = step ^ (step >> 1);
        const std::uint64_t changed = next ^ gray;
        const int col = std::countr_zero(changed);
        const double sign = (next & changed) ? 1.0 : -1.0;
        for (Eigen::Index i = 0; i < n; ++i) row_sums[static_cast<std::size_t>(i)] += sign * a(i, col);
        gray = next;

        cplx prod(1.0, 0.0);
        for (const cplx& s : row_sums) prod *= s;
        const int size = std::popcount(gray);
        total += ((n - size) % 2 == 0) ? prod : -prod;
    }
    return total;
}

/// Closest unitary in Frobenius norm: the polar factor P Q^dagger of the
/// SVD M = P Sigma Q^dagger.
inline UnitaryMatrix nearest_unitary(const ComplexMatrix& m) {
    if (!m.is_square()) throw DimensionError("nearest_unitary needs a square matrix");
    Eigen::JacobiSVD<MatrixXc> svd(m.eigen(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double smax = sv.maxCoeff();
    const double smin = sv.minCoeff();
    if (!(smax > 0.0) || smin <= 1e-12 * smax) {
        throw SingularityError("matrix is rank deficient; polar factor undefined");
    }
    MatrixXc w = svd.matrixU() * svd.matrixV().adjoint();
    return UnitaryMatrix(std::move(w));
}

inline double max_abs_diff(const MatrixXc& a, const MatrixXc& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("shape mismatch");
    return (a - b).cwiseAbs().maxCoeff();
}

/// Max-abs difference after rotating `a` by the global phase that aligns it
/// with `b` at the largest-magnitude entry of `b`.
inline double max_abs_diff_up_to_phase(const MatrixXc& a, const MatrixXc& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("shape mismatch");
    Eigen::Index j = 0;
    Eigen::Index k = 0;
    b.cwiseAbs().maxCoeff(&j, &k);
    cplx rot(1.0, 0.0);
    if (std::abs(a(j, k)) > 0.0) {
        const cplx r = b(j, k) / a(j, k);
        rot = r / std::abs(r);
    }
    return (a * rot - b).cwiseAbs().maxCoeff();
}

/// Wrap an angle into [0, 2 pi).
inline double wrap_phase(double x) {
    double r = std::fmod(x, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

}  // namespace meshsim
