#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "meshsim/compiler.hpp"
#include "meshsim/targets.hpp"

using namespace meshsim;

namespace {

ImperfectionModel noise(double sigma) {
    ImperfectionModel imp;
    imp.phase_noise_sigma = sigma;
    return imp;
}

}  // namespace

TEST(PermutationMatrix, Examples) {
    EXPECT_EQ(max_abs_diff(permutation_matrix({0, 1, 2, 3}).eigen(), MatrixXc::Identity(4, 4)), 0.0);
    MatrixXc swap(2, 2);
    swap << 0, 1, 1, 0;
    EXPECT_EQ(max_abs_diff(permutation_matrix({1, 0}).eigen(), swap), 0.0);
    const auto p = permutation_matrix({2, 0, 1});
    EXPECT_EQ(p(2, 0), cplx(1.0));
    EXPECT_EQ(p(0, 1), cplx(1.0));
    EXPECT_EQ(p(1, 2), cplx(1.0));
    EXPECT_THROW(permutation_matrix({0, 0, 1}), DomainError);
    EXPECT_THROW(permutation_matrix({0, 3, 1}), DomainError);
}

TEST(PauliX, Examples) {
    EXPECT_EQ(max_abs_diff(pauli_x_power(12, 0).eigen(), MatrixXc::Identity(12, 12)), 0.0);
    EXPECT_EQ(max_abs_diff(pauli_x_power(12, 12).eigen(), MatrixXc::Identity(12, 12)), 0.0);
    const auto x6 = pauli_x_power(12, 6);
    for (int j = 0; j < 12; ++j) {
        for (int k = 0; k < 12; ++k) EXPECT_EQ(std::abs(x6(j, k)), j == (k + 6) % 12 ? 1.0 : 0.0);
    }
    const auto x = pauli_x_power(5, 1).eigen();
    MatrixXc power = MatrixXc::Identity(5, 5);
    for (int n = 0; n < 7; ++n) {
        EXPECT_EQ(max_abs_diff(pauli_x_power(5, n).eigen(), power), 0.0);
        power = x * power;
    }
    EXPECT_THROW(pauli_x_power(1, 0), DimensionError);
}

TEST(Switching, Examples) {
    const auto s = switching_matrix(12, 0, 6);
    EXPECT_EQ(s(6, 0), cplx(1.0));
    EXPECT_EQ(s(0, 6), cplx(1.0));
    EXPECT_EQ(s(3, 3), cplx(1.0));
    EXPECT_EQ(max_abs_diff((s * s).eigen(), MatrixXc::Identity(12, 12)), 0.0);
    EXPECT_LT(decompose(s).residual, 1e-9);
    EXPECT_THROW(switching_matrix(12, 4, 4), DomainError);
    EXPECT_THROW(switching_matrix(12, 0, 12), DimensionError);
}

TEST(MaskUnitary, IdentityMask) {
    const auto r = intensity_mask_unitary(Eigen::MatrixXd::Identity(8, 8));
    EXPECT_LT(r.achieved_error, 1e-9);
    EXPECT_LE(max_abs_diff(MatrixXc(r.unitary.eigen().cwiseAbs().cast<cplx>()), MatrixXc::Identity(8, 8)), 1e-9);
}

TEST(MaskUnitary, AllOnesMask) {
    const auto r = intensity_mask_unitary(Eigen::MatrixXd::Ones(12, 12));
    EXPECT_LT(r.achieved_error, 1e-6);
    const Eigen::MatrixXd p = r.unitary.eigen().cwiseAbs2();
    EXPECT_LT((p.array() - 1.0 / 12.0).abs().maxCoeff(), 1e-6);
}

TEST(MaskUnitary, LetterMasksDescend) {
    for (char letter : {'Q', 'X'}) {
        const auto r = intensity_mask_unitary(letter_mask(letter));
        ASSERT_FALSE(r.gap_history.empty());
        for (std::size_t i = 1; i < r.gap_history.size(); ++i) {
            EXPECT_LE(r.gap_history[i], r.gap_history[i - 1] + 1e-12) << letter << " iteration " << i;
        }
        EXPECT_GE(r.achieved_error, 0.0);
        EXPECT_TRUE(std::isfinite(r.achieved_error));
        EXPECT_LE(unitarity_defect(r.unitary.matrix()), 1e-10);
        EXPECT_LT(decompose(r.unitary).residual, 1e-9);
    }
    EXPECT_THROW(letter_mask('Z'), DomainError);
    EXPECT_THROW(intensity_mask_unitary(Eigen::MatrixXd::Zero(4, 4)), DomainError);
}

TEST(AmplitudeFidelity, Examples) {
    const auto u = haar_random_unitary(12, 8);
    EXPECT_NEAR(amplitude_fidelity(u, u.eigen().cwiseAbs2()), 1.0, 1e-12);
    const Eigen::MatrixXd shifted = pauli_x_power(6, 1).eigen().cwiseAbs2();
    EXPECT_EQ(amplitude_fidelity(UnitaryMatrix::identity(6), shifted), 0.0);

    const auto spec = mesh_layout(12);
    const auto compiled = decompose(u);
    const auto lossy = forward(spec, compiled.config, ImperfectionModel::uniform_loss(12, 4.2, 0.8));
    EXPECT_NEAR(amplitude_fidelity(u, lossy.matrix.eigen().cwiseAbs2()), 1.0, 1e-9);

    Eigen::MatrixXd dead = u.eigen().cwiseAbs2();
    dead.col(3).setZero();
    EXPECT_THROW(amplitude_fidelity(u, dead), DegenerateError);
    EXPECT_THROW(amplitude_fidelity(u, Eigen::MatrixXd::Ones(3, 3)), DimensionError);
}

TEST(AmplitudeFidelity, RangeAndScaleInvariance) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const auto target = haar_random_unitary(6, 100 + t);
        Eigen::MatrixXd measured(6, 6);
        for (int j = 0; j < 6; ++j) {
            for (int k = 0; k < 6; ++k) measured(j, k) = u(rng) * (t % 3 == 0 ? 1.0 : u(rng));
        }
        const double f = amplitude_fidelity(target, measured);
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0 + 1e-12);
        Eigen::MatrixXd scaled = measured;
        for (int k = 0; k < 6; ++k) scaled.col(k) *= 0.01 + 10.0 * u(rng);
        EXPECT_NEAR(amplitude_fidelity(target, scaled), f, 1e-12);
    }
}

TEST(FamilyTarget, Structure) {
    EXPECT_EQ(parse_family("perm"), TargetFamily::permutation);
    EXPECT_EQ(parse_family("switching"), TargetFamily::switching);
    EXPECT_EQ(family_name(TargetFamily::pauli_x), "pauli_x");
    EXPECT_THROW(parse_family("nope"), DomainError);
    for (std::size_t i = 0; i <= 12; ++i) {
        const auto x = family_target(TargetFamily::pauli_x, 12, 0, i);
        EXPECT_EQ(max_abs_diff(x.eigen(), pauli_x_power(12, static_cast<int>(i)).eigen()), 0.0);
    }
    const auto a = family_target(TargetFamily::haar, 12, 5, 3);
    const auto b = family_target(TargetFamily::haar, 12, 5, 3);
    EXPECT_EQ(max_abs_diff(a.eigen(), b.eigen()), 0.0);
}

TEST(FidelityReport, IdealIsPerfect) {
    for (int d : {4, 8, 12}) {
        for (auto family : {TargetFamily::permutation, TargetFamily::pauli_x, TargetFamily::switching,
                            TargetFamily::haar, TargetFamily::mask}) {
            const auto r = fidelity_report(family, 6, ImperfectionModel::ideal(), 11, d);
            EXPECT_NEAR(r.mean, 1.0, 1e-9) << family_name(family) << " d=" << d;
            EXPECT_LT(r.stddev, 1e-9);
            EXPECT_EQ(r.per_sample.size(), 6u);
        }
    }
}

TEST(FidelityReport, MonotoneInPhaseNoise) {
    for (auto family : {TargetFamily::haar, TargetFamily::permutation}) {
        double previous = 1.0 + 1e-12;
        for (double sigma : {0.0, 0.02, 0.05, 0.1, 0.2}) {
            const auto r = fidelity_report(family, 20, noise(sigma), 99);
            EXPECT_LE(r.mean, previous) << family_name(family) << " sigma=" << sigma;
            EXPECT_GE(r.mean, 0.0);
            EXPECT_LE(r.mean, 1.0 + 1e-12);
            previous = r.mean;
        }
    }
}

TEST(FidelityReport, SparseTargetsDegradeLess) {
    // Holds for moderate phase noise; at sigma >~ 0.2 the order flips.
    const auto sw = fidelity_report(TargetFamily::switching, 200, noise(0.1), 3);
    const auto haar = fidelity_report(TargetFamily::haar, 200, noise(0.1), 3);
    EXPECT_GE(sw.mean, haar.mean);
}

TEST(FidelityReport, Reproducible) {
    const auto a = fidelity_report(TargetFamily::haar, 5, noise(0.1), 77);
    const auto b = fidelity_report(TargetFamily::haar, 5, noise(0.1), 77);
    EXPECT_EQ(a.per_sample, b.per_sample);
    EXPECT_THROW(fidelity_report(TargetFamily::haar, 0, noise(0.1), 77), DomainError);
}
