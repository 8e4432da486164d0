#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/random.hpp"

namespace meshsim {

/// Thermo-optic heater: phase grows with dissipated power, i.e. with V^2,
///   theta(V) = theta_offset + pi (V / v_pi)^2,
/// and the monitored fringe is T_top = A sin^2(theta / 2) + B.
struct HeaterModel {
    double v_pi = 10.0;        // volts
    double theta_offset = 0.0; // radians at V = 0
    double contrast = 1.0;     // A
    double background = 0.0;   // B
    int heater_id = 0;

    void validate() const {
        if (!(v_pi > 0.0) || !std::isfinite(v_pi)) throw DomainError("v_pi must be positive");
        if (!std::isfinite(theta_offset)) throw DomainError("theta_offset must be finite");
        if (!(contrast > 0.0 && contrast <= 1.0)) throw DomainError("contrast must lie in (0, 1]");
        if (!(background >= 0.0)) throw DomainError("background must be >= 0");
        if (contrast + background > 1.0 + 1e-9) throw DomainError("contrast + background exceeds 1");
    }
};

/// Voltage sweep of one heater. `top` is the monitored output the fit
/// uses; `bottom` is optional.
struct CalibrationCurve {
    std::vector<double> voltages;
    std::vector<double> top;
    std::vector<double> bottom;

    static constexpr std::size_t kMinSamples = 8;
    static constexpr double kGuardLow = -0.05;
    static constexpr double kGuardHigh = 1.05;

    std::size_t size() const noexcept { return voltages.size(); }

    void validate() const {
        if (voltages.size() < kMinSamples) throw DomainError("calibration curve needs at least 8 samples");
        if (top.size() != voltages.size()) throw DimensionError("top transmission length differs from voltages");
        if (!bottom.empty() && bottom.size() != voltages.size()) {
            throw DimensionError("bottom transmission length differs from voltages");
        }
        for (std::size_t i = 0; i < voltages.size(); ++i) {
            if (!std::isfinite(voltages[i])) throw DomainError("non-finite voltage");
            if (i > 0 && !(voltages[i] > voltages[i - 1])) throw DomainError("voltages must be strictly increasing");
        }
        for (const auto* v : {&top, &bottom}) {
            for (double t : *v) {
                if (!(t >= kGuardLow && t <= kGuardHigh)) {
                    throw DomainError("transmission outside [-0.05, 1.05]");
                }
            }
        }
    }
};

struct FitResult {
    HeaterModel model;
    double rms_residual = 0.0;
    std::array<double, 4> covariance_diag{};  // v_pi, theta_offset, contrast, background
    int iterations = 0;
};

/// Thrown when the refinement does not converge; carries the best fit seen.
class FitError : public Error {
public:
    FitError(const std::string& what, std::optional<FitResult> best = std::nullopt)
        : Error(what), best_(std::move(best)) {}
    const std::optional<FitResult>& best() const noexcept { return best_; }

private:
    std::optional<FitResult> best_;
};

class UnderdeterminedError : public FitError {
public:
    using FitError::FitError;
};

inline double phase_from_voltage(double v, const HeaterModel& model) {
    if (!(v >= 0.0)) throw DomainError("heater voltage must be >= 0");
    const double x = v / model.v_pi;
    return model.theta_offset + kPi * x * x;
}

/// Smallest non-negative voltage reaching `target` modulo 2 pi. The default
/// ceiling 2 sqrt(2) v_pi spans 8 pi of phase.
inline double voltage_for_phase(double target, const HeaterModel& model, std::optional<double> v_limit = std::nullopt) {
    if (!std::isfinite(target)) throw DomainError("target phase must be finite");
    const double limit = v_limit.value_or(2.0 * std::sqrt(2.0) * model.v_pi);
    const double delta = wrap_phase(target - model.theta_offset);
    const double v = model.v_pi * std::sqrt(delta / kPi);
    if (v > limit) {
        throw RangeError("phase needs " + std::to_string(v) + " V, above the " + std::to_string(limit) + " V limit");
    }
    return v;
}

inline double fringe_top(double v, const HeaterModel& m) {
    const double s = std::sin(phase_from_voltage(v, m) / 2.0);
    return m.contrast * s * s + m.background;
}

inline double fringe_bottom(double v, const HeaterModel& m) {
    const double c = std::cos(phase_from_voltage(v, m) / 2.0);
    return m.contrast * c * c + m.background;
}

/// Evenly spaced sweep over [0, v_max] with independent Gaussian noise on
/// both outputs. Noisy samples are clipped to the curve's guard band.
inline CalibrationCurve synthesize_fringe(const HeaterModel& model, double v_max, std::size_t n_samples,
                                          double noise_sigma, std::uint64_t seed) {
    model.validate();
    if (n_samples < CalibrationCurve::kMinSamples) throw DomainError("need at least 8 samples");
    if (!(v_max > 0.0)) throw DomainError("v_max must be positive");
    if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be >= 0");

    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto noisy = [&](double t) {
        if (noise_sigma == 0.0) return t;
        return std::clamp(t + noise_sigma * gauss(rng), CalibrationCurve::kGuardLow, CalibrationCurve::kGuardHigh);
    };

    CalibrationCurve curve;
    curve.voltages.resize(n_samples);
    curve.top.resize(n_samples);
    curve.bottom.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double v = v_max * static_cast<double>(i) / static_cast<double>(n_samples - 1);
        curve.voltages[i] = v;
        curve.top[i] = noisy(fringe_top(v, model));
        curve.bottom[i] = noisy(fringe_bottom(v, model));
    }
    return curve;
}

/// Extinction ratio of the fitted fringe, 10 log10((A + B) / B); +inf when
/// the background vanishes.
inline double extinction_ratio(const FitResult& fit) {
    const double a = fit.model.contrast;
    const double b = fit.model.background;
    if (b <= 1e-12) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10((a + b) / b);
}

namespace detail {

using FitParams = Eigen::Vector4d;  // v_pi, theta_offset, contrast, background

struct FringeProblem {
    const std::vector<double>& v;
    const std::vector<double>& y;

    double ssr(const FitParams& p) const {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double x = v[i] / p(0);
            const double h = std::sin((p(1) + kPi * x * x) / 2.0);
            const double r = p(2) * h * h + p(3) - y[i];
            s += r * r;
        }
        return s;
    }

    void residuals_and_jacobian(const FitParams& p, Eigen::VectorXd& r, Eigen::MatrixXd& j) const {
        const auto n = static_cast<Eigen::Index>(v.size());
        r.resize(n);
        j.resize(n, 4);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double vi = v[static_cast<std::size_t>(i)];
            const double x = vi / p(0);
            const double phase = p(1) + kPi * x * x;
            const double h = std::sin(phase / 2.0);
            r(i) = p(2) * h * h + p(3) - y[static_cast<std::size_t>(i)];
            const double df_dphase = 0.5 * p(2) * std::sin(phase);
            j(i, 0) = df_dphase * (-2.0 * kPi * vi * vi / (p(0) * p(0) * p(0)));
            j(i, 1) = df_dphase;
            j(i, 2) = h * h;
            j(i, 3) = 1.0;
        }
    }

    /// Linear least squares for (A, B) at fixed (v_pi, offset); B clipped at 0.
    FitParams best_linear(double v_pi, double offset) const {
        double s11 = 0.0, s1 = 0.0, sy1 = 0.0, sy = 0.0;
        const double n = static_cast<double>(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double x = v[i] / v_pi;
            const double h = std::sin((offset + kPi * x * x) / 2.0);
            const double g = h * h;
            s11 += g * g;
            s1 += g;
            sy1 += y[i] * g;
            sy += y[i];
        }
        const double det = s11 * n - s1 * s1;
        double a = 0.0;
        double b = sy / n;
        if (std::abs(det) > 1e-12 * std::max(1.0, s11 * n)) {
            a = (sy1 * n - s1 * sy) / det;
            b = (s11 * sy - s1 * sy1) / det;
        }
        if (b < 0.0) {
            b = 0.0;
            a = s11 > 0.0 ? sy1 / s11 : 0.0;
        }
        return FitParams(v_pi, offset, a, b);
    }
};

/// Rough v_pi from the number of mean crossings of the fringe: a sweep to
/// v_max covers about crossings * pi of phase.
inline double sweep_v_pi_guess(const std::vector<double>& v, const std::vector<double>& y) {
    const double lo = *std::min_element(y.begin(), y.end());
    const double hi = *std::max_element(y.begin(), y.end());
    const double mid = 0.5 * (lo + hi);
    const double band = 0.2 * (hi - lo);
    int state = 0;
    int crossings = 0;
    for (double t : y) {
        const int s = t > mid + band ? 1 : (t < mid - band ? -1 : 0);
        if (s != 0) {
            if (state != 0 && s != state) ++crossings;
            state = s;
        }
    }
    return v.back() / std::sqrt(std::max(1.0, static_cast<double>(crossings)));
}

}  // namespace detail

/// Least-squares fit of (v_pi, theta_offset, A, B) to the top-output fringe.
///
/// A coarse grid over v_pi (step 2% of a sweep-derived guess, spanning 0.3x
/// to 3x of it) and theta_offset (32 points), with A and B solved linearly at
/// every node, seeds a damped Gauss-Newton (Levenberg-Marquardt) refinement
/// from the best few nodes. Refinement stops at gradient norm < 1e-10 or
/// when steps stall at round-off; 200 iterations without either is a
/// FitError.
inline FitResult fit_fringe(const CalibrationCurve& curve) {
    if (curve.size() < 4) throw UnderdeterminedError("fewer samples than the 4 fringe parameters");
    curve.validate();

    const auto& y = curve.top;
    const double lo = *std::min_element(y.begin(), y.end());
    const double hi = *std::max_element(y.begin(), y.end());
    if (hi - lo < 1e-9) throw UnderdeterminedError("flat curve: contrast and phase are not identifiable");

    detail::FringeProblem problem{curve.voltages, y};
    const double guess = detail::sweep_v_pi_guess(curve.voltages, y);
    if (!(guess > 0.0)) throw FitError("sweep must extend above 0 V");

    struct Node {
        double ssr;
        detail::FitParams p;
    };
    std::vector<Node> nodes;
    constexpr int kOffsetSteps = 32;
    for (double vp = 0.3 * guess; vp <= 3.0 * guess + 1e-12; vp += 0.02 * guess) {
        for (int k = 0; k < kOffsetSteps; ++k) {
            const double off = kTwoPi * k / kOffsetSteps;
            auto p = problem.best_linear(vp, off);
            if (!(p(2) > 0.0)) continue;
            nodes.push_back({problem.ssr(p), p});
        }
    }
    if (nodes.empty()) throw FitError("no grid node with positive contrast");
    const std::size_t starts = std::min<std::size_t>(4, nodes.size());
    std::partial_sort(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(starts), nodes.end(),
                      [](const Node& a, const Node& b) { return a.ssr < b.ssr; });

    constexpr int kMaxIterations = 200;
    constexpr double kGradTol = 1e-10;

    std::optional<FitResult> best;
    double best_ssr = std::numeric_limits<double>::infinity();
    bool best_converged = false;
    Eigen::MatrixXd jac_best;

    for (std::size_t s = 0; s < starts; ++s) {
        detail::FitParams p = nodes[s].p;
        double cost = problem.ssr(p);
        double lambda = 1e-3;
        bool converged = false;
        int it = 0;
        Eigen::VectorXd r;
        Eigen::MatrixXd j;
        for (; it < kMaxIterations; ++it) {
            problem.residuals_and_jacobian(p, r, j);
            Eigen::Vector4d grad = j.transpose() * r;
            // Background pinned at its B >= 0 bound: drop it from the step.
            const bool pinned = p(3) <= 0.0 && grad(3) > 0.0;
            if (pinned) grad(3) = 0.0;
            if (grad.norm() < kGradTol) {
                converged = true;
                break;
            }
            Eigen::Matrix4d jtj = j.transpose() * j;
            if (pinned) {
                jtj.row(3).setZero();
                jtj.col(3).setZero();
                jtj(3, 3) = 1.0;
            }
            bool stepped = false;
            while (lambda < 1e12) {
                Eigen::Matrix4d lhs = jtj;
                for (int d = 0; d < 4; ++d) lhs(d, d) += lambda * std::max(jtj(d, d), 1e-12);
                const Eigen::Vector4d delta = lhs.ldlt().solve(-grad);
                detail::FitParams trial = p + delta;
                trial(0) = std::max(trial(0), 1e-6 * p(0));
                trial(3) = std::max(trial(3), 0.0);
                const double trial_cost = problem.ssr(trial);
                if (trial_cost <= cost) {
                    const double rel_step =
                        (trial - p).cwiseAbs().maxCoeff() / std::max(1.0, p.cwiseAbs().maxCoeff());
                    p = trial;
                    cost = trial_cost;
                    lambda = std::max(lambda / 10.0, 1e-15);
                    stepped = true;
                    converged = rel_step < 1e-13;
                    break;
                }
                lambda *= 10.0;
            }
            // No descent step at any damping: the gradient is round-off.
            if (!stepped) converged = true;
            if (converged) break;
        }
        problem.residuals_and_jacobian(p, r, j);
        if (cost < best_ssr) {
            best_ssr = cost;
            best_converged = converged;
            FitResult fr;
            fr.model.v_pi = p(0);
            fr.model.theta_offset = wrap_phase(p(1));
            fr.model.contrast = p(2);
            fr.model.background = p(3);
            fr.rms_residual = std::sqrt(cost / static_cast<double>(curve.size()));
            fr.iterations = it;
            best = fr;
            jac_best = j;
        }
    }

    FitResult result = *best;
    const double dof = static_cast<double>(curve.size()) - 4.0;
    if (dof > 0.0) {
        const double sigma2 = best_ssr / dof;
        const Eigen::Matrix4d jtj = jac_best.transpose() * jac_best;
        Eigen::FullPivLU<Eigen::Matrix4d> lu(jtj);
        if (lu.isInvertible()) {
            const Eigen::Matrix4d cov = sigma2 * lu.inverse();
            for (int d = 0; d < 4; ++d) result.covariance_diag[static_cast<std::size_t>(d)] = cov(d, d);
        } else {
            result.covariance_diag.fill(std::numeric_limits<double>::infinity());
        }
    }
    if (!best_converged) throw FitError("fringe refinement did not converge in 200 iterations", result);
    if (!(result.model.contrast > 0.0)) throw FitError("fitted contrast is not positive", result);
    return result;
}

}  // namespace meshsim
