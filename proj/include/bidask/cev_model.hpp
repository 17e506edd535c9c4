#pragma once

// CEV diffusion dX = s X^B dW with joint uncertainty on (s, B).
//
// Companions per path: the Doleans factor M (with ln M), the sensitivity kernel K
// (the sharp of X per unit of s# + s B#), the variance/covariance readouts and the
// bias A_X integrated by Euler on its own SDE.

#include "bidask/error_calculus.hpp"
#include "bidask/errors.hpp"
#include "bidask/sde_engine.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace bidask::cev {

struct CevParams {
    UncertainParamSet params;  // values (s, B), bias (A[s], A[B]), cov of (s, B)

    double sigma() const { return params.values()[0]; }
    double beta() const { return params.values()[1]; }
    double bias_sigma() const { return params.bias()[0]; }
    double bias_beta() const { return params.bias()[1]; }
    double var_sigma() const { return params.cov()(0, 0); }
    double cov_sigma_beta() const { return params.cov()(0, 1); }
    double var_beta() const { return params.cov()(1, 1); }

    /// Γ[s] + 2 s Γ[s,B] + s^2 Γ[B]: variance carried by one unit of kernel.
    double kernel_variance() const {
        const double s = sigma();
        return var_sigma() + 2.0 * s * cov_sigma_beta() + s * s * var_beta();
    }

    void validate() const {
        bidask::detail::require(params.size() == 2, "CEV parameter set must be two-dimensional (sigma, beta)");
        bidask::detail::require(sigma() > 0.0, "CEV sigma must be positive");
        bidask::detail::require(beta() > 0.0 && beta() <= 1.0, "CEV beta must lie in (0, 1]");
    }
};

inline CevParams make_params(double sigma, double beta, double bias_sigma = 0.0, double bias_beta = 0.0,
                             double var_sigma = 0.0, double cov_sigma_beta = 0.0, double var_beta = 0.0) {
    CevParams p{UncertainParamSet({sigma, beta}, {bias_sigma, bias_beta},
                                  Matrix{{var_sigma, cov_sigma_beta}, {cov_sigma_beta, var_beta}})};
    p.validate();
    return p;
}

/// Γ_X = K^2 (Γ[s] + 2 s Γ[s,B] + s^2 Γ[B]).
inline double gamma_x(double k, const CevParams& p) { return k * k * p.kernel_variance(); }

/// Γ[s, X] = K (Γ[s] + s Γ[s,B]).
inline double cov_sigma_x(double k, const CevParams& p) {
    return k * (p.var_sigma() + p.sigma() * p.cov_sigma_beta());
}

/// Γ[B, X] = K (s Γ[B] + Γ[s,B]).
inline double cov_beta_x(double k, const CevParams& p) {
    return k * (p.sigma() * p.var_beta() + p.cov_sigma_beta());
}

/// One Euler step of the bias SDE, all inputs at the left endpoint.
inline double bias_x_step(double a_x, double x, double g_x, double g_sx, double g_bx, const CevParams& p,
                          double dw) {
    const double s = p.sigma(), b = p.beta();
    const double xb = std::pow(x, b);
    const double xb1 = xb / x;
    const double xb2 = xb1 / x;
    const double coef = s * b * xb1 * a_x
                      + xb * (p.bias_sigma() + s * p.bias_beta())
                      + 0.5 * s * b * (b - 1.0) * xb2 * g_x
                      + xb * p.cov_sigma_beta()
                      + xb1 * (b * g_sx + s * g_bx)
                      + 0.5 * s * xb * p.var_beta();
    return a_x + coef * dw;
}

enum Companion : std::size_t { M = 0, K, GammaX, GammaSigmaX, GammaBetaX, BiasX, LogM, n_companions };

class CevCompanions {
public:
    static constexpr std::size_t size = n_companions;

    CevCompanions(const CevParams& p, double x0, double floor_rel = 1e-8)
        : p_(p), flag_below_(10.0 * floor_rel * x0) {}

    std::array<std::string_view, size> names() const {
        return {"M", "K", "Gamma_X", "Gamma_sigmaX", "Gamma_BX", "A_X", "lnM"};
    }

    void init(double, std::span<double> s) const {
        for (double& v : s) v = 0.0;
        s[M] = 1.0;
    }

    sde::StepStatus step(double, double dt, double x, double dw, std::span<double> s) const {
        const double sig = p_.sigma(), b = p_.beta();
        const double xb = std::pow(x, b);
        const double g = sig * b * xb / x;

        s[BiasX] = bias_x_step(s[BiasX], x, s[GammaX], s[GammaSigmaX], s[GammaBetaX], p_, dw);
        s[K] += (g * s[K] + xb) * dw;
        s[LogM] += g * dw - 0.5 * g * g * dt;
        if (!(std::abs(s[LogM]) <= 700.0)) return sde::StepStatus::invalid;
        s[M] = std::exp(s[LogM]);
        s[GammaX] = gamma_x(s[K], p_);
        s[GammaSigmaX] = cov_sigma_x(s[K], p_);
        s[GammaBetaX] = cov_beta_x(s[K], p_);
        return x < flag_below_ ? sde::StepStatus::flagged : sde::StepStatus::ok;
    }

private:
    CevParams p_;
    double flag_below_;
};

inline sde::Cev diffusion(const CevParams& p) { return {p.sigma(), p.beta()}; }

inline sde::Simulation cev_simulate(const CevParams& p, double x0, const sde::TimeGrid& grid,
                                    std::size_t n_paths, std::uint64_t seed, sde::SimOptions opts = {}) {
    p.validate();
    return sde::simulate(diffusion(p), x0, grid, n_paths, seed, CevCompanions(p, x0, opts.floor_rel), opts);
}

/// Streaming variant: `visit(const PathView&, Acc&)` sees every valid path.
template <class Acc, class Visit, class Merge>
std::pair<Acc, sde::SimReport> cev_reduce(const CevParams& p, double x0, const sde::TimeGrid& grid,
                                          std::size_t n_paths, std::uint64_t seed, const Acc& init,
                                          Visit&& visit, Merge&& merge, sde::SimOptions opts = {}) {
    p.validate();
    return sde::simulate_reduce(diffusion(p), CevCompanions(p, x0, opts.floor_rel), x0, grid, n_paths, seed,
                                init, visit, merge, opts);
}

struct PowerCorrections {
    sde::McEstimate second_moment;  // E[X_T^2]
    sde::McEstimate bias;           // E[A[X_T^2]] = E[2 X_T A_X(T) + Γ_X(T)]
    sde::McEstimate gamma;          // E[Γ[X_T^2]] = E[4 X_T^2 Γ_X(T)]
    sde::McEstimate kernel_slope;   // E[2 X_T K_T]: derivative of E[X_T^2] per unit kernel
    double gamma_of_mean = 0.0;     // Γ[E[X_T^2]] = E[2 X_T K_T]^2 (Γ[s] + 2sΓ[s,B] + s^2Γ[B])
    sde::SimReport report;
};

namespace detail {

struct PowerAcc {
    sde::RunningMoments x2, bias, gamma, slope;
    void merge(const PowerAcc& o) {
        x2.merge(o.x2);
        bias.merge(o.bias);
        gamma.merge(o.gamma);
        slope.merge(o.slope);
    }
};

inline void add_terminal(PowerAcc& acc, double x, double k, double a_x, double g_x) {
    acc.x2.add(x * x);
    acc.bias.add(2.0 * x * a_x + g_x);
    acc.gamma.add(4.0 * x * x * g_x);
    acc.slope.add(2.0 * x * k);
}

inline PowerCorrections finish(const PowerAcc& acc, const CevParams& p, sde::SimReport report) {
    PowerCorrections out;
    out.second_moment = acc.x2.estimate();
    out.bias = acc.bias.estimate();
    out.gamma = acc.gamma.estimate();
    out.kernel_slope = acc.slope.estimate();
    const double m = out.kernel_slope.mean;
    out.gamma_of_mean = m * m * p.kernel_variance();
    out.report = report;
    return out;
}

} // namespace detail

/// Chain rules for X_T^2 applied per path, then averaged.
inline PowerCorrections power_payoff_corrections(const sde::Simulation& sim, const CevParams& p) {
    detail::PowerAcc acc;
    for (const auto& path : sim.paths) {
        const std::size_t n = path.x.size() - 1;
        detail::add_terminal(acc, path.x[n], path.companions[K][n], path.companions[BiasX][n],
                             path.companions[GammaX][n]);
    }
    return detail::finish(acc, p, sim.report);
}

inline PowerCorrections power_payoff_corrections(const CevParams& p, double x0, const sde::TimeGrid& grid,
                                                 std::size_t n_paths, std::uint64_t seed,
                                                 sde::SimOptions opts = {}) {
    auto visit = [](const sde::PathView& v, detail::PowerAcc& acc) {
        const std::size_t n = v.n_times - 1;
        detail::add_terminal(acc, v.x[n], v.companion(K)[n], v.companion(BiasX)[n], v.companion(GammaX)[n]);
    };
    auto merge = [](detail::PowerAcc& a, const detail::PowerAcc& b) { a.merge(b); };
    auto [acc, report] = cev_reduce(p, x0, grid, n_paths, seed, detail::PowerAcc{}, visit, merge, opts);
    return detail::finish(acc, p, report);
}

struct CevMcConfig {
    std::size_t steps = 512;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    sde::SimOptions sim{};
};

struct PowerQuote {
    QuoteBand as_stated;           // std from E[Γ[X_T^2]]
    QuoteBand theorem_consistent;  // std from Γ[E[X_T^2]]
    PowerCorrections corrections;
};

inline PowerQuote power_option_quote(const CevParams& p, double x0, double maturity, double alpha,
                                     QuantileMethod method, const CevMcConfig& mc = {}) {
    check_alpha(alpha);
    const auto grid = sde::TimeGrid::uniform(maturity, mc.steps);
    PowerQuote q;
    q.corrections = power_payoff_corrections(p, x0, grid, mc.paths, mc.seed, mc.sim);
    const auto& c = q.corrections;
    q.as_stated = make_quote(c.second_moment.mean, c.bias.mean, c.gamma.mean, alpha, method);
    q.theorem_consistent = make_quote(c.second_moment.mean, c.bias.mean, c.gamma_of_mean, alpha, method);
    return q;
}

} // namespace bidask::cev
