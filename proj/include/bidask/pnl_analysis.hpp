#pragma once

// Uncertainty in a local-vol surface carried to the seller's P&L (zero drift).
// Gateaux derivatives along basis directions come from central differences
// under common random numbers; second derivatives use a separate, larger step.

#include "bidask/error_calculus.hpp"
#include "bidask/errors.hpp"
#include "bidask/local_vol.hpp"
#include "bidask/rng.hpp"
#include "bidask/sde_engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bidask::pnl {

using lv::DeltaLattice;
using lv::LatticeConfig;
using lv::LocalVolSpec;
using lv::Payoff;
using lv::TestFunction;

struct McConfig {
    std::size_t steps = 256;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    sde::ExecPolicy exec{};
    double eps = 1e-3;   // first-order Gateaux step
    double eps2 = 1e-2;  // second-order Gateaux step
    bool common_random_numbers = true;
};

/// Mean vector and co-moment matrix of per-path feature vectors, mergeable in order.
struct VectorMoments {
    std::size_t n = 0;
    std::vector<double> mean;
    std::vector<double> comoment;  // d x d, row-major

    explicit VectorMoments(std::size_t d = 0) : mean(d, 0.0), comoment(d * d, 0.0) {}
    std::size_t dim() const { return mean.size(); }

    void add(std::span<const double> f) {
        ++n;
        const std::size_t d = dim();
        thread_local std::vector<double> delta;
        delta.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            delta[i] = f[i] - mean[i];
            mean[i] += delta[i] / static_cast<double>(n);
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) comoment[i * d + j] += delta[i] * (f[j] - mean[j]);
    }
    void merge(const VectorMoments& o) {
        if (o.n == 0) return;
        if (n == 0) { *this = o; return; }
        const std::size_t d = dim();
        const double na = static_cast<double>(n), nb = static_cast<double>(o.n), nt = na + nb;
        std::vector<double> delta(d);
        for (std::size_t i = 0; i < d; ++i) delta[i] = o.mean[i] - mean[i];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                comoment[i * d + j] += o.comoment[i * d + j] + delta[i] * delta[j] * na * nb / nt;
        for (std::size_t i = 0; i < d; ++i) mean[i] += delta[i] * nb / nt;
        n += o.n;
    }
    double covariance(std::size_t i, std::size_t j) const {
        return n > 1 ? comoment[i * dim() + j] / static_cast<double>(n - 1) : 0.0;
    }
    sde::McEstimate estimate(std::size_t i) const {
        return {mean[i], std::sqrt(covariance(i, i) / static_cast<double>(n)), n};
    }
    /// Standard error of g . mean (delta method for smooth functions of the means).
    double linear_se(std::span<const double> g) const {
        double v = 0.0;
        for (std::size_t i = 0; i < dim(); ++i)
            for (std::size_t j = 0; j < dim(); ++j) v += g[i] * g[j] * covariance(i, j);
        return std::sqrt(std::max(v, 0.0) / static_cast<double>(n));
    }
};

namespace detail {

/// Euler path of the local-vol SDE on precomputed increments; returns X_T.
inline double euler_terminal(const LocalVolSpec& spec, double x0, const sde::TimeGrid& grid,
                             std::span<const double> dw) {
    const double floor_abs = 1e-8 * x0;
    double x = x0;
    for (std::size_t i = 0; i < grid.steps(); ++i) {
        x += spec.sigma_floored(grid[i], x) * x * dw[i];
        if (x < floor_abs) x = floor_abs;
    }
    if (!std::isfinite(x)) throw NumericError("non-finite state in local vol simulation");
    return x;
}

/// Every surface needed for first and second Gateaux derivatives, in a fixed order:
/// [0] base; [1 + 2i], [2 + 2i] = +-eps along i; then per (i <= j) the second-order
/// stencil surfaces at step eps2.
struct BumpSet {
    std::vector<LocalVolSpec> specs;
    std::size_t n = 0;
    std::vector<std::size_t> second_offset;  // per (i, j) pair with i <= j, packed
};

inline LocalVolSpec bump2(const LocalVolSpec& s, std::size_t i, double ei, std::size_t j, double ej) {
    std::vector<double> a = s.coeffs().values();
    a[i] += ei;
    a[j] += ej;
    try {
        return s.with_coefficients(std::move(a));
    } catch (const InputError&) {
        throw InputError("second-order bump falls below the volatility floor; use a smaller eps2");
    }
}

inline BumpSet make_bumps(const LocalVolSpec& spec, double eps, double eps2, bool second) {
    bidask::detail::require(eps > 0.0 && eps2 > 0.0, "Gateaux steps must be positive");
    BumpSet b;
    b.n = spec.size();
    b.specs.push_back(spec);
    for (std::size_t i = 0; i < b.n; ++i) {
        b.specs.push_back(spec.bumped(i, eps));
        b.specs.push_back(spec.bumped(i, -eps));
    }
    if (!second) return b;
    for (std::size_t i = 0; i < b.n; ++i) {
        for (std::size_t j = i; j < b.n; ++j) {
            b.second_offset.push_back(b.specs.size());
            if (i == j) {
                b.specs.push_back(bump2(spec, i, eps2, i, 0.0));
                b.specs.push_back(bump2(spec, i, -eps2, i, 0.0));
            } else {
                b.specs.push_back(bump2(spec, i, eps2, j, eps2));
                b.specs.push_back(bump2(spec, i, eps2, j, -eps2));
                b.specs.push_back(bump2(spec, i, -eps2, j, eps2));
                b.specs.push_back(bump2(spec, i, -eps2, j, -eps2));
            }
        }
    }
    return b;
}

} // namespace detail

struct PriceAndDelta {
    sde::McEstimate price;
    DeltaLattice lattice;
};

/// C = E[payoff(X_T)] by Monte Carlo and the hedge-ratio lattice.
inline PriceAndDelta price_and_delta(const LocalVolSpec& spec, const Payoff& payoff, const McConfig& mc = {},
                                     const LatticeConfig& lat = {}) {
    payoff.check();
    const auto grid = sde::TimeGrid::uniform(spec.maturity(), mc.steps);
    auto [m, report] = sde::simulate_reduce(
        lv::LocalVolDiffusion{&spec}, sde::NoCompanions{}, spec.x0(), grid, mc.paths, mc.seed, sde::RunningMoments{},
        [&](const sde::PathView& v, sde::RunningMoments& acc) { acc.add(payoff.value(v.x.back())); },
        [](sde::RunningMoments& a, const sde::RunningMoments& b) { a.merge(b); }, sde::SimOptions{mc.exec});
    return {m.estimate(), lv::delta_lattice(spec, payoff, lat, mc.exec)};
}

/// dC/dsigma(phi_i) by a CRN central difference. With `common_random_numbers` off the
/// two legs use independent seeds (kept as a regression guard on the CRN plumbing).
inline sde::McEstimate gateaux_price(const LocalVolSpec& spec, const Payoff& payoff, std::size_t i, double eps,
                                     const McConfig& mc = {}) {
    payoff.check();
    bidask::detail::require(eps > 0.0, "Gateaux step must be positive");
    const LocalVolSpec up = spec.bumped(i, eps), dn = spec.bumped(i, -eps);
    const auto grid = sde::TimeGrid::uniform(spec.maturity(), mc.steps);
    const std::uint64_t seed_dn = mc.common_random_numbers ? mc.seed : rng::splitmix64(mc.seed + 0x51ED);
    auto fn = [&](std::size_t p, sde::RunningMoments& acc) {
        thread_local std::vector<double> dw;
        dw.resize(grid.steps());
        sde::fill_increments(mc.seed, p, grid, dw);
        const double vu = payoff.value(detail::euler_terminal(up, spec.x0(), grid, dw));
        if (seed_dn != mc.seed) sde::fill_increments(seed_dn, p, grid, dw);
        const double vd = payoff.value(detail::euler_terminal(dn, spec.x0(), grid, dw));
        acc.add((vu - vd) / (2.0 * eps));
    };
    auto merge = [](sde::RunningMoments& a, const sde::RunningMoments& b) { a.merge(b); };
    return sde::reduce_paths(mc.paths, sde::RunningMoments{}, fn, merge, mc.exec).estimate();
}

/// dDelta/dsigma(phi_i) on the lattice: central difference of bumped lattices (the
/// Monte Carlo lattice reuses its seeds, so the difference is under CRN too).
inline DeltaLattice gateaux_delta(const LocalVolSpec& spec, const Payoff& payoff, std::size_t i, double eps,
                                  const LatticeConfig& lat = {}, sde::ExecPolicy exec = {}) {
    bidask::detail::require(eps > 0.0, "Gateaux step must be positive");
    const auto up = lv::delta_lattice(spec.bumped(i, eps), payoff, lat, exec);
    const auto dn = lv::delta_lattice(spec.bumped(i, -eps), payoff, lat, exec);
    return DeltaLattice::central_difference(up, dn, eps);
}

struct PnLStats {
    std::vector<double> lambda1;
    Matrix lambda2;
    std::vector<double> psi;
    double bias = 0.0;      // A[E1[h(P&L)]]
    double variance = 0.0;  // Γ[E1[h(P&L)]]
    double h0 = 0.0;

    sde::McEstimate price;                // C under the estimated surface
    std::vector<sde::McEstimate> dprice;  // dC/dsigma(phi_i)
    Matrix d2price;                       // second Gateaux derivatives
    Matrix d2price_se;
    Matrix integral_term;                 // int_0^T E[s^2 X^2 dDelta_i dDelta_j] ds (h''(0) != 0 only)
    std::vector<double> lambda1_se, psi_se;
    Matrix lambda2_se;
    double bias_se = 0.0;
    double variance_se = 0.0;
};

/// Lambda^(1), Lambda^(2), Psi and the resulting bias/variance of E1[h(P&L)] with
/// drift fixed at zero.
inline PnLStats pnl_functionals(const LocalVolSpec& spec, const Payoff& payoff, const TestFunction& h,
                                const McConfig& mc = {}, const LatticeConfig& lat = {}) {
    payoff.check();
    const double h0 = h.h(0.0), h1 = h.h1(0.0), h2 = h.h2(0.0);
    bidask::detail::require(std::isfinite(h0) && std::isfinite(h1) && std::isfinite(h2),
                            "test function and its derivatives must be finite at 0");
    const std::size_t n = spec.size();
    const std::size_t np = n * (n + 1) / 2;
    const bool with_integral = h2 != 0.0;
    const auto bumps = detail::make_bumps(spec, mc.eps, mc.eps2, true);
    const auto grid = sde::TimeGrid::uniform(spec.maturity(), mc.steps);

    std::vector<DeltaLattice> ddelta;
    if (with_integral)
        for (std::size_t i = 0; i < n; ++i) ddelta.push_back(gateaux_delta(spec, payoff, i, mc.eps, lat, mc.exec));

    // features: [price, d_i (n), dd_ij (np), J_ij (np)]
    const std::size_t off_d = 1, off_dd = 1 + n, off_j = 1 + n + np;
    const std::size_t dim = off_j + (with_integral ? np : 0);
    const double e1 = mc.eps, e2 = mc.eps2;

    auto fn = [&](std::size_t p, VectorMoments& acc) {
        thread_local std::vector<double> dw, v, f;
        dw.resize(grid.steps());
        v.resize(bumps.specs.size());
        f.assign(dim, 0.0);
        sde::fill_increments(mc.seed, p, grid, dw);
        // base path, with the hedge-sensitivity integral accumulated along it
        {
            const LocalVolSpec& s = bumps.specs[0];
            double x = spec.x0();
            const double floor_abs = 1e-8 * spec.x0();
            auto integrand = [&](double t, double xx, std::size_t i, std::size_t j) {
                const double sg = s.sigma_floored(t, xx);
                return sg * sg * xx * xx * ddelta[i].delta(t, xx) * ddelta[j].delta(t, xx);
            };
            for (std::size_t k = 0; k <= grid.steps(); ++k) {
                if (with_integral) {
                    const double t = grid[k];
                    const double wl = (k > 0 ? 0.5 * grid.dt(k - 1) : 0.0) + (k < grid.steps() ? 0.5 * grid.dt(k) : 0.0);
                    for (std::size_t i = 0, q = 0; i < n; ++i)
                        for (std::size_t j = i; j < n; ++j, ++q) f[off_j + q] += wl * integrand(t, x, i, j);
                }
                if (k == grid.steps()) break;
                x += s.sigma_floored(grid[k], x) * x * dw[k];
                if (x < floor_abs) x = floor_abs;
            }
            if (!std::isfinite(x)) throw NumericError("non-finite state in local vol simulation");
            v[0] = payoff.value(x);
        }
        for (std::size_t b = 1; b < bumps.specs.size(); ++b)
            v[b] = payoff.value(detail::euler_terminal(bumps.specs[b], spec.x0(), grid, dw));

        f[0] = v[0];
        for (std::size_t i = 0; i < n; ++i) f[off_d + i] = (v[1 + 2 * i] - v[2 + 2 * i]) / (2.0 * e1);
        for (std::size_t i = 0, q = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j, ++q) {
                const std::size_t o = bumps.second_offset[q];
                f[off_dd + q] = (i == j) ? (v[o] - 2.0 * v[0] + v[o + 1]) / (e2 * e2)
                                         : (v[o] - v[o + 1] - v[o + 2] + v[o + 3]) / (4.0 * e2 * e2);
            }
        }
        acc.add(f);
    };
    auto merge = [](VectorMoments& a, const VectorMoments& b) { a.merge(b); };
    const VectorMoments m = sde::reduce_paths(mc.paths, VectorMoments(dim), fn, merge, mc.exec);
    bidask::detail::require(m.n >= 2, "need at least two paths");

    const auto& c = spec.coeffs().cov();
    const auto& a = spec.coeffs().bias();
    PnLStats st;
    st.h0 = h0;
    st.price = m.estimate(0);
    st.lambda1.resize(n);
    st.psi.resize(n);
    st.lambda1_se.resize(n);
    st.psi_se.resize(n);
    st.lambda2 = st.d2price = st.d2price_se = st.integral_term = st.lambda2_se = Matrix(n);
    std::vector<double> dc(n);
    for (std::size_t i = 0; i < n; ++i) {
        st.dprice.push_back(m.estimate(off_d + i));
        dc[i] = m.mean[off_d + i];
        st.lambda1[i] = st.psi[i] = h1 * dc[i];
        st.lambda1_se[i] = st.psi_se[i] = std::abs(h1) * st.dprice[i].std_error;
    }
    std::vector<double> g(dim, 0.0);
    for (std::size_t i = 0, q = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j, ++q) {
            const double d2 = m.mean[off_dd + q];
            const double it = with_integral ? m.mean[off_j + q] : 0.0;
            const double l2 = h1 * d2 + h2 * (dc[i] * dc[j] + it);
            st.d2price(i, j) = st.d2price(j, i) = d2;
            st.d2price_se(i, j) = st.d2price_se(j, i) = m.estimate(off_dd + q).std_error;
            st.integral_term(i, j) = st.integral_term(j, i) = it;
            st.lambda2(i, j) = st.lambda2(j, i) = l2;
            std::fill(g.begin(), g.end(), 0.0);
            g[off_dd + q] = h1;
            g[off_d + i] += h2 * dc[j];
            g[off_d + j] += h2 * dc[i];
            if (with_integral) g[off_j + q] = h2;
            st.lambda2_se(i, j) = st.lambda2_se(j, i) = m.linear_se(g);
        }
    }
    st.bias = propagate_bias(st.lambda1, st.lambda2, spec.coeffs());
    st.variance = propagate_variance(st.psi, spec.coeffs());

    // delta-method standard errors of bias and variance
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += c(k, j) * dc[j];
        g[off_d + k] = h1 * a[k] + h2 * s;
    }
    for (std::size_t i = 0, q = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j, ++q) {
            const double w = (i == j) ? 0.5 * c(i, i) : c(i, j);
            g[off_dd + q] = h1 * w;
            if (with_integral) g[off_j + q] = h2 * w;
        }
    }
    st.bias_se = m.linear_se(g);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += c(k, j) * dc[j];
        g[off_d + k] = 2.0 * h1 * h1 * s;
    }
    st.variance_se = m.linear_se(g);
    return st;
}

struct TailBound {
    double k = 0.0;
    double threshold = 0.0;  // h(0) + bias + k sqrt(variance)
    double bound = 0.0;      // 1 / (1 + k^2)
};

inline TailBound tail_bound(const PnLStats& st, double k) {
    bidask::detail::require(k >= 1.0, "k must be >= 1");
    return {k, st.h0 + st.bias + k * std::sqrt(std::max(st.variance, 0.0)), chebyshev_bound(k)};
}

struct GeneralQuote {
    QuoteBand band;
    PnLStats stats;
    // standard errors of the band entries (center, mid, ask, bid) from the MC inputs
    double center_se = 0.0;
    double mid_se = 0.0;
    double std_term_se = 0.0;
    double ask_se = 0.0;
    double bid_se = 0.0;
};

inline GeneralQuote general_quote(const LocalVolSpec& spec, const Payoff& payoff, double alpha,
                                  QuantileMethod method, const McConfig& mc = {}, const LatticeConfig& lat = {}) {
    check_alpha(alpha);
    GeneralQuote q;
    q.stats = pnl_functionals(spec, payoff, lv::identity_test(), mc, lat);
    const auto& s = q.stats;
    q.band = make_quote(s.price.mean, s.bias, s.variance, alpha, method);
    const double k = q.band.multiplier;
    q.center_se = s.price.std_error;
    q.mid_se = std::hypot(s.price.std_error, s.bias_se);
    q.std_term_se = q.band.std_term > 0.0 ? s.variance_se / (2.0 * q.band.std_term) : 0.0;
    q.ask_se = q.bid_se = std::hypot(q.mid_se, k * q.std_term_se);
    return q;
}

struct HedgeResult {
    std::vector<double> pnl;  // terminal P&L per valid path, path order
    sde::McEstimate mean;
    double std_dev = 0.0;
    double cost = 0.0;  // premium charged at (0, x0)
    sde::SimReport report;
};

/// Same with a precomputed lattice; the premium is the lattice price at (0, x0).
inline HedgeResult hedge_simulate(const std::function<double(double, double)>& true_vol, const DeltaLattice& dl,
                                  const Payoff& payoff, double x0, const sde::TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t seed, double floor = 1e-6, sde::ExecPolicy exec = {}) {
    struct Diff {
        const std::function<double(double, double)>* f;
        double floor;
        double diffusion(double t, double x) const {
            const double s = (*f)(t, x);
            if (!(s >= floor)) throw InputError("true volatility below the floor at t=" + std::to_string(t));
            return s * x;
        }
    };
    HedgeResult out;
    out.cost = dl.price(0.0, x0);
    using Acc = std::vector<double>;
    auto visit = [&](const sde::PathView& v, Acc& acc) {
        double pl = out.cost;
        for (std::size_t i = 0; i + 1 < v.x.size(); ++i) pl += dl.delta(grid[i], v.x[i]) * (v.x[i + 1] - v.x[i]);
        acc.push_back(pl - payoff.value(v.x.back()));
    };
    auto merge = [](Acc& a, const Acc& b) { a.insert(a.end(), b.begin(), b.end()); };
    auto [pnl, report] = sde::simulate_reduce(Diff{&true_vol, floor}, sde::NoCompanions{}, x0, grid, n_paths, seed,
                                              Acc{}, visit, merge, sde::SimOptions{exec});
    out.pnl = std::move(pnl);
    out.report = report;
    out.mean = sde::mc_estimate(out.pnl);
    out.std_dev = out.mean.std_error * std::sqrt(static_cast<double>(out.mean.n_paths));
    return out;
}

/// S follows dS = sigma(t, S) S dW; the seller charges C(trader surface) and holds
/// Delta(trader surface) units between grid times. P&L = C + sum Delta dS - payoff(S_T).
inline HedgeResult hedge_simulate(const std::function<double(double, double)>& true_vol, const LocalVolSpec& trader,
                                  const Payoff& payoff, const sde::TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t seed, const LatticeConfig& lat = {}, sde::ExecPolicy exec = {}) {
    payoff.check();
    bidask::detail::require(std::abs(grid.maturity() - trader.maturity()) <= 1e-12 * trader.maturity(),
                            "hedging grid must end at the trader surface's maturity");
    const DeltaLattice dl = lv::delta_lattice(trader, payoff, lat, exec);
    return hedge_simulate(true_vol, dl, payoff, trader.x0(), grid, n_paths, seed, trader.floor(), exec);
}

struct BootstrapConfig {
    std::size_t draws = 200;
    std::uint64_t seed = 11;
    std::size_t hedge_steps = 128;
    std::size_t hedge_paths = 2000;
    std::uint64_t hedge_seed = 13;
    LatticeConfig lattice{};
    sde::ExecPolicy exec{};
};

struct BootstrapResult {
    std::vector<std::vector<double>> deltas;  // coefficient shifts per retained draw
    std::vector<double> expected_pnl;         // E1[P&L] per retained draw
    std::vector<double> expected_pnl_se;
    double mean = 0.0;
    double variance = 0.0;  // 1/n normalization over draws
    std::size_t truncated = 0;
    double truncation_fraction = 0.0;
};

/// Parameter bootstrap: the world follows the estimated surface; the seller prices and
/// hedges with a surface whose coefficients are shifted by delta ~ N(bias, cov).
/// Draws come in antithetic pairs and are moment-matched so their sample mean and
/// covariance equal bias and cov; draws violating the floor are dropped and counted.
inline BootstrapResult parameter_bootstrap(const LocalVolSpec& spec, const Payoff& payoff,
                                           const BootstrapConfig& cfg = {}) {
    payoff.check();
    bidask::detail::require(cfg.draws >= 4 && cfg.draws % 2 == 0, "bootstrap needs an even number (>= 4) of draws");
    const std::size_t n = spec.size();
    const std::size_t half = cfg.draws / 2;
    std::vector<std::vector<double>> z(cfg.draws, std::vector<double>(n));
    for (std::size_t d = 0; d < half; ++d) {
        rng::GaussianStream g(cfg.seed, d);
        for (std::size_t i = 0; i < n; ++i) {
            z[2 * d][i] = g.next();
            z[2 * d + 1][i] = -z[2 * d][i];
        }
    }
    // whiten: sample covariance (mean is zero by antithetics) -> identity
    Matrix s(n);
    for (const auto& v : z)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) s(i, j) += v[i] * v[j] / static_cast<double>(cfg.draws);
    Matrix ls;
    if (!psd_factor(s, 1e-14, ls)) throw NumericError("bootstrap sample covariance not positive definite");
    for (auto& v : z) {
        for (std::size_t i = 0; i < n; ++i) {  // forward substitution ls w = v
            double r = v[i];
            for (std::size_t j = 0; j < i; ++j) r -= ls(i, j) * v[j];
            if (ls(i, i) <= 0.0) throw NumericError("bootstrap draws are degenerate");
            v[i] = r / ls(i, i);
        }
    }
    const Matrix& lc = spec.coeffs().cov_factor();
    const auto& bias = spec.coeffs().bias();
    const auto& a0 = spec.coeffs().values();

    const auto grid = sde::TimeGrid::uniform(spec.maturity(), cfg.hedge_steps);
    const std::function<double(double, double)> world = [&spec](double t, double x) { return spec.sigma_floored(t, x); };
    BootstrapResult out;
    for (const auto& v : z) {
        std::vector<double> delta(n), a(n);
        for (std::size_t i = 0; i < n; ++i) {
            double r = bias[i];
            for (std::size_t j = 0; j <= i; ++j) r += lc(i, j) * v[j];
            delta[i] = r;
            a[i] = a0[i] + r;
        }
        LocalVolSpec trader = spec;
        try {
            trader = spec.with_coefficients(a);
        } catch (const InputError&) {
            ++out.truncated;
            continue;
        }
        const auto h = hedge_simulate(world, trader, payoff, grid, cfg.hedge_paths, cfg.hedge_seed, cfg.lattice, cfg.exec);
        out.deltas.push_back(std::move(delta));
        out.expected_pnl.push_back(h.mean.mean);
        out.expected_pnl_se.push_back(h.mean.std_error);
    }
    bidask::detail::require(out.expected_pnl.size() >= 2, "bootstrap retained fewer than two draws");
    const double m = static_cast<double>(out.expected_pnl.size());
    for (double e : out.expected_pnl) out.mean += e / m;
    for (double e : out.expected_pnl) out.variance += (e - out.mean) * (e - out.mean) / m;
    out.truncation_fraction = static_cast<double>(out.truncated) / static_cast<double>(cfg.draws);
    return out;
}

/// Fraction of samples with e - h0 - bias >= k sqrt(variance).
inline double exceedance_frequency(std::span<const double> samples, double h0, double bias, double variance, double k) {
    bidask::detail::require(!samples.empty(), "exceedance needs samples");
    const double thr = k * std::sqrt(std::max(variance, 0.0));
    const auto hits = std::count_if(samples.begin(), samples.end(), [&](double e) { return e - h0 - bias >= thr; });
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

} // namespace bidask::pnl
