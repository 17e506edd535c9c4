#pragma once

// Local-volatility surfaces as truncated basis expansions, smooth payoffs, test
// functions and the (t, x) lattice of seller prices and hedge ratios.

#include "bidask/error_calculus.hpp"
#include "bidask/errors.hpp"
#include "bidask/rng.hpp"
#include "bidask/sde_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace bidask::lv {

struct BasisFunction {
    std::string name;
    std::function<double(double, double)> value;  // phi(t, x)
    std::function<double(double, double)> dx;     // d phi / dx
};

inline BasisFunction constant_basis(double c = 1.0) {
    return {"const", [c](double, double) { return c; }, [](double, double) { return 0.0; }};
}

/// phi(t, x) = x / x_ref - 1.
inline BasisFunction spot_linear_basis(double x_ref) {
    return {"spot_linear", [x_ref](double, double x) { return x / x_ref - 1.0; },
            [x_ref](double, double) { return 1.0 / x_ref; }};
}

inline BasisFunction time_linear_basis(double maturity) {
    return {"time_linear", [maturity](double t, double) { return t / maturity; },
            [](double, double) { return 0.0; }};
}

/// sigma(t, x) = sum_i a_i phi_i(t, x), with a_i uncertain. The domain is
/// [0, T] x [x0 e^{-w s0 sqrt T}, x0 e^{w s0 sqrt T}] where s0 = sigma(0, x0).
class LocalVolSpec {
public:
    LocalVolSpec(std::vector<BasisFunction> basis, UncertainParamSet coeffs, double x0, double maturity,
                 double floor = 1e-6, double width = 4.0)
        : basis_(std::move(basis)), coeffs_(std::move(coeffs)), x0_(x0), maturity_(maturity),
          floor_(floor), width_(width) {
        bidask::detail::require(!basis_.empty(), "local vol basis must be nonempty");
        bidask::detail::require(basis_.size() == coeffs_.size(), "basis and coefficient dimensions differ");
        bidask::detail::require(x0 > 0.0 && std::isfinite(x0), "spot must be positive");
        bidask::detail::require(maturity > 0.0 && std::isfinite(maturity), "maturity must be positive");
        bidask::detail::require(floor > 0.0, "volatility floor must be positive");
        bidask::detail::require(width > 0.0, "domain width must be positive");
        const double s0 = sigma(0.0, x0);
        bidask::detail::require(s0 >= floor, "local vol below the floor at (0, x0)");
        const double half = width_ * s0 * std::sqrt(maturity_);
        x_lo_ = x0_ * std::exp(-half);
        x_hi_ = x0_ * std::exp(half);
        check_floor();
    }

    std::size_t size() const { return basis_.size(); }
    const std::vector<BasisFunction>& basis() const { return basis_; }
    const UncertainParamSet& coeffs() const { return coeffs_; }
    double x0() const { return x0_; }
    double maturity() const { return maturity_; }
    double floor() const { return floor_; }
    double width() const { return width_; }
    double x_lo() const { return x_lo_; }
    double x_hi() const { return x_hi_; }

    double sigma(double t, double x) const {
        double s = 0.0;
        const auto& a = coeffs_.values();
        for (std::size_t i = 0; i < basis_.size(); ++i) s += a[i] * basis_[i].value(t, x);
        return s;
    }
    double sigma_dx(double t, double x) const {
        double s = 0.0;
        const auto& a = coeffs_.values();
        for (std::size_t i = 0; i < basis_.size(); ++i) s += a[i] * basis_[i].dx(t, x);
        return s;
    }
    /// Floored volatility used in simulation and PDE solves (off-domain safety).
    double sigma_floored(double t, double x) const { return std::max(sigma(t, x), floor_); }

    /// Same basis and domain, new coefficient values.
    LocalVolSpec with_coefficients(std::vector<double> a) const {
        LocalVolSpec out = *this;
        out.coeffs_ = coeffs_.with_values(std::move(a));
        out.check_floor();
        return out;
    }

    /// Coefficients shifted by eps along direction i.
    LocalVolSpec bumped(std::size_t i, double eps) const {
        bidask::detail::require(i < size(), "basis direction out of range");
        std::vector<double> a = coeffs_.values();
        a[i] += eps;
        try {
            return with_coefficients(std::move(a));
        } catch (const InputError&) {
            throw InputError("bumped local vol (direction " + std::to_string(i) + ", eps " + std::to_string(eps) +
                             ") falls below the floor; use a smaller eps");
        }
    }

private:
    void check_floor() const {
        constexpr int n = 100;
        const double ly = std::log(x_lo_), hy = std::log(x_hi_);
        for (int a = 0; a < n; ++a) {
            const double t = maturity_ * a / (n - 1);
            for (int b = 0; b < n; ++b) {
                const double x = std::exp(ly + (hy - ly) * b / (n - 1));
                const double s = sigma(t, x);
                if (!(s >= floor_))
                    throw InputError("local vol " + std::to_string(s) + " below floor at t=" + std::to_string(t) +
                                     ", x=" + std::to_string(x));
            }
        }
    }

    std::vector<BasisFunction> basis_;
    UncertainParamSet coeffs_;
    double x0_, maturity_, floor_, width_;
    double x_lo_ = 0.0, x_hi_ = 0.0;
};

inline LocalVolSpec constant_vol_spec(double x0, double maturity, double sigma, double bias, double var) {
    return LocalVolSpec({constant_basis()}, UncertainParamSet::scalar(sigma, bias, var), x0, maturity);
}

/// Diffusion b(t, x) = sigma(t, x) x for the engine.
struct LocalVolDiffusion {
    const LocalVolSpec* spec;
    double diffusion(double t, double x) const { return spec->sigma_floored(t, x) * x; }
};

struct Payoff {
    std::string name;
    std::function<double(double)> value;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
    bool discontinuous = false;

    void check() const {
        if (discontinuous)
            throw InputError("payoff '" + name + "' is discontinuous; only payoffs with a bounded first derivative are supported");
    }
};

inline Payoff call_payoff(double strike) {
    bidask::detail::require(strike > 0.0, "strike must be positive");
    return {"call", [strike](double s) { return std::max(s - strike, 0.0); },
            [strike](double s) { return s > strike ? 1.0 : 0.0; }, [](double) { return 0.0; }, false};
}

/// Softplus-smoothed call w log(1 + e^{(s-K)/w}).
inline Payoff smoothed_call_payoff(double strike, double w) {
    bidask::detail::require(strike > 0.0 && w > 0.0, "strike and smoothing width must be positive");
    auto logistic = [](double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); };
    return {"smoothed_call",
            [strike, w](double s) {
                const double z = (s - strike) / w;
                return z > 0 ? w * (z + std::log1p(std::exp(-z))) : w * std::log1p(std::exp(z));
            },
            [strike, w, logistic](double s) { return logistic((s - strike) / w); },
            [strike, w, logistic](double s) {
                const double p = logistic((s - strike) / w);
                return p * (1.0 - p) / w;
            },
            false};
}

inline Payoff linear_payoff(double slope = 1.0, double intercept = 0.0) {
    return {"linear", [=](double s) { return slope * s + intercept; }, [=](double) { return slope; },
            [](double) { return 0.0; }, false};
}

inline Payoff constant_payoff(double c) {
    return {"constant", [c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; }, false};
}

inline Payoff power_payoff() {
    return {"power2", [](double s) { return s * s; }, [](double s) { return 2.0 * s; },
            [](double) { return 2.0; }, false};
}

/// Accepted for completeness of the payoff vocabulary; rejected by every pricer.
inline Payoff digital_payoff(double strike) {
    return {"digital", [strike](double s) { return s > strike ? 1.0 : 0.0; }, [](double) { return 0.0; },
            [](double) { return 0.0; }, true};
}

struct TestFunction {
    std::string name;
    std::function<double(double)> h;
    std::function<double(double)> h1;
    std::function<double(double)> h2;
};

inline TestFunction identity_test() {
    return {"identity", [](double x) { return x; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
}

/// Bounded sigmoid c tanh(x / c + d) - c tanh(d); d shifts the inflection off 0 so h''(0) != 0.
inline TestFunction sigmoid_test(double c = 1.0, double d = 0.5) {
    bidask::detail::require(c > 0.0, "sigmoid scale must be positive");
    return {"sigmoid", [=](double x) { return c * (std::tanh(x / c + d) - std::tanh(d)); },
            [=](double x) {
                const double th = std::tanh(x / c + d);
                return 1.0 - th * th;
            },
            [=](double x) {
                const double th = std::tanh(x / c + d);
                return -2.0 * th * (1.0 - th * th) / c;
            }};
}

/// (1 - e^{-g x}) / g.
inline TestFunction exponential_utility_test(double g) {
    bidask::detail::require(g > 0.0, "risk aversion must be positive");
    return {"exp_utility", [g](double x) { return -std::expm1(-g * x) / g; }, [g](double x) { return std::exp(-g * x); },
            [g](double x) { return -g * std::exp(-g * x); }};
}

enum class LatticeMethod { pde, monte_carlo };

struct LatticeConfig {
    std::size_t nt = 41;
    std::size_t nx = 81;
    LatticeMethod method = LatticeMethod::pde;
    // PDE: log-spot nodes over the lattice span widened by `pde_margin` s0 sqrt T on each side,
    // time steps per lattice interval (Crank-Nicolson after a Rannacher start).
    std::size_t pde_nodes = 801;
    std::size_t pde_substeps = 16;
    double pde_margin = 2.0;
    // Monte Carlo: conditional prices from every node with CRN, relative spot bump.
    std::size_t mc_paths = 2000;
    std::size_t mc_substeps = 4;
    double mc_rel_bump = 1e-2;
    std::uint64_t mc_seed = 7;
};

/// Prices and hedge ratios on a uniform-time, log-uniform-spot lattice.
class DeltaLattice {
public:
    DeltaLattice() = default;
    DeltaLattice(std::vector<double> times, std::vector<double> spots)
        : times_(std::move(times)), spots_(std::move(spots)), price_(times_.size() * spots_.size()),
          delta_(times_.size() * spots_.size()) {
        ly0_ = std::log(spots_.front());
        dly_ = (std::log(spots_.back()) - ly0_) / static_cast<double>(spots_.size() - 1);
        dt_ = times_.back() / static_cast<double>(times_.size() - 1);
    }

    std::size_t nt() const { return times_.size(); }
    std::size_t nx() const { return spots_.size(); }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& spots() const { return spots_; }
    double& price_at(std::size_t j, std::size_t k) { return price_[j * nx() + k]; }
    double& delta_at(std::size_t j, std::size_t k) { return delta_[j * nx() + k]; }
    double price_at(std::size_t j, std::size_t k) const { return price_[j * nx() + k]; }
    double delta_at(std::size_t j, std::size_t k) const { return delta_[j * nx() + k]; }

    /// Bilinear in (t, ln x); clamps to the boundary outside the lattice.
    double delta(double t, double x) const { return interp(delta_, t, x); }
    double price(double t, double x) const { return interp(price_, t, x); }

    /// Node-wise (a - b) / (2 eps), used for Gateaux derivatives of the hedge.
    static DeltaLattice central_difference(const DeltaLattice& a, const DeltaLattice& b, double eps) {
        DeltaLattice out(a.times_, a.spots_);
        for (std::size_t i = 0; i < a.delta_.size(); ++i) {
            out.delta_[i] = (a.delta_[i] - b.delta_[i]) / (2.0 * eps);
            out.price_[i] = (a.price_[i] - b.price_[i]) / (2.0 * eps);
        }
        return out;
    }

private:
    double interp(const std::vector<double>& v, double t, double x) const {
        double ft = std::clamp(t / dt_, 0.0, static_cast<double>(nt() - 1));
        double fx = std::clamp((std::log(std::max(x, 1e-300)) - ly0_) / dly_, 0.0, static_cast<double>(nx() - 1));
        const std::size_t j = std::min(static_cast<std::size_t>(ft), nt() - 2);
        const std::size_t k = std::min(static_cast<std::size_t>(fx), nx() - 2);
        const double a = ft - static_cast<double>(j), b = fx - static_cast<double>(k);
        const std::size_t r0 = j * nx() + k, r1 = r0 + nx();
        return (1 - a) * ((1 - b) * v[r0] + b * v[r0 + 1]) + a * ((1 - b) * v[r1] + b * v[r1 + 1]);
    }

    std::vector<double> times_, spots_, price_, delta_;
    double ly0_ = 0.0, dly_ = 1.0, dt_ = 1.0;
};

namespace detail {

/// Thomas algorithm for a tridiagonal system; sub/diag/sup have the system size.
inline void solve_tridiagonal(const std::vector<double>& sub, const std::vector<double>& diag,
                              const std::vector<double>& sup, std::vector<double>& rhs,
                              std::vector<double>& work) {
    const std::size_t n = diag.size();
    work.resize(n);
    double beta = diag[0];
    rhs[0] /= beta;
    for (std::size_t i = 1; i < n; ++i) {
        work[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * work[i];
        if (beta == 0.0) throw NumericError("singular tridiagonal system in PDE solve");
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= work[i + 1] * rhs[i + 1];
}

inline DeltaLattice empty_lattice(const LocalVolSpec& spec, const LatticeConfig& cfg) {
    bidask::detail::require(cfg.nt >= 2 && cfg.nx >= 3, "lattice needs at least 2 time and 3 spot nodes");
    std::vector<double> t(cfg.nt), x(cfg.nx);
    for (std::size_t j = 0; j < cfg.nt; ++j)
        t[j] = spec.maturity() * static_cast<double>(j) / static_cast<double>(cfg.nt - 1);
    const double ly = std::log(spec.x_lo()), hy = std::log(spec.x_hi());
    for (std::size_t k = 0; k < cfg.nx; ++k)
        x[k] = std::exp(ly + (hy - ly) * static_cast<double>(k) / static_cast<double>(cfg.nx - 1));
    return DeltaLattice(std::move(t), std::move(x));
}

/// Seller's pricing equation C_t + s(t,x)^2 x^2 C_xx / 2 = 0 in y = ln x, C(T) = payoff,
/// Dirichlet payoff values at the far boundaries.
inline DeltaLattice pde_lattice(const LocalVolSpec& spec, const Payoff& payoff, const LatticeConfig& cfg) {
    DeltaLattice lat = empty_lattice(spec, cfg);
    bidask::detail::require(cfg.pde_nodes >= 5 && cfg.pde_substeps >= 1, "PDE grid too small");
    const double s0 = spec.sigma(0.0, spec.x0());
    const double T = spec.maturity();
    const double margin = cfg.pde_margin * s0 * std::sqrt(T);
    const double y_lo = std::log(spec.x_lo()) - margin, y_hi = std::log(spec.x_hi()) + margin;
    const std::size_t ny = cfg.pde_nodes;
    const double dy = (y_hi - y_lo) / static_cast<double>(ny - 1);
    std::vector<double> y(ny), xs(ny), c(ny);
    for (std::size_t i = 0; i < ny; ++i) {
        y[i] = y_lo + dy * static_cast<double>(i);
        xs[i] = std::exp(y[i]);
        c[i] = payoff.value(xs[i]);
    }

    auto sample = [&](std::size_t j) {
        for (std::size_t k = 0; k < lat.nx(); ++k) {
            const double f = (std::log(lat.spots()[k]) - y_lo) / dy;
            const std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(f), 1, ny - 3);
            const double w = f - static_cast<double>(i);
            // dC/dy by central differences at nodes i and i+1, then linear in y
            const double g0 = (c[i + 1] - c[i - 1]) / (2.0 * dy);
            const double g1 = (c[i + 2] - c[i]) / (2.0 * dy);
            lat.price_at(j, k) = (1 - w) * c[i] + w * c[i + 1];
            lat.delta_at(j, k) = ((1 - w) * g0 + w * g1) / lat.spots()[k];
        }
    };
    const std::size_t last = lat.nt() - 1;
    for (std::size_t k = 0; k < lat.nx(); ++k) {
        lat.price_at(last, k) = payoff.value(lat.spots()[k]);
        lat.delta_at(last, k) = payoff.d1(lat.spots()[k]);
    }

    std::vector<double> sub(ny), diag(ny), sup(ny), rhs(ny), work;
    // theta-scheme step from t_hi back to t_lo; theta = 1 implicit, 0.5 Crank-Nicolson
    auto step = [&](double t_hi, double t_lo, double theta) {
        const double dt = t_hi - t_lo;
        const double tm = 0.5 * (t_hi + t_lo);
        rhs[0] = payoff.value(xs[0]);
        rhs[ny - 1] = payoff.value(xs[ny - 1]);
        sub[0] = sup[0] = sub[ny - 1] = sup[ny - 1] = 0.0;
        diag[0] = diag[ny - 1] = 1.0;
        for (std::size_t i = 1; i + 1 < ny; ++i) {
            const double s = spec.sigma_floored(tm, xs[i]);
            const double a = 0.5 * s * s;
            const double lo = a * (1.0 / (dy * dy) + 0.5 / dy);
            const double hi = a * (1.0 / (dy * dy) - 0.5 / dy);
            const double mid = -2.0 * a / (dy * dy);
            const double lc = lo * c[i - 1] + mid * c[i] + hi * c[i + 1];
            rhs[i] = c[i] + (1.0 - theta) * dt * lc;
            sub[i] = -theta * dt * lo;
            diag[i] = 1.0 - theta * dt * mid;
            sup[i] = -theta * dt * hi;
        }
        solve_tridiagonal(sub, diag, sup, rhs, work);
        c.swap(rhs);
    };

    bool rannacher = true;
    for (std::size_t j = last; j-- > 0;) {
        const double t_hi = lat.times()[j + 1], t_lo = lat.times()[j];
        const double h = (t_hi - t_lo) / static_cast<double>(cfg.pde_substeps);
        for (std::size_t m = 0; m < cfg.pde_substeps; ++m) {
            const double a = t_hi - h * static_cast<double>(m);
            const double b = (m + 1 == cfg.pde_substeps) ? t_lo : a - h;
            if (rannacher && m < 2) {
                // damp the payoff kink: two implicit half-steps for each of the first two steps
                step(a, 0.5 * (a + b), 1.0);
                step(0.5 * (a + b), b, 1.0);
            } else {
                step(a, b, 0.5);
            }
        }
        rannacher = false;
        sample(j);
    }
    return lat;
}

/// Node-wise conditional Monte Carlo: C and a CRN central difference in x.
inline DeltaLattice mc_lattice(const LocalVolSpec& spec, const Payoff& payoff, const LatticeConfig& cfg,
                               sde::ExecPolicy exec) {
    DeltaLattice lat = empty_lattice(spec, cfg);
    bidask::detail::require(cfg.mc_paths >= 2 && cfg.mc_substeps >= 1, "Monte Carlo lattice config too small");
    const std::size_t last = lat.nt() - 1;
    const double dtl = lat.times()[1] - lat.times()[0];
    struct Acc {
        double p = 0.0, d = 0.0;
    };
    for (std::size_t j = 0; j <= last; ++j) {
        const std::size_t steps = (last - j) * cfg.mc_substeps;
        for (std::size_t k = 0; k < lat.nx(); ++k) {
            const double x = lat.spots()[k];
            if (steps == 0) {
                lat.price_at(j, k) = payoff.value(x);
                lat.delta_at(j, k) = payoff.d1(x);
                continue;
            }
            const double h = cfg.mc_rel_bump * x;
            const double dt = dtl / static_cast<double>(cfg.mc_substeps);
            const std::uint64_t node_seed = rng::splitmix64(cfg.mc_seed ^ rng::splitmix64(j * lat.nx() + k));
            auto fn = [&](std::size_t p, Acc& acc) {
                rng::GaussianStream g(node_seed, p);
                double xm = x - h, x0 = x, xp = x + h;
                for (std::size_t i = 0; i < steps; ++i) {
                    const double t = lat.times()[j] + dt * static_cast<double>(i);
                    const double dw = std::sqrt(dt) * g.next();
                    xm = std::max(xm + spec.sigma_floored(t, xm) * xm * dw, 1e-8 * x);
                    x0 = std::max(x0 + spec.sigma_floored(t, x0) * x0 * dw, 1e-8 * x);
                    xp = std::max(xp + spec.sigma_floored(t, xp) * xp * dw, 1e-8 * x);
                }
                acc.p += payoff.value(x0);
                acc.d += (payoff.value(xp) - payoff.value(xm)) / (2.0 * h);
            };
            auto merge = [](Acc& a, const Acc& b) {
                a.p += b.p;
                a.d += b.d;
            };
            const Acc s = sde::reduce_paths(cfg.mc_paths, Acc{}, fn, merge, exec);
            lat.price_at(j, k) = s.p / static_cast<double>(cfg.mc_paths);
            lat.delta_at(j, k) = s.d / static_cast<double>(cfg.mc_paths);
        }
    }
    return lat;
}

} // namespace detail

inline DeltaLattice delta_lattice(const LocalVolSpec& spec, const Payoff& payoff, const LatticeConfig& cfg = {},
                                  sde::ExecPolicy exec = {}) {
    payoff.check();
    return cfg.method == LatticeMethod::pde ? detail::pde_lattice(spec, payoff, cfg)
                                            : detail::mc_lattice(spec, payoff, cfg, exec);
}

} // namespace bidask::lv
