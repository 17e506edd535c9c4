#pragma once

// Black-Scholes calls (zero rates, unit numeraire) with a scalar uncertain volatility.

#include "bidask/error_calculus.hpp"
#include "bidask/errors.hpp"
#include "bidask/normal.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bidask::bs {

inline constexpr double default_vol_floor = 1e-6;

struct BsInputs {
    double spot = 0.0;
    double strike = 0.0;
    double maturity = 0.0;
    UncertainParamSet vol;  // dimension 1: value, bias, variance of the volatility estimator
    double floor = default_vol_floor;

    double sigma() const { return vol.values()[0]; }
    double sigma_bias() const { return vol.bias()[0]; }
    double sigma_var() const { return vol.cov()(0, 0); }

    void validate() const {
        bidask::detail::require(spot > 0.0 && std::isfinite(spot), "spot must be positive");
        bidask::detail::require(strike > 0.0 && std::isfinite(strike), "strike must be positive");
        bidask::detail::require(maturity > 0.0 && std::isfinite(maturity), "maturity must be positive");
        bidask::detail::require(floor > 0.0, "volatility floor must be positive");
        bidask::detail::require(vol.size() == 1, "volatility parameter set must be one-dimensional");
        bidask::detail::require(sigma() >= floor, "volatility must be at least the positivity floor");
    }
};

inline BsInputs make_inputs(double spot, double strike, double maturity, double sigma,
                            double sigma_bias = 0.0, double sigma_var = 0.0) {
    BsInputs in{spot, strike, maturity, UncertainParamSet::scalar(sigma, sigma_bias, sigma_var)};
    in.validate();
    return in;
}

namespace detail {

inline std::pair<double, double> d1_d2(double x, double k, double t, double s) {
    const double sd = s * std::sqrt(t);
    const double d1 = (std::log(x / k) + 0.5 * s * s * t) / sd;
    return {d1, d1 - sd};
}

inline double price(double x, double k, double t, double s) {
    const auto [d1, d2] = d1_d2(x, k, t, s);
    return x * normal::cdf(d1) - k * normal::cdf(d2);
}

inline double vega(double x, double k, double t, double s) {
    const auto [d1, d2] = d1_d2(x, k, t, s);
    return x * normal::pdf(d1) * std::sqrt(t);
}

} // namespace detail

inline std::pair<double, double> d1_d2(const BsInputs& in) {
    in.validate();
    return detail::d1_d2(in.spot, in.strike, in.maturity, in.sigma());
}

inline double bs_price(const BsInputs& in) {
    in.validate();
    return detail::price(in.spot, in.strike, in.maturity, in.sigma());
}

inline double bs_price(double x, double k, double t, double sigma) {
    return bs_price(make_inputs(x, k, t, sigma));
}

inline double bs_vega(const BsInputs& in) {
    in.validate();
    return detail::vega(in.spot, in.strike, in.maturity, in.sigma());
}

/// A[C] = vega (A[s] + d1 d2 / (2 s) Γ[s]).
inline double bias_correction(const BsInputs& in) {
    const auto [d1, d2] = d1_d2(in);
    return bs_vega(in) * (in.sigma_bias() + d1 * d2 / (2.0 * in.sigma()) * in.sigma_var());
}

/// Γ[C] = vega^2 Γ[s].
inline double variance_correction(const BsInputs& in) {
    const double v = bs_vega(in);
    return v * v * in.sigma_var();
}

/// Closed-form ∂A[C]/∂K.
inline double bias_correction_dk(const BsInputs& in) {
    const auto [d1, d2] = d1_d2(in);
    const double s = in.sigma();
    const double k = in.strike;
    return d1 * bias_correction(in) / (k * s * std::sqrt(in.maturity)) -
           in.spot / (2.0 * k * s * s) * normal::pdf(d1) * (d1 + d2) * in.sigma_var();
}

inline QuoteBand quote(const BsInputs& in, double alpha, QuantileMethod method) {
    return make_quote(bs_price(in), bias_correction(in), variance_correction(in), alpha, method);
}

/// Volatility reproducing `price` under Black-Scholes: safeguarded Newton with
/// bisection fallback on [floor, 5].
inline double implied_vol(double price, double x, double k, double t,
                          double floor = default_vol_floor) {
    bidask::detail::require(x > 0.0 && k > 0.0 && t > 0.0, "spot, strike, maturity must be positive");
    const double intrinsic = std::max(x - k, 0.0);
    if (!(price > intrinsic && price < x))
        throw InputError("price " + std::to_string(price) + " outside no-arbitrage bounds (" +
                         std::to_string(intrinsic) + ", " + std::to_string(x) + ")");
    double lo = floor;
    double hi = 5.0;
    const double f_lo = detail::price(x, k, t, lo) - price;
    if (f_lo >= 0.0) {
        if (f_lo <= 1e-10) return lo;
        throw InputError("price below the floor-volatility price; implied vol undefined");
    }
    const double f_hi = detail::price(x, k, t, hi) - price;
    if (f_hi < 0.0) throw NumericError("implied vol above the search bracket [floor, 5]");

    // Start from the ATM approximation C ~ 0.4 x s sqrt(t), kept inside the bracket.
    double s = std::clamp(price / (0.4 * x * std::sqrt(t)), 0.05, 1.0);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = detail::price(x, k, t, s) - price;
        if (f == 0.0) return s;
        if (f > 0.0) hi = s; else lo = s;
        const double v = detail::vega(x, k, t, s);
        double next = (v > 0.0) ? s - f / v : lo - 1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) <= 1e-15 * std::max(1.0, s) || hi - lo <= 1e-15) return next;
        s = next;
    }
    throw NumericError("implied vol did not converge in 200 iterations");
}

struct SmileReport {
    double rr = 0.0;
    bool atm_bias_positive = false;
    bool atm_bias_convex = false;
    bool term_decay_positive = false;
    double positive_threshold = 0.0;  // s^2 T / 4
    double convex_threshold = 0.0;    // (s^4T^2 + 4s^2T + 32) / (4s^2T + 16)
    double decay_threshold = 0.0;     // (s^2T (s^2T-4)^2 + 128) / (4 (16 + s^4T^2))
};

inline SmileReport smile_analysis(const BsInputs& in) {
    in.validate();
    bidask::detail::require(in.sigma_var() > 0.0, "smile_analysis needs a positive volatility variance");
    const double s = in.sigma();
    const double st = s * s * in.maturity;
    SmileReport r;
    r.rr = 2.0 * s * in.sigma_bias() / in.sigma_var();
    r.positive_threshold = 0.25 * st;
    r.convex_threshold = (st * st + 4.0 * st + 32.0) / (4.0 * st + 16.0);
    r.decay_threshold = 0.25 * (st * (st - 4.0) * (st - 4.0) + 128.0) / (16.0 + st * st);
    r.atm_bias_positive = r.rr > r.positive_threshold;
    r.atm_bias_convex = r.rr < r.convex_threshold;
    r.term_decay_positive = r.rr > r.decay_threshold;
    return r;
}

struct SmileCell {
    double strike = 0.0;
    double maturity = 0.0;
    double mid = 0.0;
    double implied_vol = 0.0;
    bool valid = false;
};

/// Implied vols of the mid price (price + bias correction) on a strike x maturity
/// grid. `vol_by_maturity` holds one parameter set per maturity. Rows come out in
/// maturity-major, strike-minor order.
inline std::vector<SmileCell> smile_surface(double x, std::span<const double> strikes,
                                            std::span<const double> maturities,
                                            std::span<const UncertainParamSet> vol_by_maturity) {
    bidask::detail::require(!strikes.empty() && !maturities.empty(), "strikes and maturities must be nonempty");
    bidask::detail::require(vol_by_maturity.size() == maturities.size(),
                            "need one volatility parameter set per maturity");
    std::vector<SmileCell> out;
    out.reserve(strikes.size() * maturities.size());
    for (std::size_t j = 0; j < maturities.size(); ++j) {
        for (double k : strikes) {
            BsInputs in{x, k, maturities[j], vol_by_maturity[j]};
            in.validate();
            SmileCell c{k, maturities[j], bs_price(in) + bias_correction(in), 0.0, false};
            try {
                c.implied_vol = implied_vol(c.mid, x, k, maturities[j], in.floor);
                c.valid = true;
            } catch (const InputError&) {
            } catch (const NumericError&) {
            }
            out.push_back(c);
        }
    }
    return out;
}

inline std::vector<SmileCell> smile_surface(double x, std::span<const double> strikes,
                                            std::span<const double> maturities,
                                            const UncertainParamSet& vol) {
    std::vector<UncertainParamSet> v(maturities.size(), vol);
    return smile_surface(x, strikes, maturities, v);
}

} // namespace bidask::bs
