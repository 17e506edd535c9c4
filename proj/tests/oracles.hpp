#pragma once

// Reference implementations used only by the tests. They share no code with the
// library: normal CDF by power series, prices by quadrature against the lognormal
// density, quantiles by bisection.

#include <cmath>
#include <functional>

namespace oracle {

using ld = long double;

inline constexpr ld pi_l = 3.141592653589793238462643383279502884L;

/// Phi(x) = 1/2 + phi(x) sum_n x^{2n+1} / (1*3*...*(2n+1)); accurate for |x| < 9.
inline ld norm_cdf(ld x) {
    if (x < -9) return 0.0L;
    if (x > 9) return 1.0L;
    ld term = x, sum = x;
    for (int n = 1; n < 400; ++n) {
        term *= x * x / (2 * n + 1);
        sum += term;
        if (std::fabs(term) < 1e-22L * std::fabs(sum)) break;
    }
    return 0.5L + std::exp(-0.5L * x * x) / std::sqrt(2 * pi_l) * sum;
}

inline ld norm_pdf(ld x) { return std::exp(-0.5L * x * x) / std::sqrt(2 * pi_l); }

/// Upper quantile: x with Phi(x) = 1 - alpha, by bisection.
inline ld norm_upper_quantile(ld alpha) {
    ld lo = -9, hi = 9;
    for (int i = 0; i < 200; ++i) {
        const ld mid = 0.5L * (lo + hi);
        if (norm_cdf(mid) < 1 - alpha) lo = mid; else hi = mid;
    }
    return 0.5L * (lo + hi);
}

/// Closed-form call in extended precision (for finite-difference propagation).
inline ld bs_call(ld x, ld k, ld t, ld s) {
    const ld sd = s * std::sqrt(t);
    const ld d1 = (std::log(x / k) + 0.5L * sd * sd) / sd;
    return x * norm_cdf(d1) - k * norm_cdf(d1 - sd);
}

/// E[(S_T - K)^+] for log-normal S_T with E[S_T] = x, by composite Simpson in log-space.
inline double call_by_quadrature(double x, double k, double t, double s, int n = 20000) {
    const ld v = s * std::sqrt(t);
    const ld m = std::log(static_cast<ld>(x)) - 0.5L * v * v;
    const ld a = std::log(static_cast<ld>(k)), b = m + 14 * v;
    if (b <= a) return 0.0;
    const ld h = (b - a) / n;
    auto f = [&](ld y) { return (std::exp(y) - k) * std::exp(-(y - m) * (y - m) / (2 * v * v)) / (v * std::sqrt(2 * pi_l)); };
    ld sum = f(a) + f(b);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4 : 2) * f(a + i * h);
    return static_cast<double>(sum * h / 3);
}

/// Central first and second differences of f at u with step h (extended precision).
inline ld d1_central(const std::function<ld(ld)>& f, ld u, ld h) { return (f(u + h) - f(u - h)) / (2 * h); }
inline ld d2_central(const std::function<ld(ld)>& f, ld u, ld h) { return (f(u + h) - 2 * f(u) + f(u - h)) / (h * h); }

} // namespace oracle
