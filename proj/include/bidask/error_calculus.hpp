#pragma once

#include "bidask/errors.hpp"
#include "bidask/normal.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bidask {

/// Dense square matrix, row-major. Small (parameter-space) sizes only.
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows) : n_(rows.size()) {
        a_.reserve(n_ * n_);
        for (const auto& r : rows) {
            detail::require(r.size() == n_, "matrix rows must form a square matrix");
            a_.insert(a_.end(), r.begin(), r.end());
        }
    }
    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        Matrix m(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            detail::require(rows[i].size() == rows.size(), "matrix rows must form a square matrix");
            for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
        }
        return m;
    }
    static Matrix diagonal(std::span<const double> d) {
        Matrix m(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t size() const { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }
    double frobenius() const {
        double s = 0.0;
        for (double v : a_) s += v * v;
        return std::sqrt(s);
    }
    bool is_symmetric(double tol = 0.0) const {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
        return true;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

/// Lower-triangular factor L with L L^T = a, allowing zero pivots (semi-definite).
/// Pivots within `tol` of zero are treated as exact zeros; returns false when the
/// matrix is not positive semi-definite at that tolerance.
inline bool psd_factor(const Matrix& a, double tol, Matrix& l) {
    const std::size_t n = a.size();
    l = Matrix(n);
    for (std::size_t k = 0; k < n; ++k) {
        double d = a(k, k);
        for (std::size_t j = 0; j < k; ++j) d -= l(k, j) * l(k, j);
        if (d < -tol) return false;
        if (d <= tol) {
            // zero pivot: the rest of the column must vanish too
            for (std::size_t i = k + 1; i < n; ++i) {
                double s = a(i, k);
                for (std::size_t j = 0; j < k; ++j) s -= l(i, j) * l(k, j);
                if (std::abs(s) > std::sqrt(tol * std::max(tol, std::abs(a(i, i)))) + tol) return false;
            }
            continue;
        }
        const double p = std::sqrt(d);
        l(k, k) = p;
        for (std::size_t i = k + 1; i < n; ++i) {
            double s = a(i, k);
            for (std::size_t j = 0; j < k; ++j) s -= l(i, j) * l(k, j);
            l(i, k) = s / p;
        }
    }
    return true;
}

/// Estimated parameter values together with the bias and covariance of their
/// estimators, evaluated at the estimates.
class UncertainParamSet {
public:
    UncertainParamSet() = default;
    UncertainParamSet(std::vector<double> values, std::vector<double> bias, Matrix cov)
        : values_(std::move(values)), bias_(std::move(bias)), cov_(std::move(cov)) {
        detail::require(bias_.size() == values_.size(), "bias dimension must match values");
        detail::require(cov_.size() == values_.size(), "covariance dimension must match values");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            detail::require(std::isfinite(values_[i]) && std::isfinite(bias_[i]),
                            "parameter values and biases must be finite");
            for (std::size_t j = 0; j < values_.size(); ++j)
                detail::require(std::isfinite(cov_(i, j)), "covariance entries must be finite");
        }
        const double scale = std::max(std::abs(cov_.trace()), cov_.frobenius());
        detail::require(cov_.is_symmetric(1e-12 * scale), "covariance must be symmetric");
        detail::require(psd_factor(cov_, 1e-10 * scale, chol_),
                        "covariance not PSD (positive semi-definite)");
    }

    /// One-parameter convenience: value, bias, variance.
    static UncertainParamSet scalar(double value, double bias, double variance) {
        return UncertainParamSet({value}, {bias}, Matrix{{variance}});
    }

    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& bias() const { return bias_; }
    const Matrix& cov() const { return cov_; }
    /// L with L L^T = cov (zero columns for degenerate directions).
    const Matrix& cov_factor() const { return chol_; }

    UncertainParamSet with_values(std::vector<double> v) const {
        detail::require(v.size() == size(), "dimension mismatch");
        UncertainParamSet out = *this;
        out.values_ = std::move(v);
        return out;
    }

private:
    std::vector<double> values_;
    std::vector<double> bias_;
    Matrix cov_;
    Matrix chol_;
};

/// Γ[F(U)] = Σ ∂_iF ∂_jF Γ[U_i,U_j]. Round-off negatives are clamped to zero.
inline double propagate_variance(std::span<const double> grad, const UncertainParamSet& params) {
    detail::require(grad.size() == params.size(), "gradient dimension must match parameters");
    const Matrix& c = params.cov();
    double q = 0.0;
    double g2 = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        g2 += grad[i] * grad[i];
        for (std::size_t j = 0; j < grad.size(); ++j) q += grad[i] * grad[j] * c(i, j);
    }
    if (q >= 0.0) return q;
    if (q >= -1e-12 * g2 * c.frobenius()) return 0.0;
    throw NumericError("propagated variance is negative beyond round-off: " + std::to_string(q));
}

/// A[F(U)] = Σ ∂_iF A[U_i] + ½ Σ ∂_ij F Γ[U_i,U_j].
inline double propagate_bias(std::span<const double> grad, const Matrix& hess,
                             const UncertainParamSet& params) {
    detail::require(grad.size() == params.size() && hess.size() == params.size(),
                    "gradient/hessian dimension must match parameters");
    const Matrix& c = params.cov();
    double b = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        b += grad[i] * params.bias()[i];
        for (std::size_t j = 0; j < grad.size(); ++j) b += 0.5 * hess(i, j) * c(i, j);
    }
    return b;
}

enum class QuantileMethod { gaussian, chebyshev };

inline std::string_view to_string(QuantileMethod m) {
    return m == QuantileMethod::gaussian ? "gaussian" : "chebyshev";
}

inline QuantileMethod parse_method(std::string_view s) {
    if (s == "gaussian") return QuantileMethod::gaussian;
    if (s == "chebyshev") return QuantileMethod::chebyshev;
    throw InputError("method must be 'gaussian' or 'chebyshev', got '" + std::string(s) + "'");
}

inline void check_alpha(double alpha) {
    detail::require(alpha > 0.0 && alpha < 0.5, "alpha must lie in (0, 0.5)");
}

/// Multiplier k of the standard deviation for risk tolerance alpha: the normal
/// (1-alpha)-quantile, or the one-sided Chebyshev (Cantelli) value solving
/// 1/(1+k^2) = alpha.
inline double quantile_multiplier(double alpha, QuantileMethod method) {
    check_alpha(alpha);
    if (method == QuantileMethod::gaussian) return -normal::quantile(alpha);
    return std::sqrt((1.0 - alpha) / alpha);
}

struct QuoteBand {
    double center = 0.0;
    double bias_term = 0.0;
    double std_term = 0.0;
    double alpha = 0.0;
    QuantileMethod method = QuantileMethod::gaussian;
    double multiplier = 0.0;
    double bid = 0.0;
    double mid = 0.0;
    double ask = 0.0;
    double spread = 0.0;
};

inline QuoteBand make_quote(double center, double bias_term, double variance, double alpha,
                            QuantileMethod method) {
    detail::require(std::isfinite(center) && std::isfinite(bias_term) && std::isfinite(variance),
                    "quote inputs must be finite");
    if (variance < 0.0) {
        if (variance < -1e-12 * std::max(1.0, center * center))
            throw NumericError("negative variance passed to make_quote");
        variance = 0.0;
    }
    QuoteBand q;
    q.center = center;
    q.bias_term = bias_term;
    q.std_term = std::sqrt(variance);
    q.alpha = alpha;
    q.method = method;
    q.multiplier = quantile_multiplier(alpha, method);
    const double m0 = center + bias_term;
    const double half = q.multiplier * q.std_term;
    q.ask = m0 + half;
    q.bid = m0 - half;
    q.mid = 0.5 * (q.ask + q.bid);
    q.spread = q.ask - q.bid;
    return q;
}

/// Empirical frequency of {x - mean >= k std}; the one-sided Chebyshev bound is 1/(1+k^2).
inline double chebyshev_tail_check(std::span<const double> samples, double mean, double std,
                                   double k) {
    detail::require(!samples.empty(), "chebyshev_tail_check needs samples");
    detail::require(std > 0.0, "std must be positive");
    detail::require(k >= 1.0, "k must be >= 1");
    const double thr = k * std;
    const auto hits = std::count_if(samples.begin(), samples.end(),
                                    [&](double x) { return x - mean >= thr; });
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

inline double chebyshev_bound(double k) { return 1.0 / (1.0 + k * k); }

} // namespace bidask
