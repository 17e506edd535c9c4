#include "bidask/error_calculus.hpp"
#include "bidask/rng.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace bidask;
using Catch::Approx;

TEST_CASE("variance propagation examples") {
    const double g1[] = {1.0};
    CHECK(propagate_variance(g1, UncertainParamSet::scalar(0.2, 0.0, 4e-4)) == Approx(4e-4).epsilon(1e-15));

    const auto p2 = UncertainParamSet({1.0, 2.0}, {0.0, 0.0}, Matrix{{1.0, 0.5}, {0.5, 2.0}});
    const double g0[] = {0.0, 0.0};
    CHECK(propagate_variance(g0, p2) == 0.0);
    const double g2[] = {2.0, -1.0};
    CHECK(propagate_variance(g2, p2) == Approx(4.0).epsilon(1e-15));
}

TEST_CASE("variance propagation is a quadratic form") {
    const auto p = UncertainParamSet({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0},
                                     Matrix{{2.0, 0.3, -0.1}, {0.3, 1.0, 0.2}, {-0.1, 0.2, 0.5}});
    const double g[] = {0.7, -1.3, 2.1};
    const double base = propagate_variance(g, p);
    for (double a : {-3.0, 0.5, 10.0}) {
        const double ga[] = {a * g[0], a * g[1], a * g[2]};
        CHECK(propagate_variance(ga, p) == Approx(a * a * base).epsilon(1e-13));
    }
}

TEST_CASE("bias propagation examples") {
    const double g[] = {1.0};
    CHECK(propagate_bias(g, Matrix{{0.0}}, UncertainParamSet::scalar(0.0, 0.37, 0.9)) == Approx(0.37));
    const double g0[] = {0.0};
    CHECK(propagate_bias(g0, Matrix{{2.0}}, UncertainParamSet::scalar(0.0, 0.0, 0.25)) == Approx(0.25));
    const double g2[] = {1.0, 1.0};
    const auto p = UncertainParamSet({0.0, 0.0}, {0.1, -0.1}, Matrix{{0.04, 0.0}, {0.0, 0.09}});
    CHECK(propagate_bias(g2, Matrix{{1.0, 0.0}, {0.0, 1.0}}, p) == Approx(0.065).epsilon(1e-14));
}

TEST_CASE("bias and variance chain rules compose") {
    // F(u) = u1^2 + u1 u2 on R^2, G(v) = exp(v); compare G o F in one shot with F then G.
    const double u1 = 0.3, u2 = -0.7;
    const auto p = UncertainParamSet({u1, u2}, {0.02, -0.01}, Matrix{{0.04, 0.01}, {0.01, 0.09}});
    const double f = u1 * u1 + u1 * u2;
    const double gf[] = {2 * u1 + u2, u1};
    const Matrix hf{{2.0, 1.0}, {1.0, 0.0}};
    const double af = propagate_bias(gf, hf, p);
    const double vf = propagate_variance(gf, p);
    const double g1 = std::exp(f), g2 = std::exp(f);
    const double seq_bias = g1 * af + 0.5 * g2 * vf;
    const double seq_var = g1 * g1 * vf;

    const double gc[] = {g1 * gf[0], g1 * gf[1]};
    Matrix hc(2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) hc(i, j) = g2 * gf[i] * gf[j] + g1 * hf(i, j);
    CHECK(propagate_bias(gc, hc, p) == Approx(seq_bias).epsilon(1e-12));
    CHECK(propagate_variance(gc, p) == Approx(seq_var).epsilon(1e-12));
}

TEST_CASE("dimension mismatches are input errors") {
    const auto p = UncertainParamSet::scalar(1.0, 0.0, 1.0);
    const double g[] = {1.0, 2.0};
    CHECK_THROWS_AS(propagate_variance(g, p), InputError);
    CHECK_THROWS_AS(propagate_bias(g, Matrix{{1.0}}, p), InputError);
    CHECK_THROWS_AS(UncertainParamSet({1.0, 2.0}, {0.0}, Matrix(2)), InputError);
    CHECK_THROWS_AS(UncertainParamSet({1.0}, {0.0}, Matrix(2)), InputError);
}

TEST_CASE("covariance must be symmetric positive semi-definite") {
    CHECK_THROWS_WITH(UncertainParamSet::scalar(0.2, 0.0, -1e-4), Catch::Matchers::ContainsSubstring("covariance not PSD"));
    CHECK_THROWS_AS(UncertainParamSet({0.0, 0.0}, {0.0, 0.0}, Matrix{{1.0, 2.0}, {2.0, 1.0}}), InputError);
    CHECK_THROWS_AS(UncertainParamSet({0.0, 0.0}, {0.0, 0.0}, Matrix{{1.0, 0.5}, {0.4, 1.0}}), InputError);
    // rank one is fine
    CHECK_NOTHROW(UncertainParamSet({0.0, 0.0}, {0.0, 0.0}, Matrix{{1.0, 2.0}, {2.0, 4.0}}));
    CHECK_NOTHROW(UncertainParamSet({0.0, 0.0}, {0.0, 0.0}, Matrix(2)));
}

TEST_CASE("quantile multiplier") {
    CHECK(quantile_multiplier(0.01, QuantileMethod::gaussian) == Approx(2.326347874040841).margin(1e-9));
    CHECK(quantile_multiplier(0.01, QuantileMethod::chebyshev) == Approx(std::sqrt(99.0)).epsilon(1e-15));
    CHECK(quantile_multiplier(0.5 - 1e-12, QuantileMethod::chebyshev) == Approx(1.0).margin(1e-11));
    const double near_half = quantile_multiplier(0.5 - 1e-9, QuantileMethod::gaussian);
    CHECK(near_half > 0.0);
    CHECK(near_half < 1e-8);
    for (double a : {0.0, 0.5, 0.7, -0.1}) {
        CHECK_THROWS_AS(quantile_multiplier(a, QuantileMethod::gaussian), InputError);
        CHECK_THROWS_AS(quantile_multiplier(a, QuantileMethod::chebyshev), InputError);
    }
}

TEST_CASE("gaussian multiplier round-trips through an independent CDF") {
    for (double a : {1e-6, 1e-4, 0.001, 0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49}) {
        const double k = quantile_multiplier(a, QuantileMethod::gaussian);
        CHECK(static_cast<double>(oracle::norm_cdf(k)) == Approx(1.0 - a).margin(1e-9));
        CHECK(k == Approx(static_cast<double>(oracle::norm_upper_quantile(a))).margin(1e-9));
        CHECK(quantile_multiplier(a, QuantileMethod::chebyshev) >= k);
    }
}

TEST_CASE("quote construction") {
    const auto z = make_quote(5.0, 0.0, 0.0, 0.05, QuantileMethod::gaussian);
    CHECK(z.bid == 5.0);
    CHECK(z.mid == 5.0);
    CHECK(z.ask == 5.0);
    CHECK(z.spread == 0.0);

    // arithmetic reference: m = 7.965567 - 0.000397, k = N_{0.99}, s = sqrt(0.6302846)
    const auto q = make_quote(7.965567, -0.000397, 0.6302846, 0.01, QuantileMethod::gaussian);
    CHECK(q.ask == Approx(9.8120684045473).margin(1e-9));
    CHECK(q.bid == Approx(6.1182715954527).margin(1e-9));
    CHECK(q.spread == Approx(3.6937968090946).margin(1e-9));
    CHECK(q.ask + q.bid == 2.0 * q.mid);
    CHECK(q.bid <= q.mid);
    CHECK(q.mid <= q.ask);

    const auto q5 = make_quote(7.965567, -0.000397, 0.6302846, 0.05, QuantileMethod::gaussian);
    CHECK(q5.mid == q.mid);
    CHECK(q5.spread < q.spread);

    CHECK_THROWS_AS(make_quote(1.0, 0.0, -1.0, 0.05, QuantileMethod::gaussian), NumericError);
    CHECK(make_quote(1.0, 0.0, -1e-14, 0.05, QuantileMethod::gaussian).spread == 0.0);
    CHECK_THROWS_AS(make_quote(1.0, 0.0, 1.0, 0.7, QuantileMethod::gaussian), InputError);
}

TEST_CASE("method names") {
    CHECK(parse_method("gaussian") == QuantileMethod::gaussian);
    CHECK(parse_method("chebyshev") == QuantileMethod::chebyshev);
    CHECK_THROWS_AS(parse_method("normal"), InputError);
}

TEST_CASE("one-sided Chebyshev tail check") {
    const std::vector<double> flat(100, 3.0);
    CHECK(chebyshev_tail_check(flat, 3.0, 1.0, 2.0) == 0.0);
    CHECK(chebyshev_bound(1.0) == 0.5);
    CHECK(chebyshev_bound(3.0) == Approx(0.1));
    CHECK_THROWS_AS(chebyshev_tail_check(std::vector<double>{}, 0.0, 1.0, 1.0), InputError);
    CHECK_THROWS_AS(chebyshev_tail_check(flat, 0.0, 0.0, 1.0), InputError);

    std::vector<double> z(1000000);
    rng::GaussianStream g(99);
    for (double& v : z) v = g.next();
    const double f = chebyshev_tail_check(z, 0.0, 1.0, 2.0);
    const double p = 0.02275013194817921;
    CHECK(f == Approx(p).margin(5.0 * std::sqrt(p * (1 - p) / 1e6)));
    CHECK(f <= chebyshev_bound(2.0));
}
