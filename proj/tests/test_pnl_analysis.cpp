#include "bidask/pnl_analysis.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace bidask;
using Catch::Approx;

namespace {

// closed-form references in extended precision, independent of bs_pricing
double ref_price(double s) { return static_cast<double>(oracle::bs_call(100.0L, 100.0L, 1.0L, s)); }
double ref_vega(double s) {
    return static_cast<double>(oracle::d1_central([](oracle::ld v) { return oracle::bs_call(100, 100, 1, v); }, s, 1e-5L));
}
double ref_vomma(double s) {
    return static_cast<double>(oracle::d2_central([](oracle::ld v) { return oracle::bs_call(100, 100, 1, v); }, s, 1e-4L));
}
double ref_delta(double s) {
    const double d1 = (0.5 * s * s) / s;
    return static_cast<double>(oracle::norm_cdf(d1));
}

bool within(double est, double ref, double se, double rel) {
    return std::abs(est - ref) <= std::max(3.0 * se, rel * std::abs(ref));
}

pnl::McConfig mc(std::size_t paths, std::size_t steps = 128, std::uint64_t seed = 1) {
    pnl::McConfig c;
    c.paths = paths;
    c.steps = steps;
    c.seed = seed;
    return c;
}

lv::LocalVolSpec two_component(double var1, double var2) {
    return lv::LocalVolSpec({lv::constant_basis(), lv::spot_linear_basis(100.0)},
                            UncertainParamSet({0.2, 0.05}, {0.0, 0.0}, Matrix{{var1, 0.0}, {0.0, var2}}), 100.0, 1.0);
}

} // namespace

TEST_CASE("floor and payoff preconditions") {
    CHECK_THROWS_AS(lv::constant_vol_spec(100, 1, 1e-8, 0, 0), InputError);
    // sigma = 0.2 - 0.5 (x/100 - 1) drops below the floor at the top of the domain
    CHECK_THROWS_AS(lv::LocalVolSpec({lv::constant_basis(), lv::spot_linear_basis(100.0)},
                                     UncertainParamSet({0.2, -0.5}, {0, 0}, Matrix(2)), 100.0, 1.0),
                    InputError);
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0, 4e-4);
    CHECK_THROWS_WITH(spec.bumped(0, -0.3), Catch::Matchers::ContainsSubstring("smaller eps"));
    CHECK_THROWS_WITH(pnl::gateaux_price(spec, lv::call_payoff(100), 0, 0.5, mc(10)),
                      Catch::Matchers::ContainsSubstring("smaller eps"));
    CHECK_THROWS_AS(pnl::gateaux_price(spec, lv::call_payoff(100), 0, 0.0, mc(10)), InputError);

    const auto dig = lv::digital_payoff(100);
    CHECK_THROWS_AS(pnl::price_and_delta(spec, dig, mc(10)), InputError);
    CHECK_THROWS_AS(pnl::gateaux_price(spec, dig, 0, 1e-3, mc(10)), InputError);
    CHECK_THROWS_AS(pnl::pnl_functionals(spec, dig, lv::identity_test(), mc(10)), InputError);
    CHECK_THROWS_AS(lv::delta_lattice(spec, dig), InputError);
}

TEST_CASE("price and lattice on the constant basis") {
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0, 0);
    const auto r = pnl::price_and_delta(spec, lv::smoothed_call_payoff(100, 0.01), mc(40000));
    CHECK(std::abs(r.price.mean - ref_price(0.2)) <= 3.0 * r.price.std_error);
    CHECK(r.lattice.price(0.0, 100.0) == Approx(ref_price(0.2)).epsilon(1e-3));
    CHECK(r.lattice.delta(0.0, 100.0) == Approx(ref_delta(0.2)).epsilon(1e-3));
    // deltas saturate far from the strike
    const auto& lat = r.lattice;
    CHECK(lat.delta_at(0, 0) < 1e-3);
    CHECK(lat.delta_at(0, lat.nx() - 1) > 1.0 - 1e-3);
    CHECK(lat.nt() == 41);
    CHECK(lat.nx() == 81);
    CHECK(lat.spots().front() == Approx(100.0 * std::exp(-0.8)));
    CHECK(lat.spots().back() == Approx(100.0 * std::exp(0.8)));

    const auto c = pnl::price_and_delta(spec, lv::constant_payoff(3.0), mc(100));
    CHECK(c.price.mean == 3.0);
    for (std::size_t j = 0; j < c.lattice.nt(); ++j)
        for (std::size_t k = 0; k < c.lattice.nx(); ++k) {
            CHECK(c.lattice.delta_at(j, k) == Approx(0.0).margin(1e-10));
            CHECK(c.lattice.price_at(j, k) == Approx(3.0).epsilon(1e-10));
        }

    const auto l = pnl::price_and_delta(spec, lv::linear_payoff(), mc(20000));
    CHECK(std::abs(l.price.mean - 100.0) <= 3.0 * l.price.std_error);
    // exact up to the log-grid discretization of the pricing equation
    CHECK(l.lattice.delta(0.3, 97.0) == Approx(1.0).epsilon(1e-5));
    CHECK(l.lattice.price(0.0, 100.0) == Approx(100.0).epsilon(1e-7));
}

TEST_CASE("Monte Carlo lattice agrees with the PDE lattice") {
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0, 0);
    lv::LatticeConfig cfg;
    cfg.method = lv::LatticeMethod::monte_carlo;
    cfg.nt = 6;
    cfg.nx = 11;
    cfg.mc_paths = 20000;
    const auto m = lv::delta_lattice(spec, lv::smoothed_call_payoff(100, 1.0), cfg);
    cfg.method = lv::LatticeMethod::pde;
    const auto p = lv::delta_lattice(spec, lv::smoothed_call_payoff(100, 1.0), cfg);
    REQUIRE(m.spots() == p.spots());
    double worst = 0.0;
    for (std::size_t j = 0; j < m.nt(); ++j)
        for (std::size_t k = 0; k < m.nx(); ++k) worst = std::max(worst, std::abs(m.delta_at(j, k) - p.delta_at(j, k)));
    CHECK(worst < 0.02);
}

TEST_CASE("Gateaux derivative of the price") {
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0, 4e-4);
    const auto call = lv::call_payoff(100);
    const auto g = pnl::gateaux_price(spec, call, 0, 1e-3, mc(40000));
    CHECK(within(g.mean, ref_vega(0.2), g.std_error, 0.01));

    const auto half = pnl::gateaux_price(spec, call, 0, 5e-4, mc(40000));
    CHECK(std::abs(half.mean - g.mean) <= 3.0 * std::hypot(g.std_error, half.std_error));

    auto indep = mc(40000);
    indep.common_random_numbers = false;
    const auto gi = pnl::gateaux_price(spec, call, 0, 1e-3, indep);
    CHECK(gi.std_error >= 10.0 * g.std_error);

    const auto lin = pnl::gateaux_price(spec, lv::linear_payoff(), 0, 1e-3, mc(20000));
    CHECK(std::abs(lin.mean) <= 3.0 * lin.std_error + 1e-9);
}

TEST_CASE("Gateaux derivative of the hedge") {
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0, 4e-4);
    const double e = 1e-3;
    const auto dd = pnl::gateaux_delta(spec, lv::call_payoff(100), 0, e);
    const double ref = (ref_delta(0.2 + e) - ref_delta(0.2 - e)) / (2 * e);
    CHECK(dd.delta(0.0, 100.0) == Approx(ref).epsilon(0.01));
    // four standard deviations out the sensitivity is small and still matches the closed form
    for (std::size_t k : {std::size_t{0}, dd.nx() - 1}) {
        const double x = dd.spots()[k];
        auto delta_at = [x](double s) {
            return static_cast<double>(oracle::norm_cdf((std::log(x / 100.0) + 0.5 * s * s) / s));
        };
        const double r = (delta_at(0.2 + e) - delta_at(0.2 - e)) / (2 * e);
        CHECK(std::abs(dd.delta_at(0, k)) < 0.01);
        CHECK(dd.delta_at(0, k) == Approx(r).epsilon(0.05).margin(3e-4));
    }

    // zero up to the discretization error of the solver, divided by 2 eps
    const auto lin = pnl::gateaux_delta(spec, lv::linear_payoff(), 0, e);
    for (std::size_t j = 0; j < lin.nt(); ++j)
        for (std::size_t k = 0; k < lin.nx(); ++k) CHECK(lin.delta_at(j, k) == Approx(0.0).margin(1e-3));
}

TEST_CASE("functionals reproduce the closed forms on the constant basis") {
    const auto call = lv::call_payoff(100);

    const auto z = pnl::pnl_functionals(lv::constant_vol_spec(100, 1, 0.2, 0, 0), call, lv::identity_test(), mc(2000));
    CHECK(z.bias == 0.0);
    CHECK(z.variance == 0.0);

    const auto st = pnl::pnl_functionals(lv::constant_vol_spec(100, 1, 0.2, 0.01, 4e-4), call, lv::identity_test(),
                                         mc(40000));
    const double vega = ref_vega(0.2), vomma = ref_vomma(0.2);
    CHECK(within(st.variance, vega * vega * 4e-4, st.variance_se, 0.02));
    CHECK(within(st.bias, vega * 0.01 + 0.5 * vomma * 4e-4, st.bias_se, 0.02));
    CHECK(st.lambda1[0] == st.dprice[0].mean);
    CHECK(st.psi[0] == st.lambda1[0]);
    CHECK(st.lambda2(0, 0) == st.d2price(0, 0));
    CHECK(within(st.d2price(0, 0), vomma, st.d2price_se(0, 0), 0.02));
    CHECK(st.integral_term(0, 0) == 0.0);

    // pure second-order bias
    const auto sb = pnl::pnl_functionals(lv::constant_vol_spec(100, 1, 0.2, 0.0, 4e-4), call, lv::identity_test(),
                                         mc(40000));
    CHECK(within(sb.bias, 0.5 * vomma * 4e-4, sb.bias_se, 0.02));
}

TEST_CASE("curved test function adds the hedge-sensitivity integral") {
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0.005, 4e-4);
    const auto h = lv::sigmoid_test(5.0, 0.5);
    const auto st = pnl::pnl_functionals(spec, lv::smoothed_call_payoff(100, 1.0), h, mc(5000));
    const double h1 = h.h1(0.0), h2 = h.h2(0.0);
    CHECK(h2 < 0.0);
    CHECK(st.h0 == 0.0);
    CHECK(st.integral_term(0, 0) > 0.0);
    CHECK(st.lambda1[0] == Approx(h1 * st.dprice[0].mean).epsilon(1e-14));
    const double dc = st.dprice[0].mean;
    CHECK(st.lambda2(0, 0) == Approx(h1 * st.d2price(0, 0) + h2 * (dc * dc + st.integral_term(0, 0))).epsilon(1e-12));
    CHECK(st.variance == Approx(h1 * h1 * dc * dc * 4e-4).epsilon(1e-12));
    CHECK(st.bias == Approx(st.lambda1[0] * 0.005 + 0.5 * st.lambda2(0, 0) * 4e-4).epsilon(1e-12));
    CHECK(st.bias_se > 0.0);
}

TEST_CASE("tail bound") {
    pnl::PnLStats st;
    st.h0 = 1.0;
    st.bias = 0.5;
    st.variance = 4.0;
    CHECK(pnl::tail_bound(st, 1.0).bound == 0.5);
    CHECK(pnl::tail_bound(st, 3.0).bound == Approx(0.1));
    CHECK(pnl::tail_bound(st, 3.0).threshold == Approx(7.5));
    CHECK_THROWS_AS(pnl::tail_bound(st, 0.5), InputError);

    const std::vector<double> s{0.0, 1.0, 2.0, 3.0};
    CHECK(pnl::exceedance_frequency(s, 0.0, 0.0, 1.0, 1.0) == 0.75);
    CHECK(pnl::exceedance_frequency(s, 0.0, 1.0, 1.0, 2.0) == 0.25);
}

TEST_CASE("general quotes") {
    const auto call = lv::call_payoff(100);
    const auto flat = pnl::general_quote(lv::constant_vol_spec(100, 1, 0.2, 0, 0), call, 0.01,
                                         QuantileMethod::gaussian, mc(2000));
    CHECK(flat.band.bid == flat.band.mid);
    CHECK(flat.band.ask == flat.band.mid);
    CHECK(flat.band.mid == flat.stats.price.mean);

    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0.01, 4e-4);
    const auto q1 = pnl::general_quote(spec, call, 0.01, QuantileMethod::gaussian, mc(20000));
    const auto q5 = pnl::general_quote(spec, call, 0.05, QuantileMethod::gaussian, mc(20000));
    const auto qc = pnl::general_quote(spec, call, 0.05, QuantileMethod::chebyshev, mc(20000));
    CHECK(q1.band.mid == q5.band.mid);
    CHECK(q1.band.mid == qc.band.mid);
    CHECK(q1.band.spread / q5.band.spread ==
          Approx(quantile_multiplier(0.01, QuantileMethod::gaussian) / quantile_multiplier(0.05, QuantileMethod::gaussian))
              .epsilon(1e-14));
    CHECK(qc.band.spread > q5.band.spread);

    const double vega = ref_vega(0.2), vomma = ref_vomma(0.2);
    const double mid = ref_price(0.2) + vega * 0.01 + 0.5 * vomma * 4e-4;
    const double half = quantile_multiplier(0.01, QuantileMethod::gaussian) * vega * 0.02;
    CHECK(within(q1.band.mid, mid, q1.mid_se, 0.02));
    CHECK(within(q1.band.ask, mid + half, q1.ask_se, 0.02));
    CHECK(within(q1.band.bid, mid - half, q1.bid_se, 0.02));
}

TEST_CASE("variance is additive over independent basis directions") {
    const auto call = lv::call_payoff(100);
    const auto both = pnl::pnl_functionals(two_component(4e-4, 1e-3), call, lv::identity_test(), mc(5000));
    const auto first = pnl::pnl_functionals(two_component(4e-4, 0.0), call, lv::identity_test(), mc(5000));
    const auto second = pnl::pnl_functionals(two_component(0.0, 1e-3), call, lv::identity_test(), mc(5000));
    const double p1 = both.psi[0], p2 = both.psi[1];
    CHECK(both.variance == Approx(p1 * p1 * 4e-4 + p2 * p2 * 1e-3).epsilon(1e-13));
    CHECK(both.variance == Approx(first.variance + second.variance).epsilon(1e-13));
    CHECK(both.variance >= 0.0);

    // with the slope coefficient at zero the surface is the constant one
    const auto flat = lv::LocalVolSpec({lv::constant_basis(), lv::spot_linear_basis(100.0)},
                                       UncertainParamSet({0.2, 0.0}, {0.0, 0.0}, Matrix{{4e-4, 0.0}, {0.0, 0.0}}), 100.0, 1.0);
    const auto one = pnl::pnl_functionals(lv::constant_vol_spec(100, 1, 0.2, 0.0, 4e-4), call, lv::identity_test(), mc(5000));
    const auto two = pnl::pnl_functionals(flat, call, lv::identity_test(), mc(5000));
    CHECK(two.psi[0] == Approx(one.psi[0]).epsilon(1e-12));
    CHECK(two.variance == Approx(one.variance).epsilon(1e-12));
}

TEST_CASE("delta hedging") {
    const auto spec = lv::constant_vol_spec(100, 1, 0.2, 0, 0);
    const auto pay = lv::smoothed_call_payoff(100, 5.0);
    const std::function<double(double, double)> same = [](double, double) { return 0.2; };
    std::vector<double> sd;
    for (std::size_t n : {128, 256, 512}) {
        const auto h = pnl::hedge_simulate(same, spec, pay, sde::TimeGrid::uniform(1.0, n), 4000, 3);
        CHECK(std::abs(h.mean.mean) <= 3.0 * h.mean.std_error);
        CHECK(h.pnl.size() == 4000);
        sd.push_back(h.std_dev);
    }
    CHECK(sd[1] < sd[0]);
    CHECK(sd[2] < sd[1]);
    CHECK(sd[0] / sd[2] == Approx(2.0).epsilon(0.25));

    const std::function<double(double, double)> hot = [](double, double) { return 0.22; };
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto h = pnl::hedge_simulate(hot, spec, lv::call_payoff(100), sde::TimeGrid::uniform(1.0, 128), 4000, seed);
        CHECK(h.mean.mean < -3.0 * h.mean.std_error);
    }
    CHECK_THROWS_AS(pnl::hedge_simulate(same, spec, pay, sde::TimeGrid::uniform(2.0, 16), 10, 1), InputError);
    const std::function<double(double, double)> dead = [](double, double) { return 0.0; };
    CHECK_THROWS_AS(pnl::hedge_simulate(dead, spec, pay, sde::TimeGrid::uniform(1.0, 16), 10, 1), InputError);
}

TEST_CASE("parameter bootstrap draws are moment matched") {
    const auto spec = two_component(4e-4, 1e-3);
    pnl::BootstrapConfig cfg;
    cfg.draws = 20;
    cfg.hedge_paths = 200;
    cfg.hedge_steps = 32;
    const auto b = pnl::parameter_bootstrap(spec, lv::smoothed_call_payoff(100, 5.0), cfg);
    REQUIRE(b.truncated == 0);
    REQUIRE(b.deltas.size() == 20);
    double m0 = 0, m1 = 0, c00 = 0, c01 = 0, c11 = 0;
    for (const auto& d : b.deltas) {
        m0 += d[0] / 20;
        m1 += d[1] / 20;
        c00 += d[0] * d[0] / 20;
        c01 += d[0] * d[1] / 20;
        c11 += d[1] * d[1] / 20;
    }
    CHECK(m0 == Approx(0.0).margin(1e-15));
    CHECK(m1 == Approx(0.0).margin(1e-15));
    CHECK(c00 == Approx(4e-4).epsilon(1e-10));
    CHECK(c01 == Approx(0.0).margin(1e-15));
    CHECK(c11 == Approx(1e-3).epsilon(1e-10));
    CHECK(b.variance >= 0.0);
    CHECK_THROWS_AS(pnl::parameter_bootstrap(spec, lv::call_payoff(100), pnl::BootstrapConfig{3}), InputError);
}
