#pragma once

// Config-driven front end: `key = value` run specifications, command dispatch,
// summary tables and CSV output.

#include "bidask/bs_pricing.hpp"
#include "bidask/cev_model.hpp"
#include "bidask/error_calculus.hpp"
#include "bidask/errors.hpp"
#include "bidask/local_vol.hpp"
#include "bidask/pnl_analysis.hpp"
#include "bidask/sde_engine.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bidask::cli {

enum class Command { price_bs, smile, price_cev, pnl, hedge_sim, selftest };

inline std::string_view to_string(Command c) {
    switch (c) {
        case Command::price_bs: return "price-bs";
        case Command::smile: return "smile";
        case Command::price_cev: return "price-cev";
        case Command::pnl: return "pnl";
        case Command::hedge_sim: return "hedge-sim";
        case Command::selftest: return "selftest";
    }
    return "?";
}

inline std::optional<Command> parse_command(std::string_view s) {
    for (Command c : {Command::price_bs, Command::smile, Command::price_cev, Command::pnl, Command::hedge_sim,
                      Command::selftest})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

enum class Kind { number, integer, list, words, word };

namespace detail {

struct KeySpec {
    Kind kind;
    std::set<Command> commands;
};

inline const std::map<std::string, KeySpec, std::less<>>& schema() {
    using C = Command;
    const std::set<C> all{C::price_bs, C::smile, C::price_cev, C::pnl, C::hedge_sim, C::selftest};
    const std::set<C> mc{C::price_cev, C::pnl, C::hedge_sim, C::selftest};
    static const std::map<std::string, KeySpec, std::less<>> s{
        {"command", {Kind::word, all}},
        {"output", {Kind::word, all}},
        {"alpha", {Kind::number, {C::price_bs, C::price_cev, C::pnl}}},
        {"method", {Kind::word, {C::price_bs, C::price_cev, C::pnl}}},
        {"seed", {Kind::integer, mc}},
        {"workers", {Kind::integer, mc}},
        {"steps", {Kind::integer, mc}},
        {"paths", {Kind::integer, mc}},
        {"spot", {Kind::number, {C::price_bs, C::smile, C::price_cev, C::pnl, C::hedge_sim}}},
        {"strike", {Kind::number, {C::price_bs, C::pnl, C::hedge_sim}}},
        {"strikes", {Kind::list, {C::smile}}},
        {"maturity", {Kind::number, {C::price_bs, C::price_cev, C::pnl, C::hedge_sim}}},
        {"maturities", {Kind::list, {C::smile}}},
        {"vol", {Kind::list, {C::price_bs, C::smile, C::price_cev, C::pnl, C::hedge_sim}}},
        {"vol_bias", {Kind::list, {C::price_bs, C::smile, C::price_cev, C::pnl}}},
        {"vol_var", {Kind::number, {C::price_bs, C::smile, C::price_cev, C::pnl}}},
        {"cov", {Kind::list, {C::pnl}}},
        {"beta", {Kind::number, {C::price_cev}}},
        {"beta_bias", {Kind::number, {C::price_cev}}},
        {"beta_var", {Kind::number, {C::price_cev}}},
        {"vol_beta_cov", {Kind::number, {C::price_cev}}},
        {"path_dump", {Kind::word, {C::price_cev}}},
        {"dump_paths", {Kind::integer, {C::price_cev}}},
        {"basis", {Kind::words, {C::pnl, C::hedge_sim}}},
        {"payoff", {Kind::word, {C::pnl, C::hedge_sim}}},
        {"smoothing", {Kind::number, {C::pnl, C::hedge_sim}}},
        {"test_function", {Kind::word, {C::pnl}}},
        {"test_scale", {Kind::number, {C::pnl}}},
        {"true_vol", {Kind::number, {C::hedge_sim}}},
    };
    return s;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto c = s.find(',', start);
        out.push_back(trim(std::string_view(s).substr(start, c == std::string::npos ? std::string::npos : c - start)));
        if (c == std::string::npos) break;
        start = c + 1;
    }
    return out;
}

inline std::optional<double> to_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<std::uint64_t> to_integer(const std::string& s) {
    if (s.empty() || s[0] == '-' || s[0] == '+') return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
    return static_cast<std::uint64_t>(v);
}

} // namespace detail

struct Entry {
    std::string value;
    int line = 0;
};

class RunConfig {
public:
    Command command = Command::selftest;
    std::map<std::string, Entry, std::less<>> entries;

    bool has(std::string_view key) const { return entries.find(key) != entries.end(); }
    int line(std::string_view key) const {
        auto it = entries.find(key);
        return it == entries.end() ? 0 : it->second.line;
    }

    [[noreturn]] void fail(std::string_view key, const std::string& msg) const {
        if (has(key)) throw InputError("line " + std::to_string(line(key)) + ": key '" + std::string(key) + "': " + msg);
        throw InputError("key '" + std::string(key) + "': " + msg);
    }

    const std::string& raw(std::string_view key) const {
        auto it = entries.find(key);
        if (it == entries.end())
            throw InputError("missing required key '" + std::string(key) + "' for command '" +
                             std::string(to_string(command)) + "'");
        return it->second.value;
    }

    double number(std::string_view key) const { return *detail::to_number(raw(key)); }
    double number(std::string_view key, double def) const { return has(key) ? number(key) : def; }
    std::uint64_t integer(std::string_view key) const { return *detail::to_integer(raw(key)); }
    std::uint64_t integer(std::string_view key, std::uint64_t def) const { return has(key) ? integer(key) : def; }
    std::vector<double> list(std::string_view key) const {
        std::vector<double> out;
        for (const auto& s : detail::split_list(raw(key))) out.push_back(*detail::to_number(s));
        return out;
    }
    std::vector<double> list(std::string_view key, std::vector<double> def) const {
        return has(key) ? list(key) : def;
    }
    std::vector<std::string> words(std::string_view key) const { return detail::split_list(raw(key)); }
    std::string text(std::string_view key, std::string def = {}) const { return has(key) ? raw(key) : def; }

    /// Runs `fn`, prefixing any input error with the line and key it belongs to.
    template <class Fn>
    auto at(std::string_view key, Fn&& fn) const -> decltype(fn()) {
        try {
            return fn();
        } catch (const InputError& e) {
            const std::string what = e.what();
            if (what.rfind("line ", 0) == 0 || what.rfind("missing required key", 0) == 0) throw;
            fail(key, what);
        }
    }
};

// Module inputs assembled from a config; each attributes failures to a key.

inline double scalar_from_list(const RunConfig& c, std::string_view key) {
    const auto v = c.list(key);
    if (v.size() != 1) c.fail(key, "expected a single value for command '" + std::string(to_string(c.command)) + "'");
    return v[0];
}

inline double config_alpha(const RunConfig& c) {
    return c.at("alpha", [&] {
        const double a = c.number("alpha");
        check_alpha(a);
        return a;
    });
}

inline QuantileMethod config_method(const RunConfig& c) {
    return c.at("method", [&] { return parse_method(c.text("method", "gaussian")); });
}

inline double positive(const RunConfig& c, std::string_view key, std::string_view what) {
    return c.at(key, [&] {
        const double v = c.number(key);
        bidask::detail::require(v > 0.0, std::string(what) + " must be positive");
        return v;
    });
}

inline bs::BsInputs config_bs(const RunConfig& c) {
    const double x = positive(c, "spot", "spot");
    const double k = positive(c, "strike", "strike");
    const double t = positive(c, "maturity", "maturity");
    const double s = c.at("vol", [&] {
        const double v = scalar_from_list(c, "vol");
        bidask::detail::require(v >= bs::default_vol_floor, "volatility must be at least the positivity floor");
        return v;
    });
    const double b = c.has("vol_bias") ? scalar_from_list(c, "vol_bias") : 0.0;
    const auto vol = c.at("vol_var", [&] { return UncertainParamSet::scalar(s, b, c.number("vol_var", 0.0)); });
    bs::BsInputs in{x, k, t, vol};
    in.validate();
    return in;
}

struct SmileInputs {
    double spot;
    std::vector<double> strikes, maturities;
    std::vector<UncertainParamSet> vols;
};

inline SmileInputs config_smile(const RunConfig& c) {
    SmileInputs in;
    in.spot = positive(c, "spot", "spot");
    auto positive_list = [&](std::string_view key) {
        return c.at(key, [&] {
            auto v = c.list(key);
            for (double x : v) bidask::detail::require(x > 0.0, "entries must be positive");
            return v;
        });
    };
    in.strikes = positive_list("strikes");
    in.maturities = positive_list("maturities");
    const double s = c.at("vol", [&] {
        const double v = scalar_from_list(c, "vol");
        bidask::detail::require(v >= bs::default_vol_floor, "volatility must be at least the positivity floor");
        return v;
    });
    std::vector<double> b = c.list("vol_bias", {0.0});
    if (b.size() == 1) b.assign(in.maturities.size(), b[0]);
    if (b.size() != in.maturities.size()) c.fail("vol_bias", "give one value or one per maturity");
    for (double bi : b)
        in.vols.push_back(c.at("vol_var", [&] { return UncertainParamSet::scalar(s, bi, c.number("vol_var", 0.0)); }));
    return in;
}

inline cev::CevParams config_cev(const RunConfig& c) {
    const double s = c.at("vol", [&] {
        const double v = scalar_from_list(c, "vol");
        bidask::detail::require(v > 0.0, "CEV sigma must be positive");
        return v;
    });
    const double b = c.at("beta", [&] {
        const double v = c.number("beta");
        bidask::detail::require(v > 0.0 && v <= 1.0, "CEV beta must lie in (0, 1]");
        return v;
    });
    const double sb = c.has("vol_bias") ? scalar_from_list(c, "vol_bias") : 0.0;
    const std::string_view cov_key = c.has("vol_beta_cov") ? "vol_beta_cov" : (c.has("beta_var") ? "beta_var" : "vol_var");
    return c.at(cov_key, [&] {
        return cev::make_params(s, b, sb, c.number("beta_bias", 0.0), c.number("vol_var", 0.0),
                                c.number("vol_beta_cov", 0.0), c.number("beta_var", 0.0));
    });
}

inline sde::ExecPolicy config_exec(const RunConfig& c) {
    return {static_cast<std::size_t>(c.at("workers", [&] {
        const auto w = c.integer("workers", 1);
        bidask::detail::require(w >= 1 && w <= 1024, "workers must lie in [1, 1024]");
        return w;
    }))};
}

inline std::size_t config_count(const RunConfig& c, std::string_view key, std::uint64_t def) {
    return static_cast<std::size_t>(c.at(key, [&] {
        const auto v = c.integer(key, def);
        bidask::detail::require(v >= 2, std::string(key) + " must be at least 2");
        return v;
    }));
}

inline lv::LocalVolSpec config_local_vol(const RunConfig& c) {
    const double x0 = positive(c, "spot", "spot");
    const double t = positive(c, "maturity", "maturity");
    const auto a = c.at("vol", [&] { return c.list("vol"); });
    std::vector<std::string> names = c.has("basis") ? c.words("basis") : std::vector<std::string>{"const"};
    if (names.size() != a.size()) c.fail("basis", "need one basis function per vol coefficient");
    std::vector<lv::BasisFunction> basis;
    for (const auto& n : names) {
        if (n == "const") basis.push_back(lv::constant_basis());
        else if (n == "spot_linear") basis.push_back(lv::spot_linear_basis(x0));
        else if (n == "time_linear") basis.push_back(lv::time_linear_basis(t));
        else c.fail("basis", "unknown basis function '" + n + "' (const, spot_linear, time_linear)");
    }
    std::vector<double> bias = c.has("vol_bias") ? c.list("vol_bias") : std::vector<double>(a.size(), 0.0);
    if (bias.size() != a.size()) c.fail("vol_bias", "need one bias per vol coefficient");
    Matrix cov(a.size());
    std::string_view cov_key = "cov";
    if (c.has("cov")) {
        const auto v = c.list("cov");
        if (v.size() != a.size() * a.size()) c.fail("cov", "need n*n covariance entries (row-major)");
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) cov(i, j) = v[i * a.size() + j];
    } else if (c.has("vol_var") || a.size() == 1) {
        cov_key = "vol_var";
        if (a.size() != 1) c.fail("vol_var", "vol_var is for one-coefficient surfaces; use cov");
        cov(0, 0) = c.number("vol_var", 0.0);
    }
    const auto params = c.at(cov_key, [&] { return UncertainParamSet(a, bias, cov); });
    return c.at("vol", [&] { return lv::LocalVolSpec(basis, params, x0, t); });
}

inline lv::Payoff config_payoff(const RunConfig& c) {
    const std::string name = c.text("payoff", "call");
    return c.at("payoff", [&]() -> lv::Payoff {
        lv::Payoff p;
        if (name == "call") p = lv::call_payoff(c.number("strike"));
        else if (name == "smoothed_call") p = lv::smoothed_call_payoff(c.number("strike"), c.number("smoothing", 0.05 * c.number("strike")));
        else if (name == "linear") p = lv::linear_payoff();
        else if (name == "power") p = lv::power_payoff();
        else if (name == "digital") p = lv::digital_payoff(c.number("strike"));
        else throw InputError("unknown payoff '" + name + "' (call, smoothed_call, linear, power, digital)");
        p.check();
        return p;
    });
}

inline lv::TestFunction config_test_function(const RunConfig& c) {
    const std::string name = c.text("test_function", "identity");
    return c.at("test_function", [&]() -> lv::TestFunction {
        if (name == "identity") return lv::identity_test();
        if (name == "sigmoid") return lv::sigmoid_test(c.number("test_scale", 1.0));
        if (name == "exp_utility") return lv::exponential_utility_test(c.number("test_scale", 1.0));
        throw InputError("unknown test function '" + name + "' (identity, sigmoid, exp_utility)");
    });
}

inline pnl::McConfig config_mc(const RunConfig& c) {
    pnl::McConfig mc;
    mc.steps = config_count(c, "steps", 256);
    mc.paths = config_count(c, "paths", 100000);
    mc.seed = c.integer("seed", 1);
    mc.exec = config_exec(c);
    return mc;
}

/// Checks every field against the target operation's preconditions.
inline void validate(const RunConfig& c) {
    switch (c.command) {
        case Command::price_bs:
            config_bs(c);
            config_alpha(c);
            config_method(c);
            break;
        case Command::smile:
            config_smile(c);
            break;
        case Command::price_cev:
            positive(c, "spot", "spot");
            positive(c, "maturity", "maturity");
            config_cev(c);
            config_alpha(c);
            config_method(c);
            config_mc(c);
            break;
        case Command::pnl: {
            config_local_vol(c);
            config_payoff(c);
            config_test_function(c);
            const bool identity = c.text("test_function", "identity") == "identity";
            if (identity || c.has("alpha")) config_alpha(c);
            config_method(c);
            config_mc(c);
            break;
        }
        case Command::hedge_sim:
            config_local_vol(c);
            config_payoff(c);
            c.at("true_vol", [&] {
                const double v = c.number("true_vol");
                bidask::detail::require(v > 0.0, "true_vol must be positive");
                return v;
            });
            config_mc(c);
            break;
        case Command::selftest:
            config_exec(c);
            break;
    }
}

inline RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view ln = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = ln.find('#');
        const std::string body = detail::trim(ln.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw InputError(where + "expected 'key = value'");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string val = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw InputError(where + "missing key");
        if (!detail::schema().contains(key)) throw InputError(where + "unknown key '" + key + "'");
        if (val.empty()) throw InputError(where + "key '" + key + "': missing value");
        if (cfg.has(key))
            throw InputError(where + "duplicate key '" + key + "' (first set on line " + std::to_string(cfg.line(key)) + ")");
        cfg.entries.emplace(key, Entry{val, line_no});
    }
    if (!cfg.has("command")) throw InputError("missing required key 'command'");
    const auto cmd = parse_command(cfg.raw("command"));
    if (!cmd)
        cfg.fail("command", "unknown command '" + cfg.raw("command") +
                                "' (price-bs, smile, price-cev, pnl, hedge-sim, selftest)");
    cfg.command = *cmd;

    for (const auto& [key, e] : cfg.entries) {
        const auto& spec = detail::schema().find(key)->second;
        if (!spec.commands.contains(cfg.command))
            cfg.fail(key, "not used by command '" + std::string(to_string(cfg.command)) + "'");
        switch (spec.kind) {
            case Kind::number:
                if (!detail::to_number(e.value)) cfg.fail(key, "cannot parse number '" + e.value + "'");
                break;
            case Kind::integer:
                if (!detail::to_integer(e.value)) cfg.fail(key, "cannot parse non-negative integer '" + e.value + "'");
                break;
            case Kind::list:
                for (const auto& s : detail::split_list(e.value))
                    if (!detail::to_number(s)) cfg.fail(key, "cannot parse number '" + s + "' in list");
                break;
            case Kind::words:
                for (const auto& s : detail::split_list(e.value))
                    if (s.empty()) cfg.fail(key, "empty list entry");
                break;
            case Kind::word:
                break;
        }
    }
    validate(cfg);
    return cfg;
}

inline std::string fmt(double v) { return sde::format_double(v); }

/// CSV table: header plus rows, LF line endings.
class Csv {
public:
    explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}
    void row(std::vector<std::string> r) { rows_.push_back(std::move(r)); }
    std::string str() const {
        std::string s;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) s += ',';
                s += r[i];
            }
            s += '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return s;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct Overrides {
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
};

namespace detail {

inline void emit(const Csv& csv, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << csv.str();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open output file '" + path + "'");
    f << csv.str();
    if (!f) throw InputError("failed writing output file '" + path + "'");
}

inline void summary_line(std::ostream& out, std::string_view name, double v) {
    out << "  " << name;
    for (std::size_t i = name.size(); i < 26; ++i) out << ' ';
    out << fmt(v) << '\n';
}

inline std::vector<std::string> quote_cells(const QuoteBand& q) {
    return {fmt(q.center), fmt(q.bias_term), fmt(q.std_term), fmt(q.multiplier),
            fmt(q.bid),    fmt(q.mid),       fmt(q.ask),      fmt(q.spread)};
}

inline void print_quote(std::ostream& out, const QuoteBand& q) {
    summary_line(out, "center", q.center);
    summary_line(out, "bias_term", q.bias_term);
    summary_line(out, "std_term", q.std_term);
    summary_line(out, "multiplier", q.multiplier);
    summary_line(out, "bid", q.bid);
    summary_line(out, "mid", q.mid);
    summary_line(out, "ask", q.ask);
    summary_line(out, "spread", q.spread);
}

struct Check {
    std::string name;
    bool pass;
    double value, reference, tolerance;
};

/// Small-scale versions of the lognormal reductions and the closed-form triangle.
inline std::vector<Check> selftest_checks(std::uint64_t seed, sde::ExecPolicy exec) {
    std::vector<Check> out;
    auto add = [&](std::string name, double v, double ref, double tol) {
        out.push_back({std::move(name), std::abs(v - ref) <= tol, v, ref, tol});
    };
    // closed forms against generic propagation with analytic vega and vomma
    {
        const auto in = bs::make_inputs(100, 95, 0.75, 0.25, 0.01, 4e-4);
        const auto [d1, d2] = bs::d1_d2(in);
        const double vega = bs::bs_vega(in);
        const double vomma = vega * d1 * d2 / in.sigma();
        const double g[1] = {vega};
        const Matrix h{{vomma}};
        add("bs_bias_vs_chain_rule", bs::bias_correction(in), propagate_bias(g, h, in.vol),
            1e-12 * std::abs(bs::bias_correction(in)));
        add("bs_variance_vs_chain_rule", bs::variance_correction(in), propagate_variance(g, in.vol),
            1e-12 * bs::variance_correction(in));
        const auto q = bs::quote(in, 0.01, QuantileMethod::gaussian);
        add("quote_ask_plus_bid", q.ask + q.bid, 2.0 * q.mid, 0.0);
    }
    // rr = s^2 T / 4 keeps the ATM implied vol at s
    {
        const double s = 0.2, t = 1.0, g = 4e-4;
        const auto cells = bs::smile_surface(100.0, std::vector<double>{100.0}, std::vector<double>{t},
                                             UncertainParamSet::scalar(s, s * t * g / 8.0, g));
        add("smile_atm_implied_vol", cells[0].implied_vol, s, 1e-8);
    }
    // lognormal martingale
    {
        const auto grid = sde::TimeGrid::uniform(1.0, 128);
        auto [m, r] = sde::simulate_reduce(
            sde::Lognormal{0.2}, sde::NoCompanions{}, 1.0, grid, 20000, seed, sde::RunningMoments{},
            [](const sde::PathView& v, sde::RunningMoments& a) { a.add(v.x.back()); },
            [](sde::RunningMoments& a, const sde::RunningMoments& b) { a.merge(b); }, sde::SimOptions{exec});
        const auto e = m.estimate();
        add("lognormal_mean_x_T", e.mean, 1.0, 4.0 * e.std_error);
    }
    // CEV beta = 1 reductions
    {
        const auto p = cev::make_params(0.2, 1.0, 0.0, 0.0, 4e-4, 0.0, 0.0);
        const auto grid = sde::TimeGrid::uniform(1.0, 256);
        struct Acc {
            sde::RunningMoments gx;
            double err = 0.0, ref = 0.0;
        };
        auto [acc, r] = cev::cev_reduce(
            p, 1.0, grid, 20000, seed, Acc{},
            [](const sde::PathView& v, Acc& a) {
                double w = 0.0;
                for (double d : v.dw) w += d;
                const std::size_t n = v.n_times - 1;
                const double ref = v.x[n] * (w - 0.2);
                a.err += std::abs(v.companion(cev::K)[n] - ref);
                a.ref += std::abs(ref);
                a.gx.add(v.companion(cev::GammaX)[n]);
            },
            [](Acc& a, const Acc& b) {
                a.gx.merge(b.gx);
                a.err += b.err;
                a.ref += b.ref;
            },
            sde::SimOptions{exec});
        add("cev_beta1_kernel_rel_error", acc.err / acc.ref, 0.0, 0.05);
        const auto e = acc.gx.estimate();
        add("cev_beta1_gamma_x_T", e.mean, 4e-4 * std::exp(0.04) * 1.04, 4.0 * e.std_error);
        const auto pb = cev::make_params(0.2, 1.0, 0.01, 0.0, 0.0, 0.0, 0.0);
        const auto sim = cev::cev_simulate(pb, 1.0, sde::TimeGrid::uniform(1.0, 64), 50, seed);
        double worst = 0.0;
        for (const auto& path : sim.paths)
            for (std::size_t i = 0; i < path.x.size(); ++i)
                worst = std::max(worst, std::abs(path.companions[cev::BiasX][i] - 0.01 * path.companions[cev::K][i]));
        add("cev_beta1_bias_transport", worst, 0.0, 1e-12);
        const auto pq = cev::power_option_quote(p, 1.0, 1.0, 0.01, QuantileMethod::gaussian,
                                                {128, 20000, seed, sde::SimOptions{exec}});
        add("power_spread_ordering", pq.as_stated.spread >= pq.theorem_consistent.spread ? 1.0 : 0.0, 1.0, 0.0);
    }
    // closed form vs Monte Carlo machinery vs parameter bootstrap
    {
        const auto spec = lv::constant_vol_spec(100.0, 1.0, 0.2, 0.01, 4e-4);
        const auto pay = lv::call_payoff(100.0);
        pnl::McConfig mc;
        mc.steps = 64;
        mc.paths = 20000;
        mc.seed = seed;
        mc.exec = exec;
        const auto gq = pnl::general_quote(spec, pay, 0.01, QuantileMethod::gaussian, mc);
        const auto bq = bs::quote(bs::make_inputs(100.0, 100.0, 1.0, 0.2, 0.01, 4e-4), 0.01, QuantileMethod::gaussian);
        add("triangle_mid", gq.band.mid, bq.mid, std::max(3.0 * gq.mid_se, 0.02 * std::abs(bq.mid)));
        add("triangle_ask", gq.band.ask, bq.ask, std::max(3.0 * gq.ask_se, 0.02 * std::abs(bq.ask)));
        pnl::BootstrapConfig bc;
        bc.draws = 40;
        bc.hedge_steps = 64;
        bc.hedge_paths = 500;
        bc.seed = seed;
        bc.exec = exec;
        const auto br = pnl::parameter_bootstrap(spec, pay, bc);
        add("bootstrap_mean_vs_bias", br.mean, gq.stats.bias, 0.2 * std::abs(gq.stats.bias));
        add("bootstrap_var_vs_variance", br.variance, gq.stats.variance, 0.2 * gq.stats.variance);
    }
    return out;
}

} // namespace detail

/// Dispatches a validated config. Returns 0 on success, 1 on input error, 2 on numeric error.
inline int run(const RunConfig& cfg_in, const Overrides& ov, std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = cfg_in;
        if (ov.seed) cfg.entries["seed"] = Entry{std::to_string(*ov.seed), 0};
        const std::string output = ov.output ? *ov.output : cfg.text("output");
        out << "command: " << to_string(cfg.command) << '\n';

        switch (cfg.command) {
            case Command::price_bs: {
                const auto in = config_bs(cfg);
                const double alpha = config_alpha(cfg);
                const auto method = config_method(cfg);
                const auto q = bs::quote(in, alpha, method);
                const double price = bs::bs_price(in), bias = bs::bias_correction(in),
                             var = bs::variance_correction(in);
                detail::summary_line(out, "price", price);
                detail::summary_line(out, "bias_correction", bias);
                detail::summary_line(out, "variance_correction", var);
                detail::print_quote(out, q);
                Csv csv({"spot", "strike", "maturity", "vol", "vol_bias", "vol_var", "alpha", "method", "price",
                         "bias_correction", "variance_correction", "bid", "mid", "ask", "spread"});
                csv.row({fmt(in.spot), fmt(in.strike), fmt(in.maturity), fmt(in.sigma()), fmt(in.sigma_bias()),
                         fmt(in.sigma_var()), fmt(alpha), std::string(to_string(method)), fmt(price), fmt(bias),
                         fmt(var), fmt(q.bid), fmt(q.mid), fmt(q.ask), fmt(q.spread)});
                detail::emit(csv, output, out);
                break;
            }
            case Command::smile: {
                const auto in = config_smile(cfg);
                for (std::size_t j = 0; j < in.maturities.size(); ++j) {
                    if (in.vols[j].cov()(0, 0) <= 0.0) continue;
                    const auto r = bs::smile_analysis(bs::BsInputs{in.spot, in.spot, in.maturities[j], in.vols[j]});
                    out << "  T=" << fmt(in.maturities[j]) << " rr=" << fmt(r.rr)
                        << " atm_bias_positive=" << r.atm_bias_positive << " atm_bias_convex=" << r.atm_bias_convex
                        << " term_decay_positive=" << r.term_decay_positive << '\n';
                }
                const auto cells = bs::smile_surface(in.spot, in.strikes, in.maturities, in.vols);
                Csv csv({"strike", "maturity", "mid", "implied_vol", "valid"});
                for (const auto& c : cells)
                    csv.row({fmt(c.strike), fmt(c.maturity), fmt(c.mid), c.valid ? fmt(c.implied_vol) : "nan",
                             c.valid ? "1" : "0"});
                detail::emit(csv, output, out);
                break;
            }
            case Command::price_cev: {
                const double x0 = cfg.number("spot"), t = cfg.number("maturity");
                const auto p = config_cev(cfg);
                const auto mc = config_mc(cfg);
                const auto q = cev::power_option_quote(p, x0, t, config_alpha(cfg), config_method(cfg),
                                                       {mc.steps, mc.paths, mc.seed, sde::SimOptions{mc.exec}});
                const auto& c = q.corrections;
                detail::summary_line(out, "E[X_T^2]", c.second_moment.mean);
                detail::summary_line(out, "E[X_T^2] std_error", c.second_moment.std_error);
                detail::summary_line(out, "E[A[X_T^2]]", c.bias.mean);
                detail::summary_line(out, "E[A[X_T^2]] std_error", c.bias.std_error);
                detail::summary_line(out, "E[Gamma[X_T^2]]", c.gamma.mean);
                detail::summary_line(out, "Gamma[E[X_T^2]]", c.gamma_of_mean);
                detail::summary_line(out, "paths_flagged", static_cast<double>(c.report.n_flagged));
                detail::summary_line(out, "paths_invalid", static_cast<double>(c.report.n_invalid));
                out << " as-stated:\n";
                detail::print_quote(out, q.as_stated);
                out << " theorem-consistent:\n";
                detail::print_quote(out, q.theorem_consistent);
                Csv csv({"variant", "center", "bias_term", "std_term", "multiplier", "bid", "mid", "ask", "spread"});
                auto row = [&](const char* name, const QuoteBand& b) {
                    auto cells = detail::quote_cells(b);
                    cells.insert(cells.begin(), name);
                    csv.row(std::move(cells));
                };
                row("as_stated", q.as_stated);
                row("theorem_consistent", q.theorem_consistent);
                detail::emit(csv, output, out);
                if (cfg.has("path_dump")) {
                    const std::size_t n = cfg.integer("dump_paths", 10);
                    const auto sim = cev::cev_simulate(p, x0, sde::TimeGrid::uniform(t, mc.steps), n, mc.seed);
                    std::ofstream f(cfg.raw("path_dump"), std::ios::binary);
                    if (!f) throw InputError("cannot open path dump file '" + cfg.raw("path_dump") + "'");
                    sde::write_paths_csv(f, sim);
                }
                break;
            }
            case Command::pnl: {
                const auto spec = config_local_vol(cfg);
                const auto pay = config_payoff(cfg);
                const auto h = config_test_function(cfg);
                const auto mc = config_mc(cfg);
                const auto st = pnl::pnl_functionals(spec, pay, h, mc);
                Csv csv({"quantity", "i", "j", "value", "std_error"});
                auto row = [&](const std::string& q, std::size_t i, std::size_t j, double v, double se) {
                    csv.row({q, std::to_string(i), std::to_string(j), fmt(v), fmt(se)});
                };
                row("price", 0, 0, st.price.mean, st.price.std_error);
                for (std::size_t i = 0; i < spec.size(); ++i) {
                    row("dprice", i, 0, st.dprice[i].mean, st.dprice[i].std_error);
                    row("lambda1", i, 0, st.lambda1[i], st.lambda1_se[i]);
                    row("psi", i, 0, st.psi[i], st.psi_se[i]);
                    for (std::size_t j = 0; j < spec.size(); ++j) {
                        row("d2price", i, j, st.d2price(i, j), st.d2price_se(i, j));
                        row("lambda2", i, j, st.lambda2(i, j), st.lambda2_se(i, j));
                    }
                }
                row("bias", 0, 0, st.bias, st.bias_se);
                row("variance", 0, 0, st.variance, st.variance_se);
                detail::summary_line(out, "price", st.price.mean);
                detail::summary_line(out, "bias", st.bias);
                detail::summary_line(out, "variance", st.variance);
                for (double k : {1.0, 2.0, 3.0}) {
                    const auto tb = pnl::tail_bound(st, k);
                    row("tail_threshold_k" + std::to_string(static_cast<int>(k)), 0, 0, tb.threshold, tb.bound);
                }
                if (h.name == "identity") {
                    const auto q = make_quote(st.price.mean, st.bias, st.variance, config_alpha(cfg), config_method(cfg));
                    detail::print_quote(out, q);
                    row("bid", 0, 0, q.bid, 0.0);
                    row("mid", 0, 0, q.mid, 0.0);
                    row("ask", 0, 0, q.ask, 0.0);
                    row("spread", 0, 0, q.spread, 0.0);
                }
                detail::emit(csv, output, out);
                break;
            }
            case Command::hedge_sim: {
                const auto spec = config_local_vol(cfg);
                const auto pay = config_payoff(cfg);
                const auto mc = config_mc(cfg);
                const double tv = cfg.number("true_vol");
                const std::function<double(double, double)> world = [tv](double, double) { return tv; };
                const auto res = pnl::hedge_simulate(world, spec, pay, sde::TimeGrid::uniform(spec.maturity(), mc.steps),
                                                     mc.paths, mc.seed, {}, mc.exec);
                detail::summary_line(out, "premium", res.cost);
                detail::summary_line(out, "mean_pnl", res.mean.mean);
                detail::summary_line(out, "mean_pnl_std_error", res.mean.std_error);
                detail::summary_line(out, "pnl_std_dev", res.std_dev);
                Csv csv({"path", "pnl"});
                for (std::size_t i = 0; i < res.pnl.size(); ++i) csv.row({std::to_string(i), fmt(res.pnl[i])});
                detail::emit(csv, output, out);
                break;
            }
            case Command::selftest: {
                const auto checks = detail::selftest_checks(cfg.integer("seed", 2024), config_exec(cfg));
                Csv csv({"check", "passed", "value", "reference", "tolerance"});
                bool ok = true;
                for (const auto& c : checks) {
                    out << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": value " << fmt(c.value) << ", reference "
                        << fmt(c.reference) << ", tolerance " << fmt(c.tolerance) << '\n';
                    csv.row({c.name, c.pass ? "1" : "0", fmt(c.value), fmt(c.reference), fmt(c.tolerance)});
                    ok = ok && c.pass;
                }
                if (!output.empty()) detail::emit(csv, output, out);
                if (!ok) {
                    err << "error: selftest failed\n";
                    return 2;
                }
                break;
            }
        }
        return 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        err << "error: numeric failure: " << e.what() << '\n';
        return 2;
    }
}

} // namespace bidask::cli
