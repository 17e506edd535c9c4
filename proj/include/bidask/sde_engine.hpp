#pragma once

// Euler-Maruyama for driftless scalar diffusions dX = b(t,X) dW, with companion
// processes stepped on the same Brownian increments. Paths are independent work
// units; reductions are merged in fixed chunk order so results do not depend on
// the number of workers.

#include "bidask/errors.hpp"
#include "bidask/rng.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace bidask::sde {

class TimeGrid {
public:
    TimeGrid() = default;

    static TimeGrid uniform(double maturity, std::size_t steps) {
        bidask::detail::require(maturity > 0.0, "grid maturity must be positive");
        bidask::detail::require(steps >= 1, "grid needs at least one step");
        std::vector<double> t(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i)
            t[i] = maturity * static_cast<double>(i) / static_cast<double>(steps);
        t.back() = maturity;
        return TimeGrid(std::move(t));
    }

    static TimeGrid from_points(std::vector<double> t) {
        bidask::detail::require(t.size() >= 2 && t.front() == 0.0, "grid must start at 0 with at least one step");
        for (std::size_t i = 1; i < t.size(); ++i)
            bidask::detail::require(t[i] > t[i - 1], "grid must be strictly increasing");
        return TimeGrid(std::move(t));
    }

    std::size_t steps() const { return t_.size() - 1; }
    double maturity() const { return t_.back(); }
    double operator[](std::size_t i) const { return t_[i]; }
    double dt(std::size_t i) const { return t_[i + 1] - t_[i]; }
    const std::vector<double>& points() const { return t_; }

private:
    explicit TimeGrid(std::vector<double> t) : t_(std::move(t)) {}
    std::vector<double> t_{0.0, 1.0};
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

/// Streaming mean/variance with an order-dependent but deterministic merge.
struct RunningMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    void merge(const RunningMoments& o) {
        if (o.n == 0) return;
        if (n == 0) { *this = o; return; }
        const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
        const double d = o.mean - mean;
        const double nt = na + nb;
        mean += d * nb / nt;
        m2 += o.m2 + d * d * na * nb / nt;
        n += o.n;
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    McEstimate estimate() const {
        bidask::detail::require(n >= 2, "Monte Carlo estimate needs at least two values");
        return {mean, std::sqrt(variance() / static_cast<double>(n)), n};
    }
};

inline McEstimate mc_estimate(std::span<const double> values) {
    bidask::detail::require(values.size() >= 2, "Monte Carlo estimate needs at least two values");
    RunningMoments m;
    for (double v : values) {
        bidask::detail::require(std::isfinite(v), "Monte Carlo values must be finite");
        m.add(v);
    }
    return m.estimate();
}

struct ExecPolicy {
    std::size_t workers = 1;
    std::size_t chunk = 512;  // fixed; part of the reproducibility contract
};

/// Deterministic parallel reduction over path indices [0, n). `fn(path, acc)`
/// accumulates one path; `merge(into, from)` combines chunk results in chunk order.
template <class Acc, class Fn, class Merge>
Acc reduce_paths(std::size_t n, const Acc& init, Fn&& fn, Merge&& merge, ExecPolicy policy = {}) {
    const std::size_t chunk = std::max<std::size_t>(1, policy.chunk);
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<Acc> parts(n_chunks, init);
    auto run_chunk = [&](std::size_t c) {
        const std::size_t lo = c * chunk, hi = std::min(n, lo + chunk);
        for (std::size_t p = lo; p < hi; ++p) fn(p, parts[c]);
    };
    const std::size_t workers = std::min(std::max<std::size_t>(1, policy.workers), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < n_chunks; c = next++) run_chunk(c);
            });
        for (auto& th : pool) th.join();
    }
    Acc out = init;
    for (const auto& p : parts) merge(out, p);
    return out;
}

/// Brownian increments of one path: dW_i = sqrt(dt_i) z_i.
inline void fill_increments(std::uint64_t master_seed, std::uint64_t path, const TimeGrid& grid,
                            std::span<double> dw) {
    rng::GaussianStream g(master_seed, path);
    for (std::size_t i = 0; i < grid.steps(); ++i) dw[i] = std::sqrt(grid.dt(i)) * g.next();
}

enum class StepStatus { ok, flagged, invalid };

/// No companion processes.
struct NoCompanions {
    static constexpr std::size_t size = 0;
    std::array<std::string_view, 0> names() const { return {}; }
    void init(double, std::span<double>) const {}
    StepStatus step(double, double, double, double, std::span<double>) const { return StepStatus::ok; }
};

template <class M>
concept DiffusionModel = requires(const M& m, double t, double x) {
    { m.diffusion(t, x) } -> std::convertible_to<double>;
};

template <class C>
concept CompanionSet = requires(const C& c, double v, std::span<double> s) {
    { C::size } -> std::convertible_to<std::size_t>;
    c.names();
    c.init(v, s);
    { c.step(v, v, v, v, s) } -> std::same_as<StepStatus>;
};

/// Read-only view of one simulated path; companion k is contiguous over time.
struct PathView {
    std::size_t path_id = 0;
    std::uint64_t path_seed = 0;
    std::span<const double> x;
    std::span<const double> dw;
    std::span<const double> companions;  // [k * (steps+1) + i]
    std::size_t n_times = 0;
    bool flagged = false;

    std::span<const double> companion(std::size_t k) const {
        return companions.subspan(k * n_times, n_times);
    }
};

struct SimOptions {
    ExecPolicy exec{};
    double floor_rel = 1e-8;          // state floor as a fraction of x0
    double max_invalid_fraction = 0.01;
};

struct SimReport {
    std::size_t n_paths = 0;
    std::size_t n_invalid = 0;
    std::size_t n_flagged = 0;
};

namespace detail {

struct PathBuffers {
    std::vector<double> x, dw, comp, state;
};

/// Simulates path `path` into `buf`; returns the step status of the whole path.
template <DiffusionModel Model, CompanionSet Comp>
StepStatus run_path(const Model& model, const Comp& comp, double x0, const TimeGrid& grid,
                    std::uint64_t master_seed, std::size_t path, double floor_abs,
                    PathBuffers& buf) {
    const std::size_t n = grid.steps();
    constexpr std::size_t nc = Comp::size;
    buf.x.resize(n + 1);
    buf.dw.resize(n);
    buf.comp.resize(nc * (n + 1));
    buf.state.resize(nc);
    fill_increments(master_seed, path, grid, buf.dw);

    std::span<double> st(buf.state);
    comp.init(x0, st);
    for (std::size_t k = 0; k < nc; ++k) buf.comp[k * (n + 1)] = st[k];
    double x = x0;
    buf.x[0] = x;
    StepStatus status = StepStatus::ok;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = grid[i], dt = grid.dt(i), dw = buf.dw[i];
        const StepStatus cs = comp.step(t, dt, x, dw, st);
        if (cs == StepStatus::invalid) return StepStatus::invalid;
        if (cs == StepStatus::flagged) status = StepStatus::flagged;
        x += model.diffusion(t, x) * dw;
        if (!std::isfinite(x)) return StepStatus::invalid;
        if (x < floor_abs) {
            x = floor_abs;
            status = StepStatus::flagged;
        }
        buf.x[i + 1] = x;
        for (std::size_t k = 0; k < nc; ++k) {
            if (!std::isfinite(st[k])) return StepStatus::invalid;
            buf.comp[k * (n + 1) + i + 1] = st[k];
        }
    }
    return status;
}

template <class Acc>
struct Tracked {
    Acc user;
    SimReport report;
};

} // namespace detail

/// Streams every valid path through `visit(const PathView&, Acc&)` and merges the
/// per-chunk accumulators with `merge(Acc&, const Acc&)` in path order.
template <DiffusionModel Model, CompanionSet Comp, class Acc, class Visit, class Merge>
std::pair<Acc, SimReport> simulate_reduce(const Model& model, const Comp& comp, double x0,
                                          const TimeGrid& grid, std::size_t n_paths,
                                          std::uint64_t master_seed, const Acc& init,
                                          Visit&& visit, Merge&& merge, SimOptions opts = {}) {
    bidask::detail::require(x0 > 0.0 && std::isfinite(x0), "initial state must be positive");
    bidask::detail::require(n_paths >= 1, "need at least one path");
    const double floor_abs = opts.floor_rel * x0;
    using T = detail::Tracked<Acc>;
    const T start{init, {}};
    // One buffer set per chunk invocation keeps workers independent.
    auto fn = [&](std::size_t p, T& acc) {
        thread_local detail::PathBuffers buf;
        const StepStatus s = detail::run_path(model, comp, x0, grid, master_seed, p, floor_abs, buf);
        ++acc.report.n_paths;
        if (s == StepStatus::invalid) {
            ++acc.report.n_invalid;
            return;
        }
        PathView v{p, rng::path_seed(master_seed, p), buf.x, buf.dw, buf.comp, grid.steps() + 1,
                   s == StepStatus::flagged};
        if (v.flagged) ++acc.report.n_flagged;
        visit(static_cast<const PathView&>(v), acc.user);
    };
    auto mrg = [&](T& into, const T& from) {
        merge(into.user, from.user);
        into.report.n_paths += from.report.n_paths;
        into.report.n_invalid += from.report.n_invalid;
        into.report.n_flagged += from.report.n_flagged;
    };
    T out = reduce_paths(n_paths, start, fn, mrg, opts.exec);
    if (static_cast<double>(out.report.n_invalid) >
        opts.max_invalid_fraction * static_cast<double>(n_paths))
        throw NumericError("simulation produced " + std::to_string(out.report.n_invalid) + " invalid paths out of " +
                           std::to_string(n_paths));
    return {std::move(out.user), out.report};
}

struct PathBundle {
    std::size_t path_id = 0;
    std::uint64_t path_seed = 0;
    std::vector<double> x;
    std::vector<double> dw;
    std::vector<std::vector<double>> companions;
    bool flagged = false;
};

struct Simulation {
    std::vector<std::string> companion_names;
    std::vector<double> times;
    std::vector<PathBundle> paths;  // valid paths in path order
    SimReport report;
};

/// Full-storage simulation; intended for modest path counts (dumps, tests).
template <DiffusionModel Model, CompanionSet Comp = NoCompanions>
Simulation simulate(const Model& model, double x0, const TimeGrid& grid, std::size_t n_paths,
                    std::uint64_t master_seed, const Comp& comp = {}, SimOptions opts = {}) {
    using Acc = std::vector<PathBundle>;
    auto visit = [&](const PathView& v, Acc& acc) {
        PathBundle b{v.path_id, v.path_seed, {v.x.begin(), v.x.end()}, {v.dw.begin(), v.dw.end()}, {}, v.flagged};
        for (std::size_t k = 0; k < Comp::size; ++k) {
            auto c = v.companion(k);
            b.companions.emplace_back(c.begin(), c.end());
        }
        acc.push_back(std::move(b));
    };
    auto merge = [](Acc& into, const Acc& from) { into.insert(into.end(), from.begin(), from.end()); };
    auto [paths, report] = simulate_reduce(model, comp, x0, grid, n_paths, master_seed, Acc{}, visit, merge, opts);
    Simulation sim;
    for (auto nm : comp.names()) sim.companion_names.emplace_back(nm);
    sim.times = grid.points();
    sim.paths = std::move(paths);
    sim.report = report;
    return sim;
}

/// Doléans exponential of ∫ g dW by log-Euler: ln M_{i+1} = ln M_i + g_i dW_i - g_i^2 dt_i / 2.
inline std::vector<double> doleans_factor(std::span<const double> g, const TimeGrid& grid,
                                          std::span<const double> dw) {
    bidask::detail::require(g.size() >= grid.steps() && dw.size() == grid.steps(),
                            "doleans_factor needs one sensitivity value and increment per step");
    std::vector<double> m(grid.steps() + 1);
    double lm = 0.0;
    m[0] = 1.0;
    for (std::size_t i = 0; i < grid.steps(); ++i) {
        lm += g[i] * dw[i] - 0.5 * g[i] * g[i] * grid.dt(i);
        if (!(std::abs(lm) <= 700.0)) throw NumericError("Doleans factor overflow (|ln M| > 700)");
        m[i + 1] = std::exp(lm);
    }
    return m;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// One row per (path, time): path_id, t, X, companions in registration order.
inline void write_paths_csv(std::ostream& os, const Simulation& sim) {
    os << "path_id,t,X";
    for (const auto& n : sim.companion_names) os << ',' << n;
    os << '\n';
    for (const auto& p : sim.paths) {
        for (std::size_t i = 0; i < p.x.size(); ++i) {
            os << p.path_id << ',' << format_double(sim.times[i]) << ',' << format_double(p.x[i]);
            for (const auto& c : p.companions) os << ',' << format_double(c[i]);
            os << '\n';
        }
    }
}

/// b(t,x) = s x.
struct Lognormal {
    double sigma;
    double diffusion(double, double x) const { return sigma * x; }
};

/// b(t,x) = s x^beta.
struct Cev {
    double sigma;
    double beta;
    double diffusion(double, double x) const { return sigma * std::pow(x, beta); }
};

/// b ≡ 0.
struct Frozen {
    double diffusion(double, double) const { return 0.0; }
};

} // namespace bidask::sde
