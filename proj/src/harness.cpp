#include "dynsir/harness.hpp"

#include "dynsir/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>
#include <tuple>

namespace dynsir {

void ExperimentConfig::validate() const
{
    spec.validate();
    if (n_list.empty()) throw InvalidArgument("experiment needs at least one population size");
    for (std::size_t j = 0; j < n_list.size(); ++j) {
        if (n_list[j] <= 0) throw InvalidArgument("population sizes must be positive");
        if (j > 0 && n_list[j] <= n_list[j - 1]) throw InvalidArgument("n_list must be strictly increasing");
    }
    if (runs_per_n <= 0) throw InvalidArgument("runs_per_n must be positive");
    if (!(pin_level > 0.0 && pin_level < 1.0)) throw InvalidArgument("pin_level must lie in (0, 1)");
    if (!(u_max > u_min)) throw InvalidArgument("comparison window is empty");
    if (!(grid_step > 0.0)) throw InvalidArgument("grid step must be positive");
    if (!(threshold_exponent > 0.0 && threshold_exponent < 1.0)) {
        throw InvalidArgument("threshold exponent must lie in (0, 1)");
    }
    if (max_restarts < 0) throw InvalidArgument("max_restarts must be nonnegative");
    if (threads < 0) throw InvalidArgument("thread count must be nonnegative");
}

double align_trajectory(const Trajectory& traj, double pin_level)
{
    if (!traj.outbreak) throw InvalidArgument("alignment needs an outbreak trajectory");
    const double level = pin_level * static_cast<double>(traj.n);
    long infected = 0;
    for (const auto& e : traj.events) {
        infected += e.kind == EventKind::Infection ? 1 : -1;
        if (static_cast<double>(infected) >= level - 1e-9) return e.time;
    }
    throw NumericalError("infected fraction never reaches the pin level " + std::to_string(pin_level));
}

std::vector<double> comparison_grid(double u_min, double u_max, double h)
{
    if (!(u_max > u_min) || !(h > 0.0)) throw InvalidArgument("invalid comparison grid");
    const long steps = std::lround((u_max - u_min) / h);
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(steps + 1));
    for (long j = 0; j <= steps; ++j) g.push_back(u_min + static_cast<double>(j) * h);
    g.back() = u_max;
    return g;
}

namespace {

struct RunResult {
    TypeCurves curves;
    std::vector<double> total_i;
    double final_fraction = 0.0;
    std::uint64_t discarded = 0;
    std::size_t events = 0;
};

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

LimitCurves pinned_limit(const ModelSpec& spec, const ExperimentConfig& cfg)
{
    for (double t1 = 40.0; t1 <= 1280.0; t1 *= 2.0) {
        OdeOptions o;
        o.t1 = t1;
        o.h = 1e-3;
        LimitCurves c = pin_curves(ode_for_spec(spec, o), cfg.pin_level);
        if (c.t.front() > cfg.u_min) {
            throw NumericalError("limit curve starts after the comparison window; lower u_min");
        }
        if (c.t.back() >= cfg.u_max) return c;
    }
    throw NumericalError("limit curve does not cover the comparison window");
}

void rethrow_with_context(std::exception_ptr ep, const std::string& ctx)
{
    try {
        std::rethrow_exception(ep);
    } catch (const ConditioningError& e) {
        throw ConditioningError(ctx + ": " + e.what(), e.discarded_runs);
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + ": " + e.what());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(ctx + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error(ctx + ": " + e.what());
    }
}

struct SupAt {
    double value = 0.0;
    double se = 0.0;
};

SupAt sup_distance(const std::vector<double>& mean, const std::vector<double>& se, const std::vector<double>& limit)
{
    SupAt out;
    for (std::size_t g = 0; g < mean.size(); ++g) {
        const double d = std::abs(mean[g] - limit[g]);
        if (d > out.value) out = {d, se[g]};
    }
    return out;
}

} // namespace

ConvergenceReport run_convergence(const ExperimentConfig& cfg)
{
    cfg.validate();
    ConvergenceReport rep;
    rep.u = comparison_grid(cfg.u_min, cfg.u_max, cfg.grid_step);
    rep.limit = pinned_limit(cfg.spec, cfg);
    const std::size_t k = static_cast<std::size_t>(cfg.spec.k);
    const std::size_t ng = rep.u.size();
    rep.limit_s.assign(k, std::vector<double>(ng));
    rep.limit_i.assign(k, std::vector<double>(ng));
    rep.limit_r.assign(k, std::vector<double>(ng));
    std::vector<double> limit_total(ng, 0.0);
    for (std::size_t v = 0; v < k; ++v) {
        for (std::size_t g = 0; g < ng; ++g) {
            rep.limit_s[v][g] = interp_linear(rep.limit.t, rep.limit.s[v], rep.u[g]);
            rep.limit_i[v][g] = interp_linear(rep.limit.t, rep.limit.i[v], rep.u[g]);
            rep.limit_r[v][g] = interp_linear(rep.limit.t, rep.limit.r[v], rep.u[g]);
            limit_total[g] += cfg.spec.p(static_cast<Eigen::Index>(v)) * rep.limit_i[v][g];
        }
    }

    ConditioningOptions copt;
    copt.threshold_exponent = cfg.threshold_exponent;
    copt.max_restarts = cfg.max_restarts;
    copt.model = cfg.model;

    const int workers = cfg.threads > 0 ? cfg.threads : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

    for (long n : cfg.n_list) {
        const auto start = std::chrono::steady_clock::now();
        const auto runs = static_cast<std::size_t>(cfg.runs_per_n);
        std::vector<RunResult> results(runs);
        std::vector<std::exception_ptr> errors(runs);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t r = next++; r < runs; r = next++) {
                try {
                    const std::uint64_t seed =
                        derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r)});
                    const Trajectory traj = condition_on_outbreak(cfg.spec, n, seed, copt);
                    const double t0 = align_trajectory(traj, cfg.pin_level);
                    std::vector<double> grid(ng);
                    for (std::size_t g = 0; g < ng; ++g) grid[g] = t0 + rep.u[g];
                    RunResult& out = results[r];
                    out.curves = curves_at(traj, grid);
                    out.total_i = total_infected_at(traj, grid);
                    out.final_fraction = traj.final_fraction();
                    out.discarded = traj.discarded_runs;
                    out.events = traj.events.size();
                } catch (...) {
                    errors[r] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 1; w < std::min<long>(workers, cfg.runs_per_n); ++w) pool.emplace_back(work);
        work();
        for (auto& th : pool) th.join();
        for (std::size_t r = 0; r < runs; ++r) {
            if (errors[r]) rethrow_with_context(errors[r], "n=" + std::to_string(n) + ", run " + std::to_string(r));
        }

        SizeResult sr;
        sr.n = n;
        sr.runs = cfg.runs_per_n;
        const double R = static_cast<double>(runs);
        auto moments = [&](auto pick, std::vector<std::vector<double>>& mean, std::vector<std::vector<double>>& se) {
            mean.assign(k, std::vector<double>(ng, 0.0));
            se.assign(k, std::vector<double>(ng, 0.0));
            for (std::size_t v = 0; v < k; ++v) {
                for (std::size_t g = 0; g < ng; ++g) {
                    double sum = 0.0;
                    for (const auto& res : results) sum += pick(res)[v][g];
                    const double m = sum / R;
                    double ss = 0.0;
                    for (const auto& res : results) {
                        const double d = pick(res)[v][g] - m;
                        ss += d * d;
                    }
                    mean[v][g] = m;
                    se[v][g] = runs > 1 ? std::sqrt(ss / (R - 1.0) / R) : 0.0;
                }
            }
        };
        moments([](const RunResult& x) -> const auto& { return x.curves.s; }, sr.s_mean, sr.s_se);
        moments([](const RunResult& x) -> const auto& { return x.curves.i; }, sr.i_mean, sr.i_se);
        moments([](const RunResult& x) -> const auto& { return x.curves.r; }, sr.r_mean, sr.r_se);

        for (std::size_t v = 0; v < k; ++v) {
            const SupAt a = sup_distance(sr.s_mean[v], sr.s_se[v], rep.limit_s[v]);
            const SupAt b = sup_distance(sr.i_mean[v], sr.i_se[v], rep.limit_i[v]);
            const SupAt c = sup_distance(sr.r_mean[v], sr.r_se[v], rep.limit_r[v]);
            sr.sup_s.push_back(a.value);
            sr.sup_s_se.push_back(a.se);
            sr.sup_i.push_back(b.value);
            sr.sup_i_se.push_back(b.se);
            sr.sup_r.push_back(c.value);
            sr.sup_r_se.push_back(c.se);
        }

        std::vector<double> total_mean(ng, 0.0), total_se(ng, 0.0);
        for (std::size_t g = 0; g < ng; ++g) {
            double sum = 0.0;
            for (const auto& res : results) sum += res.total_i[g];
            const double m = sum / R;
            double ss = 0.0;
            for (const auto& res : results) ss += (res.total_i[g] - m) * (res.total_i[g] - m);
            total_mean[g] = m;
            total_se[g] = runs > 1 ? std::sqrt(ss / (R - 1.0) / R) : 0.0;
        }
        const SupAt tot = sup_distance(total_mean, total_se, limit_total);
        sr.sup_total_i = tot.value;
        sr.sup_total_i_se = tot.se;

        std::vector<double> per_run;
        double ff = 0.0, ff2 = 0.0, ev = 0.0;
        std::uint64_t discarded = 0;
        for (const auto& res : results) {
            double d = 0.0;
            for (std::size_t g = 0; g < ng; ++g) d = std::max(d, std::abs(res.total_i[g] - limit_total[g]));
            per_run.push_back(d);
            ff += res.final_fraction;
            ff2 += res.final_fraction * res.final_fraction;
            ev += static_cast<double>(res.events);
            discarded += res.discarded;
        }
        sr.run_sup_total_i = {quantile(per_run, 0.1), quantile(per_run, 0.5), quantile(per_run, 0.9)};
        sr.final_fraction_mean = ff / R;
        sr.final_fraction_se =
            runs > 1 ? std::sqrt(std::max(0.0, (ff2 - R * sr.final_fraction_mean * sr.final_fraction_mean) / (R - 1.0)) / R)
                     : 0.0;
        sr.mean_events = ev / R;
        sr.attempts = discarded + runs;
        sr.acceptance = R / static_cast<double>(sr.attempts);
        sr.acceptance_se = std::sqrt(sr.acceptance * (1.0 - sr.acceptance) / static_cast<double>(sr.attempts));
        sr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rep.sizes.push_back(std::move(sr));
    }

    auto check = [&](const char* name, auto dist, auto se) {
        for (std::size_t j = 1; j < rep.sizes.size(); ++j) {
            for (std::size_t v = 0; v < k; ++v) {
                const auto& a = rep.sizes[j - 1];
                const auto& b = rep.sizes[j];
                const double slack = 2.0 * std::hypot(se(a)[v], se(b)[v]);
                if (dist(b)[v] > dist(a)[v] + slack) {
                    rep.monotone = false;
                    char buf[200];
                    std::snprintf(buf, sizeof buf, "%s_%zu distance grows from n=%ld (%.4g) to n=%ld (%.4g)", name,
                                  v + 1, a.n, dist(a)[v], b.n, dist(b)[v]);
                    rep.notes.emplace_back(buf);
                }
            }
        }
    };
    check("s", [](const SizeResult& x) -> const auto& { return x.sup_s; },
          [](const SizeResult& x) -> const auto& { return x.sup_s_se; });
    check("i", [](const SizeResult& x) -> const auto& { return x.sup_i; },
          [](const SizeResult& x) -> const auto& { return x.sup_i_se; });
    check("r", [](const SizeResult& x) -> const auto& { return x.sup_r; },
          [](const SizeResult& x) -> const auto& { return x.sup_r_se; });
    return rep;
}

namespace {

void put(std::ostream& os, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    os << buf;
}

} // namespace

void write_size_csv(std::ostream& os, const ConvergenceReport& rep, std::size_t index)
{
    const SizeResult& sr = rep.sizes.at(index);
    const std::size_t k = sr.s_mean.size();
    os << "u";
    for (std::size_t v = 1; v <= k; ++v) {
        for (const char* c : {"s", "i", "r"}) os << ',' << c << '_' << v << "_mean," << c << '_' << v << "_se," << c << '_' << v << "_limit";
    }
    os << '\n';
    for (std::size_t g = 0; g < rep.u.size(); ++g) {
        put(os, rep.u[g]);
        for (std::size_t v = 0; v < k; ++v) {
            for (auto [m, s, l] : {std::tuple{&sr.s_mean, &sr.s_se, &rep.limit_s}, std::tuple{&sr.i_mean, &sr.i_se, &rep.limit_i},
                                   std::tuple{&sr.r_mean, &sr.r_se, &rep.limit_r}}) {
                os << ',';
                put(os, (*m)[v][g]);
                os << ',';
                put(os, (*s)[v][g]);
                os << ',';
                put(os, (*l)[v][g]);
            }
        }
        os << '\n';
    }
}

void write_summary_csv(std::ostream& os, const ConvergenceReport& rep)
{
    const std::size_t k = rep.sizes.empty() ? 0 : rep.sizes.front().sup_s.size();
    os << "n,runs,attempts,acceptance,acceptance_se";
    for (std::size_t v = 1; v <= k; ++v) {
        for (const char* c : {"s", "i", "r"}) os << ",sup_" << c << '_' << v << ",sup_" << c << '_' << v << "_se";
    }
    os << ",sup_total_i,sup_total_i_se,run_sup_q10,run_sup_q50,run_sup_q90,final_fraction_mean,final_fraction_se,"
          "mean_events\n";
    for (const auto& sr : rep.sizes) {
        os << sr.n << ',' << sr.runs << ',' << sr.attempts << ',';
        put(os, sr.acceptance);
        os << ',';
        put(os, sr.acceptance_se);
        for (std::size_t v = 0; v < k; ++v) {
            for (auto [d, s] : {std::pair{&sr.sup_s, &sr.sup_s_se}, std::pair{&sr.sup_i, &sr.sup_i_se},
                                std::pair{&sr.sup_r, &sr.sup_r_se}}) {
                os << ',';
                put(os, (*d)[v]);
                os << ',';
                put(os, (*s)[v]);
            }
        }
        for (double x : {sr.sup_total_i, sr.sup_total_i_se, sr.run_sup_total_i.q10, sr.run_sup_total_i.q50,
                         sr.run_sup_total_i.q90, sr.final_fraction_mean, sr.final_fraction_se, sr.mean_events}) {
            os << ',';
            put(os, x);
        }
        os << '\n';
    }
}

} // namespace dynsir
