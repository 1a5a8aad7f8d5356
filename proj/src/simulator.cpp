#include "dynsir/simulator.hpp"

#include "dynsir/contact_process.hpp"
#include "dynsir/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <queue>
#include <random>
#include <unordered_set>

namespace dynsir {

std::string to_string(ModelTag tag)
{
    switch (tag) {
    case ModelTag::M1: return "M1";
    case ModelTag::M2: return "M2";
    case ModelTag::M3: return "M3";
    }
    return "?";
}

std::string to_string(EventKind kind) { return kind == EventKind::Infection ? "infection" : "recovery"; }

long Trajectory::ever_infected() const
{
    return static_cast<long>(std::count_if(events.begin(), events.end(),
                                           [](const Event& e) { return e.kind == EventKind::Infection; }));
}

long Trajectory::recovered() const
{
    return static_cast<long>(std::count_if(events.begin(), events.end(),
                                           [](const Event& e) { return e.kind == EventKind::Recovery; }));
}

double Trajectory::final_fraction() const { return static_cast<double>(ever_infected()) / static_cast<double>(n); }

namespace {

constexpr std::uint64_t run_label = ~std::uint64_t{0};

std::uint64_t uniform_below(Xoshiro256& rng, std::uint64_t bound)
{
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

double exp_draw(Xoshiro256& rng, double rate) { return -std::log(rng.uniform_pos()) / rate; }

struct Population {
    std::vector<long> counts;
    std::vector<long> offset;
    std::vector<int> type_of;

    Population(const std::vector<long>& per_type)
        : counts(per_type)
    {
        long acc = 0;
        for (std::size_t t = 0; t < counts.size(); ++t) {
            offset.push_back(acc);
            type_of.insert(type_of.end(), static_cast<std::size_t>(counts[t]), static_cast<int>(t));
            acc += counts[t];
        }
    }
};

struct Logger {
    Trajectory& traj;
    long ever = 0;
    bool reached = false;
    const SimOptions& opts;

    void log(double t, EventKind kind, int type)
    {
        Event e{t, kind, type, false};
        if (!traj.events.empty() && traj.events.back().time == t) {
            e.tie = true;
            traj.ties = true;
        }
        traj.events.push_back(e);
        if (kind == EventKind::Infection) {
            ++ever;
            if (!reached && opts.threshold > 0 && ever >= opts.threshold) {
                reached = true;
                traj.crossing_time = t;
                traj.outbreak = true;
            }
        }
    }

    bool should_stop() const { return reached && opts.stop_at_threshold; }
};

void check_common(const ModelSpec& spec, long n, const SimOptions& opts)
{
    spec.validate();
    if (n < spec.k) throw InvalidArgument("population smaller than the number of types");
    if (opts.initial_type < 0 || opts.initial_type >= spec.k) throw InvalidArgument("initial type out of range");
}

struct M3Event {
    double time;
    std::uint64_t seq;
    long target; ///< -1 marks a recovery of `source`
    long source;
};

struct LaterFirst {
    bool operator()(const M3Event& a, const M3Event& b) const
    {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
};

// Floyd's algorithm: `count` distinct values from [0, size).
void sample_distinct(Xoshiro256& rng, long size, long count, std::vector<long>& out)
{
    out.clear();
    if (count <= 0) return;
    if (count <= 64) {
        for (long j = size - count; j < size; ++j) {
            const long t = static_cast<long>(uniform_below(rng, static_cast<std::uint64_t>(j) + 1));
            out.push_back(std::find(out.begin(), out.end(), t) == out.end() ? t : j);
        }
        return;
    }
    std::unordered_set<long> seen;
    seen.reserve(static_cast<std::size_t>(count) * 2);
    for (long j = size - count; j < size; ++j) {
        const long t = static_cast<long>(uniform_below(rng, static_cast<std::uint64_t>(j) + 1));
        const long pick = seen.insert(t).second ? t : j;
        if (pick == j) seen.insert(j);
        out.push_back(pick);
    }
}

} // namespace

Trajectory simulate_model3(const ModelSpec& spec, long n, std::uint64_t seed, const SimOptions& opts)
{
    check_common(spec, n, opts);
    const RealizedRates rates = realize_rates(spec, n);
    const int k = spec.k;
    Population pop(rates.n_per_type);

    std::vector<std::vector<std::optional<IppParams>>> ipp(static_cast<std::size_t>(k),
                                                           std::vector<std::optional<IppParams>>(static_cast<std::size_t>(k)));
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            if (rates.beta_n(i, j) > 0.0 && rates.lambda_n(i, j) > 0.0) {
                ipp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    ipp_params(rates.beta_n(i, j), rates.lambda_n(i, j), rates.mu_n(i, j));
            }
        }
    }

    Trajectory traj;
    traj.n = n;
    traj.seed = seed;
    traj.model = ModelTag::M3;
    traj.initial_type = opts.initial_type;
    traj.n_per_type = rates.n_per_type;
    Logger logger{traj, 0, false, opts};

    std::vector<std::uint8_t> status(static_cast<std::size_t>(n), 0);
    std::priority_queue<M3Event, std::vector<M3Event>, LaterFirst> heap;
    std::uint64_t seq = 0;
    std::vector<long> targets;

    auto infect = [&](long x, double t) {
        status[static_cast<std::size_t>(x)] = 1;
        const int i = pop.type_of[static_cast<std::size_t>(x)];
        logger.log(t, EventKind::Infection, i);
        Xoshiro256 rng(derive_seed(seed, {static_cast<std::uint64_t>(x)}));
        const double q = exp_draw(rng, spec.gamma(i));
        heap.push({t + q, seq++, -1, x});
        for (int j = 0; j < k; ++j) {
            const auto& pr = ipp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (!pr) continue;
            const long nj = pop.counts[static_cast<std::size_t>(j)];
            const double f = excess_cdf(q, *pr);
            if (!(f > 0.0)) continue;
            std::binomial_distribution<long> binom(nj, std::min(1.0, f));
            const long c = binom(rng);
            sample_distinct(rng, nj, c, targets);
            traj.contacts += static_cast<std::uint64_t>(c);
            for (long y : targets) {
                heap.push({t + sample_excess_truncated(*pr, q, rng), seq++, pop.offset[static_cast<std::size_t>(j)] + y, x});
            }
        }
    };

    Xoshiro256 run_rng(derive_seed(seed, {run_label}));
    const long first = pop.offset[static_cast<std::size_t>(opts.initial_type)] +
                       static_cast<long>(uniform_below(
                           run_rng, static_cast<std::uint64_t>(pop.counts[static_cast<std::size_t>(opts.initial_type)])));
    infect(first, 0.0);

    while (!heap.empty() && !logger.should_stop()) {
        const M3Event ev = heap.top();
        if (ev.time > opts.horizon) {
            traj.truncated = true;
            break;
        }
        heap.pop();
        if (ev.target < 0) {
            status[static_cast<std::size_t>(ev.source)] = 2;
            logger.log(ev.time, EventKind::Recovery, pop.type_of[static_cast<std::size_t>(ev.source)]);
        } else if (status[static_cast<std::size_t>(ev.target)] == 0) {
            infect(ev.target, ev.time);
        }
    }
    if (logger.should_stop() && !heap.empty()) traj.truncated = true;
    return traj;
}

namespace {

enum class M1Kind : std::uint8_t { Recovery, EdgeOnNext, FlipOn };

struct M1Event {
    double time;
    std::uint64_t seq;
    M1Kind kind;
    long x;
    long y;
};

struct M1LaterFirst {
    bool operator()(const M1Event& a, const M1Event& b) const
    {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
};

} // namespace

Trajectory simulate_model1(const ModelSpec& spec, long n, std::uint64_t seed, bool reset_on_infection,
                           const SimOptions& opts)
{
    check_common(spec, n, opts);
    if (n > opts.exact_cap) {
        throw InvalidArgument("n = " + std::to_string(n) + " exceeds the edge-resolved cap of " +
                              std::to_string(opts.exact_cap) + "; use Model 3");
    }
    const RealizedRates rates = realize_rates(spec, n);
    const int k = spec.k;
    Population pop(rates.n_per_type);

    Trajectory traj;
    traj.n = n;
    traj.seed = seed;
    traj.model = reset_on_infection ? ModelTag::M2 : ModelTag::M1;
    traj.initial_type = opts.initial_type;
    traj.n_per_type = rates.n_per_type;
    Logger logger{traj, 0, false, opts};

    std::vector<std::uint8_t> status(static_cast<std::size_t>(n), 0);
    std::vector<double> recovery_time(static_cast<std::size_t>(n), 0.0);
    // Susceptibles per type with O(1) swap-removal.
    std::vector<std::vector<long>> sus(static_cast<std::size_t>(k));
    std::vector<std::size_t> pos(static_cast<std::size_t>(n));
    for (long v = 0; v < n; ++v) {
        auto& list = sus[static_cast<std::size_t>(pop.type_of[static_cast<std::size_t>(v)])];
        pos[static_cast<std::size_t>(v)] = list.size();
        list.push_back(v);
    }
    auto remove_sus = [&](long v) {
        auto& list = sus[static_cast<std::size_t>(pop.type_of[static_cast<std::size_t>(v)])];
        const std::size_t at = pos[static_cast<std::size_t>(v)];
        const long last = list.back();
        list[at] = last;
        pos[static_cast<std::size_t>(last)] = at;
        list.pop_back();
    };

    std::priority_queue<M1Event, std::vector<M1Event>, M1LaterFirst> heap;
    std::uint64_t seq = 0;
    Xoshiro256 rng(derive_seed(seed, {run_label}));

    auto rate = [&](const Matrix& m, long x, long y) {
        return m(pop.type_of[static_cast<std::size_t>(x)], pop.type_of[static_cast<std::size_t>(y)]);
    };

    auto infect = [&](long x, double t) {
        status[static_cast<std::size_t>(x)] = 1;
        remove_sus(x);
        const int i = pop.type_of[static_cast<std::size_t>(x)];
        logger.log(t, EventKind::Infection, i);
        const double rec = t + exp_draw(rng, spec.gamma(i));
        recovery_time[static_cast<std::size_t>(x)] = rec;
        heap.push({rec, seq++, M1Kind::Recovery, x, -1});
        for (int j = 0; j < k; ++j) {
            const double lam = rates.lambda_n(i, j);
            const double mu = rates.mu_n(i, j);
            const double beta = rates.beta_n(i, j);
            if (lam == 0.0 || beta == 0.0) continue;
            const double on_prob = lam / (lam + mu);
            for (long y : sus[static_cast<std::size_t>(j)]) {
                // The pair has never had an infective endpoint, so its edge is in equilibrium.
                bool on = rng.uniform() < on_prob;
                if (reset_on_infection) on = rng.uniform() < on_prob;
                if (on) {
                    const double next = t + exp_draw(rng, mu + beta);
                    if (next < rec) heap.push({next, seq++, M1Kind::EdgeOnNext, x, y});
                } else {
                    const double next = t + exp_draw(rng, lam);
                    if (next < rec) heap.push({next, seq++, M1Kind::FlipOn, x, y});
                }
            }
        }
    };

    const long first = pop.offset[static_cast<std::size_t>(opts.initial_type)] +
                       static_cast<long>(uniform_below(
                           rng, static_cast<std::uint64_t>(pop.counts[static_cast<std::size_t>(opts.initial_type)])));
    infect(first, 0.0);

    while (!heap.empty() && !logger.should_stop()) {
        const M1Event ev = heap.top();
        if (ev.time > opts.horizon) {
            traj.truncated = true;
            break;
        }
        heap.pop();
        if (ev.kind == M1Kind::Recovery) {
            status[static_cast<std::size_t>(ev.x)] = 2;
            logger.log(ev.time, EventKind::Recovery, pop.type_of[static_cast<std::size_t>(ev.x)]);
            continue;
        }
        if (status[static_cast<std::size_t>(ev.y)] != 0) continue;
        const double lam = rate(rates.lambda_n, ev.x, ev.y);
        const double mu = rate(rates.mu_n, ev.x, ev.y);
        const double beta = rate(rates.beta_n, ev.x, ev.y);
        const double rec = recovery_time[static_cast<std::size_t>(ev.x)];
        if (ev.kind == M1Kind::EdgeOnNext) {
            if (rng.uniform() * (mu + beta) < beta) {
                ++traj.contacts;
                infect(ev.y, ev.time);
            } else {
                const double next = ev.time + exp_draw(rng, lam);
                if (next < rec) heap.push({next, seq++, M1Kind::FlipOn, ev.x, ev.y});
            }
        } else {
            const double next = ev.time + exp_draw(rng, mu + beta);
            if (next < rec) heap.push({next, seq++, M1Kind::EdgeOnNext, ev.x, ev.y});
        }
    }
    if (logger.should_stop() && !heap.empty()) traj.truncated = true;
    return traj;
}

Trajectory simulate(ModelTag model, const ModelSpec& spec, long n, std::uint64_t seed, const SimOptions& opts)
{
    switch (model) {
    case ModelTag::M1: return simulate_model1(spec, n, seed, false, opts);
    case ModelTag::M2: return simulate_model1(spec, n, seed, true, opts);
    case ModelTag::M3: return simulate_model3(spec, n, seed, opts);
    }
    throw InvalidArgument("unknown model");
}

long conditioning_threshold(long n, double exponent)
{
    return std::max(1L, static_cast<long>(std::floor(std::pow(static_cast<double>(n), exponent) + 1e-9)));
}

Trajectory condition_on_outbreak(const ModelSpec& spec, long n, std::uint64_t seed, const ConditioningOptions& opts)
{
    SimOptions sim = opts.sim;
    sim.threshold = conditioning_threshold(n, opts.threshold_exponent);
    for (long a = 0; a <= opts.max_restarts; ++a) {
        Trajectory traj = simulate(opts.model, spec, n, derive_seed(seed, {static_cast<std::uint64_t>(a)}), sim);
        if (traj.crossing_time) {
            traj.discarded_runs = static_cast<std::uint64_t>(a);
            return traj;
        }
    }
    throw ConditioningError("no outbreak reached " + std::to_string(sim.threshold) + " infections in " +
                                std::to_string(opts.max_restarts + 1) + " attempts",
                            static_cast<std::uint64_t>(opts.max_restarts + 1));
}

TypeCurves curves_at(const Trajectory& traj, const std::vector<double>& grid)
{
    if (!std::is_sorted(grid.begin(), grid.end())) throw InvalidArgument("curves_at needs a sorted grid");
    const std::size_t k = traj.n_per_type.size();
    TypeCurves out;
    out.grid = grid;
    out.s.assign(k, std::vector<double>(grid.size()));
    out.i.assign(k, std::vector<double>(grid.size()));
    out.r.assign(k, std::vector<double>(grid.size()));
    std::vector<long> s(traj.n_per_type), i(k, 0), r(k, 0);
    std::size_t e = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double t = std::max(grid[g], 0.0);
        while (e < traj.events.size() && traj.events[e].time <= t) {
            const auto ty = static_cast<std::size_t>(traj.events[e].type);
            if (traj.events[e].kind == EventKind::Infection) {
                --s[ty];
                ++i[ty];
            } else {
                --i[ty];
                ++r[ty];
            }
            ++e;
        }
        for (std::size_t v = 0; v < k; ++v) {
            const double nv = static_cast<double>(traj.n_per_type[v]);
            out.s[v][g] = static_cast<double>(s[v]) / nv;
            out.i[v][g] = static_cast<double>(i[v]) / nv;
            out.r[v][g] = static_cast<double>(r[v]) / nv;
        }
    }
    return out;
}

std::vector<double> total_infected_at(const Trajectory& traj, const std::vector<double>& grid)
{
    const TypeCurves c = curves_at(traj, grid);
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t v = 0; v < traj.n_per_type.size(); ++v) {
        const double w = static_cast<double>(traj.n_per_type[v]) / static_cast<double>(traj.n);
        for (std::size_t g = 0; g < grid.size(); ++g) out[g] += w * c.i[v][g];
    }
    return out;
}

void write_events_csv_header(std::ostream& os) { os << "run_id,time,event_kind,type_index\n"; }

void write_events_csv(std::ostream& os, const Trajectory& traj, long run_id)
{
    char buf[64];
    for (const auto& e : traj.events) {
        std::snprintf(buf, sizeof buf, "%.12g", e.time);
        os << run_id << ',' << buf << ',' << to_string(e.kind) << ',' << e.type << '\n';
    }
}

} // namespace dynsir
