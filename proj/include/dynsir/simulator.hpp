#ifndef DYNSIR_SIMULATOR_HPP
#define DYNSIR_SIMULATOR_HPP

#include "dynsir/common.hpp"
#include "dynsir/model_params.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dynsir {

enum class ModelTag { M1, M2, M3 };
enum class EventKind { Infection, Recovery };

std::string to_string(ModelTag tag);
std::string to_string(EventKind kind);

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::Infection;
    int type = 0;
    bool tie = false; ///< same time as the previous logged event
};

struct Trajectory {
    long n = 0;
    std::uint64_t seed = 0;
    ModelTag model = ModelTag::M3;
    int initial_type = 0;
    std::vector<long> n_per_type;
    std::vector<Event> events; ///< time ordered, starts with the seed infection at t = 0
    bool outbreak = false;
    std::optional<double> crossing_time;
    bool ties = false;
    bool truncated = false;       ///< stopped early (threshold or horizon) with infectives left
    std::uint64_t contacts = 0;   ///< scheduled contacts, including ineffective ones
    std::uint64_t discarded_runs = 0;

    long ever_infected() const;
    long recovered() const;
    /// Ever-infected count divided by n.
    double final_fraction() const;
};

struct SimOptions {
    int initial_type = 0;
    double horizon = std::numeric_limits<double>::infinity();
    /// Ever-infected count whose first attainment is recorded as crossing_time (0 disables).
    long threshold = 0;
    bool stop_at_threshold = false;
    long exact_cap = 2000;
};

/// Edge-resolved simulation. With reset_on_infection the edge of every pair
/// touched by a new infective is resampled from equilibrium (the reset variant).
Trajectory simulate_model1(const ModelSpec& spec, long n, std::uint64_t seed, bool reset_on_infection,
                           const SimOptions& opts = {});

/// Binomial-process simulation: every infective draws its infectious period,
/// the number of contacted individuals per type and their contact times.
Trajectory simulate_model3(const ModelSpec& spec, long n, std::uint64_t seed, const SimOptions& opts = {});

Trajectory simulate(ModelTag model, const ModelSpec& spec, long n, std::uint64_t seed, const SimOptions& opts = {});

struct ConditioningOptions {
    double threshold_exponent = 17.0 / 24.0;
    long max_restarts = 10000;
    ModelTag model = ModelTag::M3;
    SimOptions sim;
};

long conditioning_threshold(long n, double exponent);

/// Attempt a uses seed derive_seed(seed, {a}). Returns the first attempt whose
/// ever-infected count reaches the threshold; throws ConditioningError when
/// every attempt up to max_restarts dies out first.
Trajectory condition_on_outbreak(const ModelSpec& spec, long n, std::uint64_t seed,
                                 const ConditioningOptions& opts = {});

/// Per-type fractions S/n_v, I/n_v, R/n_v as right-continuous step functions.
/// Times before 0 take the value at time 0.
struct TypeCurves {
    std::vector<double> grid;
    std::vector<std::vector<double>> s, i, r; ///< indexed [type][grid point]
};

TypeCurves curves_at(const Trajectory& traj, const std::vector<double>& grid);

/// Total infected count divided by n at the given grid points.
std::vector<double> total_infected_at(const Trajectory& traj, const std::vector<double>& grid);

void write_events_csv_header(std::ostream& os);
void write_events_csv(std::ostream& os, const Trajectory& traj, long run_id);

} // namespace dynsir

#endif
