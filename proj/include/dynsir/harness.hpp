#ifndef DYNSIR_HARNESS_HPP
#define DYNSIR_HARNESS_HPP

#include "dynsir/limit_curves.hpp"
#include "dynsir/model_params.hpp"
#include "dynsir/simulator.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dynsir {

struct ExperimentConfig {
    ModelSpec spec;
    std::vector<long> n_list;
    long runs_per_n = 0;
    std::uint64_t master_seed = 0;
    double threshold_exponent = 17.0 / 24.0;
    double pin_level = 0.01;
    double u_min = -2.0;
    double u_max = 8.0;
    double grid_step = 0.01;
    long max_restarts = 10000;
    ModelTag model = ModelTag::M3;
    /// Worker threads; 0 picks the hardware concurrency.
    int threads = 0;

    void validate() const;
};

/// First time the total infected fraction reaches pin_level.
double align_trajectory(const Trajectory& traj, double pin_level);

/// Common grid u_min, u_min + h, ..., u_max.
std::vector<double> comparison_grid(double u_min, double u_max, double h);

struct Quantiles {
    double q10 = 0.0, q50 = 0.0, q90 = 0.0;
};

struct SizeResult {
    long n = 0;
    long runs = 0;
    std::uint64_t attempts = 0;
    double acceptance = 0.0;
    double acceptance_se = 0.0;
    /// [type][grid point]
    std::vector<std::vector<double>> s_mean, s_se, i_mean, i_se, r_mean, r_se;
    /// sup over the window of |mean - limit|, per type, and the pointwise SE at the maximizer.
    std::vector<double> sup_s, sup_i, sup_r;
    std::vector<double> sup_s_se, sup_i_se, sup_r_se;
    /// Same for the total infected fraction.
    double sup_total_i = 0.0;
    double sup_total_i_se = 0.0;
    Quantiles run_sup_total_i;
    double final_fraction_mean = 0.0;
    double final_fraction_se = 0.0;
    double mean_events = 0.0;
    double wall_seconds = 0.0; ///< not written to CSV output
};

struct ConvergenceReport {
    std::vector<double> u;
    LimitCurves limit; ///< pinned
    /// Limit values on the grid, [type][grid point].
    std::vector<std::vector<double>> limit_s, limit_i, limit_r;
    std::vector<SizeResult> sizes;
    bool monotone = true;
    std::vector<std::string> notes;
};

ConvergenceReport run_convergence(const ExperimentConfig& cfg);

/// Per-size curve table: u, then mean/se/limit for s, i, r of every type.
void write_size_csv(std::ostream& os, const ConvergenceReport& rep, std::size_t index);
/// One row per population size.
void write_summary_csv(std::ostream& os, const ConvergenceReport& rep);

} // namespace dynsir

#endif
