#ifndef DYNSIR_CONFIG_HPP
#define DYNSIR_CONFIG_HPP

#include "dynsir/harness.hpp"

#include <string>

namespace dynsir {

/// JSON configuration:
///   {"model": {"k", "p", "lambda", "mu", "beta", "gamma",
///              "kappa_lambda", "kappa_mu", "kappa_beta"},
///    "experiment": {"n_list", "runs_per_n", "master_seed", "threshold_exponent",
///                   "pin_level", "window": [u_min, u_max], "grid_step", ...}}
/// Matrices are row-major nested lists; for k = 1 plain numbers are accepted.
/// The experiment block is optional.
struct Config {
    ModelSpec spec;
    ExperimentConfig experiment;
    bool has_experiment = false;
};

Config parse_config(const std::string& text);
Config load_config(const std::string& path);

} // namespace dynsir

#endif
