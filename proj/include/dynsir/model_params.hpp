#ifndef DYNSIR_MODEL_PARAMS_HPP
#define DYNSIR_MODEL_PARAMS_HPP

#include "dynsir/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dynsir {

/// Parameterization of the multi-type SIR epidemic on an edge-flipping
/// stochastic block model. Rates between an infective of type i and a
/// target of type j scale with the target group size n_j:
///   lambda_n(i,j) = lambda(i,j) * n_j^kappa_lambda(i,j)   (edge formation)
///   mu_n(i,j)     = mu(i,j)     * n_j^kappa_mu(i,j)       (edge dissolution)
///   beta_n(i,j)   = beta(i,j)   * n_j^kappa_beta(i,j)     (contact rate on an open edge)
/// Recovery rates gamma(i) do not scale.
struct ModelSpec {
    int k = 1;
    Vector p;            ///< asymptotic type fractions, sum to 1
    Matrix lambda;       ///< symmetric, >= 0
    Matrix mu;           ///< symmetric, > 0
    Matrix beta;         ///< >= 0
    Vector gamma;        ///< > 0
    Matrix kappa_lambda;
    Matrix kappa_mu;
    Matrix kappa_beta;   ///< <= 0

    /// Single-type convenience constructor.
    static ModelSpec single(double lambda, double mu, double beta, double gamma,
                            double kappa_lambda, double kappa_mu, double kappa_beta);

    /// Throws InvalidArgument naming the first violated invariant.
    void validate() const;
};

/// Rates realized at population size n.
struct RealizedRates {
    long n = 0;
    std::vector<long> n_per_type;
    Matrix lambda_n;
    Matrix mu_n;
    Matrix beta_n;
};

/// Splits n into k group sizes by largest-remainder rounding of p_i * n.
/// Ties in the remainder go to the lowest type index.
std::vector<long> split_population(const Vector& p, long n);

RealizedRates realize_rates(const ModelSpec& spec, long n);

/// Classification of one ordered type pair (i, j) into the scaling cases.
struct PairRegime {
    int i = 0;
    int j = 0;
    std::string case_label;      ///< "1a".."9", or "zero" for a pair without contact channel
    bool constraints_ok = false; ///< equality constraints that make the limit R0 finite and positive
    bool tv_rate_ok = false;     ///< total-variation decay constraints for the type count k
    std::optional<double> limit_r0; ///< empty when the limit is degenerate (0 or infinity)
    bool homogeneous = true;     ///< false exactly for case 6b
    std::string diagnostic;
};

struct RegimeReport {
    std::vector<PairRegime> pairs; ///< row-major over (i, j)
    bool overall_ok = false;
    bool tv_rate_ok = false;

    const PairRegime& at(int i, int j, int k) const { return pairs.at(static_cast<std::size_t>(i * k + j)); }
};

RegimeReport classify_regime(const ModelSpec& spec);

/// Limiting reproduction matrix R0(i,j): expected type-j contacts made by a
/// type-i infective. Throws InvalidArgument if any pair is unclassifiable.
Matrix limit_r0_matrix(const ModelSpec& spec);
Matrix limit_r0_matrix(const ModelSpec& spec, const RegimeReport& report);

/// Matrix of homogeneity flags, true where the limiting kernel is exponential.
std::vector<std::vector<bool>> homogeneity_mask(const RegimeReport& report, int k);

} // namespace dynsir

#endif
