#ifndef DYNSIR_CONTACT_PROCESS_HPP
#define DYNSIR_CONTACT_PROCESS_HPP

#include "dynsir/common.hpp"
#include "dynsir/model_params.hpp"
#include "dynsir/rng.hpp"

#include <variant>
#include <vector>

namespace dynsir {

/// Interrupted Poisson process on one edge: contacts at rate beta while the
/// edge is on, edge switches on at rate lambda and off at rate mu. The
/// interarrival law is a mixture of Exp(r1) and Exp(r2).
struct IppParams {
    double beta = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
    double r1 = 0.0; ///< larger root
    double r2 = 0.0; ///< smaller root
    double p_mix = 0.0;

    /// p r2 + (1-p) r1, equal to lambda + mu.
    double denom() const { return p_mix * r2 + (1.0 - p_mix) * r1; }
    /// Weight of the Exp(r1) component in the equilibrium excess law.
    double excess_weight_fast() const { return p_mix * r2 / denom(); }
};

/// Requires beta > 0, lambda > 0, mu >= 0. When r1 == r2 the mixture
/// degenerates and p_mix is set to 1.
IppParams ipp_params(double beta, double lambda, double mu);

double mean_interarrival(double beta, double lambda, double mu);

double excess_pdf(double t, const IppParams& ipp);
double excess_cdf(double t, const IppParams& ipp);

/// Draw from the equilibrium excess lifetime.
double sample_excess(const IppParams& ipp, Xoshiro256& rng);

/// Draw from the equilibrium excess lifetime conditioned on [0, q].
double sample_excess_truncated(const IppParams& ipp, double q, Xoshiro256& rng);

/// Expected number of contacts an infective makes with a fixed group of n_j
/// individuals during an Exp(gamma) infectious period.
double r0_n(double beta, double lambda, double mu, double gamma, double n_j);

/// R0 * gamma * exp(-gamma t).
struct HomogeneousKernel {
    double gamma = 1.0;
    double r0 = 0.0;
};

/// Limiting intensity when the edge dynamics survive in the limit:
/// (lambda/mu) beta e^{-(mu+beta+gamma)t} + (lambda beta/(mu+beta))(1 - e^{-(mu+beta)t}) e^{-gamma t}.
struct CaseSixBKernel {
    double lambda = 0.0;
    double mu = 0.0;
    double beta = 0.0;
    double gamma = 1.0;
};

/// Finite-n intensity n_j f_{X^e}(t) e^{-gamma t}.
struct FiniteNKernel {
    IppParams ipp;
    double gamma = 1.0;
    double n_j = 1.0;
};

/// Intensity measure of the contacts one infective makes into one target type,
/// already multiplied by its total mass (the reproduction number).
class KernelDensity {
public:
    using Variant = std::variant<HomogeneousKernel, CaseSixBKernel, FiniteNKernel>;

    KernelDensity() : v_(HomogeneousKernel{1.0, 0.0}) {}
    explicit KernelDensity(Variant v) : v_(v) {}

    double intensity(double t) const;
    double mass() const;
    /// Integral of the intensity over [t, inf).
    double tail(double t) const;
    double cumulative(double t) const { return mass() - tail(t); }
    /// Integral of e^{-s u} times the intensity.
    double laplace(double s) const;
    /// Smallest t with tail(t) <= tol * max(mass, tiny); conservative.
    double horizon(double tol) const;
    bool homogeneous() const { return !std::holds_alternative<CaseSixBKernel>(v_); }
    const Variant& variant() const { return v_; }

private:
    Variant v_;
};

using KernelMatrix = std::vector<std::vector<KernelDensity>>;

/// Limiting kernel of pair (i, j). Throws InvalidArgument for degenerate pairs.
KernelDensity limit_kernel(const ModelSpec& spec, int i, int j);
KernelMatrix limit_kernels(const ModelSpec& spec);

/// Kernel at population size n built from the realized rates.
KernelDensity finite_kernel(const ModelSpec& spec, const RealizedRates& rates, int i, int j);

/// M^L(s)_{i,j} = R0_{i,j} int e^{-su} G_{i,j}(du).
Matrix laplace_ml(const KernelMatrix& kernels, double s);
Matrix laplace_ml(const ModelSpec& spec, double s);

/// Backward matrix: row j, column i holds (p_i/p_j) R0_{i,j} int e^{-su} G_{i,j}(du),
/// i.e. the type-i births of a type-j individual of the susceptibility process.
Matrix laplace_ml_hat(const KernelMatrix& kernels, const Vector& p, double s);
Matrix laplace_ml_hat(const ModelSpec& spec, double s);

} // namespace dynsir

#endif
