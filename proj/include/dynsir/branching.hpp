#ifndef DYNSIR_BRANCHING_HPP
#define DYNSIR_BRANCHING_HPP

#include "dynsir/common.hpp"
#include "dynsir/contact_process.hpp"
#include "dynsir/model_params.hpp"

#include <functional>
#include <vector>

namespace dynsir {

/// Spectral radius of a nonnegative square matrix by power iteration on A + I,
/// which keeps periodic matrices from oscillating.
double spectral_radius(const Matrix& a, double tol = 1e-13);

/// Throws InvalidArgument naming the strongly connected blocks if the
/// positivity pattern of `a` is not strongly connected.
void check_irreducible(const Matrix& a);

struct PerronVectors {
    Vector left;  ///< zeta: left.sum() == 1
    Vector right; ///< eta: left.dot(right) == 1
    double rho = 0.0;
};

PerronVectors perron_vectors(const Matrix& a);

/// Root s > 0 of spectral_radius(M^L(s)) == 1. Throws NumericalError when the
/// spectral radius of R0 = M^L(0) is not above 1.
double malthusian(const KernelMatrix& kernels);
double malthusian(const std::function<Matrix(double)>& laplace_matrix);
double malthusian_hat(const KernelMatrix& kernels, const Vector& p);

double m_star(const Vector& zeta, const Vector& zeta_hat, const Vector& p);

/// Smallest fixed point of the offspring generating function, one entry per
/// ancestor type.
Vector extinction_probabilities(const KernelMatrix& kernels, const Vector& gamma, int max_iter = 100000);
Vector extinction_probabilities(const ModelSpec& spec);

/// Nodes and weights of the n-point Gauss-Laguerre rule for weight e^{-x}.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
QuadratureRule gauss_laguerre(int n);

struct BranchingSummary {
    Matrix r0;
    double malthusian = 0.0;
    double malthusian_hat = 0.0;
    Vector zeta, eta, zeta_hat, eta_hat;
    double m_star = 0.0;
    Vector extinction;
};

BranchingSummary branching_summary(const ModelSpec& spec);

} // namespace dynsir

#endif
