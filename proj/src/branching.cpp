#include "dynsir/branching.hpp"

#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace dynsir {

namespace {

// Positive vector x with (A + I) x = (rho + 1) x, normalized to unit l1 norm.
Vector power_vector(const Matrix& a, double tol, double* rho_out)
{
    const auto k = a.rows();
    Vector x = Vector::Constant(k, 1.0 / static_cast<double>(k));
    double rho = 0.0;
    for (int it = 0; it < 10000000; ++it) {
        Vector y = a * x + x;
        const double norm = y.sum();
        if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("power iteration broke down");
        y /= norm;
        const double change = (y - x).cwiseAbs().maxCoeff();
        x = std::move(y);
        rho = norm - 1.0;
        if (change <= tol) {
            if (rho_out) *rho_out = rho;
            return x;
        }
    }
    throw NumericalError("power iteration did not converge");
}

std::vector<std::vector<bool>> reachability(const Matrix& a)
{
    const auto k = static_cast<std::size_t>(a.rows());
    std::vector<std::vector<bool>> r(k, std::vector<bool>(k, false));
    for (std::size_t i = 0; i < k; ++i) {
        r[i][i] = true;
        for (std::size_t j = 0; j < k; ++j) {
            if (a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) r[i][j] = true;
        }
    }
    for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t i = 0; i < k; ++i) {
            if (!r[i][m]) continue;
            for (std::size_t j = 0; j < k; ++j) {
                if (r[m][j]) r[i][j] = true;
            }
        }
    }
    return r;
}

} // namespace

double spectral_radius(const Matrix& a, double tol)
{
    if (a.rows() != a.cols() || a.rows() == 0) throw InvalidArgument("spectral_radius needs a nonempty square matrix");
    if ((a.array() < 0.0).any()) throw InvalidArgument("spectral_radius needs a nonnegative matrix");
    if (a.rows() == 1) return a(0, 0);
    double rho = 0.0;
    power_vector(a, tol, &rho);
    return rho;
}

void check_irreducible(const Matrix& a)
{
    const auto k = static_cast<std::size_t>(a.rows());
    if (k <= 1) return;
    const auto r = reachability(a);
    std::vector<int> block(k, -1);
    int nblocks = 0;
    for (std::size_t i = 0; i < k; ++i) {
        if (block[i] >= 0) continue;
        for (std::size_t j = 0; j < k; ++j) {
            if (r[i][j] && r[j][i]) block[j] = nblocks;
        }
        ++nblocks;
    }
    if (nblocks == 1) return;
    std::ostringstream os;
    os << "matrix is reducible; strongly connected type blocks:";
    for (int b = 0; b < nblocks; ++b) {
        os << " {";
        bool first = true;
        for (std::size_t i = 0; i < k; ++i) {
            if (block[i] != b) continue;
            os << (first ? "" : ",") << i + 1;
            first = false;
        }
        os << "}";
    }
    throw InvalidArgument(os.str());
}

PerronVectors perron_vectors(const Matrix& a)
{
    check_irreducible(a);
    PerronVectors out;
    if (a.rows() == 1) {
        out.left = Vector::Ones(1);
        out.right = Vector::Ones(1);
        out.rho = a(0, 0);
        return out;
    }
    double rho = 0.0;
    double rho_t = 0.0;
    out.right = power_vector(a, 1e-14, &rho);
    out.left = power_vector(a.transpose(), 1e-14, &rho_t);
    out.rho = 0.5 * (rho + rho_t);
    out.left /= out.left.sum();
    out.right /= out.left.dot(out.right);
    return out;
}

namespace {

template <class F>
double radius_root(F&& radius_at)
{
    const double r0 = radius_at(0.0);
    if (!(r0 > 1.0)) {
        std::ostringstream os;
        os << "no positive Malthusian parameter: spectral radius of R0 is " << r0 << " (needs > 1)";
        throw NumericalError(os.str());
    }
    double hi = 1.0;
    while (radius_at(hi) >= 1.0) {
        hi *= 2.0;
        if (hi > 1e12) throw NumericalError("Malthusian bracket failed");
    }
    double lo = 0.0;
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        (radius_at(mid) > 1.0 ? lo : hi) = mid;
    }
    // Secant polish, kept inside the bracket.
    double x0 = lo;
    double x1 = hi;
    double f0 = radius_at(x0) - 1.0;
    double f1 = radius_at(x1) - 1.0;
    for (int it = 0; it < 100; ++it) {
        if (f1 == f0) break;
        double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if (!(x2 >= lo && x2 <= hi)) x2 = 0.5 * (lo + hi);
        const double f2 = radius_at(x2) - 1.0;
        (f2 > 0.0 ? lo : hi) = x2;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        if (std::abs(x1 - x0) <= 1e-12 * std::max(1.0, std::abs(x1)) || f2 == 0.0) break;
    }
    return x1;
}

} // namespace

double malthusian(const KernelMatrix& kernels)
{
    return radius_root([&](double s) { return spectral_radius(laplace_ml(kernels, s)); });
}

double malthusian(const std::function<Matrix(double)>& laplace_matrix)
{
    return radius_root([&](double s) { return spectral_radius(laplace_matrix(s)); });
}

double malthusian_hat(const KernelMatrix& kernels, const Vector& p)
{
    return radius_root([&](double s) { return spectral_radius(laplace_ml_hat(kernels, p, s)); });
}

double m_star(const Vector& zeta, const Vector& zeta_hat, const Vector& p)
{
    if (zeta.size() != p.size() || zeta_hat.size() != p.size()) throw InvalidArgument("m_star: length mismatch");
    return (zeta.array() * zeta_hat.array() / p.array()).sum();
}

QuadratureRule gauss_laguerre(int n)
{
    std::unique_ptr<gsl_integration_fixed_workspace, decltype(&gsl_integration_fixed_free)> ws(
        gsl_integration_fixed_alloc(gsl_integration_fixed_laguerre, static_cast<std::size_t>(n), 0.0, 1.0, 0.0, 0.0),
        &gsl_integration_fixed_free);
    if (!ws) throw NumericalError("could not build Gauss-Laguerre rule");
    QuadratureRule rule;
    const double* x = gsl_integration_fixed_nodes(ws.get());
    const double* w = gsl_integration_fixed_weights(ws.get());
    rule.nodes.assign(x, x + n);
    rule.weights.assign(w, w + n);
    return rule;
}

namespace {

// Mass of the contact process of one infective with infectious period T.
double directed_mass(const KernelDensity& kern, double t)
{
    if (const auto* h = std::get_if<HomogeneousKernel>(&kern.variant())) return h->r0 * h->gamma * t;
    if (const auto* c = std::get_if<CaseSixBKernel>(&kern.variant())) {
        const double a = c->mu + c->beta;
        return (c->beta * c->beta * c->lambda * -std::expm1(-a * t) / a + c->mu * c->beta * c->lambda * t) /
               (a * c->mu);
    }
    const auto& f = std::get<FiniteNKernel>(kern.variant());
    return f.n_j * excess_cdf(t, f.ipp);
}

} // namespace

Vector extinction_probabilities(const KernelMatrix& kernels, const Vector& gamma, int max_iter)
{
    const auto k = static_cast<Eigen::Index>(kernels.size());
    const QuadratureRule rule = gauss_laguerre(64);
    std::vector<bool> closed(static_cast<std::size_t>(k), true);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (const auto& kern : kernels[static_cast<std::size_t>(i)]) {
            if (!std::holds_alternative<HomogeneousKernel>(kern.variant())) closed[static_cast<std::size_t>(i)] = false;
        }
    }
    Vector q = Vector::Zero(k);
    for (int it = 0; it < max_iter; ++it) {
        Vector next(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto& row = kernels[static_cast<std::size_t>(i)];
            if (closed[static_cast<std::size_t>(i)]) {
                double acc = 0.0;
                for (Eigen::Index j = 0; j < k; ++j) acc += row[static_cast<std::size_t>(j)].mass() * (1.0 - q(j));
                next(i) = 1.0 / (1.0 + acc);
                continue;
            }
            double acc = 0.0;
            for (std::size_t m = 0; m < rule.nodes.size(); ++m) {
                const double t = rule.nodes[m] / gamma(i);
                double expo = 0.0;
                for (Eigen::Index j = 0; j < k; ++j) {
                    expo += directed_mass(row[static_cast<std::size_t>(j)], t) * (1.0 - q(j));
                }
                acc += rule.weights[m] * std::exp(-expo);
            }
            next(i) = acc;
        }
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (change <= 1e-14) return q;
    }
    throw NumericalError("extinction probability iteration did not converge in " + std::to_string(max_iter) +
                         " iterations");
}

Vector extinction_probabilities(const ModelSpec& spec)
{
    return extinction_probabilities(limit_kernels(spec), spec.gamma);
}

BranchingSummary branching_summary(const ModelSpec& spec)
{
    const KernelMatrix kernels = limit_kernels(spec);
    BranchingSummary out;
    out.r0 = laplace_ml(kernels, 0.0);
    out.malthusian = malthusian(kernels);
    out.malthusian_hat = malthusian_hat(kernels, spec.p);
    const PerronVectors fwd = perron_vectors(laplace_ml(kernels, out.malthusian));
    const PerronVectors bwd = perron_vectors(laplace_ml_hat(kernels, spec.p, out.malthusian_hat));
    out.zeta = fwd.left;
    out.eta = fwd.right;
    out.zeta_hat = bwd.left;
    out.eta_hat = bwd.right;
    out.m_star = m_star(out.zeta, out.zeta_hat, spec.p);
    out.extinction = extinction_probabilities(kernels, spec.gamma);
    return out;
}

} // namespace dynsir
