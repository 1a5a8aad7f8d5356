#include "dynsir/contact_process.hpp"

#include <algorithm>
#include <cmath>

namespace dynsir {

IppParams ipp_params(double beta, double lambda, double mu)
{
    if (!(beta > 0.0) || !(lambda > 0.0) || !(mu >= 0.0) || !std::isfinite(beta) || !std::isfinite(lambda) ||
        !std::isfinite(mu)) {
        throw InvalidArgument("ipp_params needs beta > 0, lambda > 0, mu >= 0");
    }
    IppParams ipp;
    ipp.beta = beta;
    ipp.lambda = lambda;
    ipp.mu = mu;
    // Discriminant written as a sum of nonnegative terms to avoid cancellation.
    const double disc = (beta - lambda) * (beta - lambda) + mu * (mu + 2.0 * beta + 2.0 * lambda);
    const double root = std::sqrt(disc);
    ipp.r1 = 0.5 * (beta + lambda + mu + root);
    ipp.r2 = beta * lambda / ipp.r1;
    if (root <= 1e-15 * ipp.r1) {
        ipp.p_mix = 1.0;
    } else {
        ipp.p_mix = (beta - ipp.r2) / root;
        ipp.p_mix = std::min(1.0, std::max(0.0, ipp.p_mix));
    }
    return ipp;
}

double mean_interarrival(double beta, double lambda, double mu)
{
    if (lambda == 0.0) throw InvalidArgument("edge never forms (lambda = 0)");
    if (!(beta > 0.0)) throw InvalidArgument("mean_interarrival needs beta > 0");
    return (lambda + mu) / (beta * lambda);
}

double excess_pdf(double t, const IppParams& ipp)
{
    if (t < 0.0) return 0.0;
    const double rr = ipp.r1 * ipp.r2;
    return (ipp.p_mix * rr * std::exp(-ipp.r1 * t) + (1.0 - ipp.p_mix) * rr * std::exp(-ipp.r2 * t)) / ipp.denom();
}

double excess_cdf(double t, const IppParams& ipp)
{
    if (t <= 0.0) return 0.0;
    if (std::isinf(t)) return 1.0;
    const double a = ipp.p_mix * ipp.r2 * -std::expm1(-ipp.r1 * t);
    const double b = (1.0 - ipp.p_mix) * ipp.r1 * -std::expm1(-ipp.r2 * t);
    return std::min(1.0, (a + b) / ipp.denom());
}

double sample_excess(const IppParams& ipp, Xoshiro256& rng)
{
    const double rate = rng.uniform() < ipp.excess_weight_fast() ? ipp.r1 : ipp.r2;
    return -std::log(rng.uniform_pos()) / rate;
}

double sample_excess_truncated(const IppParams& ipp, double q, Xoshiro256& rng)
{
    const double w1 = ipp.excess_weight_fast();
    const double m1 = w1 * -std::expm1(-ipp.r1 * q);
    const double m2 = (1.0 - w1) * -std::expm1(-ipp.r2 * q);
    const double u = rng.uniform() * (m1 + m2);
    const double rate = u < m1 ? ipp.r1 : ipp.r2;
    const double span = -std::expm1(-rate * q);
    const double t = -std::log1p(-rng.uniform() * span) / rate;
    return std::min(t, q);
}

double r0_n(double beta, double lambda, double mu, double gamma, double n_j)
{
    const double num = n_j * beta * lambda * (lambda + mu + gamma);
    const double den = (lambda + mu) * (gamma * gamma + gamma * (beta + lambda + mu) + beta * lambda);
    return num / den;
}

namespace {

struct Intensity {
    double t;
    double operator()(const HomogeneousKernel& k) const { return k.r0 * k.gamma * std::exp(-k.gamma * t); }
    double operator()(const CaseSixBKernel& k) const
    {
        const double c = k.mu + k.beta + k.gamma;
        return (k.lambda / k.mu) * k.beta * std::exp(-c * t) +
               (k.lambda * k.beta / (k.mu + k.beta)) * -std::expm1(-(k.mu + k.beta) * t) * std::exp(-k.gamma * t);
    }
    double operator()(const FiniteNKernel& k) const { return k.n_j * excess_pdf(t, k.ipp) * std::exp(-k.gamma * t); }
};

struct Tail {
    double t;
    double operator()(const HomogeneousKernel& k) const { return k.r0 * std::exp(-k.gamma * t); }
    double operator()(const CaseSixBKernel& k) const
    {
        const double c = k.mu + k.beta + k.gamma;
        const double a = k.lambda * k.beta / k.mu;
        const double b = k.lambda * k.beta / (k.mu + k.beta);
        return a * std::exp(-c * t) / c + b * (std::exp(-k.gamma * t) / k.gamma - std::exp(-c * t) / c);
    }
    double operator()(const FiniteNKernel& k) const
    {
        const auto& q = k.ipp;
        const double f = k.n_j * q.r1 * q.r2 / q.denom();
        const double a1 = q.r1 + k.gamma;
        const double a2 = q.r2 + k.gamma;
        return f * (q.p_mix * std::exp(-a1 * t) / a1 + (1.0 - q.p_mix) * std::exp(-a2 * t) / a2);
    }
};

struct Laplace {
    double s;
    double operator()(const HomogeneousKernel& k) const { return k.r0 * k.gamma / (s + k.gamma); }
    double operator()(const CaseSixBKernel& k) const
    {
        const double c = k.mu + k.beta + k.gamma;
        const double a = k.lambda * k.beta / k.mu;
        const double b = k.lambda * k.beta / (k.mu + k.beta);
        return a / (s + c) + b * (1.0 / (s + k.gamma) - 1.0 / (s + c));
    }
    double operator()(const FiniteNKernel& k) const
    {
        const auto& q = k.ipp;
        const double f = k.n_j * q.r1 * q.r2 / q.denom();
        return f * (q.p_mix / (s + q.r1 + k.gamma) + (1.0 - q.p_mix) / (s + q.r2 + k.gamma));
    }
};

} // namespace

double KernelDensity::intensity(double t) const
{
    if (t < 0.0) return 0.0;
    return std::visit(Intensity{t}, v_);
}

double KernelDensity::tail(double t) const { return std::visit(Tail{std::max(t, 0.0)}, v_); }

double KernelDensity::mass() const { return tail(0.0); }

double KernelDensity::laplace(double s) const { return std::visit(Laplace{s}, v_); }

double KernelDensity::horizon(double tol) const
{
    if (tail(0.0) <= tol) return 0.0;
    double hi = 1.0;
    while (tail(hi) > tol) {
        hi *= 2.0;
        if (hi > 1e12) throw NumericalError("kernel tail does not decay");
    }
    double lo = hi / 2.0;
    if (hi == 1.0) lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (tail(mid) > tol ? lo : hi) = mid;
    }
    return hi;
}

KernelDensity limit_kernel(const ModelSpec& spec, int i, int j)
{
    const RegimeReport rep = classify_regime(spec);
    const auto& pr = rep.at(i, j, spec.k);
    if (!pr.constraints_ok || !pr.limit_r0) throw InvalidArgument("no limiting kernel: " + pr.diagnostic);
    if (!pr.homogeneous) {
        return KernelDensity(CaseSixBKernel{spec.lambda(i, j), spec.mu(i, j), spec.beta(i, j), spec.gamma(i)});
    }
    return KernelDensity(HomogeneousKernel{spec.gamma(i), *pr.limit_r0});
}

KernelMatrix limit_kernels(const ModelSpec& spec)
{
    const RegimeReport rep = classify_regime(spec);
    KernelMatrix out(static_cast<std::size_t>(spec.k), std::vector<KernelDensity>(static_cast<std::size_t>(spec.k)));
    for (int i = 0; i < spec.k; ++i) {
        for (int j = 0; j < spec.k; ++j) {
            const auto& pr = rep.at(i, j, spec.k);
            if (!pr.constraints_ok || !pr.limit_r0) throw InvalidArgument("no limiting kernel: " + pr.diagnostic);
            auto& slot = out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (!pr.homogeneous) {
                slot = KernelDensity(CaseSixBKernel{spec.lambda(i, j), spec.mu(i, j), spec.beta(i, j), spec.gamma(i)});
            } else {
                slot = KernelDensity(HomogeneousKernel{spec.gamma(i), *pr.limit_r0});
            }
        }
    }
    return out;
}

KernelDensity finite_kernel(const ModelSpec& spec, const RealizedRates& rates, int i, int j)
{
    const double b = rates.beta_n(i, j);
    const double l = rates.lambda_n(i, j);
    if (b == 0.0 || l == 0.0) return KernelDensity(HomogeneousKernel{spec.gamma(i), 0.0});
    const double nj = static_cast<double>(rates.n_per_type.at(static_cast<std::size_t>(j)));
    return KernelDensity(FiniteNKernel{ipp_params(b, l, rates.mu_n(i, j)), spec.gamma(i), nj});
}

Matrix laplace_ml(const KernelMatrix& kernels, double s)
{
    const auto k = static_cast<Eigen::Index>(kernels.size());
    Matrix m(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            m(i, j) = kernels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].laplace(s);
        }
    }
    return m;
}

Matrix laplace_ml(const ModelSpec& spec, double s) { return laplace_ml(limit_kernels(spec), s); }

Matrix laplace_ml_hat(const KernelMatrix& kernels, const Vector& p, double s)
{
    const auto k = static_cast<Eigen::Index>(kernels.size());
    Matrix m(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            m(j, i) = (p(i) / p(j)) * kernels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].laplace(s);
        }
    }
    return m;
}

Matrix laplace_ml_hat(const ModelSpec& spec, double s) { return laplace_ml_hat(limit_kernels(spec), spec.p, s); }

} // namespace dynsir
