#include "dynsir/limit_curves.hpp"

#include "dynsir/branching.hpp"
#include "dynsir/contact_process.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace dynsir {

std::string to_string(CurveSource src)
{
    switch (src) {
    case CurveSource::WeakOde: return "weak_ode";
    case CurveSource::StrongOde: return "strong_ode";
    case CurveSource::MixedOde: return "mixed_ode";
    case CurveSource::Renewal: return "renewal";
    case CurveSource::Psi: return "psi";
    }
    return "?";
}

namespace {

std::vector<double> weighted_total(const std::vector<std::vector<double>>& x, const Vector& p)
{
    std::vector<double> out(x.empty() ? 0 : x[0].size(), 0.0);
    for (std::size_t v = 0; v < x.size(); ++v) {
        for (std::size_t g = 0; g < out.size(); ++g) out[g] += p(static_cast<Eigen::Index>(v)) * x[v][g];
    }
    return out;
}

} // namespace

std::vector<double> LimitCurves::total_s() const { return weighted_total(s, p); }
std::vector<double> LimitCurves::total_i() const { return weighted_total(i, p); }
std::vector<double> LimitCurves::total_r() const { return weighted_total(r, p); }

// ---------------------------------------------------------------------------
// ODE systems

namespace {

// State layout: s (k), i (k), r (k), then l_c and l_d for every edge pair.
struct Engine {
    int k = 1;
    Vector p, gamma;
    Matrix r0, lambda, mu, beta;
    std::vector<std::vector<bool>> hom;
    std::vector<std::pair<int, int>> pairs;
    // Single-type strong form: l_d' = lambda i - (mu + beta + gamma) l_d.
    bool single_form = false;

    int npairs() const { return static_cast<int>(pairs.size()); }
    int dim() const { return 3 * k + 2 * npairs(); }
    int lc_at(int q) const { return 3 * k + q; }
    int ld_at(int q) const { return 3 * k + npairs() + q; }

    void rhs(const Vector& y, Vector& dy, Vector& force) const
    {
        force.setZero(k);
        for (int v = 0; v < k; ++v) {
            for (int u = 0; u < k; ++u) {
                if (hom[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)]) {
                    force(v) += (p(u) / p(v)) * r0(u, v) * gamma(u) * y(k + u);
                }
            }
        }
        for (int q = 0; q < npairs(); ++q) {
            const auto [u, v] = pairs[static_cast<std::size_t>(q)];
            force(v) += (p(u) / p(v)) * beta(u, v) * (y(lc_at(q)) + y(ld_at(q)));
        }
        for (int v = 0; v < k; ++v) {
            const double inflow = y(v) * force(v);
            dy(v) = -inflow;
            dy(k + v) = inflow - gamma(v) * y(k + v);
            dy(2 * k + v) = gamma(v) * y(k + v);
        }
        for (int q = 0; q < npairs(); ++q) {
            const auto [u, v] = pairs[static_cast<std::size_t>(q)];
            const double c = mu(u, v) + beta(u, v) + gamma(u);
            const double lc = y(lc_at(q));
            const double ld = y(ld_at(q));
            dy(lc_at(q)) = (lambda(u, v) / mu(u, v)) * y(u) * force(u) - c * lc;
            dy(ld_at(q)) = single_form ? lambda(u, v) * y(k + u) - c * ld : mu(u, v) * lc - gamma(u) * ld;
        }
    }
};

Vector linearized_init(const Engine& e, double eps)
{
    const int n = e.dim();
    const int m = n - e.k; // everything except s
    Vector base = Vector::Zero(n);
    base.head(e.k).setOnes();
    Matrix jac(m, m);
    Vector dy(n), force(e.k);
    for (int c = 0; c < m; ++c) {
        Vector y = base;
        y(e.k + c) = 1.0;
        e.rhs(y, dy, force);
        jac.col(c) = dy.tail(m);
    }
    Eigen::EigenSolver<Matrix> es(jac);
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition of the linearization failed");
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m; ++j) {
        if (es.eigenvalues()(j).real() > es.eigenvalues()(best).real()) best = j;
    }
    if (!(es.eigenvalues()(best).real() > 0.0)) {
        throw NumericalError("disease-free state is not unstable; supply an explicit initial state");
    }
    Vector v = es.eigenvectors().col(best).real();
    const double isum = v.head(e.k).sum();
    if (std::abs(isum) < 1e-300) throw NumericalError("dominant direction carries no infecteds");
    v /= isum;
    Vector y0 = base;
    y0.tail(m) = eps * v;
    for (int t = 0; t < e.k; ++t) y0(t) = 1.0 - y0(e.k + t) - y0(2 * e.k + t);
    return y0;
}

void check_state(const Engine& e, const Vector& y, double t)
{
    for (int v = 0; v < e.k; ++v) {
        const double s = y(v), i = y(e.k + v), r = y(2 * e.k + v);
        if (!std::isfinite(s) || !std::isfinite(i) || !std::isfinite(r)) {
            throw NumericalError("non-finite state at t = " + std::to_string(t) + "; reduce the step size");
        }
        if (std::abs(s + i + r - 1.0) > 1e-6) {
            throw NumericalError("conservation drift above 1e-6 at t = " + std::to_string(t) +
                                 "; reduce the step size");
        }
        const double lo = -1e-6, hi = 1.0 + 1e-6;
        if (s < lo || i < lo || r < lo || s > hi || i > hi || r > hi) {
            throw NumericalError("state left [0,1] at t = " + std::to_string(t) + "; reduce the step size");
        }
    }
    for (int q = e.dim() - 2 * e.npairs(); q < e.dim(); ++q) {
        if (!std::isfinite(y(q))) throw NumericalError("non-finite edge variable; reduce the step size");
    }
}

void store(LimitCurves& c, const Engine& e, const Vector& y, double t)
{
    c.t.push_back(t);
    for (int v = 0; v < e.k; ++v) {
        c.s[static_cast<std::size_t>(v)].push_back(y(v));
        c.i[static_cast<std::size_t>(v)].push_back(y(e.k + v));
        c.r[static_cast<std::size_t>(v)].push_back(y(2 * e.k + v));
    }
    for (int q = 0; q < e.npairs(); ++q) {
        c.lc[static_cast<std::size_t>(q)].push_back(y(e.lc_at(q)));
        c.ld[static_cast<std::size_t>(q)].push_back(y(e.ld_at(q)));
    }
}

LimitCurves integrate(const Engine& e, const OdeOptions& o, CurveSource src)
{
    if (!(o.h > 0.0) || !(o.t1 > o.t0)) throw InvalidArgument("ODE grid needs h > 0 and t1 > t0");
    if (o.stride < 1) throw InvalidArgument("ODE stride must be positive");
    const long steps = std::lround((o.t1 - o.t0) / o.h);
    Vector y = o.init ? *o.init : linearized_init(e, o.epsilon);
    if (y.size() != e.dim()) throw InvalidArgument("initial state has the wrong length");

    LimitCurves c;
    c.source = src;
    c.p = e.p;
    c.pairs = e.pairs;
    const auto k = static_cast<std::size_t>(e.k);
    c.s.assign(k, {});
    c.i.assign(k, {});
    c.r.assign(k, {});
    c.lc.assign(e.pairs.size(), {});
    c.ld.assign(e.pairs.size(), {});
    store(c, e, y, o.t0);

    const int n = e.dim();
    Vector k1(n), k2(n), k3(n), k4(n), tmp(n), force(e.k);
    const double h = o.h;
    for (long step = 1; step <= steps; ++step) {
        e.rhs(y, k1, force);
        tmp = y + 0.5 * h * k1;
        e.rhs(tmp, k2, force);
        tmp = y + 0.5 * h * k2;
        e.rhs(tmp, k3, force);
        tmp = y + h * k3;
        e.rhs(tmp, k4, force);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double t = o.t0 + static_cast<double>(step) * h;
        check_state(e, y, t);
        if (step % o.stride == 0 || step == steps) store(c, e, y, t);
    }
    return c;
}

Engine make_engine(const Vector& p, const Vector& gamma, const Matrix& r0, const Matrix& lambda, const Matrix& mu,
                   const Matrix& beta, const std::vector<std::vector<bool>>& hom)
{
    Engine e;
    e.k = static_cast<int>(p.size());
    e.p = p;
    e.gamma = gamma;
    e.r0 = r0;
    e.lambda = lambda;
    e.mu = mu;
    e.beta = beta;
    e.hom = hom;
    if (gamma.size() != e.k || r0.rows() != e.k || r0.cols() != e.k || lambda.rows() != e.k ||
        mu.rows() != e.k || beta.rows() != e.k || hom.size() != static_cast<std::size_t>(e.k)) {
        throw InvalidArgument("ODE parameters have inconsistent sizes");
    }
    for (int u = 0; u < e.k; ++u) {
        for (int v = 0; v < e.k; ++v) {
            if (!hom[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)]) {
                if (!(mu(u, v) > 0.0)) throw InvalidArgument("edge pairs need mu > 0");
                e.pairs.emplace_back(u, v);
            }
        }
    }
    return e;
}

} // namespace

OdeSystem ode_system(const ModelSpec& spec)
{
    const RegimeReport rep = classify_regime(spec);
    OdeSystem sys;
    sys.p = spec.p;
    sys.gamma = spec.gamma;
    sys.r0 = limit_r0_matrix(spec, rep);
    sys.lambda = spec.lambda;
    sys.mu = spec.mu;
    sys.beta = spec.beta;
    sys.homogeneous = homogeneity_mask(rep, spec.k);
    return sys;
}

LimitCurves ode_weak(const Matrix& r0, const Vector& gamma, const Vector& p, const OdeOptions& opts)
{
    const auto k = p.size();
    const Matrix zero = Matrix::Zero(k, k);
    const Matrix one = Matrix::Ones(k, k);
    std::vector<std::vector<bool>> hom(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k), true));
    return integrate(make_engine(p, gamma, r0, zero, one, zero, hom), opts, CurveSource::WeakOde);
}

LimitCurves ode_strong_single(double lambda, double mu, double beta, double gamma, const OdeOptions& opts)
{
    Engine e = make_engine(Vector::Ones(1), Vector::Constant(1, gamma), Matrix::Zero(1, 1),
                           Matrix::Constant(1, 1, lambda), Matrix::Constant(1, 1, mu), Matrix::Constant(1, 1, beta),
                           {{false}});
    e.single_form = true;
    return integrate(e, opts, CurveSource::StrongOde);
}

LimitCurves ode_strong_multi(const Vector& p, const Vector& gamma, const Matrix& lambda, const Matrix& mu,
                             const Matrix& beta, const OdeOptions& opts)
{
    const auto k = p.size();
    std::vector<std::vector<bool>> hom(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k), false));
    return integrate(make_engine(p, gamma, Matrix::Zero(k, k), lambda, mu, beta, hom), opts, CurveSource::StrongOde);
}

LimitCurves ode_mixed(const OdeSystem& sys, const std::vector<std::vector<bool>>& partition, const OdeOptions& opts)
{
    if (partition != sys.homogeneous) {
        throw InvalidArgument("homogeneity partition does not match the regime classification");
    }
    return integrate(make_engine(sys.p, sys.gamma, sys.r0, sys.lambda, sys.mu, sys.beta, partition), opts,
                     CurveSource::MixedOde);
}

LimitCurves ode_for_spec(const ModelSpec& spec, const OdeOptions& opts)
{
    const OdeSystem sys = ode_system(spec);
    bool any_h = false, any_nh = false;
    for (const auto& row : sys.homogeneous) {
        for (bool b : row) (b ? any_h : any_nh) = true;
    }
    LimitCurves c = ode_mixed(sys, sys.homogeneous, opts);
    c.source = !any_nh ? CurveSource::WeakOde : (!any_h ? CurveSource::StrongOde : CurveSource::MixedOde);
    return c;
}

std::vector<double> strong_constraint_residual(const LimitCurves& c, double lambda, double mu, double beta)
{
    if (c.k() != 1 || c.lc.size() != 1) throw InvalidArgument("constraint residual needs single-type strong curves");
    std::vector<double> out(c.t.size());
    for (std::size_t g = 0; g < c.t.size(); ++g) {
        out[g] = (lambda / mu) * c.i[0][g] - c.lc[0][g] - (1.0 + beta / mu) * c.ld[0][g];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Renewal equation

Matrix BackwardSystem::laplace_matrix(double s) const
{
    const int n = k();
    Matrix m(n, n);
    for (int v = 0; v < n; ++v) {
        for (int i = 0; i < n; ++i) m(v, i) = kernel[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)].laplace(s);
    }
    return m;
}

BackwardSystem backward_system(const ModelSpec& spec, double tail_tol)
{
    const KernelMatrix kernels = limit_kernels(spec);
    BackwardSystem sys;
    sys.p = spec.p;
    const auto k = static_cast<std::size_t>(spec.k);
    sys.kernel.assign(k, std::vector<RenewalKernel>(k));
    for (std::size_t v = 0; v < k; ++v) {
        for (std::size_t i = 0; i < k; ++i) {
            const KernelDensity kern = kernels[i][v];
            const double ratio = spec.p(static_cast<Eigen::Index>(i)) / spec.p(static_cast<Eigen::Index>(v));
            auto& out = sys.kernel[v][i];
            out.density = [kern, ratio](double u) { return ratio * kern.intensity(u); };
            out.laplace = [kern, ratio](double s) { return ratio * kern.laplace(s); };
            out.horizon = kern.horizon(tail_tol / ratio);
        }
        const double g = spec.gamma(static_cast<Eigen::Index>(v));
        sys.q_cdf.push_back([g](double t) { return t <= 0.0 ? 0.0 : -std::expm1(-g * t); });
    }
    return sys;
}

namespace {

double q_horizon(const std::function<double(double)>& cdf, double tol)
{
    if (1.0 - cdf(0.0) <= tol) return 0.0;
    double hi = 1.0;
    while (1.0 - cdf(hi) > tol) {
        hi *= 2.0;
        if (hi > 1e9) throw NumericalError("infectious-period law has no usable tail bound");
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (1.0 - cdf(mid) > tol ? lo : hi) = mid;
    }
    return hi;
}

// r(t_n) by the midpoint rule on a grid where x = 1 - s is known from index n - mq.
double recovered_at(const std::vector<double>& x, long n, const std::vector<double>& fq_mid, long mq)
{
    double acc = 0.0;
    for (long m = 0; m < mq; ++m) {
        acc += fq_mid[static_cast<std::size_t>(m)] * (x[static_cast<std::size_t>(n - m)] - x[static_cast<std::size_t>(n - m - 1)]);
    }
    return acc + x[static_cast<std::size_t>(n - mq)];
}

} // namespace

LimitCurves renewal_solve(const BackwardSystem& sys, const RenewalOptions& opts)
{
    const int k = sys.k();
    if (k == 0) throw InvalidArgument("empty backward system");
    if (!(opts.h > 0.0) || !(opts.t1 > opts.t0)) throw InvalidArgument("renewal grid needs h > 0 and t1 > t0");
    const double h = opts.h;
    const long steps = std::lround((opts.t1 - opts.t0) / h);

    const double mhat = malthusian([&](double s) { return sys.laplace_matrix(s); });
    const PerronVectors pv = perron_vectors(sys.laplace_matrix(mhat));
    const Vector c = opts.amplitude * pv.right / pv.right.cwiseAbs().sum();

    // Trapezoid weights per kernel.
    std::vector<std::vector<std::vector<double>>> w(static_cast<std::size_t>(k),
                                                    std::vector<std::vector<double>>(static_cast<std::size_t>(k)));
    long lmax = 0;
    for (int v = 0; v < k; ++v) {
        for (int i = 0; i < k; ++i) {
            const auto& kern = sys.kernel[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)];
            const long len = static_cast<long>(std::ceil(kern.horizon / h));
            lmax = std::max(lmax, len);
            auto& wi = w[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)];
            wi.resize(static_cast<std::size_t>(len + 1));
            for (long m = 0; m <= len; ++m) {
                const double end = (m == 0 || m == len) ? 0.5 : 1.0;
                wi[static_cast<std::size_t>(m)] = h * end * kern.density(static_cast<double>(m) * h);
            }
            if (len == 0) wi[0] = 0.0;
        }
    }
    if (lmax > steps) {
        throw NumericalError("kernel truncation horizon exceeds the time grid; extend t1");
    }

    std::vector<long> mq(static_cast<std::size_t>(k));
    std::vector<std::vector<double>> fq_mid(static_cast<std::size_t>(k));
    long qmax = 0;
    for (int v = 0; v < k; ++v) {
        const auto& cdf = sys.q_cdf[static_cast<std::size_t>(v)];
        const long len = std::max(1L, static_cast<long>(std::ceil(q_horizon(cdf, opts.q_tail_tol) / h)));
        mq[static_cast<std::size_t>(v)] = len;
        qmax = std::max(qmax, len);
        for (long m = 0; m < len; ++m) fq_mid[static_cast<std::size_t>(v)].push_back(cdf((static_cast<double>(m) + 0.5) * h));
    }

    const long hist = std::max(lmax, qmax) + 1;
    std::vector<std::vector<double>> x(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(hist + steps + 1)));
    for (int v = 0; v < k; ++v) {
        for (long n = -hist; n <= 0; ++n) {
            x[static_cast<std::size_t>(v)][static_cast<std::size_t>(hist + n)] = c(v) * std::exp(mhat * static_cast<double>(n) * h);
        }
    }

    std::vector<double> known(static_cast<std::size_t>(k));
    for (long n = 1; n <= steps; ++n) {
        const long at = hist + n;
        for (int v = 0; v < k; ++v) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                const auto& wi = w[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)];
                const auto& xi = x[static_cast<std::size_t>(i)];
                for (std::size_t m = 1; m < wi.size(); ++m) acc += wi[m] * xi[static_cast<std::size_t>(at) - m];
            }
            known[static_cast<std::size_t>(v)] = acc;
            x[static_cast<std::size_t>(v)][static_cast<std::size_t>(at)] = x[static_cast<std::size_t>(v)][static_cast<std::size_t>(at - 1)];
        }
        // The u = 0 node involves the unknown itself.
        for (int it = 0; it < 200; ++it) {
            double change = 0.0;
            for (int v = 0; v < k; ++v) {
                double expo = known[static_cast<std::size_t>(v)];
                for (int i = 0; i < k; ++i) {
                    expo += w[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)][0] * x[static_cast<std::size_t>(i)][static_cast<std::size_t>(at)];
                }
                const double next = -std::expm1(-expo);
                change = std::max(change, std::abs(next - x[static_cast<std::size_t>(v)][static_cast<std::size_t>(at)]));
                x[static_cast<std::size_t>(v)][static_cast<std::size_t>(at)] = next;
            }
            if (change <= 1e-16) break;
            if (it == 199) throw NumericalError("implicit renewal step did not converge; reduce the step size");
        }
    }

    LimitCurves out;
    out.source = CurveSource::Renewal;
    out.p = sys.p;
    out.s.assign(static_cast<std::size_t>(k), {});
    out.i.assign(static_cast<std::size_t>(k), {});
    out.r.assign(static_cast<std::size_t>(k), {});
    for (long n = 0; n <= steps; ++n) out.t.push_back(opts.t0 + static_cast<double>(n) * h);
    for (int v = 0; v < k; ++v) {
        const auto& xv = x[static_cast<std::size_t>(v)];
        for (long n = 0; n <= steps; ++n) {
            const double xs = xv[static_cast<std::size_t>(hist + n)];
            const double r = recovered_at(xv, hist + n, fq_mid[static_cast<std::size_t>(v)], mq[static_cast<std::size_t>(v)]);
            out.s[static_cast<std::size_t>(v)].push_back(1.0 - xs);
            out.r[static_cast<std::size_t>(v)].push_back(r);
            out.i[static_cast<std::size_t>(v)].push_back(xs - r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Laplace fixed point

double PsiSolution::eval(int type, double s) const
{
    const auto& ps = psi.at(static_cast<std::size_t>(type));
    if (s <= 0.0) return 1.0;
    const double x = std::log(s);
    const double x0 = log_s.front();
    if (x <= x0) return 1.0 - (1.0 - ps.front()) * std::exp(x - x0);
    if (x >= log_s.back()) return ps.back();
    const double step = (log_s.back() - x0) / static_cast<double>(log_s.size() - 1);
    const double pos = (x - x0) / step;
    const auto j = std::min(static_cast<std::size_t>(pos), log_s.size() - 2);
    const double f = pos - static_cast<double>(j);
    return ps[j] + f * (ps[j + 1] - ps[j]);
}

namespace {

// Value at log-argument x of the curve family member rescaled by exp(d).
std::vector<double> rescale(const std::vector<double>& ps, double x0, double step, double d)
{
    std::vector<double> out(ps.size());
    for (std::size_t j = 0; j < ps.size(); ++j) {
        const double pos = static_cast<double>(j) + d / step;
        if (pos <= 0.0) {
            out[j] = 1.0 - (1.0 - ps.front()) * std::exp(pos * step);
        } else if (pos >= static_cast<double>(ps.size() - 1)) {
            out[j] = ps.back();
        } else {
            const auto a = static_cast<std::size_t>(pos);
            const double f = pos - static_cast<double>(a);
            out[j] = ps[a] + f * (ps[a + 1] - ps[a]);
        }
    }
    (void)x0;
    return out;
}

} // namespace

PsiSolution psi_fixed_point(const BackwardSystem& sys, double malthusian_hat, const PsiOptions& opts)
{
    const int k = sys.k();
    if (!(malthusian_hat > 0.0)) throw InvalidArgument("psi fixed point needs a positive Malthusian parameter");
    if (!(opts.s_min > 0.0) || !(opts.s_max > opts.s_min) || !(opts.log_step > 0.0)) {
        throw InvalidArgument("invalid psi grid");
    }
    if (opts.pin_type < 0 || opts.pin_type >= k) throw InvalidArgument("psi pin type out of range");
    const double x0 = std::log(opts.s_min);
    const double span = std::log(opts.s_max) - x0;
    const auto nodes = static_cast<std::size_t>(std::max(2L, std::lround(span / opts.log_step))) + 1;
    const double delta = span / static_cast<double>(nodes - 1);
    const double du = delta / malthusian_hat;

    PsiSolution sol;
    sol.malthusian_hat = malthusian_hat;
    for (std::size_t j = 0; j < nodes; ++j) sol.log_s.push_back(x0 + static_cast<double>(j) * delta);

    const auto ku = static_cast<std::size_t>(k);
    std::vector<std::vector<std::vector<double>>> w(ku, std::vector<std::vector<double>>(ku));
    std::vector<std::vector<std::vector<double>>> tail(ku, std::vector<std::vector<double>>(ku));
    for (std::size_t v = 0; v < ku; ++v) {
        for (std::size_t i = 0; i < ku; ++i) {
            const auto& kern = sys.kernel[v][i];
            const auto len = static_cast<std::size_t>(std::ceil(kern.horizon / du));
            auto& wi = w[v][i];
            wi.resize(len + 1);
            for (std::size_t m = 0; m <= len; ++m) {
                const double end = (m == 0 || m == len) ? 0.5 : 1.0;
                wi[m] = len == 0 ? 0.0 : du * end * kern.density(static_cast<double>(m) * du);
            }
            // tail[j] = sum_{m > j} w_m e^{-(m-j) delta}: the part of the quadrature below s_min.
            auto& ti = tail[v][i];
            ti.assign(len + 1, 0.0);
            for (std::size_t j = len; j-- > 0;) ti[j] = std::exp(-delta) * (wi[j + 1] + ti[j + 1]);
        }
    }

    // Start from a curve with the final-size plateau.
    Matrix r0hat(k, k);
    for (int v = 0; v < k; ++v) {
        for (int i = 0; i < k; ++i) r0hat(v, i) = sys.kernel[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)].laplace(0.0);
    }
    Matrix r0(k, k);
    for (int i = 0; i < k; ++i) {
        for (int v = 0; v < k; ++v) r0(i, v) = r0hat(v, i) * sys.p(v) / sys.p(i);
    }
    const FinalSize fs = final_size(r0, sys.p);
    sol.psi.assign(ku, std::vector<double>(nodes));
    for (std::size_t v = 0; v < ku; ++v) {
        const double plateau = fs.s_inf(static_cast<Eigen::Index>(v));
        for (std::size_t j = 0; j < nodes; ++j) {
            sol.psi[v][j] = plateau + (1.0 - plateau) * std::exp(-std::exp(sol.log_s[j]));
        }
    }

    const double pin_plateau = fs.s_inf(opts.pin_type);
    const double pin_value = opts.pin_value > pin_plateau ? opts.pin_value : 0.5 * (1.0 + pin_plateau);

    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        const auto prev = sol.psi;
        // Gauss-Seidel in increasing s: every node only looks at smaller arguments.
        for (std::size_t j = 0; j < nodes; ++j) {
            for (std::size_t v = 0; v < ku; ++v) {
                double expo = 0.0;
                for (std::size_t i = 0; i < ku; ++i) {
                    const auto& wi = w[v][i];
                    const auto& pi = sol.psi[i];
                    const std::size_t top = std::min(j, wi.size() - 1);
                    for (std::size_t m = 0; m <= top; ++m) expo += wi[m] * (1.0 - pi[j - m]);
                    if (j < tail[v][i].size()) expo += (1.0 - pi[0]) * tail[v][i][j];
                }
                sol.psi[v][j] = std::exp(-expo);
            }
        }
        // Pin the scale of the solution family.
        const auto& pp = sol.psi[static_cast<std::size_t>(opts.pin_type)];
        std::size_t cross = 0;
        while (cross < nodes && pp[cross] > pin_value) ++cross;
        if (cross == 0 || cross == nodes) throw NumericalError("psi pin level lies outside the s grid");
        const double f = (pp[cross - 1] - pin_value) / (pp[cross - 1] - pp[cross]);
        const double x_pin = sol.log_s[cross - 1] + f * delta;
        for (auto& ps : sol.psi) ps = rescale(ps, x0, delta, x_pin);

        double change = 0.0;
        for (std::size_t v = 0; v < ku; ++v) {
            for (std::size_t j = 0; j < nodes; ++j) change = std::max(change, std::abs(sol.psi[v][j] - prev[v][j]));
        }
        sol.sweeps = sweep;
        if (change < opts.tol) return sol;
    }
    throw NumericalError("psi fixed point did not converge in " + std::to_string(opts.max_sweeps) + " sweeps");
}

LimitCurves s_from_psi(const PsiSolution& psi, const BackwardSystem& sys, double m_star, double t0, double t1,
                       double h)
{
    if (!(h > 0.0) || !(t1 > t0)) throw InvalidArgument("psi curve grid needs h > 0 and t1 > t0");
    const int k = sys.k();
    const long steps = std::lround((t1 - t0) / h);
    LimitCurves out;
    out.source = CurveSource::Psi;
    out.p = sys.p;
    out.s.assign(static_cast<std::size_t>(k), {});
    out.i.assign(static_cast<std::size_t>(k), {});
    out.r.assign(static_cast<std::size_t>(k), {});
    for (long n = 0; n <= steps; ++n) out.t.push_back(t0 + static_cast<double>(n) * h);
    for (int v = 0; v < k; ++v) {
        const auto& cdf = sys.q_cdf[static_cast<std::size_t>(v)];
        const long mq = std::max(1L, static_cast<long>(std::ceil(q_horizon(cdf, 1e-12) / h)));
        std::vector<double> fq_mid;
        for (long m = 0; m < mq; ++m) fq_mid.push_back(cdf((static_cast<double>(m) + 0.5) * h));
        std::vector<double> x(static_cast<std::size_t>(mq + 1 + steps));
        for (long n = -mq - 1; n < steps; ++n) {
            const double t = t0 + static_cast<double>(n + 1) * h;
            const double arg = std::exp(std::min(psi.malthusian_hat * t, 700.0)) * m_star;
            x[static_cast<std::size_t>(n + mq + 1)] = 1.0 - psi.eval(v, arg);
        }
        for (long n = 0; n <= steps; ++n) {
            const long at = n + mq;
            const double xs = x[static_cast<std::size_t>(at)];
            const double r = recovered_at(x, at, fq_mid, mq);
            out.s[static_cast<std::size_t>(v)].push_back(1.0 - xs);
            out.r[static_cast<std::size_t>(v)].push_back(r);
            out.i[static_cast<std::size_t>(v)].push_back(xs - r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Final size and peaks

FinalSize final_size(const Matrix& r0, const Vector& p)
{
    const auto k = r0.rows();
    if (r0.cols() != k || p.size() != k) throw InvalidArgument("final_size: size mismatch");
    FinalSize out;
    if (!(spectral_radius(r0) > 1.0)) {
        out.s_inf = Vector::Ones(k);
        out.attack = Vector::Zero(k);
        out.subcritical = true;
        return out;
    }
    Matrix rhat(k, k);
    for (Eigen::Index v = 0; v < k; ++v) {
        for (Eigen::Index i = 0; i < k; ++i) rhat(v, i) = (p(i) / p(v)) * r0(i, v);
    }
    Vector s = Vector::Zero(k);
    for (int it = 0; it < 1000000; ++it) {
        const Vector next = (-(rhat * (Vector::Ones(k) - s))).array().exp().matrix();
        const double change = (next - s).cwiseAbs().maxCoeff();
        s = next;
        if (change <= 1e-15) {
            out.s_inf = s;
            out.attack = Vector::Ones(k) - s;
            return out;
        }
    }
    throw NumericalError("final size iteration did not converge");
}

FinalSize final_size(const Matrix& r0) { return final_size(r0, Vector::Ones(r0.rows())); }

double i_max_closed_form(double r0)
{
    if (!(r0 > 1.0)) throw InvalidArgument("i_max needs R0 > 1");
    return 1.0 - 1.0 / r0 + std::log(1.0 / r0) / r0;
}

PeakThresholds peak_thresholds(double lambda, double mu, double beta, double gamma)
{
    if (!(lambda > 0.0) || !(mu > 0.0) || !(beta > 0.0) || !(gamma > 0.0)) {
        throw InvalidArgument("peak thresholds need positive rates");
    }
    PeakThresholds out;
    out.s_hi = (mu + beta) * gamma / (lambda * beta);
    out.s_lo = mu * gamma / (lambda * beta);
    const double r0 = lambda * beta * (mu + gamma) / (mu * gamma * (beta + mu + gamma));
    const double alt = (mu + gamma) / (r0 * (mu + beta + gamma));
    if (std::abs(alt - out.s_lo) > 1e-12 * out.s_lo) throw NumericalError("peak threshold identity failed");
    return out;
}

// ---------------------------------------------------------------------------
// Comparison utilities

double interp_linear(const std::vector<double>& t, const std::vector<double>& v, double x)
{
    if (t.empty()) throw InvalidArgument("interp_linear on an empty series");
    if (x <= t.front()) return v.front();
    if (x >= t.back()) return v.back();
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const auto j = static_cast<std::size_t>(it - t.begin());
    const double f = (x - t[j - 1]) / (t[j] - t[j - 1]);
    return v[j - 1] + f * (v[j] - v[j - 1]);
}

double pin_time(const std::vector<double>& t, const std::vector<double>& v, double level)
{
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] >= level) {
            if (j == 0) return t[0];
            const double f = (level - v[j - 1]) / (v[j] - v[j - 1]);
            return t[j - 1] + f * (t[j] - t[j - 1]);
        }
    }
    throw NumericalError("pin level never reached");
}

LimitCurves pin_curves(LimitCurves c, double level)
{
    const double tp = pin_time(c.t, c.total_i(), level);
    for (auto& x : c.t) x -= tp;
    return c;
}

double sup_gap(const std::vector<double>& ta, const std::vector<double>& va, const std::vector<double>& tb,
               const std::vector<double>& vb, double lo, double hi, double shift)
{
    double gap = 0.0;
    std::size_t jb = 0;
    for (std::size_t j = 0; j < ta.size(); ++j) {
        if (ta[j] < lo || ta[j] > hi) continue;
        const double x = ta[j] + shift;
        double b;
        if (x <= tb.front()) {
            b = vb.front();
        } else if (x >= tb.back()) {
            b = vb.back();
        } else {
            while (jb + 1 < tb.size() && tb[jb + 1] <= x) ++jb;
            const double f = (x - tb[jb]) / (tb[jb + 1] - tb[jb]);
            b = vb[jb] + f * (vb[jb + 1] - vb[jb]);
        }
        gap = std::max(gap, std::abs(va[j] - b));
    }
    return gap;
}

ShiftGap optimal_shift_gap(const std::vector<double>& ta, const std::vector<double>& va,
                           const std::vector<double>& tb, const std::vector<double>& vb, double lo, double hi,
                           double max_shift)
{
    auto f = [&](double d) { return sup_gap(ta, va, tb, vb, lo, hi, d); };
    const int coarse = 40;
    const double step = 2.0 * max_shift / coarse;
    ShiftGap best{-max_shift, f(-max_shift)};
    for (int j = 1; j <= coarse; ++j) {
        const double d = -max_shift + step * j;
        const double g = f(d);
        if (g < best.gap) best = {d, g};
    }
    double a = std::max(-max_shift, best.shift - step);
    double b = std::min(max_shift, best.shift + step);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > 1e-8) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    if (fm < best.gap) best = {mid, fm};
    return best;
}

void write_curves_csv(std::ostream& os, const LimitCurves& c)
{
    os << "t";
    for (int v = 1; v <= c.k(); ++v) os << ",s_" << v << ",i_" << v << ",r_" << v;
    for (const auto& [u, v] : c.pairs) os << ",lc_" << u + 1 << '_' << v + 1 << ",ld_" << u + 1 << '_' << v + 1;
    os << '\n';
    char buf[64];
    auto put = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.12g", x);
        os << buf;
    };
    for (std::size_t g = 0; g < c.t.size(); ++g) {
        put(c.t[g]);
        for (std::size_t v = 0; v < c.s.size(); ++v) {
            os << ',';
            put(c.s[v][g]);
            os << ',';
            put(c.i[v][g]);
            os << ',';
            put(c.r[v][g]);
        }
        for (std::size_t q = 0; q < c.pairs.size(); ++q) {
            os << ',';
            put(c.lc[q][g]);
            os << ',';
            put(c.ld[q][g]);
        }
        os << '\n';
    }
}

} // namespace dynsir
