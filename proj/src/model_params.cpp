#include "dynsir/model_params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dynsir {

namespace {

constexpr double exponent_tol = 1e-12;

bool is_zero(double x) { return std::abs(x) <= exponent_tol; }
bool equals(double a, double b) { return std::abs(a - b) <= exponent_tol; }

void require(bool ok, const std::string& what)
{
    if (!ok) throw InvalidArgument("invalid model spec: " + what);
}

template <class M>
bool all_finite(const M& m)
{
    return m.allFinite();
}

std::string fmt_pair(int i, int j)
{
    std::ostringstream os;
    os << "(" << i + 1 << "," << j + 1 << ")";
    return os.str();
}

// One inequality or equality check; label is what gets reported on failure.
struct Check {
    bool ok;
    const char* label;
};

void apply(bool& flag, std::string& diag, std::initializer_list<Check> checks)
{
    for (const auto& c : checks) {
        if (!c.ok) {
            flag = false;
            if (!diag.empty()) diag += "; ";
            diag += std::string("violates ") + c.label;
        }
    }
}

} // namespace

ModelSpec ModelSpec::single(double lambda, double mu, double beta, double gamma,
                            double kappa_lambda, double kappa_mu, double kappa_beta)
{
    ModelSpec s;
    s.k = 1;
    s.p = Vector::Ones(1);
    s.lambda = Matrix::Constant(1, 1, lambda);
    s.mu = Matrix::Constant(1, 1, mu);
    s.beta = Matrix::Constant(1, 1, beta);
    s.gamma = Vector::Constant(1, gamma);
    s.kappa_lambda = Matrix::Constant(1, 1, kappa_lambda);
    s.kappa_mu = Matrix::Constant(1, 1, kappa_mu);
    s.kappa_beta = Matrix::Constant(1, 1, kappa_beta);
    return s;
}

void ModelSpec::validate() const
{
    require(k >= 1, "k must be positive");
    const auto kk = static_cast<Eigen::Index>(k);
    require(p.size() == kk, "p must have length k");
    require(gamma.size() == kk, "gamma must have length k");
    for (const Matrix* m : {&lambda, &mu, &beta, &kappa_lambda, &kappa_mu, &kappa_beta}) {
        require(m->rows() == kk && m->cols() == kk, "rate and exponent matrices must be k x k");
        require(all_finite(*m), "matrix entries must be finite");
    }
    require(all_finite(p) && all_finite(gamma), "p and gamma must be finite");
    require((p.array() > 0.0).all(), "every p_i must be positive");
    require(std::abs(p.sum() - 1.0) <= 1e-12, "p must sum to 1");
    require((gamma.array() > 0.0).all(), "every gamma_i must be positive");
    require((lambda.array() >= 0.0).all(), "lambda must be nonnegative");
    require((beta.array() >= 0.0).all(), "beta must be nonnegative");
    require((mu.array() > 0.0).all(), "mu must be positive");
    require((kappa_beta.array() <= 0.0).all(), "kappa_beta must be nonpositive");
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            require(lambda(i, j) == lambda(j, i), "lambda must be symmetric");
            require(mu(i, j) == mu(j, i), "mu must be symmetric");
        }
    }
}

std::vector<long> split_population(const Vector& p, long n)
{
    const auto k = static_cast<std::size_t>(p.size());
    std::vector<long> counts(k);
    std::vector<double> remainder(k);
    long assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = p(static_cast<Eigen::Index>(i)) * static_cast<double>(n);
        counts[i] = static_cast<long>(std::floor(exact));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (long left = n - assigned, idx = 0; left > 0; --left, ++idx) {
        counts[order[static_cast<std::size_t>(idx) % k]] += 1;
    }
    return counts;
}

RealizedRates realize_rates(const ModelSpec& spec, long n)
{
    spec.validate();
    if (n < spec.k) {
        throw InvalidArgument("population size " + std::to_string(n) + " leaves some of the " +
                              std::to_string(spec.k) + " types empty");
    }
    RealizedRates out;
    out.n = n;
    out.n_per_type = split_population(spec.p, n);
    const int k = spec.k;
    out.lambda_n.resize(k, k);
    out.mu_n.resize(k, k);
    out.beta_n.resize(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double nj = static_cast<double>(out.n_per_type[static_cast<std::size_t>(j)]);
            out.lambda_n(i, j) = spec.lambda(i, j) * std::pow(nj, spec.kappa_lambda(i, j));
            out.mu_n(i, j) = spec.mu(i, j) * std::pow(nj, spec.kappa_mu(i, j));
            out.beta_n(i, j) = spec.beta(i, j) * std::pow(nj, spec.kappa_beta(i, j));
        }
    }
    return out;
}

namespace {

PairRegime classify_pair(const ModelSpec& spec, int i, int j)
{
    PairRegime r;
    r.i = i;
    r.j = j;
    const double kl = spec.kappa_lambda(i, j);
    const double km = spec.kappa_mu(i, j);
    const double kb = spec.kappa_beta(i, j);
    const double lam = spec.lambda(i, j);
    const double mu = spec.mu(i, j);
    const double beta = spec.beta(i, j);
    const double gamma = spec.gamma(i);
    // TV decay threshold: n^{-1/3} for one type, n^{-17/24} otherwise.
    const double th = spec.k == 1 ? 1.0 / 3.0 : 17.0 / 24.0;

    if (beta == 0.0 || lam == 0.0) {
        r.case_label = "zero";
        r.constraints_ok = true;
        r.tv_rate_ok = true;
        r.limit_r0 = 0.0;
        r.diagnostic = "no contact channel";
        return r;
    }

    bool eq = true;
    bool tv = true;
    std::string diag;
    double gamma_r0 = 0.0;

    const int sl = is_zero(kl) ? 0 : (kl > 0 ? 1 : -1);
    const int sm = is_zero(km) ? 0 : (km > 0 ? 1 : -1);

    if (sl > 0 && sm > 0) {
        if (kl < km && !equals(kl, km)) {
            r.case_label = "1a";
            apply(eq, diag, {{equals(1 + kl + kb - km, 0.0), "1+kappa_lambda+kappa_beta-kappa_mu=0"}});
            apply(tv, diag, {{kl - km < -th && !equals(kl - km, -th), "kappa_lambda-kappa_mu<-threshold"}});
            gamma_r0 = lam * beta / mu;
        } else if (equals(kl, km)) {
            r.case_label = "1b";
            apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
            gamma_r0 = lam * beta / (lam + mu);
        } else {
            r.case_label = "1c";
            apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
            apply(tv, diag, {{kl - th > km && !equals(kl - th, km), "kappa_lambda-threshold>kappa_mu"}});
            gamma_r0 = beta;
        }
    } else if (sl > 0 && sm < 0) {
        r.case_label = "2";
        apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
        apply(tv, diag, {{km - kl < -th && !equals(km - kl, -th), "kappa_mu-kappa_lambda<-threshold"}});
        gamma_r0 = beta;
    } else if (sl > 0 && sm == 0) {
        r.case_label = "3";
        apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
        gamma_r0 = beta;
    } else if (sl < 0 && sm > 0) {
        r.case_label = "4";
        apply(eq, diag, {{equals(1 + kl + kb - km, 0.0), "1+kappa_lambda+kappa_beta-kappa_mu=0"}});
        apply(tv, diag,
              {{kb - km < -th && !equals(kb - km, -th), "kappa_beta-kappa_mu<-threshold"},
               {kl - km < -th && !equals(kl - km, -th), "kappa_lambda-kappa_mu<-threshold"}});
        gamma_r0 = lam * beta / mu;
    } else if (sl < 0 && sm < 0) {
        if (equals(kl, km)) {
            r.case_label = "5a";
            apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
            apply(tv, diag, {{kl < -th && !equals(kl, -th), "kappa_lambda<-threshold"}});
            gamma_r0 = beta * lam / (lam + mu);
        } else if (kl > km) {
            r.case_label = "5b";
            apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
            apply(tv, diag,
                  {{kl < -th && !equals(kl, -th), "kappa_lambda<-threshold"},
                   {km - kl < -th && !equals(km - kl, -th), "kappa_mu-kappa_lambda<-threshold"}});
            gamma_r0 = beta;
        } else {
            r.case_label = "5c";
            apply(eq, diag, {{equals(1 + kb + kl - km, 0.0), "1+kappa_beta+kappa_lambda-kappa_mu=0"}});
            apply(tv, diag,
                  {{kl - km < -th && !equals(kl - km, -th), "kappa_lambda-kappa_mu<-threshold"},
                   {kl < -th && !equals(kl, -th), "kappa_lambda<-threshold"},
                   {kb < -th && !equals(kb, -th), "kappa_beta<-threshold"}});
            gamma_r0 = beta * lam / mu;
        }
    } else if (sl < 0 && sm == 0) {
        if (is_zero(kb)) {
            r.case_label = "6b";
            r.homogeneous = false;
            apply(eq, diag, {{equals(kl, -1.0), "kappa_lambda=-1"}});
            gamma_r0 = lam * beta * (mu + gamma) / (mu * (beta + mu + gamma));
        } else {
            r.case_label = "6a";
            apply(eq, diag, {{equals(kl + kb, -1.0), "kappa_lambda+kappa_beta=-1"}});
            apply(tv, diag,
                  {{kb < -th && !equals(kb, -th), "kappa_beta<-threshold"},
                   {kl < -th && !equals(kl, -th), "kappa_lambda<-threshold"}});
            gamma_r0 = lam * beta / mu;
        }
    } else if (sl == 0 && sm > 0) {
        r.case_label = "7";
        apply(eq, diag, {{equals(1 + kb, km), "1+kappa_beta=kappa_mu"}});
        apply(tv, diag, {{km > th && !equals(km, th), "kappa_mu>threshold"}});
        gamma_r0 = lam * beta / mu;
    } else if (sl == 0 && sm < 0) {
        r.case_label = "8";
        apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
        apply(tv, diag, {{km < -th && !equals(km, -th), "kappa_mu<-threshold"}});
        gamma_r0 = beta;
    } else {
        r.case_label = "9";
        apply(eq, diag, {{equals(kb, -1.0), "kappa_beta=-1"}});
        gamma_r0 = beta * lam / (lam + mu);
    }

    r.constraints_ok = eq;
    r.tv_rate_ok = tv;
    if (eq) {
        r.limit_r0 = gamma_r0 / gamma;
    } else {
        diag += "; limit R0 is degenerate (0 or infinity)";
    }
    r.diagnostic = "pair " + fmt_pair(i, j) + " case " + r.case_label + (diag.empty() ? "" : ": " + diag);
    return r;
}

} // namespace

RegimeReport classify_regime(const ModelSpec& spec)
{
    spec.validate();
    RegimeReport rep;
    rep.overall_ok = true;
    rep.tv_rate_ok = true;
    for (int i = 0; i < spec.k; ++i) {
        for (int j = 0; j < spec.k; ++j) {
            rep.pairs.push_back(classify_pair(spec, i, j));
            rep.overall_ok = rep.overall_ok && rep.pairs.back().constraints_ok;
            rep.tv_rate_ok = rep.tv_rate_ok && rep.pairs.back().tv_rate_ok;
        }
    }
    return rep;
}

Matrix limit_r0_matrix(const ModelSpec& spec, const RegimeReport& report)
{
    Matrix r0(spec.k, spec.k);
    for (int i = 0; i < spec.k; ++i) {
        for (int j = 0; j < spec.k; ++j) {
            const auto& pr = report.at(i, j, spec.k);
            if (!pr.constraints_ok || !pr.limit_r0) {
                throw InvalidArgument("no finite limiting R0: " + pr.diagnostic);
            }
            r0(i, j) = *pr.limit_r0;
        }
    }
    return r0;
}

Matrix limit_r0_matrix(const ModelSpec& spec) { return limit_r0_matrix(spec, classify_regime(spec)); }

std::vector<std::vector<bool>> homogeneity_mask(const RegimeReport& report, int k)
{
    std::vector<std::vector<bool>> mask(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k), true));
    for (const auto& pr : report.pairs) {
        mask[static_cast<std::size_t>(pr.i)][static_cast<std::size_t>(pr.j)] = pr.homogeneous;
    }
    return mask;
}

} // namespace dynsir
