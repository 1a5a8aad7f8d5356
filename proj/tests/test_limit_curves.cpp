#include "dynsir/branching.hpp"
#include "dynsir/limit_curves.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace dynsir;

namespace {

ModelSpec case6b() { return ModelSpec::single(3, 1, 1, 1, -1, 0, 0); }
ModelSpec hom2() { return ModelSpec::single(1, 1, 4, 1, 0, 0, -1); }

ModelSpec mixed_spec()
{
    ModelSpec s;
    s.k = 2;
    s.p = Vector(2);
    s.p << 0.4, 0.6;
    s.lambda = Matrix(2, 2);
    s.lambda << 3, 1, 1, 2;
    s.mu = Matrix::Ones(2, 2);
    s.beta = Matrix(2, 2);
    s.beta << 1, 2, 1.5, 1;
    s.gamma = Vector(2);
    s.gamma << 1, 1.5;
    s.kappa_lambda = Matrix(2, 2);
    s.kappa_lambda << -1, 0, 0, -1;
    s.kappa_mu = Matrix::Zero(2, 2);
    s.kappa_beta = Matrix(2, 2);
    s.kappa_beta << 0, -1, -1, 0;
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
    return d;
}

void check_invariants(const LimitCurves& c)
{
    for (int v = 0; v < c.k(); ++v) {
        const auto& s = c.s[static_cast<std::size_t>(v)];
        const auto& i = c.i[static_cast<std::size_t>(v)];
        const auto& r = c.r[static_cast<std::size_t>(v)];
        double cons = 0.0;
        bool mono = true, range = true;
        for (std::size_t g = 0; g < c.t.size(); ++g) {
            cons = std::max(cons, std::abs(s[g] + i[g] + r[g] - 1.0));
            if (g > 0 && (s[g] > s[g - 1] + 1e-15 || r[g] < r[g - 1] - 1e-15)) mono = false;
            for (double x : {s[g], i[g], r[g]}) range = range && x >= -1e-12 && x <= 1.0 + 1e-12;
        }
        CHECK(cons <= 1e-9);
        CHECK(mono);
        CHECK(range);
    }
    for (std::size_t q = 0; q < c.lc.size(); ++q) {
        CHECK(*std::min_element(c.lc[q].begin(), c.lc[q].end()) >= -1e-12);
        CHECK(*std::min_element(c.ld[q].begin(), c.ld[q].end()) >= -1e-12);
    }
}

} // namespace

TEST_CASE("weak ODE: disease-free state is fixed")
{
    OdeOptions o;
    o.t1 = 5;
    Vector y0 = Vector::Zero(3);
    y0(0) = 1.0;
    o.init = y0;
    const LimitCurves c = ode_weak(Matrix::Constant(1, 1, 2.0), Vector::Ones(1), Vector::Ones(1), o);
    CHECK(*std::min_element(c.s[0].begin(), c.s[0].end()) == 1.0);
}

TEST_CASE("weak ODE: peak and final size")
{
    const LimitCurves c = ode_weak(Matrix::Constant(1, 1, 2.0), Vector::Ones(1), Vector::Ones(1));
    check_invariants(c);
    const double imax = *std::max_element(c.i[0].begin(), c.i[0].end());
    CHECK(std::abs(imax - 0.153426409720027345) < 1e-4);
    CHECK(std::abs(c.s[0].back() - 0.203187869979979954) < 1e-3);
}

TEST_CASE("strong ODE: constraint and peak location")
{
    const LimitCurves c = ode_strong_single(3, 1, 1, 1);
    check_invariants(c);
    const auto res = strong_constraint_residual(c, 3, 1, 1);
    double worst = 0.0;
    for (double x : res) worst = std::max(worst, std::abs(x));
    CHECK(worst <= 1e-6);
    const auto it = std::max_element(c.i[0].begin(), c.i[0].end());
    const double s_peak = c.s[0][static_cast<std::size_t>(it - c.i[0].begin())];
    const PeakThresholds th = peak_thresholds(3, 1, 1, 1);
    CHECK(s_peak >= th.s_lo);
    CHECK(s_peak <= th.s_hi);
    CHECK(std::abs(c.s[0].back() - 0.203187869979979954) < 1e-3);
}

TEST_CASE("strong ODE: multi-type form reduces to the single-type form")
{
    const LimitCurves a = ode_strong_single(3, 1, 1, 1);
    const LimitCurves b = ode_strong_multi(Vector::Ones(1), Vector::Ones(1), Matrix::Constant(1, 1, 3.0),
                                           Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    CHECK(max_abs_diff(a.s[0], b.s[0]) <= 1e-12);
    CHECK(max_abs_diff(a.i[0], b.i[0]) <= 1e-12);
    CHECK(max_abs_diff(a.r[0], b.r[0]) <= 1e-12);
}

TEST_CASE("strong ODE: symmetric types stay identical")
{
    const Vector p = Vector::Constant(2, 0.5);
    const LimitCurves c = ode_strong_multi(p, Vector::Ones(2), Matrix::Constant(2, 2, 3.0), Matrix::Ones(2, 2),
                                           Matrix::Constant(2, 2, 0.5));
    check_invariants(c);
    CHECK(max_abs_diff(c.s[0], c.s[1]) <= 1e-12);
    CHECK(max_abs_diff(c.i[0], c.i[1]) <= 1e-12);
}

TEST_CASE("mixed ODE matches the pure forms at the extremes")
{
    const ModelSpec h = hom2();
    const OdeSystem sh = ode_system(h);
    const LimitCurves a = ode_mixed(sh, sh.homogeneous);
    const LimitCurves b = ode_weak(sh.r0, sh.gamma, sh.p);
    CHECK(max_abs_diff(a.i[0], b.i[0]) <= 1e-12);

    const ModelSpec s6 = case6b();
    const OdeSystem s = ode_system(s6);
    const LimitCurves c = ode_mixed(s, s.homogeneous);
    const LimitCurves d = ode_strong_multi(s.p, s.gamma, s.lambda, s.mu, s.beta);
    CHECK(max_abs_diff(c.i[0], d.i[0]) <= 1e-12);

    auto wrong = s.homogeneous;
    wrong[0][0] = true;
    CHECK_THROWS_AS(ode_mixed(s, wrong), InvalidArgument);
}

TEST_CASE("mixed ODE invariants on a two-type spec")
{
    const LimitCurves c = ode_for_spec(mixed_spec());
    CHECK(c.source == CurveSource::MixedOde);
    check_invariants(c);
    const auto tot = c.total_i();
    for (std::size_t g = 0; g < c.t.size(); g += 997) {
        CHECK(tot[g] == doctest::Approx(0.4 * c.i[0][g] + 0.6 * c.i[1][g]).epsilon(1e-14));
    }
}

TEST_CASE("renewal equation matches the ODEs")
{
    for (const ModelSpec& spec : {hom2(), case6b()}) {
        RenewalOptions ro;
        ro.t1 = 30;
        const LimitCurves ren = pin_curves(renewal_solve(backward_system(spec), ro), 0.01);
        OdeOptions oo;
        oo.t1 = 30;
        const LimitCurves ode = pin_curves(ode_for_spec(spec, oo), 0.01);
        for (auto pick : {&LimitCurves::s, &LimitCurves::i, &LimitCurves::r}) {
            const ShiftGap g = optimal_shift_gap(ren.t, (ren.*pick)[0], ode.t, (ode.*pick)[0], -5, 15);
            CHECK(g.gap < 1e-3);
        }
    }
}

TEST_CASE("renewal equation with a deterministic infectious period")
{
    const double beta = 2.0;
    BackwardSystem sys;
    sys.p = Vector::Ones(1);
    RenewalKernel k;
    k.density = [beta](double u) { return u <= 1.0 ? beta : 0.0; };
    k.laplace = [beta](double s) { return s == 0.0 ? beta : beta * (-std::expm1(-s)) / s; };
    k.horizon = 1.0;
    sys.kernel = {{k}};
    sys.q_cdf = {[](double t) { return t >= 1.0 ? 1.0 : 0.0; }};
    RenewalOptions o;
    o.t1 = 25;
    const LimitCurves c = renewal_solve(sys, o);
    const long lag = std::lround(1.0 / o.h);
    double worst = 0.0;
    for (std::size_t g = static_cast<std::size_t>(lag); g < c.t.size(); ++g) {
        worst = std::max(worst, std::abs(c.i[0][g] - (c.s[0][g - static_cast<std::size_t>(lag)] - c.s[0][g])));
    }
    CHECK(worst < 1e-3);
    CHECK(c.s[0].back() == doctest::Approx(final_size(Matrix::Constant(1, 1, beta)).s_inf(0)).epsilon(1e-3));
}

TEST_CASE("Laplace fixed point")
{
    const ModelSpec spec = hom2();
    const BackwardSystem sys = backward_system(spec);
    const BranchingSummary b = branching_summary(spec);
    const PsiSolution psi = psi_fixed_point(sys, b.malthusian_hat);
    CHECK(psi.eval(0, 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(psi.eval(0, 1.0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::abs(psi.psi[0].back() - 0.203187869979979954) < 1e-3);
    bool mono = true;
    for (std::size_t j = 1; j < psi.psi[0].size(); ++j) mono = mono && psi.psi[0][j] <= psi.psi[0][j - 1] + 1e-15;
    CHECK(mono);

    const LimitCurves pc = pin_curves(s_from_psi(psi, sys, b.m_star, -20, 30, 1e-2), 0.01);
    RenewalOptions ro;
    ro.t1 = 30;
    const LimitCurves rc = pin_curves(renewal_solve(sys, ro), 0.01);
    CHECK(optimal_shift_gap(pc.t, pc.s[0], rc.t, rc.s[0], -5, 15).gap < 1e-2);
}

TEST_CASE("final size")
{
    const FinalSize f = final_size(Matrix::Constant(1, 1, 2.0));
    CHECK(f.s_inf(0) == doctest::Approx(0.203187869979979954).epsilon(1e-12));
    CHECK(f.attack(0) == doctest::Approx(0.796812130020020046).epsilon(1e-12));
    CHECK_FALSE(f.subcritical);

    const FinalSize sub = final_size(Matrix::Constant(1, 1, 0.8));
    CHECK(sub.subcritical);
    CHECK(sub.s_inf(0) == 1.0);

    Matrix sym(2, 2);
    sym << 1.2, 0.8, 0.8, 1.2;
    const FinalSize two = final_size(sym, Vector::Constant(2, 0.5));
    CHECK(two.s_inf(0) == doctest::Approx(0.203187869979979954).epsilon(1e-12));
    CHECK(two.s_inf(1) == doctest::Approx(0.203187869979979954).epsilon(1e-12));
}

TEST_CASE("final size agrees with the ODE end state for unequal weights")
{
    const ModelSpec spec = mixed_spec();
    OdeOptions o;
    o.t1 = 60;
    const LimitCurves c = ode_for_spec(spec, o);
    const FinalSize f = final_size(limit_r0_matrix(spec), spec.p);
    CHECK(std::abs(c.s[0].back() - f.s_inf(0)) < 1e-5);
    CHECK(std::abs(c.s[1].back() - f.s_inf(1)) < 1e-5);
}

TEST_CASE("peak formulas")
{
    CHECK(i_max_closed_form(2.0) == doctest::Approx(0.153426409720027345).epsilon(1e-14));
    CHECK(i_max_closed_form(1e6) > 0.9999);
    CHECK_THROWS_AS(i_max_closed_form(1.0), InvalidArgument);
    const PeakThresholds th = peak_thresholds(3, 1, 1, 1);
    CHECK(th.s_hi == doctest::Approx(2.0 / 3.0));
    CHECK(th.s_lo == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("pinning and shift search")
{
    std::vector<double> t, a, b;
    for (int j = 0; j <= 2000; ++j) {
        const double x = -10.0 + 0.01 * j;
        t.push_back(x);
        a.push_back(1.0 / (1.0 + std::exp(-x)));
        b.push_back(1.0 / (1.0 + std::exp(-(x - 0.3))));
    }
    CHECK(pin_time(t, a, 0.5) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(pin_time(t, a, 2.0), NumericalError);
    CHECK(sup_gap(t, a, t, a, -5, 5) == 0.0);
    const ShiftGap g = optimal_shift_gap(t, a, t, b, -5, 5);
    CHECK(g.shift == doctest::Approx(0.3).epsilon(1e-4));
    CHECK(g.gap < 1e-4);
    CHECK(interp_linear(t, a, -100.0) == a.front());
}

TEST_CASE("curve CSV layout")
{
    OdeOptions o;
    o.t1 = 0.01;
    const LimitCurves c = ode_for_spec(case6b(), o);
    std::ostringstream os;
    write_curves_csv(os, c);
    const std::string text = os.str();
    CHECK(text.rfind("t,s_1,i_1,r_1,lc_1_1,ld_1_1\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 12);
}
