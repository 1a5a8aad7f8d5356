// One PASS/FAIL line per acceptance criterion. Arguments: path to the CLI
// binary and the directory holding the test configs.
#include "dynsir/branching.hpp"
#include "dynsir/config.hpp"
#include "dynsir/contact_process.hpp"
#include "dynsir/harness.hpp"
#include "dynsir/limit_curves.hpp"
#include "dynsir/rng.hpp"
#include "dynsir/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace dynsir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

ModelSpec case6b() { return ModelSpec::single(3, 1, 1, 1, -1, 0, 0); }
ModelSpec homogeneous_r0_2() { return ModelSpec::single(1, 1, 4, 1, 0, 0, -1); }

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

// Two-sample Kolmogorov-Smirnov statistic on sorted samples.
double ks_two_sample(const std::vector<double>& a, const std::vector<double>& b)
{
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

// Asymptotic critical value of the two-sample test at level 0.01.
double ks_critical_001(std::size_t n, std::size_t m)
{
    return 1.628 * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

Outcome ipp_identities()
{
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> logu(std::log(0.01), std::log(100.0));
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const double b = std::exp(logu(gen)), l = std::exp(logu(gen)), m = std::exp(logu(gen));
        const IppParams p = ipp_params(b, l, m);
        worst = std::max(worst, std::abs(p.r1 * p.r2 / (b * l) - 1.0));
        worst = std::max(worst, std::abs(p.denom() / (l + m) - 1.0));
    }
    return {worst < 1e-10, "max relative error " + fmt("%.3g", worst) + " (tol 1e-10)"};
}

Outcome excess_sampler()
{
    const double triples[5][3] = {{1, 1, 1}, {1, 3, 1}, {2, 0.5, 0.3}, {0.5, 2, 4}, {1, 0.003, 1}};
    double worst = 0.0;
    for (int c = 0; c < 5; ++c) {
        const IppParams p = ipp_params(triples[c][0], triples[c][1], triples[c][2]);
        Xoshiro256 rng(derive_seed(2024, {static_cast<std::uint64_t>(c)}));
        std::vector<double> x(100000);
        for (auto& v : x) v = sample_excess(p, rng);
        std::sort(x.begin(), x.end());
        double d = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double f = excess_cdf(x[j], p);
            d = std::max({d, std::abs(f - static_cast<double>(j) / x.size()),
                          std::abs(f - static_cast<double>(j + 1) / x.size())});
        }
        worst = std::max(worst, d);
    }
    return {worst < 0.02, "max KS statistic " + fmt("%.4f", worst) + " over 5 triples (tol 0.02)"};
}

Outcome r0_convergence()
{
    // One constrained exponent triple per case label, found by scanning a grid.
    const std::vector<double> ks{-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5};
    const std::vector<double> kbs{-1.5, -1.0, -0.5, 0.0};
    std::map<std::string, ModelSpec> rows;
    for (double kl : ks) {
        for (double km : ks) {
            for (double kb : kbs) {
                ModelSpec s = ModelSpec::single(3, 1, 1, 1, kl, km, kb);
                const PairRegime r = classify_regime(s).pairs[0];
                if (r.constraints_ok && r.limit_r0 && !rows.count(r.case_label)) rows.emplace(r.case_label, s);
            }
        }
    }
    const long n = 1000000;
    double worst = 0.0;
    std::string labels;
    for (const auto& [label, s] : rows) {
        const RealizedRates rr = realize_rates(s, n);
        const double fin = r0_n(rr.beta_n(0, 0), rr.lambda_n(0, 0), rr.mu_n(0, 0), s.gamma(0), static_cast<double>(n));
        const double lim = limit_r0_matrix(s)(0, 0);
        worst = std::max(worst, std::abs(fin / lim - 1.0));
        labels += (labels.empty() ? "" : ",") + label;
    }
    return {worst < 0.01 && rows.size() >= 10,
            "cases " + labels + ": max |r0_n/R0 - 1| = " + fmt("%.3g", worst) + " (tol 0.01)"};
}

Outcome model_equivalence()
{
    const ModelSpec s = case6b();
    std::vector<std::vector<double>> finals;
    for (auto tag : {ModelTag::M1, ModelTag::M2, ModelTag::M3}) {
        ConditioningOptions c;
        c.model = tag;
        std::vector<double> f;
        for (std::uint64_t r = 0; r < 2000; ++r) {
            f.push_back(condition_on_outbreak(s, 300, derive_seed(77, {static_cast<std::uint64_t>(tag), r}), c)
                            .final_fraction());
        }
        std::sort(f.begin(), f.end());
        finals.push_back(std::move(f));
    }
    const double crit = ks_critical_001(2000, 2000);
    const double d13 = ks_two_sample(finals[0], finals[2]);
    const double d23 = ks_two_sample(finals[1], finals[2]);
    return {d13 < crit && d23 < crit, "KS M1 vs M3 " + fmt("%.4f", d13) + ", M2 vs M3 " + fmt("%.4f", d23) +
                                          " (critical value " + fmt("%.4f", crit) + " at alpha 0.01)"};
}

Outcome malthusian_forms()
{
    const ModelSpec h = ModelSpec::single(1, 1, 9, 1.5, 0, 0, -1); // R0 = 3, gamma = 1.5
    const double mh = malthusian(limit_kernels(h));
    const double e1 = std::abs(mh - 1.5 * (3.0 - 1.0));
    const double e2 = std::abs(malthusian(limit_kernels(case6b())) - (-1.0 + std::sqrt(13.0)) / 2.0);
    const ModelSpec m = mixed_spec();
    const KernelMatrix k = limit_kernels(m);
    const double e3 = std::abs(malthusian(k) - malthusian_hat(k, m.p));
    return {e1 < 1e-10 && e2 < 1e-10 && e3 < 1e-8, "homogeneous " + fmt("%.2g", e1) + ", case 6b " + fmt("%.2g", e2) +
                                                       " (tol 1e-10), forward/backward " + fmt("%.2g", e3) +
                                                       " (tol 1e-8)"};
}

double conservation_error(const LimitCurves& c)
{
    double e = 0.0;
    for (int v = 0; v < c.k(); ++v) {
        for (std::size_t g = 0; g < c.t.size(); ++g) {
            const auto u = static_cast<std::size_t>(v);
            e = std::max(e, std::abs(c.s[u][g] + c.i[u][g] + c.r[u][g] - 1.0));
        }
    }
    return e;
}

double min_edge(const LimitCurves& c)
{
    double m = 0.0;
    for (std::size_t q = 0; q < c.lc.size(); ++q) {
        m = std::min({m, *std::min_element(c.lc[q].begin(), c.lc[q].end()),
                      *std::min_element(c.ld[q].begin(), c.ld[q].end())});
    }
    return m;
}

Outcome ode_invariants()
{
    const LimitCurves weak = ode_for_spec(homogeneous_r0_2());
    const LimitCurves strong = ode_strong_single(3, 1, 1, 1);
    const LimitCurves mixed = ode_for_spec(mixed_spec());
    const double cons = std::max({conservation_error(weak), conservation_error(strong), conservation_error(mixed)});

    double resid = 0.0;
    for (double x : strong_constraint_residual(strong, 3, 1, 1)) resid = std::max(resid, std::abs(x));
    const double edge = std::min(min_edge(strong), min_edge(mixed));

    const LimitCurves multi = ode_strong_multi(Vector::Ones(1), Vector::Ones(1), Matrix::Constant(1, 1, 3.0),
                                               Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    double red = 0.0;
    for (std::size_t g = 0; g < strong.t.size(); ++g) {
        red = std::max({red, std::abs(strong.s[0][g] - multi.s[0][g]), std::abs(strong.i[0][g] - multi.i[0][g])});
    }

    // Step halving at t = 10 from one fixed initial state.
    auto at10 = [](double h) {
        OdeOptions o;
        o.t1 = 10.0;
        o.h = h;
        o.epsilon = 1e-3;
        return ode_strong_single(3, 1, 1, 1, o).i[0].back();
    };
    const double a = at10(0.1), b = at10(0.05), c = at10(0.025);
    const double order = std::log2(std::abs(a - b) / std::abs(b - c));

    const bool ok = cons <= 1e-9 && resid <= 1e-6 && edge >= 0.0 && red <= 1e-12 && order > 3.7 && order < 4.3;
    return {ok, "conservation " + fmt("%.2g", cons) + " (tol 1e-9), constraint " + fmt("%.2g", resid) +
                    " (tol 1e-6), min edge " + fmt("%.2g", edge) + " (>= 0), reduction " + fmt("%.2g", red) +
                    " (tol 1e-12), observed order " + fmt("%.3f", order) + " (in [3.7, 4.3])"};
}

Outcome peaks()
{
    const LimitCurves weak = ode_weak(Matrix::Constant(1, 1, 2.0), Vector::Ones(1), Vector::Ones(1));
    const double imax = *std::max_element(weak.i[0].begin(), weak.i[0].end());
    const double expect = 1.0 - 0.5 + 0.5 * std::log(0.5);
    const LimitCurves strong = ode_strong_single(3, 1, 1, 1);
    const auto it = std::max_element(strong.i[0].begin(), strong.i[0].end());
    const double s_peak = strong.s[0][static_cast<std::size_t>(it - strong.i[0].begin())];
    const bool ok = std::abs(imax - expect) < 1e-4 && s_peak >= 1.0 / 3.0 && s_peak <= 2.0 / 3.0;
    return {ok, "weak i_max error " + fmt("%.2g", std::abs(imax - expect)) + " (tol 1e-4), strong peak at s = " +
                    fmt("%.4f", s_peak) + " (in [1/3, 2/3])"};
}

Outcome final_size_check(const ConvergenceReport& conv)
{
    const double attack = final_size(Matrix::Constant(1, 1, 2.0)).attack(0);
    const double e = std::abs(attack - 0.796812130020020046);
    const SizeResult* big = nullptr;
    for (const auto& s : conv.sizes) {
        if (s.n == 100000) big = &s;
    }
    if (!big) return {false, "no n = 100000 ensemble"};
    const double rel = std::abs(big->final_fraction_mean / attack - 1.0);
    return {e < 1e-6 && rel < 0.02 && big->runs >= 200,
            "fixed point error " + fmt("%.2g", e) + " (tol 1e-6); mean final fraction at n=1e5 " +
                fmt("%.4f", big->final_fraction_mean) + " over " + std::to_string(big->runs) + " runs, rel. diff " +
                fmt("%.4f", rel) + " (tol 0.02)"};
}

Outcome cross_method()
{
    double ren_gap = 0.0;
    for (const ModelSpec& spec : {homogeneous_r0_2(), case6b()}) {
        RenewalOptions ro;
        ro.t1 = 30.0;
        ro.h = 1e-3;
        const LimitCurves ren = pin_curves(renewal_solve(backward_system(spec), ro), 0.01);
        OdeOptions oo;
        oo.t1 = 30.0;
        const LimitCurves ode = pin_curves(ode_for_spec(spec, oo), 0.01);
        for (auto pick : {&LimitCurves::s, &LimitCurves::i, &LimitCurves::r}) {
            ren_gap = std::max(ren_gap, optimal_shift_gap(ren.t, (ren.*pick)[0], ode.t, (ode.*pick)[0], -5, 15).gap);
        }
    }
    double psi_gap = 0.0;
    for (const ModelSpec& spec : {homogeneous_r0_2(), case6b()}) {
        const BackwardSystem sys = backward_system(spec);
        const BranchingSummary b = branching_summary(spec);
        const PsiSolution psi = psi_fixed_point(sys, b.malthusian_hat);
        const LimitCurves pc = pin_curves(s_from_psi(psi, sys, b.m_star, -20, 30, 1e-2), 0.01);
        RenewalOptions ro;
        ro.t1 = 30.0;
        const LimitCurves rc = pin_curves(renewal_solve(sys, ro), 0.01);
        psi_gap = std::max(psi_gap, optimal_shift_gap(pc.t, pc.s[0], rc.t, rc.s[0], -5, 15).gap);
    }
    return {ren_gap < 1e-3 && psi_gap < 1e-2, "renewal vs ODE " + fmt("%.2g", ren_gap) + " (tol 1e-3), psi vs renewal " +
                                                  fmt("%.2g", psi_gap) + " (tol 1e-2)"};
}

Outcome convergence_check(const ConvergenceReport& rep)
{
    std::string d;
    double big_i = 1.0;
    for (const auto& s : rep.sizes) {
        d += "n=" + std::to_string(s.n) + ": s " + fmt("%.4f", s.sup_s[0]) + " i " + fmt("%.4f", s.sup_i[0]) + " r " +
             fmt("%.4f", s.sup_r[0]) + "; ";
        if (s.n == 100000) big_i = s.sup_i[0];
    }
    for (const auto& note : rep.notes) d += note + "; ";
    return {rep.monotone && big_i < 0.02,
            d + (rep.monotone ? "nonincreasing within 2 SE" : "not monotone") + ", i at n=1e5 tol 0.02"};
}

Outcome acceptance_fraction()
{
    const ModelSpec s = case6b();
    ConditioningOptions c;
    c.sim.stop_at_threshold = true;
    std::uint64_t attempts = 0;
    for (std::uint64_t r = 0; r < 2000; ++r) {
        attempts += 1 + condition_on_outbreak(s, 100000, derive_seed(31337, {r}), c).discarded_runs;
    }
    const double f = 2000.0 / static_cast<double>(attempts);
    const double se = std::sqrt(f * (1.0 - f) / static_cast<double>(attempts));
    const double target = 1.0 - extinction_probabilities(s)(0);
    const double z = std::abs(f - target) / se;
    return {z <= 3.0, "accepted " + fmt("%.4f", f) + " vs 1 - q = " + fmt("%.4f", target) + ", " + fmt("%.2f", z) +
                          " SE (tol 3)"};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism(const std::string& cli)
{
    const fs::path root = fs::temp_directory_path() / ("dynsir_det_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "config.json";
    std::ofstream(cfg) << R"({"model": {"k": 1, "p": [1], "lambda": [[3]], "mu": [[1]], "beta": [[1]], "gamma": [1],
 "kappa_lambda": [[-1]], "kappa_mu": [[0]], "kappa_beta": [[0]]},
 "experiment": {"n_list": [1000, 3000], "runs_per_n": 40, "master_seed": 5, "window": [-2, 8], "grid_step": 0.02}})";
    for (const char* run : {"a", "b"}) {
        const std::string cmd =
            "\"" + cli + "\" convergence --quiet --config \"" + cfg.string() + "\" --out \"" + (root / run).string() + "\"";
        if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed: " + cmd};
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(root / "a")) {
        const fs::path other = root / "b" / e.path().filename();
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
            return {false, e.path().filename().string() + " differs between runs"};
        }
        ++files;
    }
    fs::remove_all(root);
    return {files == 3, std::to_string(files) + " CSV files byte-identical"};
}

} // namespace

int main(int argc, char** argv)
{
    if (argc < 3) {
        std::fprintf(stderr, "usage: acceptance CLI_PATH DATA_DIR\n");
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path data = argv[2];

    int failed = 0;
    auto run = [&](int id, const char* name, double budget_s, const std::function<Outcome()>& f) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > budget_s) {
            o.pass = false;
            o.detail += "; over time budget";
        }
        if (!o.pass) ++failed;
        std::printf("%s %2d %s: %s [%.1f s, budget %.0f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                    secs, budget_s);
        std::fflush(stdout);
    };

    ConvergenceReport conv;
    std::string conv_error;
    const auto conv_start = std::chrono::steady_clock::now();
    try {
        ExperimentConfig x = load_config((data / "case6b.json").string()).experiment;
        conv = run_convergence(x);
    } catch (const std::exception& e) {
        conv_error = e.what();
    }
    const double conv_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - conv_start).count();

    run(1, "IPP identities", 1, ipp_identities);
    run(2, "excess-lifetime sampler", 5, excess_sampler);
    run(3, "finite-n R0 convergence", 1, r0_convergence);
    run(4, "model equivalence", 600, model_equivalence);
    run(5, "Malthusian parameters", 1, malthusian_forms);
    run(6, "ODE invariants", 10, ode_invariants);
    run(7, "peak formulas", 5, peaks);
    run(8, "final size", 600, [&]() -> Outcome {
        if (!conv_error.empty()) return {false, "ensemble failed: " + conv_error};
        return final_size_check(conv);
    });
    run(9, "cross-method limit curves", 30, cross_method);
    run(10, "convergence experiment", 1800, [&]() -> Outcome {
        if (!conv_error.empty()) return {false, "ensemble failed: " + conv_error};
        Outcome o = convergence_check(conv);
        o.detail += "; ensemble " + fmt("%.1f", conv_secs) + " s";
        if (conv_secs > 1800) o.pass = false;
        return o;
    });
    run(11, "conditioning acceptance fraction", 600, acceptance_fraction);
    run(12, "determinism", 600, [&] { return determinism(cli); });

    std::printf("%d of 12 criteria passed\n", 12 - failed);
    return failed == 0 ? 0 : 1;
}
