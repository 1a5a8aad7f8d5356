#include "dynsir/cli.hpp"

#include "dynsir/branching.hpp"
#include "dynsir/config.hpp"
#include "dynsir/harness.hpp"
#include "dynsir/limit_curves.hpp"
#include "dynsir/model_params.hpp"
#include "dynsir/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace dynsir {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> grid_step;
    bool quiet = false;
};

std::string fmt(const char* f, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

Config need_config(const Globals& g)
{
    if (g.config.empty()) throw InvalidArgument("--config is required");
    return load_config(g.config);
}

// Writes to --out/name, or to stdout when no output directory was given.
template <class F>
void emit(const Globals& g, const std::string& name, F&& write)
{
    if (g.out.empty()) {
        write(std::cout);
        return;
    }
    fs::create_directories(g.out);
    const fs::path path = fs::path(g.out) / name;
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    write(os);
    if (!g.quiet) std::cerr << "wrote " << path.string() << '\n';
}

fs::path out_dir(const Globals& g)
{
    const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
    fs::create_directories(dir);
    return dir;
}

ModelTag parse_tag(const std::string& s)
{
    if (s == "M1") return ModelTag::M1;
    if (s == "M2") return ModelTag::M2;
    if (s == "M3") return ModelTag::M3;
    throw InvalidArgument("unknown model '" + s + "'");
}

int cmd_classify(const Globals& g)
{
    const Config cfg = need_config(g);
    const RegimeReport rep = classify_regime(cfg.spec);
    const int k = cfg.spec.k;
    nlohmann::json j;
    j["overall_ok"] = rep.overall_ok;
    j["tv_rate_ok"] = rep.tv_rate_ok;
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : rep.pairs) {
        std::string line = k == 1 ? "" : "(" + std::to_string(p.i + 1) + "," + std::to_string(p.j + 1) + ") ";
        line += "case " + p.case_label + ", " + (p.homogeneous ? "homogeneous" : "non-homogeneous");
        line += p.limit_r0 ? ", R0=" + fmt("%.6f", *p.limit_r0) : ", R0 degenerate";
        std::cout << line << '\n';
        if (!p.constraints_ok || !p.tv_rate_ok) std::cout << "  " << p.diagnostic << '\n';
        nlohmann::json pj{{"i", p.i + 1}, {"j", p.j + 1}, {"case", p.case_label},
                          {"constraints_ok", p.constraints_ok}, {"tv_rate_ok", p.tv_rate_ok},
                          {"homogeneous", p.homogeneous}, {"diagnostic", p.diagnostic}};
        pj["limit_r0"] = p.limit_r0 ? nlohmann::json(*p.limit_r0) : nlohmann::json(nullptr);
        j["pairs"].push_back(pj);
    }
    if (!rep.overall_ok) std::cout << "regime constraints violated\n";
    if (!rep.tv_rate_ok) std::cout << "total-variation rate constraints violated\n";
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        std::ofstream(fs::path(g.out) / "classify.json") << j.dump(2) << '\n';
    } else if (!g.quiet) {
        std::cout << j.dump() << '\n';
    }
    return 0;
}

int cmd_simulate(const Globals& g, long n, const std::string& model, bool conditioned, double horizon, int type)
{
    const Config cfg = need_config(g);
    const std::uint64_t seed = g.seed.value_or(cfg.experiment.master_seed);
    SimOptions sim;
    sim.horizon = horizon;
    sim.initial_type = type - 1;
    Trajectory traj;
    if (conditioned) {
        ConditioningOptions c;
        c.model = parse_tag(model);
        c.threshold_exponent = cfg.experiment.threshold_exponent;
        c.max_restarts = cfg.experiment.max_restarts;
        c.sim = sim;
        traj = condition_on_outbreak(cfg.spec, n, seed, c);
    } else {
        traj = simulate(parse_tag(model), cfg.spec, n, seed, sim);
    }
    emit(g, "events.csv", [&](std::ostream& os) {
        write_events_csv_header(os);
        write_events_csv(os, traj, 0);
    });
    if (!g.quiet) {
        std::cerr << "final fraction " << fmt("%.6f", traj.final_fraction()) << ", events " << traj.events.size()
                  << ", discarded " << traj.discarded_runs << (traj.ties ? ", tied event times" : "") << '\n';
    }
    return 0;
}

int cmd_ode(const Globals& g, const std::string& system, double t1, double eps)
{
    const Config cfg = need_config(g);
    OdeOptions o;
    o.t1 = t1;
    o.h = g.grid_step.value_or(1e-3);
    o.epsilon = eps;
    LimitCurves c;
    if (system == "weak") {
        c = ode_weak(limit_r0_matrix(cfg.spec), cfg.spec.gamma, cfg.spec.p, o);
    } else if (system == "strong") {
        if (cfg.spec.k == 1) {
            c = ode_strong_single(cfg.spec.lambda(0, 0), cfg.spec.mu(0, 0), cfg.spec.beta(0, 0), cfg.spec.gamma(0), o);
        } else {
            c = ode_strong_multi(cfg.spec.p, cfg.spec.gamma, cfg.spec.lambda, cfg.spec.mu, cfg.spec.beta, o);
        }
    } else if (system == "mixed") {
        const OdeSystem sys = ode_system(cfg.spec);
        c = ode_mixed(sys, sys.homogeneous, o);
    } else {
        throw InvalidArgument("unknown system '" + system + "'; use weak, strong or mixed");
    }
    emit(g, "ode.csv", [&](std::ostream& os) { write_curves_csv(os, c); });
    return 0;
}

int cmd_renewal(const Globals& g, double t1)
{
    const Config cfg = need_config(g);
    RenewalOptions o;
    o.t1 = t1;
    o.h = g.grid_step.value_or(1e-3);
    const LimitCurves c = renewal_solve(backward_system(cfg.spec), o);
    emit(g, "renewal.csv", [&](std::ostream& os) { write_curves_csv(os, c); });
    return 0;
}

int cmd_psi(const Globals& g, double t0, double t1)
{
    const Config cfg = need_config(g);
    const BackwardSystem sys = backward_system(cfg.spec);
    const BranchingSummary b = branching_summary(cfg.spec);
    const PsiSolution psi = psi_fixed_point(sys, b.malthusian_hat);
    const LimitCurves c = s_from_psi(psi, sys, b.m_star, t0, t1, g.grid_step.value_or(1e-2));
    if (!g.quiet) std::cerr << "psi converged in " << psi.sweeps << " sweeps\n";
    emit(g, "psi.csv", [&](std::ostream& os) { write_curves_csv(os, c); });
    return 0;
}

int cmd_finalsize(const Globals& g)
{
    const Config cfg = need_config(g);
    const FinalSize f = final_size(limit_r0_matrix(cfg.spec), cfg.spec.p);
    if (f.subcritical) std::cerr << "warning: spectral radius of R0 is at most 1; no major outbreak\n";
    for (int v = 0; v < cfg.spec.k; ++v) {
        if (cfg.spec.k > 1) std::cout << "type " << v + 1 << ": ";
        std::cout << "s_inf=" << fmt("%.6f", f.s_inf(v)) << ", attack=" << fmt("%.6f", f.attack(v)) << '\n';
    }
    return 0;
}

int cmd_imax(const Globals& g)
{
    const Config cfg = need_config(g);
    if (cfg.spec.k != 1) throw InvalidArgument("imax needs a single-type model");
    const RegimeReport rep = classify_regime(cfg.spec);
    if (!rep.pairs[0].homogeneous) {
        const PeakThresholds th =
            peak_thresholds(cfg.spec.lambda(0, 0), cfg.spec.mu(0, 0), cfg.spec.beta(0, 0), cfg.spec.gamma(0));
        std::cout << "non-homogeneous kernel: peak s lies in [" << fmt("%.6f", th.s_lo) << ", "
                  << fmt("%.6f", th.s_hi) << "]\n";
        return 0;
    }
    std::cout << "i_max=" << fmt("%.6f", i_max_closed_form(limit_r0_matrix(cfg.spec, rep)(0, 0))) << '\n';
    return 0;
}

int cmd_compare(const Globals& g, long n, const std::string& model)
{
    const Config cfg = need_config(g);
    ExperimentConfig x = cfg.experiment;
    x.spec = cfg.spec;
    if (g.grid_step) x.grid_step = *g.grid_step;
    ConditioningOptions c;
    c.model = parse_tag(model);
    c.threshold_exponent = x.threshold_exponent;
    c.max_restarts = x.max_restarts;
    const Trajectory traj = condition_on_outbreak(cfg.spec, n, g.seed.value_or(x.master_seed), c);
    const double t0 = align_trajectory(traj, x.pin_level);

    const std::vector<double> u = comparison_grid(x.u_min, x.u_max, x.grid_step);
    std::vector<double> grid(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) grid[j] = t0 + u[j];
    const TypeCurves sim = curves_at(traj, grid);
    OdeOptions o;
    o.t1 = 40.0 + x.u_max;
    const LimitCurves lim = pin_curves(ode_for_spec(cfg.spec, o), x.pin_level);

    const fs::path dir = out_dir(g);
    {
        std::ofstream os(dir / "compare.csv");
        os << "u";
        for (int v = 1; v <= cfg.spec.k; ++v) {
            for (const char* comp : {"s", "i", "r"}) os << ',' << comp << '_' << v << "_sim," << comp << '_' << v << "_limit";
        }
        os << '\n';
        for (std::size_t j = 0; j < u.size(); ++j) {
            os << fmt("%.12g", u[j]);
            for (std::size_t v = 0; v < static_cast<std::size_t>(cfg.spec.k); ++v) {
                os << ',' << fmt("%.12g", sim.s[v][j]) << ',' << fmt("%.12g", interp_linear(lim.t, lim.s[v], u[j]));
                os << ',' << fmt("%.12g", sim.i[v][j]) << ',' << fmt("%.12g", interp_linear(lim.t, lim.i[v], u[j]));
                os << ',' << fmt("%.12g", sim.r[v][j]) << ',' << fmt("%.12g", interp_linear(lim.t, lim.r[v], u[j]));
            }
            os << '\n';
        }
    }
    {
        std::ofstream os(dir / "compare.gp");
        os << "set datafile separator ','\n"
              "set key autotitle columnhead\n"
              "set xlabel 'u'\n"
              "set ylabel 'fraction'\n"
              "plot";
        for (int v = 0; v < cfg.spec.k; ++v) {
            for (int comp = 0; comp < 3; ++comp) {
                const int col = 2 + 6 * v + 2 * comp;
                os << (v == 0 && comp == 0 ? " " : ", \\\n     ") << "'compare.csv' using 1:" << col
                   << " with steps, '' using 1:" << col + 1 << " with lines";
            }
        }
        os << '\n';
    }
    if (!g.quiet) {
        std::cerr << "aligned at t=" << fmt("%.6f", t0) << ", discarded " << traj.discarded_runs << "; wrote "
                  << (dir / "compare.csv").string() << " and " << (dir / "compare.gp").string() << '\n';
    }
    return 0;
}

int cmd_convergence(const Globals& g, int threads)
{
    const Config cfg = need_config(g);
    if (!cfg.has_experiment) throw InvalidArgument("config has no experiment block");
    ExperimentConfig x = cfg.experiment;
    if (g.seed) x.master_seed = *g.seed;
    if (g.grid_step) x.grid_step = *g.grid_step;
    if (threads >= 0) x.threads = threads;
    const auto start = std::chrono::steady_clock::now();
    const ConvergenceReport rep = run_convergence(x);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const fs::path dir = out_dir(g);
    {
        std::ofstream os(dir / "convergence_summary.csv");
        write_summary_csv(os, rep);
    }
    for (std::size_t j = 0; j < rep.sizes.size(); ++j) {
        std::ofstream os(dir / ("convergence_n" + std::to_string(rep.sizes[j].n) + ".csv"));
        write_size_csv(os, rep, j);
    }
    if (!g.quiet) {
        for (const auto& s : rep.sizes) {
            std::cout << "n=" << s.n << ": acceptance " << fmt("%.4f", s.acceptance) << ", sup|i - limit| "
                      << fmt("%.5f", s.sup_total_i) << " (se " << fmt("%.5f", s.sup_total_i_se) << "), final fraction "
                      << fmt("%.5f", s.final_fraction_mean) << ", " << fmt("%.2f", s.wall_seconds) << " s\n";
        }
        std::cout << (rep.monotone ? "distances nonincreasing within 2 SE" : "distances not monotone") << '\n';
        for (const auto& note : rep.notes) std::cout << "  " << note << '\n';
        std::cout << "wall time " << fmt("%.2f", wall) << " s\n";
    }
    return 0;
}

} // namespace

int cli_main(int argc, char** argv)
{
    CLI::App app{"Limit curves and simulations of SIR epidemics on dynamic random graphs", "dynsir"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--grid-step", g.grid_step, "time step or comparison grid step")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    auto* classify = app.add_subcommand("classify", "classify every type pair into its scaling regime");

    long n = 1000;
    std::string model = "M3";
    bool conditioned = false;
    double horizon = std::numeric_limits<double>::infinity();
    int type = 1;
    auto* sim = app.add_subcommand("simulate", "simulate one epidemic and write its events");
    sim->add_option("--n", n, "population size")->check(CLI::PositiveNumber);
    sim->add_option("--model", model, "M1, M2 or M3")->check(CLI::IsMember({"M1", "M2", "M3"}));
    sim->add_flag("--conditioned", conditioned, "restart until a major outbreak");
    sim->add_option("--horizon", horizon, "stop time");
    sim->add_option("--type", type, "type of the initial infective (1-based)")->check(CLI::PositiveNumber);

    std::string system = "mixed";
    double t0 = -10.0, t1 = 40.0, eps = 1e-6;
    auto* ode = app.add_subcommand("ode", "integrate the limit ODEs");
    ode->add_option("--system", system, "weak, strong or mixed")->check(CLI::IsMember({"weak", "strong", "mixed"}));
    ode->add_option("--t1", t1, "end time");
    ode->add_option("--epsilon", eps, "initial infected mass");

    auto* ren = app.add_subcommand("renewal", "solve the renewal equation for s");
    ren->add_option("--t1", t1, "end time");

    auto* psi = app.add_subcommand("psi", "limit curve from the Laplace fixed point");
    psi->add_option("--t0", t0, "start time");
    psi->add_option("--t1", t1, "end time");

    auto* fsz = app.add_subcommand("finalsize", "final-size equation");
    auto* imax = app.add_subcommand("imax", "peak prevalence");

    auto* cmp = app.add_subcommand("compare", "aligned simulation against the limit curve");
    cmp->add_option("--n", n, "population size")->check(CLI::PositiveNumber);
    cmp->add_option("--model", model, "M1, M2 or M3")->check(CLI::IsMember({"M1", "M2", "M3"}));

    int threads = -1;
    auto* conv = app.add_subcommand("convergence", "ensemble convergence report");
    conv->add_option("--threads", threads, "worker threads (0 = all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*classify) return cmd_classify(g);
        if (*sim) return cmd_simulate(g, n, model, conditioned, horizon, type);
        if (*ode) return cmd_ode(g, system, t1, eps);
        if (*ren) return cmd_renewal(g, t1);
        if (*psi) return cmd_psi(g, t0, t1);
        if (*fsz) return cmd_finalsize(g);
        if (*imax) return cmd_imax(g);
        if (*cmp) return cmd_compare(g, n, model);
        if (*conv) return cmd_convergence(g, threads);
    } catch (const ConditioningError& e) {
        std::cerr << "conditioning failed: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << app.help();
    return 1;
}

} // namespace dynsir
