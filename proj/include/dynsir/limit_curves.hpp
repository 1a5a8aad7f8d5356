#ifndef DYNSIR_LIMIT_CURVES_HPP
#define DYNSIR_LIMIT_CURVES_HPP

#include "dynsir/common.hpp"
#include "dynsir/model_params.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dynsir {

enum class CurveSource { WeakOde, StrongOde, MixedOde, Renewal, Psi };
std::string to_string(CurveSource src);

/// Deterministic curves on a uniform time grid.
struct LimitCurves {
    CurveSource source = CurveSource::WeakOde;
    std::vector<double> t;
    Vector p; ///< type weights used for totals
    std::vector<std::vector<double>> s, i, r; ///< [type][grid point]
    std::vector<std::pair<int, int>> pairs;   ///< (u, v) pairs carrying edge variables
    std::vector<std::vector<double>> lc, ld;  ///< [pair][grid point]

    int k() const { return static_cast<int>(s.size()); }
    std::vector<double> total_s() const;
    std::vector<double> total_i() const;
    std::vector<double> total_r() const;
};

/// Parameters of the limit ODEs. `homogeneous(u, v)` selects between the
/// exponential force R0 gamma i and the edge variables l_c, l_d for pair (u, v).
struct OdeSystem {
    Vector p;
    Vector gamma;
    Matrix r0;
    Matrix lambda, mu, beta;
    std::vector<std::vector<bool>> homogeneous;
};

/// Builds the system and its homogeneity partition from the regime classification.
OdeSystem ode_system(const ModelSpec& spec);

struct OdeOptions {
    double t0 = 0.0;
    double t1 = 40.0;
    double h = 1e-3;
    /// Total initial infected mass along the dominant linearized direction.
    double epsilon = 1e-6;
    /// Full initial state (s, i, r per type, then l_c and l_d per pair); overrides epsilon.
    std::optional<Vector> init;
    /// Store every n-th step.
    int stride = 1;
};

LimitCurves ode_weak(const Matrix& r0, const Vector& gamma, const Vector& p, const OdeOptions& opts = {});
LimitCurves ode_strong_single(double lambda, double mu, double beta, double gamma, const OdeOptions& opts = {});
LimitCurves ode_strong_multi(const Vector& p, const Vector& gamma, const Matrix& lambda, const Matrix& mu,
                             const Matrix& beta, const OdeOptions& opts = {});
/// `partition` must equal sys.homogeneous.
LimitCurves ode_mixed(const OdeSystem& sys, const std::vector<std::vector<bool>>& partition,
                      const OdeOptions& opts = {});
/// Integrates the system matching the classification of spec.
LimitCurves ode_for_spec(const ModelSpec& spec, const OdeOptions& opts = {});

/// (lambda/mu) i - l_c - (1 + beta/mu) l_d along single-type strong-form curves.
std::vector<double> strong_constraint_residual(const LimitCurves& c, double lambda, double mu, double beta);

/// Intensity of the births of one type into another in the susceptibility process.
struct RenewalKernel {
    std::function<double(double)> density;
    std::function<double(double)> laplace;
    double horizon = 0.0; ///< tail mass beyond it is below the truncation tolerance
};

/// kernel[v][i] carries R0hat(v, i) G_{i,v}; q_cdf[v] is the law of the infectious period.
struct BackwardSystem {
    Vector p;
    std::vector<std::vector<RenewalKernel>> kernel;
    std::vector<std::function<double(double)>> q_cdf;

    int k() const { return static_cast<int>(kernel.size()); }
    Matrix laplace_matrix(double s) const;
};

BackwardSystem backward_system(const ModelSpec& spec, double tail_tol = 1e-10);

struct RenewalOptions {
    double t0 = 0.0;
    double t1 = 40.0;
    double h = 1e-3;
    double amplitude = 1e-6;
    double q_tail_tol = 1e-12;
};

/// Time marching of s_v(t) = exp(-sum_i int (1 - s_i(t-u)) kernel[v][i](u) du) with
/// trapezoid convolution and an exponential history before t0.
LimitCurves renewal_solve(const BackwardSystem& sys, const RenewalOptions& opts = {});

struct PsiOptions {
    double s_min = 1e-6;
    double s_max = 1e12;
    double log_step = 0.02;
    double tol = 1e-10;
    int max_sweeps = 10000;
    int pin_type = 0;
    double pin_value = 0.5;
};

struct PsiSolution {
    std::vector<double> log_s;
    std::vector<std::vector<double>> psi; ///< [type][node]
    double malthusian_hat = 0.0;
    int sweeps = 0;

    /// Linear interpolation in log s; linear in s below the grid, flat above it.
    double eval(int type, double s) const;
};

PsiSolution psi_fixed_point(const BackwardSystem& sys, double malthusian_hat, const PsiOptions& opts = {});

/// s_v(u) = psi_v(exp(Mhat u) m_star) on the grid, with i and r from the infectious-period law.
LimitCurves s_from_psi(const PsiSolution& psi, const BackwardSystem& sys, double m_star, double t0, double t1,
                       double h);

struct FinalSize {
    Vector s_inf;
    Vector attack;
    bool subcritical = false;
};

/// Solves -log s_j = sum_i (p_i / p_j) R0_{i,j} (1 - s_i) by monotone iteration from 0.
FinalSize final_size(const Matrix& r0, const Vector& p);
/// Equal type weights.
FinalSize final_size(const Matrix& r0);

double i_max_closed_form(double r0);

struct PeakThresholds {
    double s_hi = 0.0;
    double s_lo = 0.0;
};
PeakThresholds peak_thresholds(double lambda, double mu, double beta, double gamma);

/// Linear interpolation, clamped to the end values.
double interp_linear(const std::vector<double>& t, const std::vector<double>& v, double x);

/// First time the series reaches `level`, linearly interpolated.
double pin_time(const std::vector<double>& t, const std::vector<double>& v, double level);

/// Shifts time so that the total infected fraction first reaches `level` at 0.
LimitCurves pin_curves(LimitCurves c, double level);

/// sup over a's grid points in [lo, hi] of |a(t) - b(t + shift)|.
double sup_gap(const std::vector<double>& ta, const std::vector<double>& va, const std::vector<double>& tb,
               const std::vector<double>& vb, double lo, double hi, double shift = 0.0);

struct ShiftGap {
    double shift = 0.0;
    double gap = 0.0;
};

/// Minimizes sup_gap over shifts in [-max_shift, max_shift].
ShiftGap optimal_shift_gap(const std::vector<double>& ta, const std::vector<double>& va,
                           const std::vector<double>& tb, const std::vector<double>& vb, double lo, double hi,
                           double max_shift = 0.5);

void write_curves_csv(std::ostream& os, const LimitCurves& c);

} // namespace dynsir

#endif
