#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bfm/tensor.hpp"

namespace bfm {

// Constants entering the gradient-variance lower bound. The divergence
// orders are constant-independent, so the defaults of 1 are what every
// slope assertion uses.
struct AnalysisConstants {
  double k_lipschitz = 1.0;
  double c_jacobian = 1.0;
  double eps_resid_sq = 1.0;  // binary residual floor
  std::size_t dim = 16;

  void validate() const;
};

enum class ManifoldCase { continuous, binary };

const char* case_name(ManifoldCase c);

// Bayes-optimal residual R(t): the covariance trace formula for the
// continuous case (isotropic I_dim when sigma is null), the constant floor
// eps_resid_sq for the binary case.
double bayes_residual(double t, ManifoldCase cse, const AnalysisConstants& k,
                      const Tensor* sigma = nullptr);

// 4c/(1-t)^4 * R(t), t in (0,1)
double variance_integrand(double t, ManifoldCase cse, const AnalysisConstants& k,
                          const Tensor* sigma = nullptr);

// integral of the integrand over [0, t_max] by adaptive quadrature
double truncated_variance_integral(double t_max, ManifoldCase cse, const AnalysisConstants& k,
                                   const Tensor* sigma = nullptr);

// integral of pi_LN(t; m, s) * integrand(t) over (0,1), computed in logit
// space where the substitution dt = t(1-t) du reduces the density to a plain
// Gaussian in u; quadrature runs over u in [-40, 40]
double weighted_variance_integral(double s, double m, ManifoldCase cse,
                                  const AnalysisConstants& k, const Tensor* sigma = nullptr);

// Peak of the effective logit-space density exp(-(u-m)^2/(2s^2) + n*u),
// where n is the polynomial order of the singularity (2 continuous, 4
// binary): u_peak = m + n*s^2. mass_above is the logit-normal mass on
// t in [t_peak, 1).
struct SamplingGapReport {
  double u_peak;
  double t_peak;
  double mass_above;
};
SamplingGapReport sampling_gap_report(double s, double m, double overflow_exponent);

// P(t > threshold) under the logit-normal law
double logit_normal_tail_mass(double t_threshold, double m, double s);

double normal_cdf(double z);

// least-squares slope of log(y) against log(x)
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// grid argmax of the effective logit-space density over u in [-40, 40]
double effective_density_argmax(double s, double m, double order, double grid_step = 0.005);

struct CaseReport {
  ManifoldCase cse;
  double slope_integrand;  // fit over t in [0.99, 0.9999]
  double slope_integral;   // fit over t_max in [0.9, 0.999]
  double u_peak;
  double t_peak;
  double mass_above;
};
CaseReport analyze_case(ManifoldCase cse, double s, double m, const AnalysisConstants& k);

// Globally adaptive Gauss-Kronrod 7/15 integration. Subdivides the interval
// with the largest error estimate until the total satisfies the tolerances.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol = 1e-10, double abs_tol = 0.0);

}  // namespace bfm
