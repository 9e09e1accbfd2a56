#include "bfm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "bfm/errors.hpp"
#include "bfm/flow.hpp"

namespace bfm {

void AnalysisConstants::validate() const {
  if (!(k_lipschitz > 0.0) || !(c_jacobian > 0.0) || !(eps_resid_sq > 0.0) || dim == 0)
    throw ConfigError("analysis constants must be strictly positive");
}

const char* case_name(ManifoldCase c) {
  return c == ManifoldCase::continuous ? "continuous" : "binary";
}

double bayes_residual(double t, ManifoldCase cse, const AnalysisConstants& k,
                      const Tensor* sigma) {
  k.validate();
  if (cse == ManifoldCase::binary) return k.eps_resid_sq;
  if (sigma) return gaussian_bayes_residual(*sigma, t);
  // isotropic closed form: D (1-t)^2 / (t^2 + (1-t)^2)
  const double w = 1.0 - t;
  return static_cast<double>(k.dim) * w * w / (t * t + w * w);
}

double variance_integrand(double t, ManifoldCase cse, const AnalysisConstants& k,
                          const Tensor* sigma) {
  if (!(t > 0.0 && t < 1.0))
    throw DomainError("variance_integrand needs t in (0,1), got " + std::to_string(t));
  const double w = 1.0 - t;
  return 4.0 * k.c_jacobian / (w * w * w * w) * bayes_residual(t, cse, k, sigma);
}

double truncated_variance_integral(double t_max, ManifoldCase cse, const AnalysisConstants& k,
                                   const Tensor* sigma) {
  if (!(t_max > 0.0 && t_max < 1.0))
    throw DomainError("truncated_variance_integral needs t_max in (0,1)");
  auto f = [&](double t) { return variance_integrand(t, cse, k, sigma); };
  // endpoints are excluded by the open Kronrod nodes, so t=0 is safe
  return integrate_adaptive(f, 0.0, t_max, 1e-10);
}

namespace {
double sigmoid_s(double u) { return 1.0 / (1.0 + std::exp(-u)); }
}

double weighted_variance_integral(double s, double m, ManifoldCase cse,
                                  const AnalysisConstants& k, const Tensor* sigma) {
  if (!(s > 0.0)) throw DomainError("weighted_variance_integral needs s > 0");
  const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
  auto f = [&](double u) {
    const double zz = (u - m) / s;
    const double density = norm * std::exp(-0.5 * zz * zz);
    if (density == 0.0) return 0.0;  // Gaussian tail underflow dominates everything
    const double t = sigmoid_s(u);
    if (!(t > 0.0 && t < 1.0)) return 0.0;
    return density * variance_integrand(t, cse, k, sigma);
  };
  return integrate_adaptive(f, -40.0, 40.0, 1e-9);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double logit_normal_tail_mass(double t_threshold, double m, double s) {
  if (!(t_threshold > 0.0 && t_threshold < 1.0))
    throw DomainError("tail mass threshold must lie in (0,1)");
  if (!(s > 0.0)) throw DomainError("tail mass needs s > 0");
  const double u = std::log(t_threshold / (1.0 - t_threshold));
  return 1.0 - normal_cdf((u - m) / s);
}

SamplingGapReport sampling_gap_report(double s, double m, double overflow_exponent) {
  if (!(s > 0.0)) throw DomainError("sampling_gap_report needs s > 0");
  SamplingGapReport r;
  r.u_peak = m + overflow_exponent * s * s;
  r.t_peak = sigmoid_s(r.u_peak);
  r.mass_above = logit_normal_tail_mass(r.t_peak, m, s);
  return r;
}

double effective_density_argmax(double s, double m, double order, double grid_step) {
  if (!(s > 0.0) || !(grid_step > 0.0)) throw DomainError("invalid argmax parameters");
  double best_u = -40.0;
  double best = -std::numeric_limits<double>::infinity();
  for (double u = -40.0; u <= 40.0; u += grid_step) {
    const double zz = (u - m) / s;
    const double log_f = -0.5 * zz * zz + order * u;
    if (log_f > best) {
      best = log_f;
      best_u = u;
    }
  }
  return best_u;
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ContractError("slope fit needs matched samples, at least two");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

CaseReport analyze_case(ManifoldCase cse, double s, double m, const AnalysisConstants& k) {
  CaseReport r;
  r.cse = cse;

  // integrand order: log-grid of 1-t over [1e-4, 1e-2]
  {
    std::vector<double> w, y;
    for (int i = 0; i <= 8; ++i) {
      const double wi = std::pow(10.0, -4.0 + 2.0 * static_cast<double>(i) / 8.0);
      w.push_back(wi);
      y.push_back(variance_integrand(1.0 - wi, cse, k));
    }
    r.slope_integrand = fit_loglog_slope(w, y);
  }

  // cumulative order: log-grid of 1-t_max over [1e-3, 1e-1]
  {
    std::vector<double> w, y;
    for (int i = 0; i <= 8; ++i) {
      const double wi = std::pow(10.0, -3.0 + 2.0 * static_cast<double>(i) / 8.0);
      w.push_back(wi);
      y.push_back(truncated_variance_integral(1.0 - wi, cse, k));
    }
    r.slope_integral = fit_loglog_slope(w, y);
  }

  const double order = cse == ManifoldCase::continuous ? 2.0 : 4.0;
  const SamplingGapReport gap = sampling_gap_report(s, m, order);
  r.u_peak = gap.u_peak;
  r.t_peak = gap.t_peak;
  r.mass_above = gap.mass_above;
  return r;
}

// ------------------------------------------------ adaptive Gauss-Kronrod

namespace {

// 15-point Kronrod extension of 7-point Gauss (positive abscissae)
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, integral, error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

Segment gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double result_k = 0.0, result_g = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double dx = h * kXgk[i];
    const double f1 = f(c - dx);
    const double f2 = (i == 7) ? f1 : f(c + dx);
    const double fsum = (i == 7) ? f1 : f1 + f2;
    result_k += kWgk[i] * fsum;
    if (i % 2 == 1) result_g += kWg[i / 2] * fsum;
  }
  Segment s;
  s.a = a;
  s.b = b;
  s.integral = result_k * h;
  // |K - G| is a conservative bound: the Kronrod value is far more accurate
  // than the embedded Gauss rule, so this over-subdivides rather than under.
  s.error = std::max(std::abs(result_k - result_g) * h, std::abs(s.integral) * 5e-16);
  return s;
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol, double abs_tol) {
  if (!(b > a)) {
    if (a == b) return 0.0;
    throw ContractError("integration needs b > a");
  }
  std::priority_queue<Segment> queue;
  Segment whole = gk15(f, a, b);
  double total = whole.integral;
  double total_err = whole.error;
  queue.push(whole);
  const int max_segments = 5000;
  int used = 1;
  while (used < max_segments) {
    const double tol = std::max(rel_tol * std::abs(total), abs_tol);
    if (total_err <= tol) break;
    Segment worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {  // interval exhausted by rounding
      queue.push(worst);
      break;
    }
    Segment left = gk15(f, worst.a, mid);
    Segment right = gk15(f, mid, worst.b);
    total += left.integral + right.integral - worst.integral;
    total_err += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
    ++used;
  }
  return total;
}

}  // namespace bfm
