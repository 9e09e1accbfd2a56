#pragma once

#include "bfm/rng.hpp"
#include "bfm/tensor.hpp"

namespace bfm {

// One training tuple on the linear path z = t*x + (1-t)*e with velocity
// target x - e. Built by make_flow_sample so the identities hold exactly.
struct FlowSample {
  Tensor x;
  Tensor e;
  double t = 0.0;
  Tensor z;
  Tensor v_target;
};

FlowSample make_flow_sample(Tensor x, Tensor e, double t);

// Time distribution for training. Every draw lies in [0, t_max]:
//   uniform      U[0, t_max]
//   logit_normal sigmoid(N(m, s^2)) capped at t_max
//   clipped      U[0, 1] clipped to t_max (an atom at t_max)
struct TimeSampler {
  enum class Kind { uniform, logit_normal, clipped };
  Kind kind = Kind::uniform;
  double m = 0.0;
  double s = 1.0;
  double t_max = 1.0;

  static TimeSampler uniform(double t_max = 1.0);
  static TimeSampler logit_normal(double m, double s, double t_max = 1.0);
  static TimeSampler clipped_uniform(double t_max);
  void validate() const;
  std::string name() const;
};

// t*x + (1-t)*e on equal shapes, t in [0,1]
Tensor interpolate(const Tensor& x, const Tensor& e, double t);

// instantaneous signal-to-noise ratio t^2/(1-t)^2, t in [0,1)
double snr(double t);

double sample_t(const TimeSampler& sampler, Rng& rng);

// density of t = sigmoid(N(m,s^2)) at t in (0,1)
double logit_normal_pdf(double t, double m, double s);

// E[x | z_t = z] = tanh(t*z/(1-t)^2) for x uniform on {-1,+1}, e ~ N(0,1)
double scalar_binary_mmse(double z, double t);

// Bayes-optimal residual Tr(S - t^2 S (t^2 S + (1-t)^2 I)^{-1} S) for
// x ~ N(0, S); sigma must be symmetric positive definite, t in [0,1]
double gaussian_bayes_residual(const Tensor& sigma, double t);

// t0*x_prior + (1-t0)*e with a fresh noise draw, t0 in [0,1)
Tensor denoising_init(const Tensor& x_prior, double t0, Rng& rng);

}  // namespace bfm
