#include "bfm/flow.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace bfm {

namespace {
double sigmoid_s(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}

FlowSample make_flow_sample(Tensor x, Tensor e, double t) {
  FlowSample s;
  s.z = interpolate(x, e, t);
  s.v_target = sub(x, e);
  s.x = std::move(x);
  s.e = std::move(e);
  s.t = t;
  return s;
}

TimeSampler TimeSampler::uniform(double t_max) {
  TimeSampler s;
  s.kind = Kind::uniform;
  s.t_max = t_max;
  s.validate();
  return s;
}

TimeSampler TimeSampler::logit_normal(double m, double s, double t_max) {
  TimeSampler ts;
  ts.kind = Kind::logit_normal;
  ts.m = m;
  ts.s = s;
  ts.t_max = t_max;
  ts.validate();
  return ts;
}

TimeSampler TimeSampler::clipped_uniform(double t_max) {
  TimeSampler s;
  s.kind = Kind::clipped;
  s.t_max = t_max;
  s.validate();
  return s;
}

void TimeSampler::validate() const {
  if (!(t_max > 0.0) || t_max > 1.0)
    throw ConfigError("time sampler t_max must lie in (0,1], got " + std::to_string(t_max));
  if (kind == Kind::logit_normal && !(s > 0.0))
    throw ConfigError("logit-normal sampler needs s > 0, got " + std::to_string(s));
}

std::string TimeSampler::name() const {
  switch (kind) {
    case Kind::uniform: return "uniform";
    case Kind::logit_normal: return "logitnormal";
    case Kind::clipped: return "clipped";
  }
  return "?";
}

Tensor interpolate(const Tensor& x, const Tensor& e, double t) {
  if (!same_shape(x.shape(), e.shape()))
    throw ShapeError("interpolate: x " + shape_str(x.shape()) + " vs e " + shape_str(e.shape()));
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError("interpolate needs t in [0,1], got " + std::to_string(t));
  const auto& xd = x.data();
  const auto& ed = e.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t * xd[i] + (1.0 - t) * ed[i];
  return Tensor(x.shape(), std::move(out));
}

double snr(double t) {
  if (!(t >= 0.0 && t < 1.0))
    throw DomainError("snr diverges at t = 1; got t = " + std::to_string(t));
  const double w = 1.0 - t;
  return (t * t) / (w * w);
}

double sample_t(const TimeSampler& sampler, Rng& rng) {
  sampler.validate();
  switch (sampler.kind) {
    case TimeSampler::Kind::uniform:
      return rng.uniform(0.0, sampler.t_max);
    case TimeSampler::Kind::logit_normal: {
      const double u = sampler.m + sampler.s * rng.normal();
      return std::min(sigmoid_s(u), sampler.t_max);
    }
    case TimeSampler::Kind::clipped:
      return std::min(rng.uniform(), sampler.t_max);
  }
  return 0.0;
}

double logit_normal_pdf(double t, double m, double s) {
  if (!(t > 0.0 && t < 1.0))
    throw DomainError("logit_normal_pdf needs t in (0,1), got " + std::to_string(t));
  if (!(s > 0.0)) throw DomainError("logit_normal_pdf needs s > 0");
  const double u = std::log(t / (1.0 - t));
  const double zz = (u - m) / s;
  return std::exp(-0.5 * zz * zz) / (s * std::sqrt(2.0 * std::numbers::pi) * t * (1.0 - t));
}

double scalar_binary_mmse(double z, double t) {
  if (!(t > 0.0 && t < 1.0))
    throw DomainError("scalar_binary_mmse needs t in (0,1), got " + std::to_string(t));
  const double w = 1.0 - t;
  return std::tanh(t * z / (w * w));
}

double gaussian_bayes_residual(const Tensor& sigma, double t) {
  if (sigma.rank() != 2 || sigma.rows() != sigma.cols())
    throw DomainError("covariance must be square, got " + shape_str(sigma.shape()));
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError("gaussian_bayes_residual needs t in [0,1], got " + std::to_string(t));
  const auto d = static_cast<Eigen::Index>(sigma.rows());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> S(
      sigma.data().data(), d, d);
  const double scale = S.cwiseAbs().maxCoeff();
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
    throw DomainError("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> spd_check{Eigen::MatrixXd(S)};
  if (spd_check.info() != Eigen::Success)
    throw DomainError("covariance must be positive definite");

  const double w = 1.0 - t;
  // The exact trace difference cancels catastrophically once (1-t)^2 drops
  // below f64 resolution relative to Tr(S); beyond that the expansion
  // D*(1-t)^2/t^2 is accurate to far better than the lost digits.
  if (w * w < 1e-12) return static_cast<double>(d) * w * w / (t * t);

  Eigen::MatrixXd M = (t * t) * S + (w * w) * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd X = M.ldlt().solve(Eigen::MatrixXd(S));  // M X = S
  const double r = (S - (t * t) * S * X).trace();
  return r;
}

Tensor denoising_init(const Tensor& x_prior, double t0, Rng& rng) {
  if (!(t0 >= 0.0 && t0 < 1.0))
    throw DomainError("denoising_init needs t0 in [0,1), got " + std::to_string(t0));
  Tensor e = randn(rng, x_prior.shape());
  return interpolate(x_prior, e, t0);
}

}  // namespace bfm
