#include "bfm/sampler.hpp"

#include <cmath>

#include "bfm/errors.hpp"

namespace bfm {

void SampleConfig::validate() const {
  if (steps < 1) throw ConfigError("sampler needs at least one step");
  if (!(t0 >= 0.0 && t0 < 1.0))
    throw ConfigError("sampler t0 must lie in [0,1), got " + std::to_string(t0));
  if (!(epsilon_t > 0.0)) throw ConfigError("sampler epsilon_t must be positive");
}

Tensor euler_sample(const FilmMlp& model, const ObjectiveConfig& objective,
                    const SampleConfig& cfg, const Cond& cond, Tensor z0) {
  Predictor net = [&model, &cond](const Tensor& z, double t) {
    return model.forward(z, t, cond);
  };
  return euler_sample(net, objective, cfg, std::move(z0));
}

Tensor euler_sample(const Predictor& net, const ObjectiveConfig& objective,
                    const SampleConfig& cfg, Tensor z0) {
  cfg.validate();
  objective.validate();
  const double dt = (1.0 - cfg.t0) / static_cast<double>(cfg.steps);
  Tensor z = std::move(z0);
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.t0 + dt * static_cast<double>(k);
    Tensor out = net(z, t);
    Tensor v;
    if (objective.prediction == ObjectiveConfig::Pred::v_pred) {
      v = std::move(out);
    } else {
      Tensor x_hat = objective.logits_output()
                         ? tanh(mul(out, Tensor::scalar(0.5)))  // posterior mean 2*sigma(a)-1
                         : std::move(out);
      v = derive_velocity(x_hat, z, t, cfg.epsilon_t);
    }
    z = add(z, mul(v, Tensor::scalar(dt)));
    for (double val : z.data())
      if (!std::isfinite(val))
        throw IntegrationDivergence("non-finite state during Euler integration", k);
  }
  return cfg.hard_threshold ? hard_threshold_pm1(z) : z;
}

Tensor euler_sample_generative(const FilmMlp& model, const ObjectiveConfig& objective,
                               const SampleConfig& cfg, const Cond& cond, std::size_t batch,
                               Rng& rng) {
  if (cfg.t0 != 0.0) throw ConfigError("generative sampling starts from pure noise at t0 = 0");
  Tensor z0 = randn(rng, {batch, model.config().in_dim});
  return euler_sample(model, objective, cfg, cond, std::move(z0));
}

Tensor hard_threshold_pm1(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] >= 0.0 ? 1.0 : -1.0;
  return Tensor(x.shape(), std::move(out));
}

double ber(const Tensor& x_hat, const Tensor& x_true) {
  if (!same_shape(x_hat.shape(), x_true.shape()))
    throw ShapeError("ber: " + shape_str(x_hat.shape()) + " vs " + shape_str(x_true.shape()));
  const auto& h = x_hat.data();
  const auto& x = x_true.data();
  std::size_t errors = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (x[i] != 1.0 && x[i] != -1.0)
      throw DomainError("ber reference bits must be exactly +-1");
    if (h[i] * x[i] <= 0.0) ++errors;  // sign(0) counts as an error
  }
  return static_cast<double>(errors) / static_cast<double>(h.size());
}

}  // namespace bfm
