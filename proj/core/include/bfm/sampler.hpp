#pragma once

#include <functional>

#include "bfm/net.hpp"
#include "bfm/objectives.hpp"
#include "bfm/rng.hpp"

namespace bfm {

// Euler integration of the learned flow on a uniform grid from t0 to 1 with
// `steps` intervals. The grid never evaluates at t = 1 itself, so epsilon_t
// is a safety net rather than load-bearing.
struct SampleConfig {
  int steps = 50;
  double t0 = 0.0;
  double epsilon_t = 1e-6;
  bool hard_threshold = false;

  void validate() const;
};

// network output as a function of state and time
using Predictor = std::function<Tensor(const Tensor& z, double t)>;

// Integrates z <- z + v dt from the given start state. For x-prediction
// models the velocity comes from derive_velocity; BCE-trained models emit
// logits, converted to the posterior-mean signal tanh(a/2) first. Throws
// IntegrationDivergence if the state goes non-finite mid-run.
Tensor euler_sample(const Predictor& net, const ObjectiveConfig& objective,
                    const SampleConfig& cfg, Tensor z0);
Tensor euler_sample(const FilmMlp& model, const ObjectiveConfig& objective,
                    const SampleConfig& cfg, const Cond& cond, Tensor z0);

// generative mode: z0 ~ N(0, I) at t0 = 0
Tensor euler_sample_generative(const FilmMlp& model, const ObjectiveConfig& objective,
                               const SampleConfig& cfg, const Cond& cond, std::size_t batch,
                               Rng& rng);

// sign decision with sign(0) mapped to +1
Tensor hard_threshold_pm1(const Tensor& x);

// fraction of coordinates where sign(x_hat) differs from x_true; a zero
// entry counts as an error. x_true entries must be exactly +-1.
double ber(const Tensor& x_hat, const Tensor& x_true);

}  // namespace bfm
