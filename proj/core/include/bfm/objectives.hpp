#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bfm/tensor.hpp"

namespace bfm {

// Prediction space x loss space pairing. The pairing is the experiment axis:
// (x_pred, v_mse) is the mismatched configuration carrying the (1-t)^-2
// weighting; everything else is aligned.
struct ObjectiveConfig {
  enum class Pred { x_pred, v_pred };
  enum class Loss { x_mse, v_mse, bce };

  Pred prediction = Pred::x_pred;
  Loss loss = Loss::x_mse;
  double epsilon_t = 1e-6;  // division guard used when deriving velocity at inference

  void validate() const;  // rejects (v_pred, bce); epsilon_t in (0, 1e-3]
  bool aligned() const;
  bool logits_output() const { return prediction == Pred::x_pred && loss == Loss::bce; }
  std::string name() const;  // e.g. "xpred-vmse"

  static ObjectiveConfig make(Pred p, Loss l, double epsilon_t = 1e-6);
};

// Per-step gradient second-moment records. grad_sq_norm is the sum of
// squared gradient entries across all parameters, always pre-clip.
struct GradTrace {
  struct Record {
    long step;
    double t;
    double loss;
    double grad_sq_norm;
  };
  std::vector<Record> records;

  void to_csv(std::ostream& os) const;  // header: step,t,loss,grad_sq_norm
  void save_csv(const std::string& path) const;
};

struct BinnedMoment {
  double t_mid;
  double mean_grad_sq;
  std::size_t count;
};

// (x_pred - z) / (1 - t + epsilon_t); guarded, never throws for t in [0,1]
Tensor derive_velocity(const Tensor& x_pred, const Tensor& z, double t, double epsilon_t);

// (1-t)^-2 * mean_batch ||x_pred - x||^2 ; the singular weighting is kept
// exact (no epsilon), t = 1 raises a domain error
Tensor loss_v_mse_mismatched(const Tensor& x_pred, const Tensor& x, const Tensor& z, double t);

// mean_batch ||x_pred - x||^2
Tensor loss_x_mse(const Tensor& x_pred, const Tensor& x);

// mean_batch ||v_pred - (x - e)||^2
Tensor loss_v_mse_aligned(const Tensor& v_pred, const Tensor& x, const Tensor& e);

// stabilized factorized-Bernoulli NLL on logits; x entries must be exactly +-1
Tensor loss_bce(const Tensor& logits, const Tensor& x);

// appends the summed squared gradient over the given parameter tensors
void record_grad(GradTrace& trace, long step, double t, double loss,
                 const std::vector<const Tensor*>& params);

double grad_sq_norm(const std::vector<const Tensor*>& params);

// equal-width t-bins over [0,1]; empty bins are reported with count 0
std::vector<BinnedMoment> binned_second_moment(const GradTrace& trace, std::size_t bins);

}  // namespace bfm
