#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bfm/flow.hpp"
#include "bfm/net.hpp"
#include "bfm/objectives.hpp"

namespace bfm {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  long steps = 5000;
  std::size_t batch = 1000;
  std::optional<double> grad_clip;  // global L2 norm; off by default
  std::uint64_t seed = 1;
  TimeSampler sampler;
  ObjectiveConfig objective;

  // persistence and validation, all optional
  std::optional<std::string> out_dir;  // checkpoints go here when set
  long checkpoint_every = 0;           // 0 = off
  long validate_every = 0;             // 0 = off

  void validate() const;
};

struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> slots;
  long step_count = 0;
};

// standard Adam with bias correction, sweeping parameters in name order
void adam_init(AdamState& state, const Params& params);
void adam_step(Params& params, AdamState& state, const TrainConfig& cfg);

// scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; returns the pre-clip norm either way
double clip_global_norm(Params& params, double max_norm);

struct StepRecord {
  long step;
  double loss;
  double pre_clip_grad_norm;
  double t;
};

struct DivergenceEvent {
  long step;
  double loss;
  double grad_sq_norm;
};

struct Batch {
  Tensor x;
  Cond cond;
};
using DataSource = std::function<Batch(long step, Rng& rng)>;

// Fixed evaluation set: x, e and the condition are frozen so validation is
// comparable across checkpoints; only t varies over the grid.
struct ValSet {
  Tensor x;
  Tensor e;
  Cond cond;
};
struct ValConfig {
  ValSet set;
  std::vector<double> t_grid;
};

struct TrainResult {
  GradTrace trace;
  std::vector<StepRecord> history;
  std::optional<DivergenceEvent> divergence;
  std::optional<Params> best_params;  // lowest mean validation loss, when validating
  double best_val_loss = 0.0;
  long completed_steps = 0;
};

// Per step: draw t, draw e, build the flow sample, forward, loss, backward,
// record the pre-clip gradient, clip, Adam. A non-finite loss or a gradient
// second moment above 1e30 is recorded as a divergence event and training
// halts gracefully with the partial traces.
TrainResult train(const TrainConfig& cfg, FilmMlp& model, const DataSource& data,
                  const ValConfig* val = nullptr);

// loss at each t on the fixed set, no gradient recording
std::vector<std::pair<double, double>> validate(const FilmMlp& model,
                                                const ObjectiveConfig& objective,
                                                const ValSet& set,
                                                const std::vector<double>& t_grid);

// loss for one already-computed prediction under the configured objective
Tensor objective_loss(const Tensor& net_out, const ObjectiveConfig& objective, const Tensor& x,
                      const Tensor& e, const Tensor& z, double t);

// header: step,loss,pre_clip_grad_norm,t
void save_history_csv(const std::string& path, const std::vector<StepRecord>& history);

constexpr double kDivergenceGradSq = 1e30;

}  // namespace bfm
