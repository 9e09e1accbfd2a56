#include "bfm/engine.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "bfm/errors.hpp"
#include "bfm/io.hpp"
#include "bfm/checkpoint.hpp"

namespace bfm {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in (0,1)");
  if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  sampler.validate();
  objective.validate();
}

void adam_init(AdamState& state, const Params& params) {
  state.slots.clear();
  state.step_count = 0;
  for (const auto& [name, t] : params.items()) {
    AdamState::Moments mom;
    mom.m.assign(t.size(), 0.0);
    mom.v.assign(t.size(), 0.0);
    state.slots.emplace(name, std::move(mom));
  }
}

void adam_step(Params& params, AdamState& state, const TrainConfig& cfg) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (auto& [name, t] : params.items()) {
    auto slot = state.slots.find(name);
    if (slot == state.slots.end()) throw ContractError("no Adam state for parameter " + name);
    const auto& g = t.grad();
    auto& m = slot->second.m;
    auto& v = slot->second.v;
    std::vector<double> next(t.size());
    const auto& cur = t.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw ContractError("non-finite gradient in '" + name + "' at step " +
                            std::to_string(state.step_count));
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      next[i] = cur[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
    }
    // values are immutable; swap in the updated tensor with a fresh buffer
    Tensor updated(t.shape(), std::move(next));
    updated.set_requires_grad(true);
    t = std::move(updated);
  }
}

double clip_global_norm(Params& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm needs max_norm > 0");
  const double norm = std::sqrt(params.grad_sq());
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, t] : params.items())
      for (double& g : t.grad_mut()) g *= scale;
  }
  return norm;
}

Tensor objective_loss(const Tensor& net_out, const ObjectiveConfig& objective, const Tensor& x,
                      const Tensor& e, const Tensor& z, double t) {
  objective.validate();
  if (objective.prediction == ObjectiveConfig::Pred::x_pred) {
    switch (objective.loss) {
      case ObjectiveConfig::Loss::x_mse: return loss_x_mse(net_out, x);
      case ObjectiveConfig::Loss::v_mse: return loss_v_mse_mismatched(net_out, x, z, t);
      case ObjectiveConfig::Loss::bce: return loss_bce(net_out, x);
    }
  } else {
    switch (objective.loss) {
      case ObjectiveConfig::Loss::v_mse: return loss_v_mse_aligned(net_out, x, e);
      case ObjectiveConfig::Loss::x_mse: {
        // signal recovered from the velocity prediction: x = z + (1-t) v
        Tensor x_from_v = add(z, mul(net_out, Tensor::scalar(1.0 - t)));
        return loss_x_mse(x_from_v, x);
      }
      case ObjectiveConfig::Loss::bce: break;  // rejected by validate()
    }
  }
  throw ConfigError("unsupported objective " + objective.name());
}

namespace {

double mean_val_loss(const std::vector<std::pair<double, double>>& table) {
  double acc = 0.0;
  for (const auto& [t, loss] : table) acc += loss;
  return table.empty() ? 0.0 : acc / static_cast<double>(table.size());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, FilmMlp& model, const DataSource& data,
                  const ValConfig* val) {
  cfg.validate();
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  AdamState adam;
  adam_init(adam, model.params());
  Rng rng(cfg.seed);
  const auto param_view = model.params().tensors();

  for (long step = 0; step < cfg.steps; ++step) {
    Batch batch = data(step, rng);
    const double t = sample_t(cfg.sampler, rng);
    Tensor e = randn(rng, batch.x.shape());
    FlowSample fs = make_flow_sample(batch.x, std::move(e), t);

    double loss_value = 0.0;
    double gsq = 0.0;
    {
      Tape tape;
      Tensor out = model.forward(fs.z, t, batch.cond);
      Tensor loss = objective_loss(out, cfg.objective, fs.x, fs.e, fs.z, t);
      loss_value = loss.item();
      model.params().zero_grads();
      tape.backward(loss);
      gsq = grad_sq_norm(param_view);
    }

    record_grad(result.trace, step, t, loss_value, param_view);
    result.history.push_back({step, loss_value, std::sqrt(gsq), t});
    result.completed_steps = step + 1;

    // Divergence is a measured outcome: keep the traces and stop.
    if (!std::isfinite(loss_value) || !(gsq <= kDivergenceGradSq)) {
      result.divergence = DivergenceEvent{step, loss_value, gsq};
      break;
    }

    if (cfg.grad_clip) clip_global_norm(model.params(), *cfg.grad_clip);
    adam_step(model.params(), adam, cfg);

    if (auto bad = model.params().first_non_finite())
      throw ContractError("non-finite parameter '" + *bad + "' after step " +
                          std::to_string(step));

    if (val && cfg.validate_every > 0 && ((step + 1) % cfg.validate_every == 0)) {
      const auto table = validate(model, cfg.objective, val->set, val->t_grid);
      const double mean_loss = mean_val_loss(table);
      if (mean_loss < result.best_val_loss) {
        result.best_val_loss = mean_loss;
        result.best_params = model.params().clone();
        if (cfg.out_dir)
          save_checkpoint(*cfg.out_dir + "/ckpt_best.bnfm", *result.best_params);
      }
    }
    if (cfg.out_dir && cfg.checkpoint_every > 0 && ((step + 1) % cfg.checkpoint_every == 0))
      save_checkpoint(*cfg.out_dir + "/ckpt_step" + std::to_string(step + 1) + ".bnfm",
                      model.params());
  }
  return result;
}

std::vector<std::pair<double, double>> validate(const FilmMlp& model,
                                                const ObjectiveConfig& objective,
                                                const ValSet& set,
                                                const std::vector<double>& t_grid) {
  std::vector<std::pair<double, double>> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    Tensor z = interpolate(set.x, set.e, t);
    Tensor pred = model.forward(z, t, set.cond);
    Tensor loss = objective_loss(pred, objective, set.x, set.e, z, t);
    out.emplace_back(t, loss.item());
  }
  return out;
}

void save_history_csv(const std::string& path, const std::vector<StepRecord>& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open " + path + " for writing");
  os << "step,loss,pre_clip_grad_norm,t\n";
  for (const auto& r : history)
    os << r.step << ',' << fmt_g17(r.loss) << ',' << fmt_g17(r.pre_clip_grad_norm) << ','
       << fmt_g17(r.t) << '\n';
}

}  // namespace bfm
