#include "bfm/tasks/toy.hpp"

#include <cmath>

#include "bfm/sampler.hpp"

namespace bfm::tasks {

DataSource toy_data_source(ToyRecipe::DataKind kind, std::size_t dim, std::size_t batch) {
  return [kind, dim, batch](long, Rng& rng) {
    Batch b;
    if (kind == ToyRecipe::DataKind::gaussian_iid) {
      b.x = randn(rng, {batch, dim});
    } else {
      std::vector<double> bits(batch * dim);
      for (double& v : bits) v = rng.pm1();
      b.x = Tensor({batch, dim}, std::move(bits));
    }
    b.cond = Cond::none();
    return b;
  };
}

namespace {

struct EvalDraws {
  Tensor x;   // [N, dim] +-1
  Tensor z0;  // t0 x + (1-t0) e
};

EvalDraws make_eval_draws(Rng& rng, std::size_t n, std::size_t dim, double t0) {
  std::vector<double> bits(n * dim);
  for (double& v : bits) v = rng.pm1();
  Tensor x({n, dim}, std::move(bits));
  Tensor z0 = denoising_init(x, t0, rng);
  return {std::move(x), std::move(z0)};
}

}  // namespace

ToyResult run_toy(const ToyRecipe& recipe) {
  ToyResult result;
  const bool binary = recipe.data == ToyRecipe::DataKind::bpsk_iid;
  const std::size_t eval_n =
      (recipe.ber_min_bits + recipe.dim - 1) / recipe.dim;  // ceil to full samples

  // The MMSE reference uses its own seeded draws, the same ones every model
  // cell is evaluated on, so curves are directly comparable.
  if (binary && recipe.evaluate_ber) {
    Rng ref_rng(recipe.seed, 0xE0A1);
    for (double t0 : recipe.t0_grid) {
      EvalDraws draws = make_eval_draws(ref_rng, eval_n, recipe.dim, t0);
      std::vector<double> est(draws.z0.size());
      const auto& z = draws.z0.data();
      for (std::size_t i = 0; i < est.size(); ++i) est[i] = scalar_binary_mmse(z[i], t0);
      const double b = ber(Tensor(draws.z0.shape(), std::move(est)), draws.x);
      result.mmse_reference.push_back({t0, b, draws.x.size()});
    }
  }

  for (std::size_t cell_idx = 0; cell_idx < recipe.cells.size(); ++cell_idx) {
    const auto& [objective, sampler] = recipe.cells[cell_idx];
    MlpConfig mc;
    mc.in_dim = recipe.dim;
    mc.out_dim = recipe.dim;
    mc.hidden = recipe.hidden;
    mc.layers = recipe.layers;
    mc.embed_dim = recipe.embed_dim;
    Rng init_rng(recipe.seed, 0x11D + cell_idx);
    FilmMlp model(mc, init_rng);

    TrainConfig tc;
    tc.lr = recipe.lr;
    tc.steps = recipe.steps;
    tc.batch = recipe.batch;
    tc.seed = recipe.seed;
    tc.sampler = sampler;
    tc.objective = objective;

    ToyCellResult cell;
    cell.objective = objective;
    cell.sampler = sampler;
    cell.train = train(tc, model, toy_data_source(recipe.data, recipe.dim, recipe.batch));

    if (binary && recipe.evaluate_ber && !cell.train.divergence) {
      SampleConfig sc;
      sc.steps = recipe.euler_steps;
      sc.hard_threshold = true;
      Rng eval_rng(recipe.seed, 0xE0A1);  // identical draws as the reference
      for (double t0 : recipe.t0_grid) {
        EvalDraws draws = make_eval_draws(eval_rng, eval_n, recipe.dim, t0);
        sc.t0 = t0;
        Tensor decided = euler_sample(model, objective, sc, Cond::none(), draws.z0);
        cell.ber.push_back({t0, ber(decided, draws.x), draws.x.size()});
      }
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

}  // namespace bfm::tasks
