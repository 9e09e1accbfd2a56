#include <benchmark/benchmark.h>

#include "bfm/analysis.hpp"
#include "bfm/engine.hpp"
#include "bfm/sampler.hpp"
#include "bfm/tasks/toy.hpp"

namespace {

bfm::FilmMlp make_model(std::size_t dim) {
  bfm::MlpConfig mc;
  mc.in_dim = dim;
  mc.out_dim = dim;
  bfm::Rng rng(1);
  return bfm::FilmMlp(mc, rng);
}

void BM_MatmulBatchHidden(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  bfm::Rng rng(1);
  bfm::Tensor x = bfm::randn(rng, {b, 256});
  bfm::Tensor w = bfm::randn(rng, {256, 256});
  for (auto _ : state) {
    bfm::Tensor y = bfm::matmul(x, w);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b) * 256 * 256);
}
BENCHMARK(BM_MatmulBatchHidden)->Arg(64)->Arg(256)->Arg(1000);

void BM_TrainStep(benchmark::State& state) {
  bfm::FilmMlp model = make_model(16);
  bfm::TrainConfig tc;
  tc.steps = 1;
  tc.batch = static_cast<std::size_t>(state.range(0));
  tc.objective = bfm::ObjectiveConfig::make(bfm::ObjectiveConfig::Pred::x_pred,
                                            bfm::ObjectiveConfig::Loss::x_mse);
  auto data = bfm::tasks::toy_data_source(bfm::tasks::ToyRecipe::DataKind::bpsk_iid, 16, tc.batch);
  for (auto _ : state) {
    bfm::TrainResult r = bfm::train(tc, model, data);
    benchmark::DoNotOptimize(r.history.data());
  }
}
BENCHMARK(BM_TrainStep)->Arg(256)->Arg(1000);

void BM_EulerSample(benchmark::State& state) {
  bfm::FilmMlp model = make_model(16);
  bfm::SampleConfig sc;
  sc.steps = static_cast<int>(state.range(0));
  const auto objective = bfm::ObjectiveConfig::make(bfm::ObjectiveConfig::Pred::x_pred,
                                                    bfm::ObjectiveConfig::Loss::x_mse);
  for (auto _ : state) {
    bfm::Rng rng(7);
    bfm::Tensor out =
        bfm::euler_sample_generative(model, objective, sc, bfm::Cond::none(), 256, rng);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_EulerSample)->Arg(3)->Arg(50);

void BM_TruncatedVarianceIntegral(benchmark::State& state) {
  bfm::AnalysisConstants constants;
  for (auto _ : state) {
    double v = bfm::truncated_variance_integral(0.999, bfm::ManifoldCase::binary, constants);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_TruncatedVarianceIntegral);

}  // namespace

BENCHMARK_MAIN();
