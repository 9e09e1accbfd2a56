#include "bfm/tasks/bmnist.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "bfm/sampler.hpp"

namespace bfm::tasks {

std::vector<double> pixel_marginals(const Tensor& images) {
  const std::size_t n = images.rows(), npix = images.cols();
  std::vector<double> p(npix, 0.0);
  const auto& d = images.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < npix; ++j)
      if (d[i * npix + j] > 0.0) p[j] += 1.0;
  for (double& v : p) v /= static_cast<double>(n);
  return p;
}

BmnistMetrics image_metrics(const Tensor& raw_samples, const Tensor& train_images,
                            const std::vector<double>& train_marginals) {
  BmnistMetrics m;
  const std::size_t n = raw_samples.rows(), npix = raw_samples.cols();
  const auto& raw = raw_samples.data();

  double abs_acc = 0.0;
  for (double v : raw) abs_acc += std::abs(v);
  m.binariness = abs_acc / static_cast<double>(raw.size());

  Tensor thresholded = hard_threshold_pm1(raw_samples);
  const std::vector<double> sample_marginals = pixel_marginals(thresholded);
  double dist = 0.0;
  for (std::size_t j = 0; j < npix; ++j)
    dist += std::abs(sample_marginals[j] - train_marginals[j]);
  m.marginal_l1 = dist / static_cast<double>(npix);

  const auto& th = thresholded.data();
  const auto& tr = train_images.data();
  const std::size_t train_n = train_images.rows();
  double nn_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = npix + 1;
    for (std::size_t k = 0; k < train_n; ++k) {
      std::size_t diff = 0;
      const double* a = th.data() + i * npix;
      const double* b = tr.data() + k * npix;
      for (std::size_t j = 0; j < npix; ++j) diff += (a[j] != b[j]);
      best = std::min(best, diff);
      if (best == 0) break;
    }
    nn_acc += static_cast<double>(best) / static_cast<double>(npix);
  }
  m.nn_hamming = nn_acc / static_cast<double>(n);
  return m;
}

namespace {

Tensor gather_rows(const Tensor& images, const std::vector<std::size_t>& rows) {
  const std::size_t npix = images.cols();
  std::vector<double> out(rows.size() * npix);
  const auto& d = images.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(d.data() + rows[i] * npix, npix, out.data() + i * npix);
  return Tensor({rows.size(), npix}, std::move(out));
}

std::vector<int> balanced_labels(std::size_t count) {
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % 10);
  return labels;
}

}  // namespace

BmnistResult run_bmnist(const BmnistConfig& cfg, const BinaryImageSet& set) {
  const std::size_t total = set.images.rows();
  const std::size_t used = std::min(cfg.subset, total);
  std::vector<std::size_t> train_rows(used);
  for (std::size_t i = 0; i < used; ++i) train_rows[i] = i;
  Tensor train_images = gather_rows(set.images, train_rows);
  std::vector<int> train_labels(set.labels.begin(), set.labels.begin() + static_cast<long>(used));
  const std::size_t npix = train_images.cols();

  BmnistResult result;
  result.train_marginals = pixel_marginals(train_images);

  MlpConfig mc;
  mc.in_dim = npix;
  mc.out_dim = npix;
  mc.hidden = cfg.hidden;
  mc.layers = cfg.layers;
  mc.embed_dim = cfg.embed_dim;
  mc.cond_classes = 10;

  const std::vector<int> sample_labels = balanced_labels(cfg.sample_count);
  SampleConfig sc;
  sc.steps = cfg.sample_steps;
  sc.hard_threshold = false;  // metrics threshold separately, raw binariness first

  // Baseline: the zero-weight model, whose flow contracts noise toward zero
  // and carries no information about the data.
  {
    Rng zrng(cfg.seed, 0xBA5E);
    FilmMlp zero_model(mc, zrng);
    for (auto& [name, t] : zero_model.params().items()) {
      Tensor z = Tensor::zeros(t.shape());
      z.set_requires_grad(true);
      t = std::move(z);
    }
    Rng srng(cfg.seed, 0x5A3);
    Tensor samples =
        euler_sample_generative(zero_model, ObjectiveConfig::make(ObjectiveConfig::Pred::x_pred,
                                                                  ObjectiveConfig::Loss::x_mse),
                                sc, Cond::of_labels(sample_labels), cfg.sample_count, srng);
    result.untrained_baseline = image_metrics(samples, train_images, result.train_marginals);
  }

  for (std::size_t cell_idx = 0; cell_idx < cfg.cells.size(); ++cell_idx) {
    const auto& [objective, sampler] = cfg.cells[cell_idx];
    Rng init_rng(cfg.seed, 0x11D + cell_idx);
    FilmMlp model(mc, init_rng);

    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.steps = cfg.steps;
    tc.batch = cfg.batch;
    tc.seed = cfg.seed;
    tc.sampler = sampler;
    tc.objective = objective;
    tc.validate_every = cfg.validate_every;
    if (cfg.out_dir) {
      const std::string cell_dir = *cfg.out_dir + "/" + objective.name() + "-" + sampler.name();
      std::filesystem::create_directories(cell_dir);
      tc.out_dir = cell_dir;
    }

    DataSource data = [&train_images, &train_labels, batch = cfg.batch, used](long, Rng& rng) {
      std::vector<std::size_t> rows(batch);
      std::vector<int> labels(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        rows[i] = rng.below(used);
        labels[i] = train_labels[rows[i]];
      }
      Batch b;
      b.x = gather_rows(train_images, rows);
      b.cond = Cond::of_labels(std::move(labels));
      return b;
    };

    ValConfig val;
    {
      const std::size_t vn = std::min(cfg.val_count, used);
      std::vector<std::size_t> rows(vn);
      for (std::size_t i = 0; i < vn; ++i) rows[i] = i;
      val.set.x = gather_rows(train_images, rows);
      val.set.cond =
          Cond::of_labels(std::vector<int>(train_labels.begin(), train_labels.begin() + vn));
      Rng vrng(cfg.seed, 0xFACE);
      val.set.e = randn(vrng, val.set.x.shape());
      val.t_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    }

    BmnistCellResult cell;
    cell.objective = objective;
    cell.sampler = sampler;
    cell.train = train(tc, model, data, &val);
    cell.sample_labels = sample_labels;

    if (!cell.train.divergence) {
      // sample from the best validation checkpoint when one exists
      const Params& use =
          cell.train.best_params ? *cell.train.best_params : model.params();
      FilmMlp eval_model(mc, use.clone());
      Rng srng(cfg.seed, 0x5A3);
      cell.samples = euler_sample_generative(eval_model, objective, sc,
                                             Cond::of_labels(sample_labels),
                                             cfg.sample_count, srng);
      cell.metrics = image_metrics(cell.samples, train_images, result.train_marginals);
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

}  // namespace bfm::tasks
