#include "bfm/tasks/mimo.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <limits>

#include "bfm/errors.hpp"
#include "bfm/sampler.hpp"

namespace bfm::tasks {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const MatRM> as_matrix(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<const Eigen::VectorXd> as_vector(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.size())};
}

Tensor sign_vector(const Eigen::VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = v[static_cast<Eigen::Index>(i)] >= 0.0 ? 1.0 : -1.0;
  return Tensor({n}, std::move(out));
}

}  // namespace

double snr_db_to_sigma2(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

std::vector<MimoInstance> gen_mimo(Rng& rng, int n, double snr_db, std::size_t count) {
  if (n < 1) throw ConfigError("gen_mimo needs n >= 1");
  if (count < 1) throw ConfigError("gen_mimo needs count >= 1");
  const std::size_t d = 2 * static_cast<std::size_t>(n);
  const double h_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double sigma2 = snr_db_to_sigma2(snr_db);
  const double noise_std = std::sqrt(sigma2);

  std::vector<MimoInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> h(d * d);
    for (double& v : h) v = h_std * rng.normal();
    std::vector<double> x(d);
    for (double& v : x) v = rng.pm1();
    MimoInstance inst;
    inst.h = Tensor({d, d}, std::move(h));
    inst.x = Tensor({d}, std::move(x));
    inst.sigma2 = sigma2;
    std::vector<double> y(d);
    Eigen::Map<Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(d));
    ym = as_matrix(inst.h) * as_vector(inst.x);
    for (double& v : y) v += noise_std * rng.normal();
    inst.y = Tensor({d}, std::move(y));
    out.push_back(std::move(inst));
  }
  return out;
}

Tensor detect_zf(const MimoInstance& inst, bool* ridge_fallback) {
  const auto h = as_matrix(inst.h);
  const auto y = as_vector(inst.y);
  if (ridge_fallback) *ridge_fallback = false;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
  if (lu.isInvertible()) return sign_vector(lu.solve(y));
  // singular channel: ridge-regularized pseudo-inverse
  if (ridge_fallback) *ridge_fallback = true;
  const Eigen::MatrixXd gram =
      h.transpose() * h + 1e-12 * Eigen::MatrixXd::Identity(h.rows(), h.cols());
  return sign_vector(gram.ldlt().solve(h.transpose() * y));
}

Tensor detect_lmmse(const MimoInstance& inst) {
  const auto h = as_matrix(inst.h);
  const auto y = as_vector(inst.y);
  const Eigen::MatrixXd gram =
      h.transpose() * h + inst.sigma2 * Eigen::MatrixXd::Identity(h.rows(), h.cols());
  return sign_vector(gram.ldlt().solve(h.transpose() * y));
}

Tensor detect_map(const MimoInstance& inst) {
  const std::size_t d = inst.x.size();
  if (d > 16) throw ConfigError("exhaustive MAP limited to 2N <= 16");
  const auto h = as_matrix(inst.h);
  const auto y = as_vector(inst.y);
  const std::uint64_t total = 1ULL << d;
  Eigen::VectorXd cand(static_cast<Eigen::Index>(d));
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t best_bits = 0;
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    for (std::size_t j = 0; j < d; ++j)
      cand[static_cast<Eigen::Index>(j)] = (bits >> j) & 1 ? 1.0 : -1.0;
    const double r = (y - h * cand).squaredNorm();
    if (r < best) {
      best = r;
      best_bits = bits;
    }
  }
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = (best_bits >> j) & 1 ? 1.0 : -1.0;
  return Tensor({d}, std::move(out));
}

Tensor mimo_condition(const std::vector<MimoInstance>& batch) {
  if (batch.empty()) throw ContractError("empty MIMO batch");
  const std::size_t d = batch.front().x.size();
  const std::size_t cond_dim = d + d * d + 1;
  std::vector<double> out(batch.size() * cond_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double* row = out.data() + i * cond_dim;
    const auto& y = batch[i].y.data();
    const auto& h = batch[i].h.data();
    std::copy(y.begin(), y.end(), row);
    std::copy(h.begin(), h.end(), row + d);
    row[d + d * d] = batch[i].sigma2;
  }
  return Tensor({batch.size(), cond_dim}, std::move(out));
}

namespace {

Tensor stack_bits(const std::vector<MimoInstance>& batch) {
  const std::size_t d = batch.front().x.size();
  std::vector<double> out(batch.size() * d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& x = batch[i].x.data();
    std::copy(x.begin(), x.end(), out.data() + i * d);
  }
  return Tensor({batch.size(), d}, std::move(out));
}

std::size_t count_bit_errors(const Tensor& decided, const Tensor& truth) {
  const auto& a = decided.data();
  const auto& b = truth.data();
  std::size_t errors = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] * b[i] <= 0.0) ++errors;
  return errors;
}

}  // namespace

MimoResult run_mimo(const MimoConfig& cfg) {
  MimoResult result;
  const std::size_t d = 2 * static_cast<std::size_t>(cfg.n);
  const std::size_t cond_dim = d + d * d + 1;
  const double snr_lo = cfg.snr_grid_db.front();
  const double snr_hi = cfg.snr_grid_db.back();

  MlpConfig mc;
  mc.in_dim = d;
  mc.out_dim = d;
  mc.hidden = cfg.hidden;
  mc.layers = cfg.layers;
  mc.embed_dim = cfg.embed_dim;
  mc.cond_vec_dim = cond_dim;

  // train each learned cell once across the SNR sweep
  std::vector<std::pair<ObjectiveConfig, FilmMlp>> models;
  for (std::size_t cell_idx = 0; cell_idx < cfg.cells.size(); ++cell_idx) {
    const ObjectiveConfig objective = cfg.cells[cell_idx];
    Rng init_rng(cfg.seed, 0x11D + cell_idx);
    FilmMlp model(mc, init_rng);

    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.steps = cfg.steps;
    tc.batch = cfg.batch;
    tc.seed = cfg.seed + cell_idx;
    tc.grad_clip = cfg.grad_clip;
    tc.sampler = TimeSampler::clipped_uniform(cfg.t_clip);
    tc.objective = objective;
    tc.validate_every = cfg.validate_every;
    if (cfg.out_dir) {
      const std::string cell_dir = *cfg.out_dir + "/" + objective.name();
      std::filesystem::create_directories(cell_dir);
      tc.out_dir = cell_dir;
    }

    DataSource data = [n = cfg.n, batch = cfg.batch, snr_lo, snr_hi](long, Rng& rng) {
      // instances drawn across the sweep so one detector serves every point
      std::vector<MimoInstance> insts;
      insts.reserve(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const double snr = snr_lo + (snr_hi - snr_lo) * rng.uniform();
        auto one = gen_mimo(rng, n, snr, 1);
        insts.push_back(std::move(one.front()));
      }
      Batch b;
      b.x = stack_bits(insts);
      b.cond = Cond::of_vec(mimo_condition(insts));
      return b;
    };

    ValConfig val;
    {
      Rng vrng(cfg.seed, 0xFACE);
      const double snr_mid = 0.5 * (snr_lo + snr_hi);
      auto insts = gen_mimo(vrng, cfg.n, snr_mid, 512);
      val.set.x = stack_bits(insts);
      val.set.cond = Cond::of_vec(mimo_condition(insts));
      val.set.e = randn(vrng, val.set.x.shape());
      val.t_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    }

    TrainResult tr = train(tc, model, data, &val);
    // evaluation uses the best checkpoint before any instability
    if (tr.best_params) {
      FilmMlp best(mc, tr.best_params->clone());
      models.emplace_back(objective, std::move(best));
    } else {
      models.emplace_back(objective, std::move(model));
    }
    result.training.emplace(objective.name(), std::move(tr));
  }

  // Monte Carlo sweep: classical detectors and learned cells share instances
  const std::size_t insts_per_point = (cfg.eval_bits + d - 1) / d;
  for (double snr_db : cfg.snr_grid_db) {
    Rng eval_rng(cfg.seed, 0xE0A1 + static_cast<std::uint64_t>(snr_db * 1000.0));
    auto insts = gen_mimo(eval_rng, cfg.n, snr_db, insts_per_point);
    const std::size_t bits = insts.size() * d;

    std::size_t zf_err = 0, lmmse_err = 0, map_err = 0;
    for (const auto& inst : insts) {
      zf_err += count_bit_errors(detect_zf(inst), inst.x);
      lmmse_err += count_bit_errors(detect_lmmse(inst), inst.x);
      if (cfg.with_map) map_err += count_bit_errors(detect_map(inst), inst.x);
    }
    const auto denom = static_cast<double>(bits);
    result.rows.push_back({snr_db, "zf", static_cast<double>(zf_err) / denom, bits});
    result.rows.push_back({snr_db, "lmmse", static_cast<double>(lmmse_err) / denom, bits});
    if (cfg.with_map)
      result.rows.push_back({snr_db, "map", static_cast<double>(map_err) / denom, bits});

    for (auto& [objective, model] : models) {
      SampleConfig sc;
      sc.steps = cfg.euler_steps;
      sc.hard_threshold = true;
      Tensor truth = stack_bits(insts);
      Cond cond = Cond::of_vec(mimo_condition(insts));
      Rng srng(cfg.seed, 0x5A3 + static_cast<std::uint64_t>(snr_db * 1000.0));
      Tensor decided =
          euler_sample_generative(model, objective, sc, cond, insts.size(), srng);
      result.rows.push_back({snr_db, objective.name(),
                             static_cast<double>(count_bit_errors(decided, truth)) /
                                 static_cast<double>(bits),
                             bits});
    }
  }
  return result;
}

}  // namespace bfm::tasks
