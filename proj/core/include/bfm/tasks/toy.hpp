#pragma once

#include <optional>
#include <vector>

#include "bfm/engine.hpp"

namespace bfm::tasks {

// The stability study: iid Gaussian or iid BPSK vectors, a gated MLP, every
// requested (objective, time sampler) cell, plus a denoising BER sweep per
// cell for binary data against the scalar MMSE reference.
struct ToyRecipe {
  enum class DataKind { gaussian_iid, bpsk_iid };

  DataKind data = DataKind::bpsk_iid;
  std::size_t dim = 16;
  std::size_t batch = 1000;
  long steps = 5000;
  double lr = 1e-4;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t embed_dim = 128;
  std::uint64_t seed = 1;

  std::vector<std::pair<ObjectiveConfig, TimeSampler>> cells;

  // denoising evaluation (binary data only)
  int euler_steps = 3;
  std::vector<double> t0_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t ber_min_bits = 100000;
  bool evaluate_ber = true;
};

struct BerPoint {
  double t0;
  double ber;
  std::size_t bits;
};

struct ToyCellResult {
  ObjectiveConfig objective;
  TimeSampler sampler;
  TrainResult train;
  std::vector<BerPoint> ber;  // empty for Gaussian data or diverged cells
};

struct ToyResult {
  std::vector<ToyCellResult> cells;
  std::vector<BerPoint> mmse_reference;  // thresholded scalar MMSE on the same draws
};

ToyResult run_toy(const ToyRecipe& recipe);

// data source matching the recipe (fresh batch every step)
DataSource toy_data_source(ToyRecipe::DataKind kind, std::size_t dim, std::size_t batch);

}  // namespace bfm::tasks
