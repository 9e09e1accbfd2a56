#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bfm/engine.hpp"

namespace bfm::tasks {

// Real-valued 2Nx2N system y = Hx + n with x uniform on {-1,+1}^{2N},
// H entries iid N(0, 1/(2N)) (unit received energy per component) and
// n ~ N(0, sigma^2 I), so SNR(dB) = -10 log10(sigma^2).
struct MimoInstance {
  Tensor h;       // [2N, 2N]
  Tensor x;       // [2N] in {-1,+1}
  Tensor y;       // [2N]
  double sigma2;  // noise variance per component
};

std::vector<MimoInstance> gen_mimo(Rng& rng, int n, double snr_db, std::size_t count);

double snr_db_to_sigma2(double snr_db);

// classical detectors; bits returned as a +-1 tensor of length 2N
Tensor detect_zf(const MimoInstance& inst, bool* ridge_fallback = nullptr);
Tensor detect_lmmse(const MimoInstance& inst);
// exhaustive MAP over {-1,+1}^{2N}; requires 2N <= 16
Tensor detect_map(const MimoInstance& inst);

struct MimoConfig {
  int n = 2;
  std::vector<double> snr_grid_db = {0, 2, 4, 6, 8, 10, 12};
  std::size_t eval_bits = 100000;  // minimum Monte Carlo bits per point
  bool with_map = true;            // requires 2n <= 16

  std::vector<ObjectiveConfig> cells;  // learned detector cells
  long steps = 4000;
  std::size_t batch = 512;
  double lr = 1e-3;
  std::optional<double> grad_clip = 0.99;
  double t_clip = 0.99;  // training-time t clipping
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t embed_dim = 128;
  long validate_every = 250;
  int euler_steps = 2;
  std::uint64_t seed = 1;
  std::optional<std::string> out_dir;  // best-validation checkpoints land here
};

struct MimoRow {
  double snr_db;
  std::string detector;
  double ber;
  std::size_t bits;
};

struct MimoResult {
  std::vector<MimoRow> rows;
  std::map<std::string, TrainResult> training;  // keyed by objective name
};

MimoResult run_mimo(const MimoConfig& cfg);

// condition vector for the learned detector: [y, vec(H), sigma2]
Tensor mimo_condition(const std::vector<MimoInstance>& batch);

}  // namespace bfm::tasks
