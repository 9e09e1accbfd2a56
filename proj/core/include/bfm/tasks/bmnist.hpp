#pragma once

#include <optional>
#include <vector>

#include "bfm/engine.hpp"
#include "bfm/idx.hpp"

namespace bfm::tasks {

// Class-conditional generation on binarized images with property-based
// quality metrics (no learned-classifier FID at this scale):
//   binariness    mean |x| of raw samples after the final Euler step
//   marginal_l1   mean per-pixel |sample marginal - training marginal|
//   nn_hamming    mean nearest-training-neighbour Hamming distance
struct BmnistMetrics {
  double binariness = 0.0;
  double marginal_l1 = 0.0;
  double nn_hamming = 0.0;
};

struct BmnistConfig {
  std::size_t subset = 5000;  // training images used
  std::size_t batch = 256;
  long steps = 20000;
  double lr = 1e-4;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t embed_dim = 128;
  std::uint64_t seed = 1;
  long validate_every = 250;
  std::size_t val_count = 256;
  std::optional<std::string> out_dir;  // best-validation checkpoints land here

  std::vector<std::pair<ObjectiveConfig, TimeSampler>> cells;

  int sample_steps = 50;
  std::size_t sample_count = 200;  // balanced over the ten classes
};

struct BmnistCellResult {
  ObjectiveConfig objective;
  TimeSampler sampler;
  TrainResult train;
  std::optional<BmnistMetrics> metrics;  // absent when the cell diverged
  Tensor samples;                        // raw (unthresholded) sampled batch
  std::vector<int> sample_labels;
};

struct BmnistResult {
  std::vector<BmnistCellResult> cells;
  BmnistMetrics untrained_baseline;  // zero-weight model through the same sampler
  std::vector<double> train_marginals;
};

BmnistResult run_bmnist(const BmnistConfig& cfg, const BinaryImageSet& set);

BmnistMetrics image_metrics(const Tensor& raw_samples, const Tensor& train_images,
                            const std::vector<double>& train_marginals);

std::vector<double> pixel_marginals(const Tensor& images);

}  // namespace bfm::tasks
