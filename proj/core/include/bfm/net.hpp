#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bfm/rng.hpp"
#include "bfm/tensor.hpp"

namespace bfm {

// Gated MLP backbone: per hidden layer h <- silu(W h + b) * sigmoid(G emb + g)
// where emb is the sinusoidal time embedding plus an optional condition
// embedding. The same backbone serves x-prediction and v-prediction; only the
// output interpretation differs.
struct MlpConfig {
  std::size_t in_dim = 16;
  std::size_t out_dim = 16;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t embed_dim = 128;
  std::optional<std::size_t> cond_classes;   // class-conditional (table lookup)
  std::optional<std::size_t> cond_vec_dim;   // vector-conditional (learned linear)

  void validate() const;
};

// Named collection of trainable tensors, ordered by name so that iteration,
// serialization and the optimizer sweep are all deterministic.
class Params {
 public:
  Tensor& add(std::string name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return items_.count(name) != 0; }
  std::size_t count() const { return items_.size(); }
  std::size_t entry_count() const;  // total scalar entries

  std::vector<const Tensor*> tensors() const;
  const std::map<std::string, Tensor>& items() const { return items_; }
  std::map<std::string, Tensor>& items() { return items_; }

  void zero_grads();
  double grad_sq() const;
  // name of the first parameter holding a non-finite entry, if any
  std::optional<std::string> first_non_finite() const;
  Params clone() const;  // deep copy with fresh gradient buffers

 private:
  std::map<std::string, Tensor> items_;
};

// Sinusoidal embedding: pairs (sin(t*w_k), cos(t*w_k)) with w_k geometric
// from 1 to 1e4 over dim/2 frequencies. dim must be even.
Tensor time_embed(double t, std::size_t dim);

// Conditioning input for one forward call. Exactly one of labels/vec may be
// set; none means unconditional.
struct Cond {
  std::optional<std::vector<int>> labels;
  std::optional<Tensor> vec;  // [B, cond_vec_dim]

  static Cond none() { return {}; }
  static Cond of_labels(std::vector<int> l);
  static Cond of_vec(Tensor v);
  bool is_none() const { return !labels && !vec; }
};

class FilmMlp {
 public:
  // weights ~ N(0, 1/fan_in), biases zero; embedding tables ~ N(0, 1)
  FilmMlp(MlpConfig cfg, Rng& rng);
  // adopt externally loaded parameters (e.g. a checkpoint)
  FilmMlp(MlpConfig cfg, Params params);

  Tensor forward(const Tensor& z, double t, const Cond& cond = Cond::none()) const;

  // condition embedding alone, one row per batch element ([B, embed_dim]);
  // the forward pass adds this to the tiled time embedding
  Tensor embed_condition(const Cond& cond, std::size_t batch) const;

  const MlpConfig& config() const { return cfg_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

 private:
  void check_cond(const Cond& cond, std::size_t batch) const;

  MlpConfig cfg_;
  Params params_;
};

}  // namespace bfm
