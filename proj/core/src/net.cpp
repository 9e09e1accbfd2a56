#include "bfm/net.hpp"

#include <cmath>

#include "bfm/errors.hpp"

namespace bfm {

void MlpConfig::validate() const {
  if (!in_dim || !out_dim || !hidden || !layers || !embed_dim)
    throw ConfigError("all MLP dimensions must be positive");
  if (embed_dim % 2 != 0)
    throw ConfigError("embed_dim must be even for the sinusoidal embedding");
  if (cond_classes && cond_vec_dim)
    throw ConfigError("choose class or vector conditioning, not both");
  if (cond_classes && *cond_classes == 0) throw ConfigError("cond_classes must be positive");
  if (cond_vec_dim && *cond_vec_dim == 0) throw ConfigError("cond_vec_dim must be positive");
}

Tensor& Params::add(std::string name, Tensor value) {
  auto [it, fresh] = items_.emplace(std::move(name), std::move(value));
  if (!fresh) throw ContractError("duplicate parameter name " + it->first);
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& Params::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw ContractError("no parameter named " + name);
  return it->second;
}

const Tensor& Params::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw ContractError("no parameter named " + name);
  return it->second;
}

std::size_t Params::entry_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

std::vector<const Tensor*> Params::tensors() const {
  std::vector<const Tensor*> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(&t);
  return out;
}

void Params::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

double Params::grad_sq() const {
  double acc = 0.0;
  for (const auto& [name, t] : items_)
    if (t.has_grad())
      for (double g : t.grad()) acc += g * g;
  return acc;
}

std::optional<std::string> Params::first_non_finite() const {
  for (const auto& [name, t] : items_)
    for (double v : t.data())
      if (!std::isfinite(v)) return name;
  return std::nullopt;
}

Params Params::clone() const {
  Params out;
  for (const auto& [name, t] : items_) out.add(name, Tensor(t.shape(), t.data()));
  return out;
}

Tensor time_embed(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0)
    throw ConfigError("time_embed needs a positive even dim, got " + std::to_string(dim));
  const std::size_t k = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < k; ++i) {
    const double w =
        k > 1 ? std::pow(1e4, static_cast<double>(i) / static_cast<double>(k - 1)) : 1.0;
    out[2 * i] = std::sin(t * w);
    out[2 * i + 1] = std::cos(t * w);
  }
  return Tensor({dim}, std::move(out));
}

Cond Cond::of_labels(std::vector<int> l) {
  Cond c;
  c.labels = std::move(l);
  return c;
}

Cond Cond::of_vec(Tensor v) {
  if (v.rank() != 2) throw ConfigError("vector condition must be [batch, dim]");
  Cond c;
  c.vec = std::move(v);
  return c;
}

FilmMlp::FilmMlp(MlpConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  auto init_matrix = [&](std::size_t fan_in, std::size_t fan_out) {
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = std_dev * rng.normal();
    return Tensor({fan_in, fan_out}, std::move(w));
  };
  std::size_t prev = cfg_.in_dim;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string tag = std::to_string(l);
    params_.add("layer" + tag + ".w", init_matrix(prev, cfg_.hidden));
    params_.add("layer" + tag + ".b", Tensor::zeros({cfg_.hidden}));
    params_.add("gate" + tag + ".w", init_matrix(cfg_.embed_dim, cfg_.hidden));
    params_.add("gate" + tag + ".b", Tensor::zeros({cfg_.hidden}));
    prev = cfg_.hidden;
  }
  params_.add("out.w", init_matrix(prev, cfg_.out_dim));
  params_.add("out.b", Tensor::zeros({cfg_.out_dim}));
  if (cfg_.cond_classes) {
    std::vector<double> tab(*cfg_.cond_classes * cfg_.embed_dim);
    for (double& v : tab) v = rng.normal();
    params_.add("cond.table", Tensor({*cfg_.cond_classes, cfg_.embed_dim}, std::move(tab)));
  } else if (cfg_.cond_vec_dim) {
    params_.add("cond.w", init_matrix(*cfg_.cond_vec_dim, cfg_.embed_dim));
    params_.add("cond.b", Tensor::zeros({cfg_.embed_dim}));
  }
}

FilmMlp::FilmMlp(MlpConfig cfg, Params params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

void FilmMlp::check_cond(const Cond& cond, std::size_t batch) const {
  if (cfg_.cond_classes) {
    if (!cond.labels)
      throw ConfigError("model is class-conditional but no labels were given");
    if (cond.labels->size() != batch)
      throw ConfigError("labels count " + std::to_string(cond.labels->size()) +
                        " does not match batch " + std::to_string(batch));
  } else if (cfg_.cond_vec_dim) {
    if (!cond.vec)
      throw ConfigError("model is vector-conditional but no condition vector was given");
    if (cond.vec->rows() != batch || cond.vec->cols() != *cfg_.cond_vec_dim)
      throw ConfigError("condition shape " + shape_str(cond.vec->shape()) + " does not match [" +
                        std::to_string(batch) + "," + std::to_string(*cfg_.cond_vec_dim) + "]");
  } else if (!cond.is_none()) {
    throw ConfigError("model is unconditional but a condition was given");
  }
}

Tensor FilmMlp::embed_condition(const Cond& cond, std::size_t batch) const {
  check_cond(cond, batch);
  if (cfg_.cond_classes) return embed_rows(params_.at("cond.table"), *cond.labels);
  if (cfg_.cond_vec_dim) return affine(*cond.vec, params_.at("cond.w"), params_.at("cond.b"));
  return Tensor::zeros({batch, cfg_.embed_dim});
}

Tensor FilmMlp::forward(const Tensor& z, double t, const Cond& cond) const {
  if (z.rank() != 2 || z.cols() != cfg_.in_dim)
    throw ShapeError("forward input " + shape_str(z.shape()) + " does not match in_dim " +
                     std::to_string(cfg_.in_dim));
  const std::size_t batch = z.rows();
  check_cond(cond, batch);

  const Tensor emb_t = time_embed(t, cfg_.embed_dim);

  // Unconditional gating depends on t only, so each gate is computed on a
  // single row and tiled across the batch.
  const bool shared_emb = cond.is_none();
  Tensor emb;
  if (shared_emb) {
    emb = Tensor({1, cfg_.embed_dim}, emb_t.data());
  } else {
    emb = add(tile_rows(emb_t, batch), embed_condition(cond, batch));
  }

  Tensor h = z;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string tag = std::to_string(l);
    Tensor pre = affine(h, params_.at("layer" + tag + ".w"), params_.at("layer" + tag + ".b"));
    Tensor gate =
        sigmoid(affine(emb, params_.at("gate" + tag + ".w"), params_.at("gate" + tag + ".b")));
    if (shared_emb) gate = tile_rows(gate, batch);
    h = mul(silu(pre), gate);
  }
  return affine(h, params_.at("out.w"), params_.at("out.b"));
}

}  // namespace bfm
