#include "bfm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "bfm/errors.hpp"
#include "bfm/io.hpp"

namespace bfm {

void ObjectiveConfig::validate() const {
  if (prediction == Pred::v_pred && loss == Loss::bce)
    throw ConfigError("(v_pred, bce) is rejected: BCE requires signal-space logits");
  if (!(epsilon_t > 0.0 && epsilon_t <= 1e-3))
    throw ConfigError("epsilon_t must lie in (0, 1e-3], got " + std::to_string(epsilon_t));
}

bool ObjectiveConfig::aligned() const {
  if (prediction == Pred::x_pred) return loss == Loss::x_mse || loss == Loss::bce;
  return loss == Loss::v_mse;
}

std::string ObjectiveConfig::name() const {
  std::string p = prediction == Pred::x_pred ? "xpred" : "vpred";
  std::string l = loss == Loss::x_mse ? "xmse" : (loss == Loss::v_mse ? "vmse" : "bce");
  return p + "-" + l;
}

ObjectiveConfig ObjectiveConfig::make(Pred p, Loss l, double epsilon_t) {
  ObjectiveConfig c;
  c.prediction = p;
  c.loss = l;
  c.epsilon_t = epsilon_t;
  c.validate();
  return c;
}

void GradTrace::to_csv(std::ostream& os) const {
  os << "step,t,loss,grad_sq_norm\n";
  for (const auto& r : records)
    os << r.step << ',' << fmt_g17(r.t) << ',' << fmt_g17(r.loss) << ','
       << fmt_g17(r.grad_sq_norm) << '\n';
}

void GradTrace::save_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open " + path + " for writing");
  to_csv(os);
}

namespace {

std::size_t batch_of(const Tensor& t) { return t.rank() >= 2 ? t.shape()[0] : 1; }

void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

Tensor derive_velocity(const Tensor& x_pred, const Tensor& z, double t, double epsilon_t) {
  check_same(x_pred, z, "derive_velocity");
  return mul(sub(x_pred, z), Tensor::scalar(1.0 / (1.0 - t + epsilon_t)));
}

Tensor loss_v_mse_mismatched(const Tensor& x_pred, const Tensor& x, const Tensor& z, double t) {
  check_same(x_pred, x, "loss_v_mse_mismatched");
  check_same(x_pred, z, "loss_v_mse_mismatched");
  if (!(t < 1.0))
    throw DomainError("v-loss weighting (1-t)^-2 diverges at t = 1");
  const double w = 1.0 / ((1.0 - t) * (1.0 - t));
  Tensor sq = sum(square(sub(x_pred, x)));
  return mul(sq, Tensor::scalar(w / static_cast<double>(batch_of(x_pred))));
}

Tensor loss_x_mse(const Tensor& x_pred, const Tensor& x) {
  check_same(x_pred, x, "loss_x_mse");
  Tensor sq = sum(square(sub(x_pred, x)));
  return mul(sq, Tensor::scalar(1.0 / static_cast<double>(batch_of(x_pred))));
}

Tensor loss_v_mse_aligned(const Tensor& v_pred, const Tensor& x, const Tensor& e) {
  check_same(v_pred, x, "loss_v_mse_aligned");
  check_same(v_pred, e, "loss_v_mse_aligned");
  Tensor sq = sum(square(sub(v_pred, sub(x, e))));
  return mul(sq, Tensor::scalar(1.0 / static_cast<double>(batch_of(v_pred))));
}

Tensor loss_bce(const Tensor& logits, const Tensor& x) {
  check_same(logits, x, "loss_bce");
  for (double v : x.data())
    if (v != 1.0 && v != -1.0)
      throw DomainError("BCE targets must be exactly +-1, got " + std::to_string(v));
  return bce_with_logits(logits, x);
}

double grad_sq_norm(const std::vector<const Tensor*>& params) {
  double acc = 0.0;
  for (const Tensor* p : params) {
    if (!p->has_grad()) continue;
    for (double g : p->grad()) acc += g * g;
  }
  return acc;
}

void record_grad(GradTrace& trace, long step, double t, double loss,
                 const std::vector<const Tensor*>& params) {
  trace.records.push_back({step, t, loss, grad_sq_norm(params)});
}

std::vector<BinnedMoment> binned_second_moment(const GradTrace& trace, std::size_t bins) {
  if (bins < 2) throw ConfigError("binned_second_moment needs bins >= 2");
  std::vector<double> acc(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const auto& r : trace.records) {
    auto b = static_cast<std::size_t>(r.t * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    acc[b] += r.grad_sq_norm;
    ++count[b];
  }
  std::vector<BinnedMoment> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double mid = (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
    out[b] = {mid, count[b] ? acc[b] / static_cast<double>(count[b]) : 0.0, count[b]};
  }
  return out;
}

}  // namespace bfm
