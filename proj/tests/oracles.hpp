// Test-side oracles, deliberately independent of the library's own numerics:
// central finite differences for gradients, composite Simpson for integrals,
// a plain least-squares slope fit and the standard normal CDF.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "bfm/tensor.hpp"

namespace oracles {

inline bfm::Tensor perturbed(const bfm::Tensor& t, std::size_t flat, double dv) {
  std::vector<double> d = t.data();
  d[flat] += dv;
  return bfm::Tensor(t.shape(), std::move(d));
}

// Max discrepancy between analytic gradients and central finite differences
// over every entry of every input, relative to max(|analytic|, |fd|, floor).
// `build` must construct the scalar loss from the given tensors.
inline double fd_max_rel_err(
    std::vector<bfm::Tensor> inputs,
    const std::function<bfm::Tensor(const std::vector<bfm::Tensor>&)>& build, double h = 1e-5,
    double floor = 1e-2) {
  for (auto& t : inputs) t.set_requires_grad(true);
  {
    bfm::Tape tape;
    bfm::Tensor loss = build(inputs);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      std::vector<bfm::Tensor> plus = inputs;
      std::vector<bfm::Tensor> minus = inputs;
      plus[i] = perturbed(inputs[i], j, h);
      minus[i] = perturbed(inputs[i], j, -h);
      const double fd = (build(plus).item() - build(minus).item()) / (2.0 * h);
      const double an = inputs[i].grad()[j];
      const double denom = std::max({std::abs(an), std::abs(fd), floor});
      worst = std::max(worst, std::abs(an - fd) / denom);
    }
  }
  return worst;
}

// composite Simpson on [a,b] with n (even) intervals
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double slope_fit(const std::vector<double>& logx, const std::vector<double>& logy) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(logx.size());
  for (std::size_t i = 0; i < logx.size(); ++i) {
    sx += logx[i];
    sy += logy[i];
    sxx += logx[i] * logx[i];
    sxy += logx[i] * logy[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace oracles
