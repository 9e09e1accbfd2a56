#include <doctest.h>

#include <cmath>

#include "bfm/flow.hpp"
#include "oracles.hpp"

using namespace bfm;

TEST_CASE("interpolate endpoints and midpoint") {
  Tensor x({3}, {1.0, 1.0, 1.0});
  Tensor e({3}, {-1.0, -1.0, -1.0});
  Tensor at0 = interpolate(x, e, 0.0);
  Tensor at1 = interpolate(x, e, 1.0);
  Tensor mid = interpolate(x, e, 0.5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(at0[i] == e[i]);
    CHECK(at1[i] == x[i]);
    CHECK(mid[i] == 0.0);
  }
}

TEST_CASE("interpolate validates t and shapes") {
  Tensor x({2}, {1.0, 1.0});
  Tensor e({2}, {0.0, 0.0});
  CHECK_THROWS_AS((void)interpolate(x, e, -0.1), DomainError);
  CHECK_THROWS_AS((void)interpolate(x, e, 1.1), DomainError);
  Tensor bad({3}, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS((void)interpolate(x, bad, 0.5), ShapeError);
}

TEST_CASE("interpolate time derivative is x - e") {
  Rng rng(5);
  Tensor x = randn(rng, {8});
  Tensor e = randn(rng, {8});
  const double h = 1e-6;
  for (double t : {0.1, 0.5, 0.9}) {
    Tensor plus = interpolate(x, e, t + h);
    Tensor minus = interpolate(x, e, t - h);
    for (std::size_t i = 0; i < 8; ++i) {
      const double fd = (plus[i] - minus[i]) / (2.0 * h);
      CHECK(fd == doctest::Approx(x[i] - e[i]).epsilon(1e-7));
    }
  }
}

TEST_CASE("flow sample construction identities hold exactly") {
  Rng rng(9);
  Tensor x = randn(rng, {2, 4});
  Tensor e = randn(rng, {2, 4});
  const double t = 0.37;
  FlowSample fs = make_flow_sample(x, e, t);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(fs.z[i] == t * x[i] + (1.0 - t) * e[i]);
    CHECK(fs.v_target[i] == x[i] - e[i]);
  }
  CHECK(fs.t == t);
}

TEST_CASE("snr values and divergence at t=1") {
  CHECK(snr(0.0) == 0.0);
  CHECK(snr(0.5) == doctest::Approx(1.0));
  CHECK(snr(0.9) == doctest::Approx(81.0));
  CHECK_THROWS_AS((void)snr(1.0), DomainError);
}

TEST_CASE("sample_t stays within [0, t_max] for every kind") {
  Rng rng(31);
  for (const auto& sampler :
       {TimeSampler::uniform(0.7), TimeSampler::logit_normal(-0.8, 0.8, 0.9),
        TimeSampler::clipped_uniform(0.99)}) {
    for (int i = 0; i < 20000; ++i) {
      const double t = sample_t(sampler, rng);
      CHECK(t >= 0.0);
      CHECK(t <= sampler.t_max);
    }
  }
}

TEST_CASE("logit-normal with tiny s concentrates at sigmoid(m)") {
  Rng rng(3);
  TimeSampler s = TimeSampler::logit_normal(0.0, 1e-9);
  for (int i = 0; i < 100; ++i) CHECK(sample_t(s, rng) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("uniform sampler Monte Carlo mean") {
  Rng rng(77);
  TimeSampler s = TimeSampler::uniform();
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc += sample_t(s, rng);
  CHECK(std::abs(acc / n - 0.5) < 0.002);
}

TEST_CASE("logit-normal sampler recovers its logit-space mean") {
  Rng rng(78);
  TimeSampler s = TimeSampler::logit_normal(-0.8, 0.8);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double t = sample_t(s, rng);
    acc += std::log(t / (1.0 - t));
  }
  CHECK(std::abs(acc / n - (-0.8)) < 0.005);
}

TEST_CASE("sampler validation") {
  TimeSampler bad;
  bad.kind = TimeSampler::Kind::logit_normal;
  bad.s = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS((void)TimeSampler::uniform(0.0), ConfigError);
  CHECK_THROWS_AS((void)TimeSampler::uniform(1.5), ConfigError);
}

TEST_CASE("logit_normal_pdf value, symmetry, domain") {
  CHECK(logit_normal_pdf(0.5, 0.0, 1.0) ==
        doctest::Approx(4.0 / std::sqrt(2.0 * 3.14159265358979323846)).epsilon(1e-12));
  for (double t : {0.1, 0.25, 0.4}) {
    CHECK(logit_normal_pdf(t, 0.0, 0.8) ==
          doctest::Approx(logit_normal_pdf(1.0 - t, 0.0, 0.8)).epsilon(1e-12));
  }
  CHECK_THROWS_AS((void)logit_normal_pdf(0.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS((void)logit_normal_pdf(1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("logit_normal_pdf integrates to one") {
  auto pdf = [](double t) { return logit_normal_pdf(t, -0.8, 0.8); };
  const double integral = oracles::simpson(pdf, 1e-9, 1.0 - 1e-9, 200000);
  CHECK(std::abs(integral - 1.0) < 1e-6);
}

TEST_CASE("sample_t histogram matches the density") {
  Rng rng(123);
  TimeSampler s = TimeSampler::logit_normal(0.0, 1.0);
  const int n = 1000000, bins = 20;
  std::vector<double> hist(bins, 0.0);
  for (int i = 0; i < n; ++i) {
    const double t = sample_t(s, rng);
    hist[std::min(static_cast<int>(t * bins), bins - 1)] += 1.0;
  }
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins, hi = lo + 1.0 / bins;
    const double expected = oracles::simpson(
        [](double t) { return logit_normal_pdf(t, 0.0, 1.0); }, std::max(lo, 1e-12),
        std::min(hi, 1.0 - 1e-12), 2000);
    const double observed = hist[b] / n;
    CHECK(std::abs(observed - expected) < 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("scalar binary MMSE values") {
  CHECK(scalar_binary_mmse(0.0, 0.5) == 0.0);
  CHECK(scalar_binary_mmse(0.3, 0.999) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(scalar_binary_mmse(0.5, 0.5) == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  CHECK_THROWS_AS((void)scalar_binary_mmse(0.1, 0.0), DomainError);
  CHECK_THROWS_AS((void)scalar_binary_mmse(0.1, 1.0), DomainError);
}

TEST_CASE("scalar binary MMSE agrees with the two-point posterior") {
  // brute-force posterior over x in {-1,+1}: E[x|z] weighted by Gaussian
  // likelihoods exp(-(z - t x)^2 / (2 (1-t)^2))
  for (int zi = 0; zi < 10; ++zi) {
    for (int ti = 1; ti <= 10; ++ti) {
      const double z = -3.0 + 6.0 * zi / 9.0;
      const double t = ti / 11.0;
      const double w = 1.0 - t;
      const double lp = std::exp(-(z - t) * (z - t) / (2.0 * w * w));
      const double lm = std::exp(-(z + t) * (z + t) / (2.0 * w * w));
      const double posterior = (lp - lm) / (lp + lm);
      CHECK(scalar_binary_mmse(z, t) == doctest::Approx(posterior).epsilon(1e-12));
    }
  }
}

TEST_CASE("gaussian Bayes residual endpoints and isotropic closed form") {
  const std::size_t d = 16;
  Tensor eye = Tensor::zeros({d, d});
  {
    std::vector<double> m(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
    eye = Tensor({d, d}, std::move(m));
  }
  CHECK(gaussian_bayes_residual(eye, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(gaussian_bayes_residual(eye, 0.0) == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(gaussian_bayes_residual(eye, 0.5) == doctest::Approx(8.0).epsilon(1e-12));

  for (int i = 1; i < 100; ++i) {
    const double t = i / 100.0;
    const double w = 1.0 - t;
    const double closed = 16.0 * w * w / (t * t + w * w);
    CHECK(gaussian_bayes_residual(eye, t) == doctest::Approx(closed).epsilon(1e-12));
  }

  // t -> 1 asymptote D (1-t)^2 / t^2
  for (double t : {0.99, 0.995, 0.999}) {
    const double w = 1.0 - t;
    const double asym = 16.0 * w * w / (t * t);
    CHECK(gaussian_bayes_residual(eye, t) / asym == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("gaussian Bayes residual cross-checked by Monte Carlo regression") {
  // E ||x - E[x|z]||^2 estimated by the posterior-mean formula
  // Sigma^1/2 applied to correlated 2x2 case, checked against sampling
  Tensor sigma({2, 2}, {1.0, 0.4, 0.4, 0.7});
  const double t = 0.6;
  const double expect = gaussian_bayes_residual(sigma, t);

  // conditional mean for jointly Gaussian (x, z): E[x|z] = t S (t^2 S + w^2 I)^{-1} z
  // residual trace estimated over draws
  Rng rng(4242);
  const double w = 1.0 - t;
  // 2x2 cholesky of sigma
  const double l00 = std::sqrt(1.0), l10 = 0.4 / l00;
  const double l11 = std::sqrt(0.7 - l10 * l10);
  const int n = 200000;
  // precompute M = t^2 S + w^2 I and its inverse
  const double m00 = t * t * 1.0 + w * w, m01 = t * t * 0.4;
  const double m11 = t * t * 0.7 + w * w;
  const double det = m00 * m11 - m01 * m01;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g0 = rng.normal(), g1 = rng.normal();
    const double x0 = l00 * g0, x1 = l10 * g0 + l11 * g1;
    const double z0 = t * x0 + w * rng.normal();
    const double z1 = t * x1 + w * rng.normal();
    // u = M^{-1} z
    const double u0 = (m11 * z0 - m01 * z1) / det;
    const double u1 = (-m01 * z0 + m00 * z1) / det;
    // E[x|z] = t S u
    const double e0 = t * (1.0 * u0 + 0.4 * u1);
    const double e1 = t * (0.4 * u0 + 0.7 * u1);
    acc += (x0 - e0) * (x0 - e0) + (x1 - e1) * (x1 - e1);
  }
  const double mc = acc / n;
  CHECK(mc == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("gaussian Bayes residual rejects invalid covariance") {
  Tensor notsym({2, 2}, {1.0, 0.5, 0.1, 1.0});
  CHECK_THROWS_AS((void)gaussian_bayes_residual(notsym, 0.5), DomainError);
  Tensor notspd({2, 2}, {1.0, 2.0, 2.0, 1.0});
  CHECK_THROWS_AS((void)gaussian_bayes_residual(notspd, 0.5), DomainError);
  Tensor eye({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS((void)gaussian_bayes_residual(eye, 1.5), DomainError);
}

TEST_CASE("denoising init limits and variance") {
  Rng rng(8);
  Tensor prior = Tensor::full({4}, 1.0);
  CHECK_THROWS_AS((void)denoising_init(prior, 1.0, rng), DomainError);

  // t0 = 0 returns a pure noise draw: statistically centered, unit variance
  const double t0 = 0.65;
  const int draws = 100000;
  double acc_var = 0.0;
  for (int i = 0; i < draws; ++i) {
    Tensor z = denoising_init(prior, t0, rng);
    const double dev = z[0] - t0 * prior[0];
    acc_var += dev * dev;
  }
  const double w = 1.0 - t0;
  CHECK(acc_var / draws == doctest::Approx(w * w).epsilon(0.02));
}
