#include <doctest.h>

#include <cmath>

#include "bfm/tensor.hpp"
#include "oracles.hpp"

using namespace bfm;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = scale * rng.normal();
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor out = matmul(eye, b);
  for (std::size_t i = 0; i < 6; ++i) CHECK(out[i] == b[i]);

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor ones({2, 1}, {1, 1});
  Tensor prod = matmul(a, ones);
  CHECK(prod[0] == 3.0);
  CHECK(prod[1] == 7.0);
}

TEST_CASE("matmul shape mismatch raises") {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({2, 3}, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS((void)matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradient of sum(out) w.r.t. a equals ones*b^T") {
  Rng rng(7);
  Tensor a = random_tensor(rng, {5, 7});
  Tensor b = random_tensor(rng, {7, 3});
  a.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = sum(matmul(a, b));
    tape.backward(loss);
  }
  // d sum(AB) / dA = ones(m,n) * B^T, i.e. row sums of B broadcast
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expect += b[c * 3 + j];
      CHECK(a.grad()[r * 7 + c] == doctest::Approx(expect).epsilon(1e-12));
    }

  // and the independent finite-difference oracle agrees
  const double err = oracles::fd_max_rel_err(
      {random_tensor(rng, {5, 7}), random_tensor(rng, {7, 3})},
      [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); });
  CHECK(err < 1e-4);
}

TEST_CASE("elementwise trivial values") {
  Tensor zero = Tensor::scalar(0.0);
  CHECK(sigmoid(zero).item() == doctest::Approx(0.5));
  CHECK(silu(zero).item() == doctest::Approx(0.0));
  CHECK(bfm::tanh(zero).item() == doctest::Approx(0.0));
  CHECK(softplus(zero).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("tanh gradient matches central difference at 0.3") {
  Tensor x = Tensor::scalar(0.3);
  x.set_requires_grad(true);
  {
    Tape tape;
    Tensor y = bfm::tanh(x);
    tape.backward(y);
  }
  const double h = 1e-6;
  const double fd = (std::tanh(0.3 + h) - std::tanh(0.3 - h)) / (2.0 * h);
  CHECK(x.grad()[0] == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("log rejects non-positive input") {
  Tensor x({2}, {1.0, -0.5});
  CHECK_THROWS_AS((void)bfm::log(x), DomainError);
  Tensor zero = Tensor::scalar(0.0);
  CHECK_THROWS_AS((void)bfm::log(zero), DomainError);
}

TEST_CASE("backward on sum gives ones, on sum of squares gives 2x") {
  Rng rng(3);
  Tensor theta = random_tensor(rng, {4, 3});
  theta.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(theta));
  }
  for (double g : theta.grad()) CHECK(g == 1.0);

  theta.zero_grad();
  {
    Tape tape;
    tape.backward(sum(square(theta)));
  }
  for (std::size_t i = 0; i < theta.size(); ++i)
    CHECK(theta.grad()[i] == doctest::Approx(2.0 * theta[i]).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar root recorded on the tape") {
  Tensor p({2}, {1.0, 2.0});
  p.set_requires_grad(true);
  Tape tape;
  Tensor vec = add(p, p);
  CHECK_THROWS_AS(tape.backward(vec), ContractError);
  Tensor off_tape = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(off_tape), ContractError);
}

TEST_CASE("two-layer MLP loss gradients match finite differences") {
  Rng rng(11);
  Tensor x = random_tensor(rng, {4, 5});
  Tensor target = random_tensor(rng, {4, 2});
  auto build = [&](const std::vector<Tensor>& p) {
    Tensor h = silu(affine(x, p[0], p[1]));
    Tensor out = affine(h, p[2], p[3]);
    return mean_all(square(sub(out, target)));
  };
  const double err = oracles::fd_max_rel_err(
      {random_tensor(rng, {5, 6}, 0.5), random_tensor(rng, {6}, 0.1),
       random_tensor(rng, {6, 2}, 0.5), random_tensor(rng, {2}, 0.1)},
      build);
  CHECK(err < 1e-4);
}

TEST_CASE("every differentiable primitive passes finite differences on random tensors") {
  Rng rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.below(3), c = 1 + rng.below(4);
    Tensor a = random_tensor(rng, {r, c});
    Tensor b = random_tensor(rng, {r, c});
    Tensor s = Tensor::scalar(0.3 + rng.uniform());
    auto check = [&](auto build, std::vector<Tensor> inputs) {
      worst = std::max(worst, oracles::fd_max_rel_err(std::move(inputs), build));
    };
    switch (trial % 10) {
      case 0:
        check([](const std::vector<Tensor>& in) { return sum(add(in[0], in[1])); }, {a, b});
        break;
      case 1:
        check([](const std::vector<Tensor>& in) { return sum(sub(in[0], in[1])); }, {a, b});
        break;
      case 2:
        check([](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); }, {a, b});
        break;
      case 3:
        check([](const std::vector<Tensor>& in) { return sum(silu(in[0])); }, {a});
        break;
      case 4:
        check([](const std::vector<Tensor>& in) { return sum(sigmoid(in[0])); }, {a});
        break;
      case 5:
        check([](const std::vector<Tensor>& in) { return sum(bfm::tanh(in[0])); }, {a});
        break;
      case 6:
        check([](const std::vector<Tensor>& in) { return sum(square(in[0])); }, {a});
        break;
      case 7:
        check([](const std::vector<Tensor>& in) { return sum(softplus(in[0])); }, {a});
        break;
      case 8:  // scalar broadcast both sides
        check([](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); }, {a, s});
        break;
      case 9: {
        // log needs positive input
        std::vector<double> d(a.size());
        for (auto& v : d) v = 0.5 + rng.uniform();
        check([](const std::vector<Tensor>& in) { return sum(bfm::log(in[0])); },
              {Tensor(a.shape(), std::move(d))});
        break;
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("structured primitives pass finite differences") {
  Rng rng(123);
  Tensor x = random_tensor(rng, {3, 4});
  SUBCASE("affine") {
    const double err = oracles::fd_max_rel_err(
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}), random_tensor(rng, {5})},
        [](const std::vector<Tensor>& in) {
          return sum(square(affine(in[0], in[1], in[2])));
        });
    CHECK(err < 1e-4);
  }
  SUBCASE("tile_rows") {
    const double err = oracles::fd_max_rel_err(
        {random_tensor(rng, {4})}, [](const std::vector<Tensor>& in) {
          return sum(square(tile_rows(in[0], 3)));
        });
    CHECK(err < 1e-4);
  }
  SUBCASE("embed_rows") {
    std::vector<int> idx = {2, 0, 2, 1};
    const double err = oracles::fd_max_rel_err(
        {random_tensor(rng, {3, 4})}, [idx](const std::vector<Tensor>& in) {
          return sum(square(embed_rows(in[0], idx)));
        });
    CHECK(err < 1e-4);
  }
  SUBCASE("bce_with_logits") {
    std::vector<double> bits(12);
    Rng brng(5);
    for (auto& v : bits) v = brng.pm1();
    Tensor targets({3, 4}, std::move(bits));
    const double err = oracles::fd_max_rel_err(
        {random_tensor(rng, {3, 4})}, [targets](const std::vector<Tensor>& in) {
          return bce_with_logits(in[0], targets);
        });
    CHECK(err < 1e-4);
  }
  SUBCASE("embed_rows rejects out-of-range index") {
    std::vector<int> idx = {3};
    CHECK_THROWS_AS((void)embed_rows(x, idx), DomainError);
  }
}

TEST_CASE("gradient accumulates when a tensor is reused in the graph") {
  Tensor p({2}, {1.0, 2.0});
  p.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = add(sum(p), sum(p));
    tape.backward(loss);
  }
  for (double g : p.grad()) CHECK(g == 2.0);
}

TEST_CASE("backward over two independent graphs equals separate backwards") {
  Rng rng(17);
  Tensor p1 = random_tensor(rng, {3});
  Tensor p2 = random_tensor(rng, {4});
  p1.set_requires_grad(true);
  p2.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = add(sum(square(p1)), sum(silu(p2)));
    tape.backward(loss);
  }
  std::vector<double> joint1 = p1.grad(), joint2 = p2.grad();

  p1.zero_grad();
  p2.zero_grad();
  {
    Tape tape;
    tape.backward(sum(square(p1)));
  }
  {
    Tape tape;
    tape.backward(sum(silu(p2)));
  }
  for (std::size_t i = 0; i < joint1.size(); ++i) CHECK(p1.grad()[i] == joint1[i]);
  for (std::size_t i = 0; i < joint2.size(); ++i) CHECK(p2.grad()[i] == joint2[i]);
}

TEST_CASE("gradients not reachable from the root stay zero") {
  Tensor used({2}, {1.0, 2.0});
  Tensor unused({2}, {3.0, 4.0});
  used.set_requires_grad(true);
  unused.set_requires_grad(true);
  {
    Tape tape;
    Tensor dead_end = square(unused);  // recorded but not part of the root
    (void)dead_end;
    tape.backward(sum(used));
  }
  for (double g : used.grad()) CHECK(g == 1.0);
  for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("operations are pure: equal inputs give bitwise-equal outputs") {
  Rng rng(21);
  Tensor a = random_tensor(rng, {4, 4});
  Tensor b = random_tensor(rng, {4, 4});
  Tensor m1 = matmul(a, b), m2 = matmul(a, b);
  for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1[i] == m2[i]);
  Tensor s1 = silu(a), s2 = silu(a);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
}

TEST_CASE("broadcast is restricted to scalar or equal shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor row({3}, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS((void)add(a, row), ShapeError);
  CHECK_NOTHROW((void)add(a, Tensor::scalar(2.0)));
}

TEST_CASE("seeded generators are deterministic") {
  Rng r1(42), r2(42);
  Tensor n1 = randn(r1, {16}), n2 = randn(r2, {16});
  for (std::size_t i = 0; i < 16; ++i) CHECK(n1[i] == n2[i]);
  Tensor u1 = rand_uniform(r1, {16}), u2 = rand_uniform(r2, {16});
  for (std::size_t i = 0; i < 16; ++i) CHECK(u1[i] == u2[i]);
}

TEST_CASE("normal and uniform sample moments") {
  Rng rng(2024);
  const std::size_t n = 1000000;
  Tensor normal = randn(rng, {n});
  double mean = 0.0;
  for (double v : normal.data()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : normal.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);

  Tensor uniform = rand_uniform(rng, {n});
  double umean = 0.0;
  for (double v : uniform.data()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    umean += v;
  }
  umean /= static_cast<double>(n);
  CHECK(std::abs(umean - 0.5) < 0.002);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.size() == 4);
  CHECK_THROWS_AS((void)t.item(), ContractError);
  CHECK_THROWS_AS((void)t.grad(), ContractError);
}
