// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mobo/errors.hpp"
#include "mobo/numerics/gradcheck.hpp"
#include "mobo/numerics/ops.hpp"

using namespace mobo;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// Triple-loop product used as the independent reference.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out[i * b.cols() + j] = s;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape tape(false);
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  auto b = Tensor::matrix({{3, 4}, {5, 6}});
  auto y = ops::matmul(tape, eye, b);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{3, 4, 5, 6});

  auto z = ops::matmul(tape, Tensor::matrix({{1, 2}}), Tensor::matrix({{0}, {0}}));
  CHECK(z.shape() == Shape{1, 1});
  CHECK(z.item() == 0.0);

  auto w = ops::matmul(tape, Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}}));
  CHECK(w.at(0, 0) == 17.0);
  CHECK(w.at(1, 0) == 39.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape(false);
  try {
    ops::matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with naive product on odd sizes") {
  std::mt19937_64 rng(7);
  Tape tape(false);
  for (auto [m, k, p] : {std::tuple{1, 1, 1}, {5, 3, 7}, {9, 13, 6}, {4, 8, 4}}) {
    auto a = random_tensor({std::size_t(m), std::size_t(k)}, rng);
    auto b = random_tensor({std::size_t(k), std::size_t(p)}, rng);
    auto y = ops::matmul(tape, a, b);
    auto ref = naive_matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("layer_norm") {
  Tape tape(false);
  auto ones = Tensor::full({2}, 1.0);
  auto zeros = Tensor::zeros({2});
  SUBCASE("row [1,3] normalizes to [-1,1] as eps vanishes") {
    auto y = ops::layer_norm(tape, Tensor::matrix({{1, 3}}), ones, zeros, 1e-14);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant row gives zeros") {
    auto y = ops::layer_norm(tape, Tensor::matrix({{4.5, 4.5}}), ones, zeros);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
  }
  SUBCASE("zero gain returns the bias") {
    auto bias = Tensor::vector({0.25, -2.0});
    auto y = ops::layer_norm(tape, Tensor::matrix({{1, 2}, {7, -3}}), zeros, bias);
    CHECK(y.at(0, 0) == 0.25);
    CHECK(y.at(1, 1) == -2.0);
  }
  SUBCASE("degenerate width") {
    CHECK_THROWS_AS(ops::layer_norm(tape, Tensor::matrix({{1}}), Tensor::full({1}, 1.0), Tensor::zeros({1})),
                    DimensionError);
  }
  SUBCASE("normalized rows have zero mean and unit variance") {
    std::mt19937_64 rng(3);
    const std::size_t d = 16;
    auto x = random_tensor({50, d}, rng, -5, 5);
    auto y = ops::layer_norm(tape, x, Tensor::full({d}, 1.0), Tensor::zeros({d}), 1e-12);
    for (std::size_t r = 0; r < 50; ++r) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < d; ++c) mu += y.at(r, c);
      mu /= d;
      for (std::size_t c = 0; c < d; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
      var /= d;
      CHECK(std::abs(mu) <= 1e-10);
      CHECK(std::abs(var - 1.0) <= 1e-8);
    }
  }
}

TEST_CASE("softmax_temperature") {
  Tape tape(false);
  auto u = ops::softmax_temperature(tape, Tensor::vector({0, 0, 0, 0}), 1.0);
  for (double a : u.data()) CHECK(a == 0.25);

  auto two = ops::softmax_temperature(tape, Tensor::vector({std::log(2.0), 0.0}), 1.0);
  CHECK(two[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  auto cold = ops::softmax_temperature(tape, Tensor::vector({1.0, 0.0}), 0.01);
  CHECK(std::abs(cold[0] - 1.0) < 1e-4);
  CHECK(cold[1] < 1e-4);

  CHECK_THROWS_AS(ops::softmax_temperature(tape, Tensor::vector({1.0}), 0.0), DomainError);
  CHECK_THROWS_AS(ops::softmax_temperature(tape, Tensor::vector({1.0}), -1.0), DomainError);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto w = random_tensor({7}, rng, -3, 3);
    auto a = ops::softmax_temperature(tape, w, 0.05 + trial * 0.01);
    double s = 0;
    for (double v : a.data()) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("conv1d_depthwise") {
  Tape tape(false);
  auto x = Tensor::matrix({{1}, {2}, {3}});
  auto y = ops::conv1d_depthwise(tape, x, Tensor::matrix({{1, 1, 1}}), Segments::single(3));
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{3, 6, 5});

  std::mt19937_64 rng(5);
  auto xs = random_tensor({6, 4}, rng);
  auto delta = Tensor::matrix({{0, 1, 0}, {0, 1, 0}, {0, 1, 0}, {0, 1, 0}});
  auto same = ops::conv1d_depthwise(tape, xs, delta, Segments::from_lengths({2, 4}));
  for (std::size_t i = 0; i < xs.numel(); ++i) CHECK(same[i] == xs[i]);

  auto zero = ops::conv1d_depthwise(tape, xs, Tensor::zeros({4, 5}), Segments::single(6));
  for (double v : zero.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(ops::conv1d_depthwise(tape, xs, Tensor::zeros({4, 2}), Segments::single(6)), ConfigError);

  // Segment boundaries are zero padding: a sum kernel on [1,2 | 3] gives [3,3 | 3].
  auto seg = ops::conv1d_depthwise(tape, x, Tensor::matrix({{1, 1, 1}}), Segments::from_lengths({2, 1}));
  CHECK(std::vector<double>(seg.data().begin(), seg.data().end()) == std::vector<double>{3, 3, 3});
}

TEST_CASE("conv1d_pointwise matches matmul plus bias") {
  Tape tape(false);
  std::mt19937_64 rng(9);
  auto x = random_tensor({5, 6}, rng);
  auto eye = Tensor::zeros({6, 6});
  for (std::size_t i = 0; i < 6; ++i) eye.mutable_data()[i * 6 + i] = 1.0;
  auto id = ops::conv1d_pointwise(tape, x, eye, Tensor::zeros({6}));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(id[i] == x[i]);

  auto bias = random_tensor({3}, rng);
  auto only_bias = ops::conv1d_pointwise(tape, x, Tensor::zeros({6, 3}), bias);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(only_bias.at(r, c) == bias[c]);

  for (int trial = 0; trial < 20; ++trial) {
    auto w = random_tensor({6, 4}, rng);
    auto b = random_tensor({4}, rng);
    auto y = ops::conv1d_pointwise(tape, x, w, b);
    auto ref = naive_matmul(x, w);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(y.at(r, c) - (ref[r * 4 + c] + b[c])) <= 1e-12);
  }
  CHECK_THROWS_AS(ops::conv1d_pointwise(tape, x, Tensor::zeros({5, 4}), Tensor::zeros({4})), DimensionError);
}

TEST_CASE("cross_entropy") {
  Tape tape(false);
  const std::size_t v = 16;
  std::vector<std::size_t> tgt{3, 9};
  std::vector<std::uint8_t> all{1, 1};
  auto uniform = ops::cross_entropy(tape, Tensor::zeros({2, v}), tgt, all);
  CHECK(uniform.item() == doctest::Approx(std::log(16.0)).epsilon(1e-14));
  CHECK(uniform.item() == doctest::Approx(2.7726).epsilon(1e-4));

  // Margin +20 over three competitors: log(1 + 3 e^-20) ~ 6.2e-9.
  auto sure = Tensor::zeros({2, 4});
  sure.mutable_data()[1] = 20.0;
  sure.mutable_data()[4 + 2] = 20.0;
  std::vector<std::size_t> tgt4{1, 2};
  CHECK(ops::cross_entropy(tape, sure, tgt4, all).item() < 1e-8);

  std::vector<std::uint8_t> first_only{1, 0};
  auto base = ops::cross_entropy(tape, Tensor::zeros({2, v}), tgt, first_only).item();
  auto edited = Tensor::zeros({2, v});
  edited.mutable_data()[v + 2] = 123.0;
  CHECK(ops::cross_entropy(tape, edited, tgt, first_only).item() == base);

  std::vector<std::uint8_t> none{0, 0};
  CHECK_THROWS_AS(ops::cross_entropy(tape, Tensor::zeros({2, v}), tgt, none), ContractError);
  std::vector<std::size_t> bad{3, 16};
  CHECK_THROWS_AS(ops::cross_entropy(tape, Tensor::zeros({2, v}), bad, all), IndexError);
}

TEST_CASE("backward basics") {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  {
    Tape tape;
    tape.backward(ops::sum(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  x.zero_grad();
  {
    Tape tape;
    auto f = ops::sum(tape, ops::gelu(tape, x));
    tape.backward(ops::scale(tape, f, 0.0));
    for (double g : x.grad()) CHECK(g == 0.0);
  }
  {
    // Accumulation across two uses of the same tensor.
    x.zero_grad();
    Tape tape;
    tape.backward(ops::sum(tape, ops::add(tape, x, x)));
    for (double g : x.grad()) CHECK(g == 2.0);
  }
  Tape tape;
  CHECK_THROWS_AS(tape.backward(ops::gelu(tape, x)), ContractError);
}

TEST_CASE("grad_check: quadratic form and masked branch") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({4, 4}, rng);
  auto x = random_tensor({1, 4}, rng);
  auto quad = [&](Tape& t, const Tensor& v) {
    auto xa = ops::matmul(t, v, a);
    return ops::sum(t, ops::mul(t, xa, v));
  };
  auto rep = grad_check(quad, x, 1e-5, 1e-6);
  CHECK(rep.passed());
  CHECK(rep.max_rel_error <= 1e-6);

  // Logits at masked-out rows have zero gradient; compared absolutely.
  auto logits = random_tensor({3, 5}, rng);
  std::vector<std::size_t> tgt{1, 2, 3};
  std::vector<std::uint8_t> mask{1, 0, 1};
  GradCheckOptions opts;
  auto rep2 = grad_check([&](Tape& t) { return ops::cross_entropy(t, logits, tgt, mask); }, {logits}, opts);
  CHECK(rep2.passed());
}

TEST_CASE("every primitive passes a finite-difference check") {
  std::mt19937_64 rng(2024);
  GradCheckOptions opts;  // step 1e-5, rel 1e-4, abs 1e-7
  auto segs = Segments::from_lengths({3, 1, 4});
  auto x = random_tensor({8, 6}, rng);
  auto y = random_tensor({8, 6}, rng);
  auto w = random_tensor({6, 5}, rng);
  auto b = random_tensor({5}, rng);
  auto gain = random_tensor({6}, rng, 0.5, 1.5);
  auto beta = random_tensor({6}, rng);
  auto kern = random_tensor({6, 3}, rng);
  auto g = random_tensor({3, 6}, rng);
  auto fw = random_tensor({3}, rng);
  auto probe = random_tensor({8, 6}, rng);  // fixed projection to a scalar
  auto probe5 = random_tensor({8, 5}, rng);
  auto dot = [](Tape& t, const Tensor& a, const Tensor& p) { return ops::sum(t, ops::mul(t, a, p)); };

  SUBCASE("linear") {
    CHECK(grad_check([&](Tape& t) { return dot(t, ops::linear(t, x, w, b), probe5); }, {x, w, b}, opts).passed());
  }
  SUBCASE("elementwise") {
    CHECK(grad_check([&](Tape& t) { return dot(t, ops::mul(t, ops::sub(t, x, y), ops::add(t, x, y)), probe); },
                     {x, y}, opts)
              .passed());
    CHECK(grad_check([&](Tape& t) { return dot(t, ops::gelu(t, ops::scale(t, x, 3.0)), probe); }, {x}, opts)
              .passed());
    CHECK(grad_check([&](Tape& t) { return dot(t, ops::sigmoid(t, ops::scale(t, x, 4.0)), probe); }, {x}, opts)
              .passed());
  }
  SUBCASE("layer_norm") {
    CHECK(grad_check([&](Tape& t) { return dot(t, ops::layer_norm(t, x, gain, beta), probe); }, {x, gain, beta},
                     opts)
              .passed());
  }
  SUBCASE("softmax_temperature and weighted_sum") {
    std::vector<Tensor> layers{x, y, probe};
    auto f = [&](Tape& t) {
      auto alpha = ops::softmax_temperature(t, fw, 0.7);
      return dot(t, ops::weighted_sum(t, layers, alpha), probe);
    };
    CHECK(grad_check(f, {fw, x, y}, opts).passed());
  }
  SUBCASE("depthwise conv and segment ops") {
    auto f = [&](Tape& t) {
      auto r = ops::conv1d_depthwise(t, x, kern, segs);
      auto m = ops::segment_mean(t, r, segs);
      auto gated = ops::segment_scale(t, r, ops::sigmoid(t, ops::mul(t, m, g)), segs);
      return dot(t, ops::segment_add(t, gated, g, segs), probe);
    };
    CHECK(grad_check(f, {x, kern, g}, opts).passed());
  }
  SUBCASE("attention self causal and cross") {
    auto kv = random_tensor({5, 6}, rng);
    auto ksegs = Segments::from_lengths({2, 1, 2});
    auto f = [&](Tape& t) {
      auto s = ops::attention(t, x, y, probe, segs, segs, true);
      auto c = ops::attention(t, s, kv, kv, segs, ksegs, false);
      return dot(t, c, probe);
    };
    CHECK(grad_check(f, {x, y, kv}, opts).passed());
  }
  SUBCASE("gather, concat, slice") {
    std::vector<std::size_t> ids{0, 2, 2, 7, 1};
    auto f = [&](Tape& t) {
      auto gsel = ops::gather_rows(t, x, ids);
      std::vector<Tensor> parts{gsel, ops::slice_rows(t, y, 2, 3)};
      auto cat = ops::concat_rows(t, parts);
      return dot(t, cat, ops::slice_rows(t, probe, 0, 8));
    };
    CHECK(grad_check(f, {x, y}, opts).passed());
  }
  SUBCASE("losses") {
    std::vector<std::size_t> tgt{0, 1, 2, 3, 4, 0, 1, 2};
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 1, 1};
    CHECK(grad_check([&](Tape& t) { return ops::cross_entropy(t, ops::linear(t, x, w, b), tgt, mask); }, {x, w, b},
                     opts)
              .passed());
    std::vector<double> rw{1, 2, 0.5, 1, 1, 3, 1, 0};
    CHECK(grad_check([&](Tape& t) { return ops::weighted_mse(t, x, y, rw); }, {x}, opts).passed());
  }
}

TEST_CASE("forwards are deterministic") {
  std::mt19937_64 rng(4);
  auto x = random_tensor({7, 6}, rng);
  auto w = random_tensor({6, 6}, rng);
  auto run = [&]() {
    Tape t(false);
    auto h = ops::gelu(t, ops::matmul(t, x, w));
    return ops::attention(t, h, h, h, Segments::single(7), Segments::single(7), true);
  };
  auto a = run(), b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}
