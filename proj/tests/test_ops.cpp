#include <doctest.h>

#include <cmath>

#include "rmgan/error.hpp"
#include "rmgan/gradcheck.hpp"
#include "rmgan/ops.hpp"
#include "rmgan/rng.hpp"
#include "test_helpers.hpp"

using namespace rmgan;
using rmgan::testing::random_tensor;

TEST_CASE("rng streams are bit-reproducible and splittable") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(77);
  Rng c1 = base.split("masking");
  Rng c2 = base.split("masking");
  Rng c3 = base.split("noise");
  CHECK(c1.next_u64() == c2.next_u64());
  CHECK(c1.next_u64() != c3.next_u64());
  Rng i0 = base.split(std::uint64_t{0});
  Rng i1 = base.split(std::uint64_t{1});
  CHECK(i0.next_u64() != i1.next_u64());
}

TEST_CASE("layer_norm constant input maps to bias") {
  LayerNormParams p = LayerNormParams::unit(3);
  Tensor x({3}, {1.0, 1.0, 1.0});
  Tensor y = layer_norm(x, p);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(y[i]) < 1e-9);

  p.bias[0] = 0.5;
  p.bias[1] = -0.25;
  y = layer_norm(x, p);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(-0.25));
}

TEST_CASE("layer_norm keeps an already-normalized vector") {
  LayerNormParams p = LayerNormParams::unit(2);
  Tensor x({2}, {1.0, -1.0});
  Tensor y = layer_norm(x, p);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm zero-epsilon rejects constant input") {
  LayerNormParams p = LayerNormParams::unit(4, 0.0);
  Tensor x({4}, {2.0, 2.0, 2.0, 2.0});
  CHECK_THROWS_AS(layer_norm(x, p), NumericError);
}

TEST_CASE("layer_norm output statistics with unit gain") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t h = 64;
    LayerNormParams p = LayerNormParams::unit(h);
    Tensor x = random_tensor({h}, rng);
    Tensor y = layer_norm(x, p);
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += y[j];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (y[j] - mean) * (y[j] - mean);
    var /= static_cast<double>(h);
    CHECK(std::fabs(mean) <= 1e-12);
    CHECK(std::fabs(std::sqrt(var) - 1.0) <= 10.0 * p.epsilon);
  }
}

TEST_CASE("layer_norm jacobian-vector product vs finite differences H=512") {
  Rng rng(42);
  const std::size_t h = 512;
  LayerNormParams p = LayerNormParams::unit(h);
  Tensor x = random_tensor({h}, rng);
  Tensor w = random_tensor({h}, rng, -1.0, 1.0);

  auto f = [&](const Tensor& probe) {
    Tensor y = layer_norm(probe, p);
    double s = 0.0;
    for (std::size_t j = 0; j < h; ++j) s += w[j] * y[j];
    return s;
  };
  LayerNormCache cache;
  layer_norm(x, p, &cache);
  Tensor dx;
  layer_norm_backward(p, cache, w, dx);
  CHECK(finite_difference_check(f, x, dx, 1e-6) <= 1e-6);
}

TEST_CASE("layer_norm_backward zero upstream gives zeros") {
  Rng rng(9);
  LayerNormParams p = LayerNormParams::unit(16);
  Tensor x = random_tensor({4, 16}, rng);
  LayerNormCache cache;
  layer_norm(x, p, &cache);
  Tensor dy{{4, 16}};
  Tensor dx, dgain{{16}}, dbias{{16}};
  layer_norm_backward(p, cache, dy, dx, &dgain, &dbias);
  CHECK(dx.max_abs() == 0.0);
  CHECK(dgain.max_abs() == 0.0);
  CHECK(dbias.max_abs() == 0.0);
}

TEST_CASE("layer_norm_backward rejects mismatched shapes") {
  Rng rng(10);
  LayerNormParams p = LayerNormParams::unit(8);
  Tensor x = random_tensor({8}, rng);
  LayerNormCache cache;
  layer_norm(x, p, &cache);
  Tensor dy{{9}};
  Tensor dx;
  CHECK_THROWS_AS(layer_norm_backward(p, cache, dy, dx), std::invalid_argument);
}

TEST_CASE("layer_norm input-jacobian mean diagonal is 1/sigma at sigma=0.5") {
  Rng rng(11);
  const std::size_t h = 1024;
  // Draw a vector, rescale to empirical deviation 0.5.
  Tensor x{{h}};
  for (std::size_t j = 0; j < h; ++j) x[j] = rng.normal();
  double mean = 0.0;
  for (std::size_t j = 0; j < h; ++j) mean += x[j];
  mean /= static_cast<double>(h);
  double var = 0.0;
  for (std::size_t j = 0; j < h; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<double>(h);
  const double scale = 0.5 / std::sqrt(var);
  for (std::size_t j = 0; j < h; ++j) x[j] = (x[j] - mean) * scale;

  LayerNormParams p = LayerNormParams::unit(h);
  LayerNormCache cache;
  layer_norm(x, p, &cache);
  Tensor e{{h}}, dx;
  double diag = 0.0;
  for (std::size_t j = 0; j < h; ++j) {
    e.zero();
    e[j] = 1.0;
    layer_norm_backward(p, cache, e, dx);
    diag += dx[j];
  }
  diag /= static_cast<double>(h);
  CHECK(diag == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("ln_gradient_factor_probe tracks 1/sigma") {
  Rng rng(2024);
  CHECK(ln_gradient_factor_probe(1024, 0.5, 8, rng) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(ln_gradient_factor_probe(1024, 1.0, 8, rng) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(ln_gradient_factor_probe(1024, 0.25, 8, rng) == doctest::Approx(4.0).epsilon(0.05));
  CHECK_THROWS_AS(ln_gradient_factor_probe(16, 0.5, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(ln_gradient_factor_probe(1024, -1.0, 4, rng), std::invalid_argument);
}

TEST_CASE("affine identity and zero input") {
  Tensor w({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b{{3}};
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y = affine(x, w, b);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));

  Tensor b2({3}, {0.5, -1.0, 2.0});
  Tensor x0{{2, 3}};
  Tensor y2 = affine(x0, w, b2);
  CHECK(y2.at(0, 0) == doctest::Approx(0.5));
  CHECK(y2.at(1, 2) == doctest::Approx(2.0));

  Tensor bad{{4, 2}};
  CHECK_THROWS_AS(affine(bad, w, b), std::invalid_argument);
}

TEST_CASE("affine backward vs finite differences") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5}, rng);
  Tensor u = random_tensor({3, 5}, rng, -1.0, 1.0);  // projection weights

  auto loss_of = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
    Tensor y = affine(xx, ww, bb);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += u[i] * y[i];
    return s;
  };
  Tensor dx, dw{{4, 5}}, db{{5}};
  affine_backward(x, w, u, &dx, &dw, &db);

  CHECK(finite_difference_check([&](const Tensor& t) { return loss_of(t, w, b); }, x, dx, 1e-6) <= 1e-6);
  CHECK(finite_difference_check([&](const Tensor& t) { return loss_of(x, t, b); }, w, dw, 1e-6) <= 1e-6);
  CHECK(finite_difference_check([&](const Tensor& t) { return loss_of(x, w, t); }, b, db, 1e-6) <= 1e-6);
}

TEST_CASE("activation values at zero") {
  Tensor z{{1}};
  CHECK(sigmoid(z)[0] == doctest::Approx(0.5));
  CHECK(tanh_op(z)[0] == doctest::Approx(0.0));
  CHECK(gelu(z)[0] == doctest::Approx(0.0));
}

TEST_CASE("softmax cross entropy uniform logits give ln V") {
  const std::size_t v = 7;
  Tensor logits{{3, v}};
  double loss = softmax_cross_entropy(logits, {0, 3, 6});
  CHECK(loss == doctest::Approx(std::log(static_cast<double>(v))));

  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3, 7}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, -1, 2}), std::invalid_argument);
}

TEST_CASE("elementwise and softmax backward passes vs finite differences, 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(900 + seed);
    Tensor x = random_tensor({2, 6}, rng);
    Tensor u = random_tensor({2, 6}, rng, -1.0, 1.0);

    auto project = [&](const Tensor& y) {
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += u[i] * y[i];
      return s;
    };

    {
      Tensor y = sigmoid(x);
      Tensor dx = sigmoid_backward(y, u);
      CHECK(finite_difference_check(
                [&](const Tensor& t) { return project(sigmoid(t)); }, x, dx, 1e-6) <= 1e-5);
    }
    {
      Tensor y = tanh_op(x);
      Tensor dx = tanh_backward(y, u);
      CHECK(finite_difference_check(
                [&](const Tensor& t) { return project(tanh_op(t)); }, x, dx, 1e-6) <= 1e-5);
    }
    {
      Tensor dx = gelu_backward(x, u);
      CHECK(finite_difference_check(
                [&](const Tensor& t) { return project(gelu(t)); }, x, dx, 1e-6) <= 1e-5);
    }
    {
      std::vector<int> targets = {static_cast<int>(rng.uniform_index(6)),
                                  static_cast<int>(rng.uniform_index(6))};
      SoftmaxCeCache cache;
      softmax_cross_entropy(x, targets, &cache);
      Tensor dl = softmax_cross_entropy_backward(cache);
      CHECK(finite_difference_check(
                [&](const Tensor& t) { return softmax_cross_entropy(t, targets); }, x, dl,
                1e-6) <= 1e-5);
    }
  }
}

TEST_CASE("dropout_mask statistics and degenerate rho") {
  Rng rng(31);
  Tensor ones = dropout_mask(64, 0.0, rng);
  CHECK(ones.sum() == doctest::Approx(64.0));

  Tensor m = dropout_mask(10000, 0.75, rng);
  const double kept = m.sum() / 10000.0;
  CHECK(kept == doctest::Approx(0.25).epsilon(0.08));  // 0.25 +- 0.02
  CHECK(std::fabs(kept - 0.25) <= 0.02);

  CHECK_THROWS_AS(dropout_mask(8, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(dropout_mask(8, 1.5, rng), std::invalid_argument);
}

TEST_CASE("dropout_mask identical seeds give identical masks") {
  Rng a(123), b(123);
  Tensor ma = dropout_mask(256, 0.5, a);
  Tensor mb = dropout_mask(256, 0.5, b);
  for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma[i] == mb[i]);
}

TEST_CASE("finite_difference_check on known functions") {
  Tensor x({1}, {3.0});
  auto square = [](const Tensor& t) { return t[0] * t[0]; };
  Tensor good({1}, {6.0});
  CHECK(finite_difference_check(square, x, good, 1e-5) <= 1e-8);

  Tensor wrong({1}, {12.0});  // deliberately doubled
  CHECK(finite_difference_check(square, x, wrong, 1e-5) == doctest::Approx(1.0).epsilon(1e-4));

  auto blows_up = [](const Tensor& t) { return std::log(t[0] - 100.0); };
  CHECK_THROWS_AS(finite_difference_check(blows_up, x, good, 1e-5), NumericError);
}
