#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rmgan/gradcheck.hpp"
#include "rmgan/lstm.hpp"
#include "rmgan/rng.hpp"
#include "test_helpers.hpp"

using namespace rmgan;
using rmgan::testing::random_tensor;

namespace {

LstmCellParams zero_cell(std::size_t x_dim, std::size_t h_dim) {
  LstmCellParams p;
  p.w_h = Tensor{{h_dim, 4 * h_dim}};
  p.w_x = Tensor{{x_dim, 4 * h_dim}};
  p.b = Tensor{{4 * h_dim}};
  p.ln_h = LayerNormParams::unit(4 * h_dim);
  p.ln_x = LayerNormParams::unit(4 * h_dim);
  p.ln_c = LayerNormParams::unit(h_dim);
  p.ln_out = LayerNormParams::unit(h_dim);
  return p;
}

LstmStack random_stack(LstmVariant variant, std::size_t x_dim, std::size_t h_dim,
                       std::size_t depth, std::uint64_t seed) {
  Rng rng(seed);
  return LstmStack::create(variant, x_dim, h_dim, depth, rng);
}

// Projection loss over every step of the last layer; fixed weights.
double projection_loss(const std::vector<Tensor>& h_last, const Tensor& w,
                       std::vector<Tensor>* d_h) {
  double loss = 0.0;
  if (d_h) d_h->clear();
  for (const Tensor& h : h_last) {
    for (std::size_t i = 0; i < h.size(); ++i) loss += w[i] * h[i];
    if (d_h) d_h->push_back(w);
  }
  return loss;
}

}  // namespace

TEST_CASE("vanilla cell with zero parameters halves the carried state") {
  const std::size_t h = 6;
  LstmCellParams p = zero_cell(4, h);
  LstmState s0 = LstmState::zeros(2, h);
  for (std::size_t i = 0; i < s0.c.size(); ++i) s0.c[i] = 0.3 * static_cast<double>(i) - 0.5;
  Tensor x{{2, 4}};

  LstmState s1 = cell_forward(LstmVariant::kVanilla, p, x, s0);
  for (std::size_t i = 0; i < s1.c.size(); ++i) {
    CHECK(s1.c[i] == doctest::Approx(0.5 * s0.c[i]));
    CHECK(s1.h[i] == doctest::Approx(0.5 * std::tanh(0.5 * s0.c[i])));
  }
}

TEST_CASE("fully normalized cell with zero parameters and zero state stays at zero") {
  LstmCellParams p = zero_cell(4, 6);
  LstmState s0 = LstmState::zeros(2, 6);
  Tensor x{{2, 4}};
  LstmState s1 = cell_forward(LstmVariant::kFullyNormalized, p, x, s0);
  CHECK(s1.h.max_abs() == doctest::Approx(0.0));
  CHECK(s1.c.max_abs() == doctest::Approx(0.0));
}

TEST_CASE("cell backward with zero upstream gradient returns zeros") {
  for (LstmVariant v : {LstmVariant::kVanilla, LstmVariant::kLayerNorm,
                        LstmVariant::kFullyNormalized}) {
    Rng rng(17);
    LstmStack stack = LstmStack::create(v, 5, 7, 1, rng);
    const LstmCellParams& p = stack.layers[0];
    Tensor x = random_tensor({3, 5}, rng);
    LstmState s0 = LstmState::zeros(3, 7);
    LstmCellCache cache;
    cell_forward(v, p, x, s0, &cache);

    Tensor dh{{3, 7}}, dc{{3, 7}}, dx;
    LstmState ds;
    LstmCellGrads grads = LstmCellGrads::zeros_like(p);
    cell_backward(v, p, cache, dh, dc, dx, ds, grads);
    CHECK(dx.max_abs() == 0.0);
    CHECK(ds.h.max_abs() == 0.0);
    CHECK(ds.c.max_abs() == 0.0);
    CHECK(grads.w_h.max_abs() == 0.0);
    CHECK(grads.w_x.max_abs() == 0.0);
  }
}

TEST_CASE("cell backward matches finite differences for all variants, H=X=16") {
  for (LstmVariant v : {LstmVariant::kVanilla, LstmVariant::kLayerNorm,
                        LstmVariant::kFullyNormalized}) {
    CAPTURE(variant_name(v));
    Rng rng(23);
    const std::size_t xd = 16, hd = 16, batch = 2;
    LstmStack stack = LstmStack::create(v, xd, hd, 1, rng);
    LstmCellParams& p = stack.layers[0];

    Tensor x = random_tensor({batch, xd}, rng, -1.0, 1.0);
    LstmState s0;
    s0.h = random_tensor({batch, hd}, rng, -1.0, 1.0);
    s0.c = random_tensor({batch, hd}, rng, -1.0, 1.0);
    Tensor wh = random_tensor({batch, hd}, rng, -1.0, 1.0);
    Tensor wc = random_tensor({batch, hd}, rng, -1.0, 1.0);

    auto loss = [&]() {
      LstmState s1 = cell_forward(v, p, x, s0);
      double acc = 0.0;
      for (std::size_t i = 0; i < s1.h.size(); ++i) {
        acc += wh[i] * s1.h[i] + wc[i] * s1.c[i];
      }
      return acc;
    };

    LstmCellCache cache;
    cell_forward(v, p, x, s0, &cache);
    Tensor dx;
    LstmState ds;
    LstmCellGrads grads = LstmCellGrads::zeros_like(p);
    cell_backward(v, p, cache, wh, wc, dx, ds, grads);

    auto check_tensor = [&](Tensor* target, const Tensor& analytic) {
      auto f = [&](const Tensor& probe) {
        Tensor saved = *target;
        *target = probe;
        double val = loss();
        *target = saved;
        return val;
      };
      return finite_difference_check(f, *target, analytic, 1e-5);
    };

    CHECK(check_tensor(&x, dx) <= 1e-4);
    CHECK(check_tensor(&s0.h, ds.h) <= 1e-4);
    CHECK(check_tensor(&s0.c, ds.c) <= 1e-4);
    CHECK(check_tensor(&p.w_h, grads.w_h) <= 1e-4);
    CHECK(check_tensor(&p.w_x, grads.w_x) <= 1e-4);
    CHECK(check_tensor(&p.b, grads.b) <= 1e-4);
    if (v != LstmVariant::kVanilla) {
      CHECK(check_tensor(&p.ln_h.gain, grads.ln_h.gain) <= 1e-4);
      CHECK(check_tensor(&p.ln_x.bias, grads.ln_x.bias) <= 1e-4);
      CHECK(check_tensor(&p.ln_c.gain, grads.ln_c.gain) <= 1e-4);
    }
    if (v == LstmVariant::kFullyNormalized) {
      CHECK(check_tensor(&p.ln_out.gain, grads.ln_out.gain) <= 1e-4);
      CHECK(check_tensor(&p.ln_out.bias, grads.ln_out.bias) <= 1e-4);
    }
  }
}

TEST_CASE("suppressed output gate: normalization restores gradient flow (Corollary 1)") {
  // Same weights, large negative output-gate bias. The fully normalized
  // cell's dh/dc Jacobian must dominate the vanilla one.
  Rng rng(31);
  const std::size_t xd = 8, hd = 16, batch = 1;
  LstmStack base = LstmStack::create(LstmVariant::kFullyNormalized, xd, hd, 1, rng);
  LstmCellParams p = base.layers[0];
  for (std::size_t j = 2 * hd; j < 3 * hd; ++j) p.b[j] = -4.0;  // o-gate block

  Tensor x = random_tensor({batch, xd}, rng, -1.0, 1.0);
  LstmState s0;
  s0.h = random_tensor({batch, hd}, rng, -1.0, 1.0);
  s0.c = random_tensor({batch, hd}, rng, -1.0, 1.0);

  auto jacobian_norm = [&](LstmVariant v) {
    LstmCellCache cache;
    cell_forward(v, p, x, s0, &cache);
    double sq = 0.0;
    Tensor dh{{batch, hd}}, dc{{batch, hd}}, dx;
    for (std::size_t j = 0; j < hd; ++j) {
      dh.zero();
      dc.zero();
      dh[j] = 1.0;
      LstmState ds;
      LstmCellGrads grads = LstmCellGrads::zeros_like(p);
      cell_backward(v, p, cache, dh, dc, dx, ds, grads);
      sq += ds.c.squared_norm();
    }
    return std::sqrt(sq);
  };

  const double fn = jacobian_norm(LstmVariant::kFullyNormalized);
  const double vn = jacobian_norm(LstmVariant::kVanilla);
  CHECK(fn > vn);
}

TEST_CASE("stack of depth 1 reduces to repeated cell calls") {
  Rng rng(41);
  LstmStack stack = LstmStack::create(LstmVariant::kLayerNorm, 4, 6, 1, rng);
  std::vector<Tensor> inputs;
  for (int t = 0; t < 3; ++t) inputs.push_back(random_tensor({2, 4}, rng));

  auto hs = stack_forward(stack, inputs);
  LstmState s = LstmState::zeros(2, 6);
  for (int t = 0; t < 3; ++t) {
    s = cell_forward(stack.variant, stack.layers[0], inputs[t], s);
    for (std::size_t i = 0; i < s.h.size(); ++i) {
      CHECK(hs[0][t][i] == doctest::Approx(s.h[i]));
    }
  }
}

TEST_CASE("single-step sequence equals one cell call") {
  Rng rng(43);
  LstmStack stack = LstmStack::create(LstmVariant::kFullyNormalized, 4, 6, 2, rng);
  std::vector<Tensor> inputs = {random_tensor({2, 4}, rng)};
  auto hs = stack_forward(stack, inputs);

  LstmState s0 = LstmState::zeros(2, 6);
  LstmState l0 = cell_forward(stack.variant, stack.layers[0], inputs[0], s0);
  LstmState l1 = cell_forward(stack.variant, stack.layers[1], l0.h, s0);
  for (std::size_t i = 0; i < l1.h.size(); ++i) {
    CHECK(hs[1][0][i] == doctest::Approx(l1.h[i]));
  }
  const std::vector<Tensor> empty_seq;
  CHECK_THROWS_AS(stack_forward(stack, empty_seq), std::invalid_argument);
}

TEST_CASE("stack end-to-end gradients vs finite differences, depth 2 T=5 H=8") {
  for (LstmVariant v : {LstmVariant::kVanilla, LstmVariant::kLayerNorm,
                        LstmVariant::kFullyNormalized}) {
    CAPTURE(variant_name(v));
    Rng rng(47);
    const std::size_t xd = 8, hd = 8, batch = 2, time = 5;
    LstmStack stack = LstmStack::create(v, xd, hd, 2, rng);
    std::vector<Tensor> inputs;
    for (std::size_t t = 0; t < time; ++t) {
      inputs.push_back(random_tensor({batch, xd}, rng, -1.0, 1.0));
    }
    Tensor w = random_tensor({batch, hd}, rng, -1.0, 1.0);

    auto loss = [&]() {
      auto hs = stack_forward(stack, inputs);
      std::vector<Tensor>* none = nullptr;
      (void)none;
      double acc = 0.0;
      for (const Tensor& hT : hs.back()) {
        for (std::size_t i = 0; i < hT.size(); ++i) acc += w[i] * hT[i];
      }
      return acc;
    };

    LstmStackCache cache;
    auto hs = stack_forward(stack, inputs, &cache);
    std::vector<Tensor> d_h(hs.back().size(), w);
    std::vector<Tensor> d_inputs;
    LstmStackGrads grads = LstmStackGrads::zeros_like(stack);
    stack_backward(stack, cache, d_h, &d_inputs, grads);

    auto check_tensor = [&](Tensor* target, const Tensor& analytic) {
      auto f = [&](const Tensor& probe) {
        Tensor saved = *target;
        *target = probe;
        double val = loss();
        *target = saved;
        return val;
      };
      return finite_difference_check(f, *target, analytic, 1e-5);
    };

    CHECK(check_tensor(&inputs[0], d_inputs[0]) <= 1e-4);
    CHECK(check_tensor(&inputs[time - 1], d_inputs[time - 1]) <= 1e-4);
    CHECK(check_tensor(&stack.layers[0].w_x, grads.layers[0].w_x) <= 1e-4);
    CHECK(check_tensor(&stack.layers[1].w_x, grads.layers[1].w_x) <= 1e-4);
    CHECK(check_tensor(&stack.layers[1].w_h, grads.layers[1].w_h) <= 1e-4);
    CHECK(check_tensor(&stack.layers[0].b, grads.layers[0].b) <= 1e-4);
  }
}

TEST_CASE("stack gradient checks across 10 seeds, all variants") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (LstmVariant v : {LstmVariant::kVanilla, LstmVariant::kLayerNorm,
                          LstmVariant::kFullyNormalized}) {
      CAPTURE(seed);
      CAPTURE(variant_name(v));
      Rng rng(1000 + seed);
      const std::size_t xd = 6, hd = 6, batch = 2, time = 3;
      LstmStack stack = LstmStack::create(v, xd, hd, 2, rng);
      std::vector<Tensor> inputs;
      for (std::size_t t = 0; t < time; ++t) {
        inputs.push_back(random_tensor({batch, xd}, rng, -2.0, 2.0));
      }
      Tensor w = random_tensor({batch, hd}, rng, -1.0, 1.0);

      auto loss = [&]() {
        auto hs = stack_forward(stack, inputs);
        double acc = 0.0;
        for (const Tensor& hT : hs.back()) {
          for (std::size_t i = 0; i < hT.size(); ++i) acc += w[i] * hT[i];
        }
        return acc;
      };

      LstmStackCache cache;
      auto hs = stack_forward(stack, inputs, &cache);
      std::vector<Tensor> d_h(hs.back().size(), w);
      LstmStackGrads grads = LstmStackGrads::zeros_like(stack);
      stack_backward(stack, cache, d_h, nullptr, grads);

      auto params = stack.named_parameters("s");
      auto grad_list = grads.named_grads(stack);
      REQUIRE(params.size() == grad_list.size());
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto f = [&](const Tensor& probe) {
          Tensor saved = *params[k].second;
          *params[k].second = probe;
          double val = loss();
          *params[k].second = saved;
          return val;
        };
        CAPTURE(params[k].first);
        CHECK(finite_difference_check(f, *params[k].second, *grad_list[k].second,
                                      1e-5) <= 1e-4);
      }
    }
  }
}

TEST_CASE("vanilla hidden state entries stay inside (-1, 1)") {
  Rng rng(53);
  LstmStack stack = LstmStack::create(LstmVariant::kVanilla, 8, 16, 2, rng);
  std::vector<Tensor> inputs;
  for (int t = 0; t < 8; ++t) inputs.push_back(random_tensor({4, 8}, rng, -3.0, 3.0));
  auto hs = stack_forward(stack, inputs);
  for (const auto& layer : hs) {
    for (const Tensor& h : layer) {
      for (std::size_t i = 0; i < h.size(); ++i) {
        CHECK(h[i] > -1.0);
        CHECK(h[i] < 1.0);
      }
    }
  }
}

TEST_CASE("forward and backward are deterministic given seed and variant") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    LstmStack stack = LstmStack::create(LstmVariant::kFullyNormalized, 4, 8, 2, rng);
    std::vector<Tensor> inputs;
    for (int t = 0; t < 4; ++t) inputs.push_back(random_tensor({2, 4}, rng));
    LstmStackCache cache;
    auto hs = stack_forward(stack, inputs, &cache);
    std::vector<Tensor> d_h(hs.back().size(), Tensor::full({2, 8}, 0.1));
    LstmStackGrads grads = LstmStackGrads::zeros_like(stack);
    stack_backward(stack, cache, d_h, nullptr, grads);
    return std::make_pair(hs.back().back(), grads.layers.back().w_x);
  };
  auto [h1, g1] = run(99);
  auto [h2, g2] = run(99);
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("grad_norm_probe basics and variant ordering") {
  const std::size_t xd = 24, hd = 24, batch = 4, time = 6;
  auto make_batches = [&](std::uint64_t seed, std::size_t count) {
    Rng rng(seed);
    std::vector<std::vector<Tensor>> batches;
    for (std::size_t b = 0; b < count; ++b) {
      std::vector<Tensor> seq;
      for (std::size_t t = 0; t < time; ++t) {
        Tensor x{{batch, xd}};
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        seq.push_back(std::move(x));
      }
      batches.push_back(std::move(seq));
    }
    return batches;
  };

  SUBCASE("zero loss function gives zero norms") {
    LstmStack stack = random_stack(LstmVariant::kVanilla, xd, hd, 2, 7);
    auto batches = make_batches(3, 4);
    ProbeLoss zero_loss = [](const std::vector<Tensor>& h_last,
                             std::vector<Tensor>& d_h) {
      d_h.assign(h_last.size(), Tensor{h_last.front().shape()});
      return 0.0;
    };
    auto norms = grad_norm_probe(stack, zero_loss, batches, 4);
    for (double n : norms) CHECK(n == 0.0);
  }

  SUBCASE("identical seeds and variant give identical norm sequences") {
    LstmStack stack = random_stack(LstmVariant::kLayerNorm, xd, hd, 2, 7);
    auto batches = make_batches(3, 6);
    Rng wseed(11);
    Tensor w = random_tensor({batch, hd}, wseed, -1.0, 1.0);
    ProbeLoss loss = [&](const std::vector<Tensor>& h_last, std::vector<Tensor>& d_h) {
      return projection_loss(h_last, w, &d_h);
    };
    auto n1 = grad_norm_probe(stack, loss, batches, 6);
    auto n2 = grad_norm_probe(stack, loss, batches, 6);
    REQUIRE(n1.size() == 6);
    for (std::size_t i = 0; i < n1.size(); ++i) CHECK(n1[i] == n2[i]);
  }

  SUBCASE("mean norm ordering: fully normalized > layer norm > vanilla") {
    std::vector<double> means(3, 0.0);
    const std::size_t n_batches = 20;
    int vi = 0;
    for (LstmVariant v : {LstmVariant::kFullyNormalized, LstmVariant::kLayerNorm,
                          LstmVariant::kVanilla}) {
      double acc = 0.0;
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        LstmStack stack = random_stack(v, xd, hd, 2, seed);
        auto batches = make_batches(100 + seed, n_batches);
        Rng wseed(200 + seed);
        Tensor w = random_tensor({batch, hd}, wseed, -1.0, 1.0);
        ProbeLoss loss = [&](const std::vector<Tensor>& h_last,
                             std::vector<Tensor>& d_h) {
          return projection_loss(h_last, w, &d_h);
        };
        auto norms = grad_norm_probe(stack, loss, batches, n_batches);
        double mean = 0.0;
        for (double n : norms) mean += n;
        acc += mean / static_cast<double>(norms.size());
      }
      means[vi++] = acc / 3.0;
    }
    CHECK(means[0] > means[1]);  // fully normalized > layer norm
    CHECK(means[1] > means[2]);  // layer norm > vanilla
  }
}
