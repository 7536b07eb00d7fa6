#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "spd/nn/layers.hpp"
#include "spd/nn/ops.hpp"

using namespace spd;
using namespace spd::nn;
using spd::test::grad_check;
using spd::test::project;
using spd::test::random_tensor;

namespace {

// Naive direct convolution oracle.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                           ConvSpec spec) {
  const Shape xs = x.shape(), ws = w.shape();
  const int ho = (xs.h + 2 * spec.pad - ((ws.h - 1) * spec.dilation + 1)) / spec.stride + 1;
  const int wo = (xs.w + 2 * spec.pad - ((ws.w - 1) * spec.dilation + 1)) / spec.stride + 1;
  Tensor<double> out(Shape{xs.n, ws.n, ho, wo});
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b ? (*b)[co] : 0.0;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * spec.stride - spec.pad + ky * spec.dilation;
                const int ix = ox * spec.stride - spec.pad + kx * spec.dilation;
                if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
              }
          out.at(n, co, oy, ox) = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution oracle") {
  std::mt19937_64 rng(1);
  for (ConvSpec spec : {ConvSpec{1, 1, 1}, ConvSpec{2, 1, 1}, ConvSpec{1, 2, 2}, ConvSpec{1, 0, 1}}) {
    for (int k : {1, 3}) {
      auto x = constant(random_tensor(Shape{2, 3, 7, 6}, rng));
      auto w = constant(random_tensor(Shape{4, 3, k, k}, rng));
      auto b = constant(random_tensor(Shape{4, 1, 1, 1}, rng));
      const auto y = conv2d(x, w, b, spec);
      const auto ref = conv_oracle(x->value, w->value, &b->value, spec);
      REQUIRE(y->value.shape() == ref.shape());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  std::mt19937_64 rng(2);
  for (ConvSpec spec : {ConvSpec{1, 1, 1}, ConvSpec{2, 1, 1}, ConvSpec{1, 2, 2}, ConvSpec{1, 0, 1}}) {
    const int k = spec.pad == 0 ? 1 : 3;
    auto x = constant(random_tensor(Shape{2, 2, 5, 5}, rng));
    auto w = constant(random_tensor(Shape{3, 2, k, k}, rng));
    auto b = constant(random_tensor(Shape{3, 1, 1, 1}, rng));
    const auto probe = conv2d(x, w, b, spec);
    const auto proj = random_tensor(probe->value.shape(), rng);
    const auto r = grad_check({x, w, b}, [&] { return project(conv2d(x, w, b, spec), proj); });
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("batch_norm gradients in training and eval mode") {
  std::mt19937_64 rng(3);
  for (bool training : {true, false}) {
    auto x = constant(random_tensor(Shape{3, 2, 3, 3}, rng));
    auto g = constant(random_tensor(Shape{2, 1, 1, 1}, rng, 0.5, 1.5));
    auto b = constant(random_tensor(Shape{2, 1, 1, 1}, rng));
    Tensor<double> rm(Shape{2, 1, 1, 1}, 0.1), rv(Shape{2, 1, 1, 1}, 1.3);
    const auto proj = random_tensor(x->value.shape(), rng);
    const auto r = grad_check({x, g, b}, [&] { return project(batch_norm(x, g, b, rm, rv, training), proj); });
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("batch_norm normalises batch statistics and updates running averages") {
  std::mt19937_64 rng(4);
  auto x = constant(random_tensor(Shape{4, 1, 2, 2}, rng, 2.0, 4.0));
  auto g = constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  auto b = constant(Tensor<double>(Shape{1, 1, 1, 1}, 0.0));
  Tensor<double> rm(Shape{1, 1, 1, 1}, 0.0), rv(Shape{1, 1, 1, 1}, 1.0);
  const auto y = batch_norm(x, g, b, rm, rv, true);
  double mean = 0, sq = 0;
  for (double v : y->value.vec()) mean += v;
  mean /= 16;
  for (double v : y->value.vec()) sq += (v - mean) * (v - mean);
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sq / 16 == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(rm[0] > 0.2);
}

TEST_CASE("elementwise, pooling and resampling gradients") {
  std::mt19937_64 rng(5);
  auto x = constant(random_tensor(Shape{2, 3, 4, 4}, rng));
  auto y = constant(random_tensor(Shape{2, 3, 4, 4}, rng));
  auto z = constant(random_tensor(Shape{2, 1, 4, 4}, rng));

  const auto p44 = random_tensor(Shape{2, 3, 4, 4}, rng);
  CHECK(grad_check({x}, [&] { return project(relu(x), p44); }).max_rel_error < 1e-6);
  CHECK(grad_check({x}, [&] { return project(sigmoid(x), p44); }).max_rel_error < 1e-6);
  CHECK(grad_check({x, y}, [&] { return project(add(x, y), p44); }).max_rel_error < 1e-6);
  CHECK(grad_check({x}, [&] { return project(scale(x, 0.7), p44); }).max_rel_error < 1e-6);

  const auto pc = random_tensor(Shape{2, 4, 4, 4}, rng);
  CHECK(grad_check({x, z}, [&] { return project(concat_channels<double>({x, z}), pc); }).max_rel_error < 1e-6);

  const auto pp = random_tensor(Shape{2, 3, 2, 2}, rng);
  CHECK(grad_check({x}, [&] { return project(avg_pool(x, 2), pp); }).max_rel_error < 1e-6);

  const auto pu = random_tensor(Shape{2, 3, 9, 7}, rng);
  CHECK(grad_check({x}, [&] { return project(resize_bilinear(x, 9, 7), pu); }).max_rel_error < 1e-6);
}

TEST_CASE("avg_pool and resize_bilinear shapes and constants") {
  auto x = constant(Tensor<double>(Shape{1, 2, 4, 4}, 3.0));
  CHECK(avg_pool(x, 4)->value.shape() == Shape{1, 2, 1, 1});
  CHECK(avg_pool(x, 2)->value[0] == 3.0);
  CHECK_THROWS_AS(avg_pool(x, 3), std::invalid_argument);
  const auto up = resize_bilinear(x, 64, 64);
  CHECK(up->value.shape() == Shape{1, 2, 64, 64});
  for (double v : up->value.vec()) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("soft_argmax: uniform map decodes to the centre") {
  auto x = constant(Tensor<double>(Shape{1, 2, 8, 8}, 0.0));
  const auto c = soft_argmax(x);
  CHECK(c->value.shape() == Shape{1, 2, 1, 2});
  for (double v : c->value.vec()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("soft_argmax: sharp one-hot at the top-left decodes within one cell of the origin") {
  Tensor<double> t(Shape{1, 1, 8, 8}, 0.0);
  t.at(0, 0, 0, 0) = 20.0;
  const auto c = soft_argmax(constant(t));
  // Oracle: direct expectation with softmax weights, cell width 1/7.
  double z = std::exp(20.0) + 63.0, ex = 0;
  for (int j = 0; j < 8; ++j) ex += (j == 0 ? 0 : 8.0) * (j / 7.0);
  ex /= z;
  CHECK(c->value[0] == doctest::Approx(ex).epsilon(1e-9));
  CHECK(c->value[0] < 1.0 / 7.0);
  CHECK(c->value[1] < 1.0 / 7.0);
}

TEST_CASE("soft_argmax: one-cell shift of a sharp peak moves the coordinate by one cell") {
  Tensor<double> a(Shape{1, 1, 8, 8}, -200.0), b(Shape{1, 1, 8, 8}, -200.0);
  a.at(0, 0, 3, 2) = 0.0;
  b.at(0, 0, 3, 3) = 0.0;
  const auto ca = soft_argmax(constant(a));
  const auto cb = soft_argmax(constant(b));
  CHECK(cb->value[0] - ca->value[0] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(cb->value[1] == doctest::Approx(ca->value[1]).epsilon(1e-12));
}

TEST_CASE("soft_argmax gradient matches central differences within 1e-4") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = constant(random_tensor(Shape{2, 3, 5, 6}, rng, -2.0, 2.0));
    const auto p = random_tensor(Shape{2, 3, 1, 2}, rng);
    CHECK(grad_check({x}, [&] { return project(soft_argmax(x), p); }).max_rel_error < 1e-4);
  }
}

TEST_CASE("render_gaussians peaks at the coordinate and is differentiable") {
  Tensor<double> c(Shape{1, 1, 1, 2});
  c[0] = 2.0 / 7.0;
  c[1] = 5.0 / 7.0;
  const auto m = render_gaussians(constant(c), 8, 8, 1.0);
  CHECK(m->value.at(0, 0, 5, 2) == doctest::Approx(1.0));
  CHECK(m->value.at(0, 0, 5, 3) == doctest::Approx(std::exp(-0.5)));

  std::mt19937_64 rng(7);
  auto coords = constant(random_tensor(Shape{2, 3, 1, 2}, rng, 0.0, 1.0));
  const auto p = random_tensor(Shape{2, 3, 6, 5}, rng);
  CHECK(grad_check({coords}, [&] { return project(render_gaussians(coords, 6, 5, 1.0), p); }).max_rel_error <
        1e-6);
}

TEST_CASE("weighted_sum skips absent terms") {
  auto a = leaf(Tensor<double>(Shape{1, 1, 1, 1}, 2.0));
  auto b = leaf(Tensor<double>(Shape{1, 1, 1, 1}, 3.0));
  const auto s = weighted_sum<double>({a, nullptr, b}, {0.5, 10.0, 2.0});
  CHECK(s->value[0] == doctest::Approx(7.0));
  backward(s);
  CHECK(a->grad[0] == doctest::Approx(0.5));
  CHECK(b->grad[0] == doctest::Approx(2.0));
}

TEST_CASE("argmax_channels ties resolve to the lower index") {
  Tensor<float> t(Shape{1, 6, 1, 2}, 0.0f);
  t.at(0, 2, 0, 0) = 1.0f;
  t.at(0, 5, 0, 0) = 1.0f;
  t.at(0, 3, 0, 1) = 2.0f;
  const auto idx = argmax_channels(t);
  CHECK(idx == std::vector<int>{2, 3});
}

TEST_CASE("softmax_channels sums to one per pixel") {
  std::mt19937_64 rng(8);
  const auto p = softmax_channels(random_tensor(Shape{2, 5, 3, 3}, rng, -10, 10));
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        double s = 0;
        for (int c = 0; c < 5; ++c) s += p.at(n, c, y, x);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
}

TEST_CASE("no-grad mode records no graph") {
  auto w = leaf(Tensor<double>(Shape{1, 1, 1, 1}, 2.0));
  auto x = constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0));
  {
    NoGradGuard guard;
    const auto y = conv2d(x, w, Var<double>{}, ConvSpec{});
    CHECK_FALSE(y->requires_grad);
    CHECK(y->inputs.empty());
  }
  CHECK(conv2d(x, w, Var<double>{}, ConvSpec{})->requires_grad);
}

TEST_CASE("ParameterStore names are unique and initialisation is seeded") {
  ParameterStore<float> a(5), b(5);
  auto ca = make_conv(a, "c", 3, 4);
  auto cb = make_conv(b, "c", 3, 4);
  CHECK(ca.weight->value.vec() == cb.weight->value.vec());
  CHECK_THROWS_AS(make_conv(a, "c", 3, 4), std::logic_error);
  CHECK(a.parameter_count() == 4 * 3 * 9);
  CHECK_THROWS_AS(make_conv(a, "zero", 0, 4), std::invalid_argument);
}
