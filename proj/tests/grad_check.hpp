#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spd/nn/autograd.hpp"

namespace spd::test {

using nn::Shape;
using nn::Tensor;
using nn::Var;

inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

/// Scalar projection sum_i w_i * y_i, used to reduce an op's output.
inline Var<double> project(const Var<double>& y, const Tensor<double>& w) {
  double total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i] * y->value[i];
  return nn::make_result<double>(Tensor<double>(Shape{1, 1, 1, 1}, total), {y}, [y, w](nn::Node<double>& self) {
    auto& d = y->grad_buffer();
    for (std::size_t i = 0; i < w.size(); ++i) d[i] += self.grad[0] * w[i];
  });
}

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
};

/// Compares reverse-mode gradients of `f` w.r.t. every element of `inputs`
/// against central differences. Relative error uses max(|a|, |n|, floor).
inline GradCheckResult grad_check(const std::vector<Var<double>>& inputs,
                                  const std::function<Var<double>()>& f, double step = 1e-5,
                                  double floor = 1e-6) {
  for (const auto& in : inputs) {
    in->requires_grad = true;
    in->grad = Tensor<double>();
  }
  Var<double> out = f();
  nn::backward(out);
  GradCheckResult r;
  for (const auto& in : inputs) {
    const Tensor<double> analytic = in->has_grad() ? in->grad : Tensor<double>(in->value.shape());
    for (std::size_t i = 0; i < in->value.size(); ++i) {
      const double saved = in->value[i];
      in->value[i] = saved + step;
      const double up = f()->value[0];
      in->value[i] = saved - step;
      const double down = f()->value[0];
      in->value[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      r.max_rel_error = std::max(r.max_rel_error, abs_err / scale);
    }
  }
  return r;
}

}  // namespace spd::test
