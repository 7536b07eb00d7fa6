#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "spd/nn/ops.hpp"

namespace spd::nn {

enum class Init { kHeNormal, kZeros, kOnes };

/// Owns every learnable parameter and non-learnable buffer of a model under
/// hierarchical dot-separated names ("backbone.stage2.unit0.conv1.weight").
/// Initialisation draws from a single seeded engine in creation order.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

  Var<T> add_parameter(const std::string& name, Shape shape, Init init, int fan_in = 0);
  Tensor<T>& add_buffer(const std::string& name, Shape shape, T fill);

  [[nodiscard]] const std::map<std::string, Var<T>>& parameters() const { return params_; }
  [[nodiscard]] std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
  [[nodiscard]] const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

  [[nodiscard]] std::size_t parameter_count() const;
  /// Scalar count of parameters whose name starts with `prefix`.
  [[nodiscard]] std::size_t parameter_count(const std::string& prefix) const;
  void zero_grad();

 private:
  std::mt19937_64 rng_;
  std::map<std::string, Var<T>> params_;
  std::map<std::string, Tensor<T>> buffers_;
};

template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;  // may be null
  ConvSpec spec;

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, spec); }
};

struct ConvOptions {
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  bool bias = false;
  bool zero_init = false;
};

/// "Same" padding for odd kernels: pad = dilation * (kernel - 1) / 2.
template <typename T>
Conv2d<T> make_conv(ParameterStore<T>& store, const std::string& name, int cin, int cout,
                    ConvOptions opt = {});

template <typename T>
struct BatchNorm2d {
  Var<T> gamma;
  Var<T> beta;
  Tensor<T>* running_mean = nullptr;
  Tensor<T>* running_var = nullptr;

  Var<T> operator()(const Var<T>& x, bool training) const {
    return batch_norm(x, gamma, beta, *running_mean, *running_var, training);
  }
};

template <typename T>
BatchNorm2d<T> make_batch_norm(ParameterStore<T>& store, const std::string& name, int channels,
                               bool zero_gamma = false);

/// conv (no bias) -> batch norm -> ReLU.
template <typename T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  Var<T> operator()(const Var<T>& x, bool training) const { return relu(bn(conv(x), training)); }
};

template <typename T>
ConvBnRelu<T> make_conv_bn_relu(ParameterStore<T>& store, const std::string& name, int cin,
                                int cout, ConvOptions opt = {});

}  // namespace spd::nn
