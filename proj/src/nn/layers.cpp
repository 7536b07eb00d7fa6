#include "spd/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace spd::nn {

template <typename T>
Var<T> ParameterStore<T>::add_parameter(const std::string& name, Shape shape, Init init,
                                        int fan_in) {
  if (params_.count(name) != 0) throw std::logic_error("duplicate parameter name: " + name);
  Tensor<T> value(shape);
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      value.fill(T(1));
      break;
    case Init::kHeNormal: {
      if (fan_in <= 0) throw std::logic_error("He init needs a positive fan-in: " + name);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (std::size_t i = 0; i < value.size(); ++i) value[i] = static_cast<T>(dist(rng_));
      break;
    }
  }
  auto var = leaf(std::move(value));
  params_.emplace(name, var);
  return var;
}

template <typename T>
Tensor<T>& ParameterStore<T>::add_buffer(const std::string& name, Shape shape, T fill) {
  auto [it, inserted] = buffers_.emplace(name, Tensor<T>(shape, fill));
  if (!inserted) throw std::logic_error("duplicate buffer name: " + name);
  return it->second;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [_, p] : params_) total += p->value.size();
  return total;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count(const std::string& prefix) const {
  std::size_t total = 0;
  for (const auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) total += p->value.size();
  }
  return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [_, p] : params_) {
    if (p->has_grad()) p->grad.fill(T(0));
  }
}

template <typename T>
Conv2d<T> make_conv(ParameterStore<T>& store, const std::string& name, int cin, int cout,
                    ConvOptions opt) {
  if (cin <= 0 || cout <= 0) {
    throw std::invalid_argument("conv " + name + ": channel counts must be positive");
  }
  if (opt.kernel % 2 == 0) throw std::invalid_argument("conv " + name + ": kernel must be odd");
  Conv2d<T> conv;
  const int fan_in = cin * opt.kernel * opt.kernel;
  conv.weight = store.add_parameter(name + ".weight", Shape{cout, cin, opt.kernel, opt.kernel},
                                    opt.zero_init ? Init::kZeros : Init::kHeNormal, fan_in);
  if (opt.bias) conv.bias = store.add_parameter(name + ".bias", Shape{cout, 1, 1, 1}, Init::kZeros);
  conv.spec = ConvSpec{opt.stride, opt.dilation * (opt.kernel - 1) / 2, opt.dilation};
  return conv;
}

template <typename T>
BatchNorm2d<T> make_batch_norm(ParameterStore<T>& store, const std::string& name, int channels,
                               bool zero_gamma) {
  BatchNorm2d<T> bn;
  bn.gamma = store.add_parameter(name + ".gamma", Shape{channels, 1, 1, 1},
                                 zero_gamma ? Init::kZeros : Init::kOnes);
  bn.beta = store.add_parameter(name + ".beta", Shape{channels, 1, 1, 1}, Init::kZeros);
  bn.running_mean = &store.add_buffer(name + ".running_mean", Shape{channels, 1, 1, 1}, T(0));
  bn.running_var = &store.add_buffer(name + ".running_var", Shape{channels, 1, 1, 1}, T(1));
  return bn;
}

template <typename T>
ConvBnRelu<T> make_conv_bn_relu(ParameterStore<T>& store, const std::string& name, int cin,
                                int cout, ConvOptions opt) {
  opt.bias = false;
  return ConvBnRelu<T>{make_conv(store, name + ".conv", cin, cout, opt),
                       make_batch_norm(store, name + ".bn", cout)};
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Conv2d<float> make_conv(ParameterStore<float>&, const std::string&, int, int, ConvOptions);
template Conv2d<double> make_conv(ParameterStore<double>&, const std::string&, int, int, ConvOptions);
template BatchNorm2d<float> make_batch_norm(ParameterStore<float>&, const std::string&, int, bool);
template BatchNorm2d<double> make_batch_norm(ParameterStore<double>&, const std::string&, int, bool);
template ConvBnRelu<float> make_conv_bn_relu(ParameterStore<float>&, const std::string&, int, int,
                                             ConvOptions);
template ConvBnRelu<double> make_conv_bn_relu(ParameterStore<double>&, const std::string&, int, int,
                                              ConvOptions);

}  // namespace spd::nn
