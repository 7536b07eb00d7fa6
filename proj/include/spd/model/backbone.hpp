#pragma once

#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/nn/layers.hpp"

namespace spd::model {

using nn::Var;

template <typename T>
struct BackboneFeatures {
  Var<T> res4;  // stride 8
  Var<T> res5;  // stride 16
};

/// Basic residual unit: two 3x3 conv+BN with an identity or projection
/// shortcut. The second BN scale starts at zero.
template <typename T>
struct ResidualUnit {
  nn::ConvBnRelu<T> first;
  nn::Conv2d<T> second;
  nn::BatchNorm2d<T> second_bn;
  bool projection = false;
  nn::Conv2d<T> shortcut;
  nn::BatchNorm2d<T> shortcut_bn;

  Var<T> operator()(const Var<T>& x, bool training) const;
};

/// Five residual stages. Stage 1 is a stride-2 stem followed by units whose
/// first convolution also has stride 2; stages 3 and 5 downsample by 2.
template <typename T>
class Backbone {
 public:
  static constexpr int kRes4Stride = 8;
  static constexpr int kRes5Stride = 16;

  Backbone(nn::ParameterStore<T>& store, const ModelConfig& config, const std::string& prefix = "backbone");

  /// `image` is (B, 3, H, W) with H and W divisible by 16.
  BackboneFeatures<T> forward(const Var<T>& image, bool training) const;

  [[nodiscard]] int res4_channels() const { return widths_[3]; }
  [[nodiscard]] int res5_channels() const { return widths_[4]; }
  [[nodiscard]] std::size_t parameter_count() const { return store_->parameter_count(prefix_ + "."); }

 private:
  nn::ParameterStore<T>* store_;
  std::string prefix_;
  std::vector<int> widths_;
  nn::ConvBnRelu<T> stem_;
  std::vector<std::vector<ResidualUnit<T>>> stages_;
};

}  // namespace spd::model
