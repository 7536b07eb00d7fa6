#pragma once

#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/nn/layers.hpp"

namespace spd::model {

using nn::Var;

template <typename T>
struct DensePoseOutput {
  Var<T> part_logits;  // (B, P+1, H, W)
  Var<T> uv;           // (B, 2, H, W), sigmoid-bounded
};

/// Dense-pose head over res4: average-pool pyramid at scales 1, 1/2 and 1/4,
/// a two-layer trunk, then sibling classification and UV heads upsampled
/// to input resolution.
template <typename T>
class DensePoseBranch {
 public:
  DensePoseBranch(nn::ParameterStore<T>& store, const ModelConfig& config, int res4_channels,
                  const std::string& prefix = "dense");

  /// Requires res4 spatial dims divisible by 4.
  DensePoseOutput<T> forward(const Var<T>& res4, int height, int width, bool training) const;

 private:
  std::vector<nn::ConvBnRelu<T>> trunk_;
  nn::Conv2d<T> part_head_;
  nn::Conv2d<T> uv_head_;
};

/// Argmax part index (ties to the lower index); u, v copied on foreground,
/// zero on background, clamped to [0, 1].
template <typename T>
std::vector<DensePoseMap> predict_densepose(const nn::Tensor<T>& part_logits, const nn::Tensor<T>& uv);

}  // namespace spd::model
