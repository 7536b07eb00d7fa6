#pragma once

#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/nn/layers.hpp"

namespace spd::model {

using nn::Var;

/// One 3x3 dilated conv per rate plus a 1x1 conv, concatenated and
/// projected back to `width` channels. Spatial dims are preserved.
template <typename T>
struct Aspp {
  std::vector<int> rates;
  std::vector<nn::ConvBnRelu<T>> dilated;
  nn::ConvBnRelu<T> pointwise;
  nn::ConvBnRelu<T> project;

  /// Throws std::invalid_argument if a rate exceeds the feature extent.
  Var<T> operator()(const Var<T>& x, bool training) const;
};

/// Throws std::invalid_argument for an empty rate list or a rate below 1.
template <typename T>
Aspp<T> make_aspp(nn::ParameterStore<T>& store, const std::string& name, int cin, int width,
                  const std::vector<int>& rates);

template <typename T>
struct SegInitial {
  Var<T> initial_logits;  // (B, K, h5, w5)
  Var<T> seg_context;     // (B, context_channels, h5, w5)
};

template <typename T>
struct SegBranchOutput {
  Var<T> initial_logits;
  Var<T> seg_context;
  Var<T> final_logits;  // (B, K, H, W)
};

/// Segmentation head over res5. Refinement runs at res5 resolution; its
/// logits are upsampled and corrected by a full-resolution detail head
/// driven by the input image. The detail head's output layer starts at
/// zero, so at initialisation the final logits equal the upsampled ones.
template <typename T>
class SegBranch {
 public:
  SegBranch(nn::ParameterStore<T>& store, const ModelConfig& config, int res5_channels,
            const std::string& prefix = "seg");

  SegInitial<T> initial(const Var<T>& res5, bool training) const;

  /// `pose_context` must be at res5 resolution or null (zero-filled).
  Var<T> refine(const Var<T>& seg_context, const Var<T>& initial_logits,
                              const Var<T>& pose_context, const Var<T>& image, bool training) const;

  [[nodiscard]] int num_refine_inputs() const { return 3; }

 private:
  int num_classes_;
  int context_channels_;
  Aspp<T> aspp_initial_;
  nn::Conv2d<T> initial_head_;
  std::vector<nn::ConvBnRelu<T>> context_path_;
  std::vector<nn::ConvBnRelu<T>> refine_levels_;
  nn::Conv2d<T> refine_reshape_;
  Aspp<T> aspp_refine_;
  nn::Conv2d<T> refine_head_;
  std::vector<nn::ConvBnRelu<T>> detail_path_;
  nn::Conv2d<T> detail_fuse_;
  nn::Conv2d<T> detail_head_;
};

/// Per-pixel argmax decode, ties toward the lower class index.
template <typename T>
std::vector<SegMask> predict_mask(const nn::Tensor<T>& final_logits);

}  // namespace spd::model
