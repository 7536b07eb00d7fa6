#pragma once

#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/nn/layers.hpp"

namespace spd::model {

using nn::Var;

template <typename T>
struct PoseInitial {
  Var<T> pose_context;    // (B, context_channels, h4, w4)
  Var<T> joint_heatmaps;  // (B, N, h4, w4) logits
  Var<T> initial_coords;  // (B, N, 1, 2), normalised (x, y)
};

template <typename T>
struct PoseBranchOutput {
  Var<T> pose_context;
  Var<T> joint_heatmaps;
  Var<T> initial_coords;
  Var<T> refined_heatmaps;
  Var<T> refined_coords;
};

/// Keypoint head over res4. The initial stage is eight convolutions: six
/// build the pose context, two produce heatmaps. Refinement re-renders the
/// initial coordinates as Gaussian maps (sigma one cell).
template <typename T>
class PoseBranch {
 public:
  PoseBranch(nn::ParameterStore<T>& store, const ModelConfig& config, int res4_channels,
             const std::string& prefix = "pose");

  PoseInitial<T> initial(const Var<T>& res4, bool training) const;

  /// `seg_context` must already be at res4 resolution, or null (zero-filled).
  /// Returns (refined heatmaps, refined coords).
  std::pair<Var<T>, Var<T>> refine(const Var<T>& pose_context, const Var<T>& initial_coords,
                                                 const Var<T>& seg_context, bool training) const;

 private:
  int num_joints_;
  int context_channels_;
  std::vector<nn::ConvBnRelu<T>> context_layers_;
  nn::ConvBnRelu<T> initial_hidden_;
  nn::Conv2d<T> initial_head_;
  std::vector<nn::ConvBnRelu<T>> refine_levels_;
  nn::ConvBnRelu<T> refine_hidden_;
  nn::Conv2d<T> refine_head_;
};

/// Normalised (B, N, 1, 2) coordinates to pixel skeletons: x*(W-1), y*(H-1),
/// every joint marked visible.
template <typename T>
std::vector<Skeleton> to_pixels(const nn::Tensor<T>& coords, int height, int width);

}  // namespace spd::model
