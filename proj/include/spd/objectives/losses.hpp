#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/nn/autograd.hpp"

namespace spd::objectives {

using nn::Var;

/// Mean over pixels of -log softmax(logits)[target]. Throws
/// std::invalid_argument for a target class >= K or mismatched dims.
template <typename T>
Var<T> seg_loss(const Var<T>& logits, const std::vector<SegMask>& targets);

template <typename T>
struct PoseLoss {
  Var<T> value;
  bool supervised = false;  // false when no joint in the batch is visible
};

/// (1 / 2N) * sum of squared distances over visible joints, N the visible
/// count, with targets normalised by (W - 1, H - 1). `coords` is (B, J, 1, 2).
template <typename T>
PoseLoss<T> pose_loss(const Var<T>& coords, const std::vector<Skeleton>& targets, int height, int width);

/// Huber penalty, quadratic below `delta`.
double huber(double r, double delta);

/// Dense-pose loss. Foreground pixels (annotated part > 0) contribute
/// cse * huber (product form) or cse + huber (sum form), huber summed over
/// u and v; these are averaged over foreground pixels. Background pixels
/// contribute cse alone, averaged separately. Samples without a dense-pose
/// annotation are skipped; with none at all the loss is 0.
template <typename T>
Var<T> dense_loss(const Var<T>& part_logits, const Var<T>& uv, const std::vector<const DensePoseMap*>& targets,
                  DenseLossForm form = DenseLossForm::kProduct, double delta = 1.0);

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_p = 0.8;
  double lambda_d = 0.6;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double l_seg = 0.0;
  double l_pose = 0.0;
  double l_dense = 0.0;
  double total = 0.0;
  LossWeights weights;
  bool operator==(const LossBreakdown&) const = default;
};

/// Weights for the config's variant; ablated tasks get weight 0.
LossWeights weights_for(const ModelConfig& config);

/// Combines task losses. Absent tasks (nullopt or zero weight) contribute
/// exactly 0 and are logged as 0. Throws for negative weights.
LossBreakdown joint_loss(double l_seg, std::optional<double> l_pose, std::optional<double> l_dense,
                         const LossWeights& weights);

/// Graph form of the weighted sum; null terms are skipped.
template <typename T>
Var<T> joint_loss_graph(const Var<T>& l_seg, const Var<T>& l_pose, const Var<T>& l_dense, const LossWeights& w);

/// "iteration=3 l_seg=... l_pose=... l_dense=... total=..." with
/// round-trip precision.
std::string format_log_line(long iteration, const LossBreakdown& b);

}  // namespace spd::objectives
