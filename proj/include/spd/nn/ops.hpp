#pragma once

#include <vector>

#include "spd/nn/autograd.hpp"

namespace spd::nn {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// 2-D cross-correlation. `weight` is (Cout, Cin, kh, kw); `bias` may be null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvSpec spec);

/// Batch normalisation over (N, H, W) per channel. Training mode normalises
/// with batch statistics and updates the running averages in place.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                  T momentum = T(0.1), T eps = T(1e-5));

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// Concatenation along the channel axis; all inputs share N, H, W.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// Non-overlapping k x k average pooling; H and W must be divisible by k.
template <typename T>
Var<T> avg_pool(const Var<T>& x, int k);

/// Bilinear resampling with half-pixel centres (edge clamped).
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w);

/// Spatial soft-argmax. Input (B, N, H, W) logits, output (B, N, 1, 2)
/// holding the expected (x, y) under the per-channel softmax, with cell
/// centres placed on the grid j / (W - 1), i / (H - 1).
template <typename T>
Var<T> soft_argmax(const Var<T>& logits);

/// Renders normalised coordinates (B, N, 1, 2) as Gaussian bumps on an
/// (H, W) grid, sigma in cells. Differentiable w.r.t. the coordinates.
template <typename T>
Var<T> render_gaussians(const Var<T>& coords, int h, int w, T sigma);

/// Scalar sum of weighted scalar nodes (null entries are skipped).
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights);

/// Softmax over the channel axis (no graph).
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

/// Per-pixel channel argmax, ties resolved toward the lower index. Indices
/// are laid out as (N, H, W).
template <typename T>
std::vector<int> argmax_channels(const Tensor<T>& logits);

}  // namespace spd::nn
