#include "spd/model/pose_branch.hpp"

#include <stdexcept>

namespace spd::model {

template <typename T>
PoseBranch<T>::PoseBranch(nn::ParameterStore<T>& store, const ModelConfig& config, int res4_channels,
                          const std::string& prefix)
    : num_joints_(config.num_joints), context_channels_(config.context_channels) {
  const int c = config.context_channels;
  const int n = config.num_joints;
  int cin = res4_channels;
  for (int i = 0; i < 6; ++i) {
    context_layers_.push_back(nn::make_conv_bn_relu(store, prefix + ".initial" + std::to_string(i), cin, c));
    cin = c;
  }
  initial_hidden_ = nn::make_conv_bn_relu(store, prefix + ".initial6", c, c);
  initial_head_ = nn::make_conv(store, prefix + ".initial7", c, n, {.kernel = 1, .bias = true, .zero_init = true});

  cin = n + c + c;
  for (int i = 0; i < 4; ++i) {
    refine_levels_.push_back(nn::make_conv_bn_relu(store, prefix + ".refine" + std::to_string(i), cin, c));
    cin = c;
  }
  refine_hidden_ = nn::make_conv_bn_relu(store, prefix + ".refine4", c, c);
  refine_head_ = nn::make_conv(store, prefix + ".refine5", c, n, {.kernel = 1, .bias = true, .zero_init = true});
}

template <typename T>
PoseInitial<T> PoseBranch<T>::initial(const Var<T>& res4, bool training) const {
  PoseInitial<T> out;
  Var<T> x = res4;
  for (const auto& layer : context_layers_) x = layer(x, training);
  out.pose_context = x;
  out.joint_heatmaps = initial_head_(initial_hidden_(x, training));
  out.initial_coords = nn::soft_argmax(out.joint_heatmaps);
  return out;
}

template <typename T>
std::pair<Var<T>, Var<T>> PoseBranch<T>::refine(const Var<T>& pose_context, const Var<T>& initial_coords,
                                                const Var<T>& seg_context, bool training) const {
  const nn::Shape s = pose_context->value.shape();
  Var<T> seg = seg_context;
  if (!seg) seg = nn::constant(nn::Tensor<T>(nn::Shape{s.n, context_channels_, s.h, s.w}));
  const nn::Shape ss = seg->value.shape();
  if (ss.n != s.n || ss.h != s.h || ss.w != s.w) {
    throw std::invalid_argument("pose refinement inputs differ in shape: pose context " + nn::to_string(s) +
                                ", segmentation context " + nn::to_string(ss));
  }
  const nn::Shape cs = initial_coords->value.shape();
  if (cs.n != s.n || cs.c != num_joints_ || cs.h != 1 || cs.w != 2) {
    throw std::invalid_argument("initial coordinates have shape " + nn::to_string(cs));
  }
  Var<T> rendered = nn::render_gaussians(initial_coords, s.h, s.w, T(1));
  Var<T> x = nn::concat_channels<T>({rendered, pose_context, seg});
  for (const auto& layer : refine_levels_) x = layer(x, training);
  Var<T> heatmaps = refine_head_(refine_hidden_(x, training));
  return {heatmaps, nn::soft_argmax(heatmaps)};
}

template <typename T>
std::vector<Skeleton> to_pixels(const nn::Tensor<T>& coords, int height, int width) {
  const nn::Shape s = coords.shape();
  std::vector<Skeleton> out(s.n);
  for (int b = 0; b < s.n; ++b) {
    for (int j = 0; j < s.c; ++j) {
      out[b].joints.push_back(Joint{static_cast<double>(coords.at(b, j, 0, 0)) * (width - 1),
                                    static_cast<double>(coords.at(b, j, 0, 1)) * (height - 1), true});
    }
  }
  return out;
}

template class PoseBranch<float>;
template class PoseBranch<double>;
template std::vector<Skeleton> to_pixels<float>(const nn::Tensor<float>&, int, int);
template std::vector<Skeleton> to_pixels<double>(const nn::Tensor<double>&, int, int);

}  // namespace spd::model
