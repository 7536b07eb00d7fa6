#include "spd/model/seg_branch.hpp"

#include <stdexcept>

namespace spd::model {

template <typename T>
Var<T> Aspp<T>::operator()(const Var<T>& x, bool training) const {
  const nn::Shape s = x->value.shape();
  std::vector<Var<T>> branches;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] > std::min(s.h, s.w)) {
      throw std::invalid_argument("ASPP rate " + std::to_string(rates[i]) + " exceeds feature extent " +
                                  std::to_string(s.h) + "x" + std::to_string(s.w));
    }
    branches.push_back(dilated[i](x, training));
  }
  branches.push_back(pointwise(x, training));
  return project(nn::concat_channels(branches), training);
}

template <typename T>
Aspp<T> make_aspp(nn::ParameterStore<T>& store, const std::string& name, int cin, int width,
                  const std::vector<int>& rates) {
  if (rates.empty()) throw std::invalid_argument("ASPP needs at least one rate");
  Aspp<T> a;
  a.rates = rates;
  for (int r : rates) {
    if (r < 1) throw std::invalid_argument("ASPP rate " + std::to_string(r) + " must be >= 1");
    a.dilated.push_back(nn::make_conv_bn_relu(store, name + ".rate" + std::to_string(r), cin, width,
                                              {.kernel = 3, .dilation = r}));
  }
  a.pointwise = nn::make_conv_bn_relu(store, name + ".pointwise", cin, width, {.kernel = 1});
  a.project = nn::make_conv_bn_relu(store, name + ".project", width * static_cast<int>(rates.size() + 1), width,
                                    {.kernel = 1});
  return a;
}

template <typename T>
SegBranch<T>::SegBranch(nn::ParameterStore<T>& store, const ModelConfig& config, int res5_channels,
                        const std::string& prefix)
    : num_classes_(config.num_classes), context_channels_(config.context_channels) {
  const int k = config.num_classes;
  const int c = config.context_channels;
  const int a = config.aspp_width;
  const int d = config.detail_channels;
  aspp_initial_ = make_aspp(store, prefix + ".aspp_initial", res5_channels, a, config.aspp_rates);
  initial_head_ = nn::make_conv(store, prefix + ".initial_head", a, k, {.kernel = 1, .bias = true, .zero_init = true});
  context_path_.push_back(nn::make_conv_bn_relu(store, prefix + ".context0", res5_channels, c));
  context_path_.push_back(nn::make_conv_bn_relu(store, prefix + ".context1", c, c));

  int cin = c + k + c;
  for (int i = 0; i < 4; ++i) {
    refine_levels_.push_back(nn::make_conv_bn_relu(store, prefix + ".refine" + std::to_string(i), cin, a));
    cin = a;
  }
  refine_reshape_ = nn::make_conv(store, prefix + ".refine_reshape", a, a, {.kernel = 1, .bias = true});
  aspp_refine_ = make_aspp(store, prefix + ".aspp_refine", a, a, config.aspp_rates);
  refine_head_ = nn::make_conv(store, prefix + ".refine_head", a, k, {.kernel = 1, .bias = true, .zero_init = true});

  detail_path_.push_back(nn::make_conv_bn_relu(store, prefix + ".detail0", 3, d));
  detail_path_.push_back(nn::make_conv_bn_relu(store, prefix + ".detail1", d, d));
  detail_fuse_ = nn::make_conv(store, prefix + ".detail_fuse", k + d, 2 * d, {.kernel = 1, .bias = true});
  detail_head_ = nn::make_conv(store, prefix + ".detail_head", 2 * d, k, {.kernel = 1, .bias = true, .zero_init = true});
}

template <typename T>
SegInitial<T> SegBranch<T>::initial(const Var<T>& res5, bool training) const {
  SegInitial<T> out;
  out.initial_logits = initial_head_(aspp_initial_(res5, training));
  Var<T> ctx = res5;
  for (const auto& layer : context_path_) ctx = layer(ctx, training);
  out.seg_context = ctx;
  return out;
}

template <typename T>
Var<T> SegBranch<T>::refine(const Var<T>& seg_context, const Var<T>& initial_logits, const Var<T>& pose_context,
                            const Var<T>& image, bool training) const {
  const nn::Shape s = seg_context->value.shape();
  Var<T> pose = pose_context;
  if (!pose) pose = nn::constant(nn::Tensor<T>(nn::Shape{s.n, context_channels_, s.h, s.w}));
  const nn::Shape ps = pose->value.shape();
  const nn::Shape ls = initial_logits->value.shape();
  if (ps.h != s.h || ps.w != s.w || ls.h != s.h || ls.w != s.w || ps.n != s.n || ls.n != s.n) {
    throw std::invalid_argument("segmentation refinement inputs differ in resolution: context " + nn::to_string(s) +
                                ", logits " + nn::to_string(ls) + ", pose " + nn::to_string(ps));
  }
  Var<T> x = nn::concat_channels<T>({seg_context, initial_logits, pose});
  for (const auto& layer : refine_levels_) x = layer(x, training);
  x = aspp_refine_(nn::relu(refine_reshape_(x)), training);
  const nn::Shape is = image->value.shape();
  Var<T> logits = nn::resize_bilinear(refine_head_(x), is.h, is.w);

  Var<T> detail = image;
  for (const auto& layer : detail_path_) detail = layer(detail, training);
  Var<T> fused = nn::relu(detail_fuse_(nn::concat_channels<T>({logits, detail})));
  return nn::add(logits, detail_head_(fused));
}

template <typename T>
std::vector<SegMask> predict_mask(const nn::Tensor<T>& final_logits) {
  const nn::Shape s = final_logits.shape();
  const std::vector<int> idx = nn::argmax_channels(final_logits);
  std::vector<SegMask> out;
  for (int n = 0; n < s.n; ++n) {
    SegMask m;
    m.num_classes = s.c;
    m.labels = Raster<std::uint8_t>(s.h, s.w);
    for (std::size_t i = 0; i < s.plane(); ++i) m.labels.data[i] = static_cast<std::uint8_t>(idx[n * s.plane() + i]);
    out.push_back(std::move(m));
  }
  return out;
}

#define SPD_INSTANTIATE_SEG(T)                                                                           \
  template struct Aspp<T>;                                                                               \
  template Aspp<T> make_aspp<T>(nn::ParameterStore<T>&, const std::string&, int, int, const std::vector<int>&); \
  template class SegBranch<T>;                                                                           \
  template std::vector<SegMask> predict_mask<T>(const nn::Tensor<T>&);

SPD_INSTANTIATE_SEG(float)
SPD_INSTANTIATE_SEG(double)

}  // namespace spd::model
