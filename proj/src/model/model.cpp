#include "spd/model/model.hpp"

#include <stdexcept>

namespace spd::model {

namespace {

const ModelConfig& checked(const ModelConfig& c) {
  check_config(c);
  return c;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config)
    : config_(checked(config)),
      store_(config.seed),
      backbone_(store_, config_),
      seg_(store_, config_, backbone_.res5_channels()) {
  if (has_pose(config_.variant)) pose_.emplace(store_, config_, backbone_.res4_channels());
  if (has_dense(config_.variant)) dense_.emplace(store_, config_, backbone_.res4_channels());
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Var<T>& images, bool training) const {
  const nn::Shape s = images->value.shape();
  if (s.h % kInputDivisor != 0 || s.w % kInputDivisor != 0) {
    throw std::invalid_argument("input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                " must have dims divisible by " + std::to_string(kInputDivisor));
  }
  ModelOutput<T> out;
  out.features = backbone_.forward(images, training);
  const Var<T>& res4 = out.features.res4;
  const Var<T>& res5 = out.features.res5;
  const nn::Shape s4 = res4->value.shape();
  const nn::Shape s5 = res5->value.shape();

  SegInitial<T> seg0 = seg_.initial(res5, training);
  out.seg.initial_logits = seg0.initial_logits;
  out.seg.seg_context = seg0.seg_context;

  Var<T> pose_ctx_at_res5;
  if (pose_) {
    PoseInitial<T> p0 = pose_->initial(res4, training);
    pose_ctx_at_res5 = nn::avg_pool(p0.pose_context, s4.h / s5.h);
    Var<T> seg_ctx_at_res4 = nn::resize_bilinear(seg0.seg_context, s4.h, s4.w);
    auto [heatmaps, coords] = pose_->refine(p0.pose_context, p0.initial_coords, seg_ctx_at_res4, training);
    out.pose = PoseBranchOutput<T>{p0.pose_context, p0.joint_heatmaps, p0.initial_coords, heatmaps, coords};
  }
  out.seg.final_logits = seg_.refine(seg0.seg_context, seg0.initial_logits, pose_ctx_at_res5, images, training);
  if (dense_) out.dense = dense_->forward(res4, s.h, s.w, training);
  return out;
}

template <typename T>
std::unique_ptr<Model<T>> build_variant(const ModelConfig& config) {
  return std::make_unique<Model<T>>(config);
}

template <typename T>
nn::Tensor<T> stack_images(const std::vector<const AnnotatedSample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int h = batch.front()->image.height;
  const int w = batch.front()->image.width;
  nn::Tensor<T> out(nn::Shape{static_cast<int>(batch.size()), 3, h, w});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Image& im = batch[b]->image;
    if (im.height != h || im.width != w) {
      throw std::invalid_argument("sample " + batch[b]->sample_id + " has dims " + std::to_string(im.height) + "x" +
                                  std::to_string(im.width) + ", batch expects " + std::to_string(h) + "x" +
                                  std::to_string(w));
    }
    std::copy(im.data.begin(), im.data.end(), out.data() + b * im.data.size());
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template std::unique_ptr<Model<float>> build_variant<float>(const ModelConfig&);
template std::unique_ptr<Model<double>> build_variant<double>(const ModelConfig&);
template nn::Tensor<float> stack_images<float>(const std::vector<const AnnotatedSample*>&);
template nn::Tensor<double> stack_images<double>(const std::vector<const AnnotatedSample*>&);

}  // namespace spd::model
