#include "spd/model/densepose_branch.hpp"

#include <algorithm>
#include <stdexcept>

namespace spd::model {

template <typename T>
DensePoseBranch<T>::DensePoseBranch(nn::ParameterStore<T>& store, const ModelConfig& config, int res4_channels,
                                    const std::string& prefix) {
  const int c = config.context_channels;
  trunk_.push_back(nn::make_conv_bn_relu(store, prefix + ".trunk0", 3 * res4_channels, c));
  trunk_.push_back(nn::make_conv_bn_relu(store, prefix + ".trunk1", c, c));
  part_head_ = nn::make_conv(store, prefix + ".part_head", c, config.num_parts + 1,
                             {.kernel = 1, .bias = true, .zero_init = true});
  uv_head_ = nn::make_conv(store, prefix + ".uv_head", c, 2, {.kernel = 1, .bias = true, .zero_init = true});
}

template <typename T>
DensePoseOutput<T> DensePoseBranch<T>::forward(const Var<T>& res4, int height, int width, bool training) const {
  const nn::Shape s = res4->value.shape();
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw std::invalid_argument("dense-pose pyramid needs res4 dims divisible by 4, got " + nn::to_string(s));
  }
  Var<T> half = nn::resize_bilinear(nn::avg_pool(res4, 2), s.h, s.w);
  Var<T> quarter = nn::resize_bilinear(nn::avg_pool(res4, 4), s.h, s.w);
  Var<T> x = nn::concat_channels<T>({res4, half, quarter});
  for (const auto& layer : trunk_) x = layer(x, training);
  DensePoseOutput<T> out;
  out.part_logits = nn::resize_bilinear(part_head_(x), height, width);
  out.uv = nn::sigmoid(nn::resize_bilinear(uv_head_(x), height, width));
  return out;
}

template <typename T>
std::vector<DensePoseMap> predict_densepose(const nn::Tensor<T>& part_logits, const nn::Tensor<T>& uv) {
  const nn::Shape s = part_logits.shape();
  const nn::Shape us = uv.shape();
  if (us.n != s.n || us.c != 2 || us.h != s.h || us.w != s.w) {
    throw std::invalid_argument("uv shape " + nn::to_string(us) + " does not match part logits " + nn::to_string(s));
  }
  const std::vector<int> idx = nn::argmax_channels(part_logits);
  std::vector<DensePoseMap> out;
  for (int n = 0; n < s.n; ++n) {
    DensePoseMap d;
    d.num_parts = s.c - 1;
    d.part_index = Raster<std::uint8_t>(s.h, s.w);
    d.u = Raster<float>(s.h, s.w);
    d.v = Raster<float>(s.h, s.w);
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const int part = idx[(static_cast<std::size_t>(n) * s.h + y) * s.w + x];
        d.part_index.at(y, x) = static_cast<std::uint8_t>(part);
        if (part == 0) continue;
        d.u.at(y, x) = std::clamp(static_cast<float>(uv.at(n, 0, y, x)), 0.0f, 1.0f);
        d.v.at(y, x) = std::clamp(static_cast<float>(uv.at(n, 1, y, x)), 0.0f, 1.0f);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

template class DensePoseBranch<float>;
template class DensePoseBranch<double>;
template std::vector<DensePoseMap> predict_densepose<float>(const nn::Tensor<float>&, const nn::Tensor<float>&);
template std::vector<DensePoseMap> predict_densepose<double>(const nn::Tensor<double>&, const nn::Tensor<double>&);

}  // namespace spd::model
