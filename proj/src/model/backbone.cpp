#include "spd/model/backbone.hpp"

#include <stdexcept>

namespace spd::model {

template <typename T>
Var<T> ResidualUnit<T>::operator()(const Var<T>& x, bool training) const {
  Var<T> y = second_bn(second(first(x, training)), training);
  Var<T> skip = projection ? shortcut_bn(shortcut(x), training) : x;
  return nn::relu(nn::add(y, skip));
}

template <typename T>
Backbone<T>::Backbone(nn::ParameterStore<T>& store, const ModelConfig& config, const std::string& prefix)
    : store_(&store), prefix_(prefix) {
  check_config(config);
  for (const StageSpec& s : config.backbone_blocks) widths_.push_back(s.width);
  stem_ = nn::make_conv_bn_relu(store, prefix + ".stem", 3, widths_[0], {.kernel = 3, .stride = 2});
  constexpr int kStageStride[5] = {2, 1, 2, 1, 2};
  int cin = widths_[0];
  for (int s = 0; s < 5; ++s) {
    std::vector<ResidualUnit<T>> units;
    const int cout = widths_[s];
    for (int u = 0; u < config.backbone_blocks[s].blocks; ++u) {
      const std::string name = prefix + ".stage" + std::to_string(s + 1) + ".unit" + std::to_string(u);
      const int stride = u == 0 ? kStageStride[s] : 1;
      ResidualUnit<T> unit;
      unit.first = nn::make_conv_bn_relu(store, name + ".conv1", cin, cout, {.kernel = 3, .stride = stride});
      unit.second = nn::make_conv(store, name + ".conv2", cout, cout, {.kernel = 3});
      unit.second_bn = nn::make_batch_norm(store, name + ".bn2", cout, /*zero_gamma=*/true);
      unit.projection = stride != 1 || cin != cout;
      if (unit.projection) {
        unit.shortcut = nn::make_conv(store, name + ".shortcut", cin, cout, {.kernel = 1, .stride = stride});
        unit.shortcut_bn = nn::make_batch_norm(store, name + ".shortcut_bn", cout);
      }
      units.push_back(std::move(unit));
      cin = cout;
    }
    stages_.push_back(std::move(units));
  }
}

template <typename T>
BackboneFeatures<T> Backbone<T>::forward(const Var<T>& image, bool training) const {
  const nn::Shape s = image->value.shape();
  if (s.c != 3) throw std::invalid_argument("backbone expects 3 input channels, got " + std::to_string(s.c));
  if (s.h % kRes5Stride != 0 || s.w % kRes5Stride != 0) {
    throw std::invalid_argument("backbone input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                " must have dims divisible by " + std::to_string(kRes5Stride));
  }
  BackboneFeatures<T> f;
  Var<T> x = stem_(image, training);
  for (std::size_t st = 0; st < stages_.size(); ++st) {
    for (const auto& unit : stages_[st]) x = unit(x, training);
    if (st == 3) f.res4 = x;
  }
  f.res5 = x;
  return f;
}

template struct ResidualUnit<float>;
template struct ResidualUnit<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace spd::model
