#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/model/backbone.hpp"
#include "spd/model/densepose_branch.hpp"
#include "spd/model/pose_branch.hpp"
#include "spd/model/seg_branch.hpp"

namespace spd::model {

template <typename T>
struct ModelOutput {
  BackboneFeatures<T> features;
  SegBranchOutput<T> seg;
  std::optional<PoseBranchOutput<T>> pose;
  std::optional<DensePoseOutput<T>> dense;
};

/// The full multi-task network for one ablation variant. Absent branches
/// own no parameters. Parameter names are prefixed backbone., seg., pose.
/// and dense. The model holds pointers into its parameter store and is
/// therefore neither copyable nor movable.
template <typename T>
class Model {
 public:
  static constexpr int kInputDivisor = 32;

  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// `images` is (B, 3, H, W) with H and W divisible by 32.
  ModelOutput<T> forward(const Var<T>& images, bool training) const;

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& store() { return store_; }
  [[nodiscard]] const nn::ParameterStore<T>& store() const { return store_; }
  [[nodiscard]] const Backbone<T>& backbone() const { return backbone_; }

 private:
  ModelConfig config_;
  nn::ParameterStore<T> store_;
  Backbone<T> backbone_;
  SegBranch<T> seg_;
  std::optional<PoseBranch<T>> pose_;
  std::optional<DensePoseBranch<T>> dense_;
};

/// Validates the config and builds the network for `config.variant`.
template <typename T>
std::unique_ptr<Model<T>> build_variant(const ModelConfig& config);

/// Stacks sample images into a (B, 3, H, W) tensor; all samples must share
/// dimensions.
template <typename T>
nn::Tensor<T> stack_images(const std::vector<const AnnotatedSample*>& batch);

}  // namespace spd::model
