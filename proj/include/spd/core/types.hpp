#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spd {

/// Row-major single-channel raster.
template <typename T>
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  T& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] std::size_t size() const { return data.size(); }
  bool operator==(const Raster&) const = default;
};

/// Three-channel image with channel-planar storage, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // (3, H, W)

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0f) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

inline constexpr int kDefaultNumClasses = 19;
inline constexpr int kDefaultNumJoints = 16;
inline constexpr int kDefaultNumParts = 24;

/// Per-pixel class index; class 0 is background.
struct SegMask {
  Raster<std::uint8_t> labels;
  int num_classes = kDefaultNumClasses;
  bool operator==(const SegMask&) const = default;
};

struct Joint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;
  bool operator==(const Joint&) const = default;
};

/// Ordered joints in absolute pixel coordinates.
struct Skeleton {
  std::vector<Joint> joints;
  [[nodiscard]] int size() const { return static_cast<int>(joints.size()); }
  [[nodiscard]] int visible_count() const;
  bool operator==(const Skeleton&) const = default;
};

/// Part index I (0 = background) plus surface chart coordinates (U, V).
struct DensePoseMap {
  Raster<std::uint8_t> part_index;
  Raster<float> u;
  Raster<float> v;
  int num_parts = kDefaultNumParts;
  bool operator==(const DensePoseMap&) const = default;
};

struct AnnotatedSample {
  Image image;
  SegMask mask;
  Skeleton skeleton;
  std::optional<DensePoseMap> densepose;
  std::string sample_id;
  bool operator==(const AnnotatedSample&) const = default;
};

enum class Variant { kSPD, kSP, kSD, kS };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);  // throws std::invalid_argument
inline bool has_pose(Variant v) { return v == Variant::kSPD || v == Variant::kSP; }
inline bool has_dense(Variant v) { return v == Variant::kSPD || v == Variant::kSD; }

enum class DenseLossForm { kProduct, kSum };

struct StageSpec {
  int blocks = 1;
  int width = 16;
  bool operator==(const StageSpec&) const = default;
};

struct ModelConfig {
  int num_classes = kDefaultNumClasses;
  int num_joints = kDefaultNumJoints;
  int num_parts = kDefaultNumParts;
  std::vector<StageSpec> backbone_blocks;
  int context_channels = 32;
  double lambda_s = 1.0;
  double lambda_p = 0.8;
  double lambda_d = 0.6;
  Variant variant = Variant::kSPD;
  std::uint64_t seed = 0;

  // Head widths and loss options.
  std::vector<int> aspp_rates{1, 2, 4};
  int aspp_width = 32;
  int detail_channels = 8;
  DenseLossForm dense_loss_form = DenseLossForm::kProduct;
  double huber_delta = 1.0;

  /// Weights with ablated tasks forced to zero.
  [[nodiscard]] double effective_lambda_p() const { return has_pose(variant) ? lambda_p : 0.0; }
  [[nodiscard]] double effective_lambda_d() const { return has_dense(variant) ? lambda_d : 0.0; }
  bool operator==(const ModelConfig&) const = default;
};

ModelConfig default_config();

/// Throws std::invalid_argument naming the first violated constraint.
void check_config(const ModelConfig& config);

/// Every invariant violation of the sample, in a fixed order. Empty means
/// the sample is consistent.
std::vector<std::string> validate_sample(const AnnotatedSample& sample,
                                         int num_joints = kDefaultNumJoints);

}  // namespace spd
