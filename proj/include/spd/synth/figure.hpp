#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spd/core/types.hpp"

namespace spd::synth {

/// Joint order of the 16-point skeleton (MPII/LIP convention).
enum JointId : int {
  kRAnkle = 0,
  kRKnee,
  kRHip,
  kLHip,
  kLKnee,
  kLAnkle,
  kPelvis,
  kThorax,
  kUpperNeck,
  kHeadTop,
  kRWrist,
  kRElbow,
  kRShoulder,
  kLShoulder,
  kLElbow,
  kLWrist,
};
inline constexpr int kNumJoints = 16;

const std::vector<std::string>& joint_names();

/// Segmentation classes produced by the generator (19 including background).
enum SegClass : std::uint8_t {
  kBackground = 0,
  kHair,
  kFace,
  kNeck,
  kUpperClothes,
  kPants,
  kLeftUpperArm,
  kRightUpperArm,
  kLeftForearm,
  kRightForearm,
  kLeftHand,
  kRightHand,
  kLeftThigh,
  kRightThigh,
  kLeftShin,
  kRightShin,
  kLeftShoe,
  kRightShoe,
  kHat,
};
inline constexpr int kNumSegClasses = 19;

const std::vector<std::string>& class_names();

/// A capsule of the figure. `child < 0` marks an extension (hand, foot) that
/// continues the parent bone's direction by `extension` figure heights.
struct Bone {
  std::string_view name;
  int parent;
  int child;
  double extension;
  std::uint8_t seg_class;
  std::array<std::uint8_t, 2> parts;  // dense-pose part on the v < 0.5 / v >= 0.5 side
  double base_width;                  // figure heights
};

/// Bones in painter's order (later bones cover earlier ones).
const std::vector<Bone>& bones();

/// Parent joint of each joint (-1 for the pelvis root).
const std::array<int, kNumJoints>& joint_parents();

/// Allowed joint-angle range per joint, radians.
const std::array<std::array<double, 2>, kNumJoints>& joint_angle_ranges();

/// Axis-aligned rectangle in normalised canvas coordinates.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  [[nodiscard]] bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const Rect&) const = default;
};

struct FigureSpec {
  std::vector<double> joint_angles;  // kNumJoints entries, relative to the parent bone
  std::vector<double> limb_widths;   // one per bone, figure heights
  double scale = 0.85;               // figure height as a fraction of the canvas side
  std::array<double, 2> translation{0.5, 0.53};  // pelvis, normalised canvas coordinates
  std::optional<Rect> occluder;
  std::uint64_t palette_seed = 0;
  bool operator==(const FigureSpec&) const = default;
};

/// The rest pose: zero joint angles, base widths, no occluder.
FigureSpec identity_spec();

FigureSpec sample_figure(std::uint64_t rng_seed);

/// Joint positions in pixel coordinates for a canvas of the given size.
std::vector<std::array<double, 2>> joint_positions(const FigureSpec& spec, int height, int width);

/// Rasterises the figure. Throws std::invalid_argument for malformed specs,
/// canvases smaller than 64 x 64, or figures that miss the canvas entirely.
AnnotatedSample render_sample(const FigureSpec& spec, int height, int width);

/// Seed of the i-th sample of a split.
std::uint64_t sample_seed(std::uint64_t base_seed, int index);

/// Renders `count` samples and writes them with a manifest under `out_dir`.
std::filesystem::path generate_split(int count, std::uint64_t base_seed,
                                     const std::filesystem::path& out_dir, int height = 64,
                                     int width = 64);

/// Same samples as `generate_split`, in memory.
std::vector<AnnotatedSample> generate_samples(int count, std::uint64_t base_seed, int height = 64,
                                              int width = 64);

}  // namespace spd::synth
