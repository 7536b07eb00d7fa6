#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/metrics/metrics.hpp"
#include "spd/objectives/losses.hpp"

namespace spd::cli {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}
  [[nodiscard]] Rgb at(int y, int x) const;
  void set(int y, int x, Rgb c);
  bool operator==(const RgbImage&) const = default;
};

/// Fixed colour per label; 0 (background) is black. Golden-ratio hue steps
/// keep neighbouring labels apart.
Rgb palette(int label);

RgbImage to_rgb(const Image& image);

/// Blends the palette colour of every non-zero label over the image.
RgbImage label_overlay(const Image& image, const Raster<std::uint8_t>& labels, double alpha = 0.5);

/// Stick figure over a darkened copy of the image. Bones join each joint to
/// its parent (`parents[j] < 0` for the root); invisible joints are skipped.
RgbImage skeleton_overlay(const Image& image, const Skeleton& skeleton, const std::vector<int>& parents);

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);

/// SVG line plot with one polyline point per logged iteration for each of
/// total, l_seg, l_pose and l_dense.
std::string loss_curve_svg(const std::vector<objectives::LossBreakdown>& history);

/// SVG bar chart of per-class IoU.
std::string class_iou_svg(const std::vector<metrics::ClassMetrics>& classes);

}  // namespace spd::cli
