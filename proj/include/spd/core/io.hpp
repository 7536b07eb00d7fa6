#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spd/core/types.hpp"

namespace spd {

/// I/O failure; the message always carries the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Lossless PNG rasters. 8-bit gray for class/part indices, 16-bit gray for
// U/V (value / 65535), 8-bit RGB for images (value / 255).
void write_png_gray8(const std::filesystem::path& path, const Raster<std::uint8_t>& r);
Raster<std::uint8_t> read_png_gray8(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, const Raster<std::uint16_t>& r);
Raster<std::uint16_t> read_png_gray16(const std::filesystem::path& path);
void write_png_rgb8(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& rgb);
std::vector<std::uint8_t> read_png_rgb8(const std::filesystem::path& path, int& height, int& width);

/// Exact conversions between stored integers and in-memory reals. Data
/// produced through `quantize_*` round-trips through disk bit-identically.
float uv_from_u16(std::uint16_t q);
std::uint16_t uv_to_u16(float v);
float quantize_uv(double v);
float pixel_from_u8(std::uint8_t q);
std::uint8_t pixel_to_u8(float v);
float quantize_pixel(double v);

struct ManifestEntry {
  std::string sample_id;
  std::filesystem::path image;
  std::filesystem::path mask;
  std::optional<std::filesystem::path> parts;
  std::optional<std::filesystem::path> u;
  std::optional<std::filesystem::path> v;

  [[nodiscard]] bool has_densepose() const { return parts && u && v; }
};

/// Split index: paths are stored relative to the manifest's directory.
struct Manifest {
  int num_classes = kDefaultNumClasses;
  int num_parts = kDefaultNumParts;
  std::vector<std::string> joint_names;
  std::filesystem::path skeletons;
  std::vector<ManifestEntry> entries;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct SkeletonRecord {
  std::string sample_id;
  Skeleton skeleton;
};

/// One record per sample: the sample id on its own line, then one
/// "joint_index x y visible" line per joint.
void write_skeleton_file(const std::filesystem::path& path, const std::vector<SkeletonRecord>& records);
std::vector<SkeletonRecord> read_skeleton_file(const std::filesystem::path& path, int num_joints);

/// Writes every sample plus `manifest.txt` and `skeletons.txt` under `dir`.
std::filesystem::path save_split(const std::vector<AnnotatedSample>& samples,
                                 const std::filesystem::path& dir,
                                 const std::vector<std::string>& joint_names);

std::vector<AnnotatedSample> load_split(const std::filesystem::path& manifest_path);

}  // namespace spd
