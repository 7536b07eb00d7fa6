#include "spd/core/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace spd {

int Skeleton::visible_count() const {
  return static_cast<int>(std::count_if(joints.begin(), joints.end(), [](const Joint& j) { return j.visible; }));
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kSPD:
      return "SPD";
    case Variant::kSP:
      return "SP";
    case Variant::kSD:
      return "SD";
    case Variant::kS:
      return "S";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "SPD") return Variant::kSPD;
  if (name == "SP") return Variant::kSP;
  if (name == "SD") return Variant::kSD;
  if (name == "S") return Variant::kS;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected SPD, SP, SD or S)");
}

ModelConfig default_config() {
  ModelConfig c;
  c.backbone_blocks = {{1, 16}, {1, 32}, {1, 64}, {1, 96}, {1, 128}};
  return c;
}

void check_config(const ModelConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
  if (c.num_classes < 2 || c.num_classes > 255) fail("num_classes must be in [2, 255]");
  if (c.num_joints < 1) fail("num_joints must be positive");
  if (c.num_parts < 1 || c.num_parts > 254) fail("num_parts must be in [1, 254]");
  if (c.backbone_blocks.size() != 5) {
    fail("backbone_blocks needs exactly 5 stages, got " + std::to_string(c.backbone_blocks.size()));
  }
  for (std::size_t i = 0; i < c.backbone_blocks.size(); ++i) {
    if (c.backbone_blocks[i].width <= 0) fail("stage " + std::to_string(i + 1) + " has zero channel width");
    if (c.backbone_blocks[i].blocks < 1) fail("stage " + std::to_string(i + 1) + " needs at least one block");
  }
  if (c.context_channels <= 0) fail("context_channels must be positive");
  if (c.aspp_width <= 0) fail("aspp_width must be positive");
  if (c.detail_channels <= 0) fail("detail_channels must be positive");
  if (c.aspp_rates.empty()) fail("aspp_rates must not be empty");
  for (int r : c.aspp_rates) {
    if (r < 1) fail("aspp rate " + std::to_string(r) + " must be >= 1");
  }
  if (c.lambda_s < 0 || c.lambda_p < 0 || c.lambda_d < 0) fail("lambda weights must be non-negative");
  if (c.huber_delta <= 0) fail("huber_delta must be positive");
}

std::vector<std::string> validate_sample(const AnnotatedSample& s, int num_joints) {
  std::vector<std::string> out;
  const int h = s.image.height;
  const int w = s.image.width;
  if (h <= 0 || w <= 0 || s.image.data.size() != static_cast<std::size_t>(3) * h * w) {
    out.emplace_back("image raster malformed");
  }
  for (float v : s.image.data) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      out.emplace_back("image value outside [0,1]");
      break;
    }
  }
  const auto& m = s.mask.labels;
  if (m.height != h || m.width != w || m.data.size() != static_cast<std::size_t>(h) * w) {
    out.emplace_back("mask dimensions differ from image");
  }
  if (std::any_of(m.data.begin(), m.data.end(), [&](std::uint8_t c) { return c >= s.mask.num_classes; })) {
    out.emplace_back("class index out of range");
  }
  if (s.skeleton.size() != num_joints) out.emplace_back("skeleton joint count differs from N");
  for (const Joint& j : s.skeleton.joints) {
    if (j.visible && !(j.x >= 0 && j.x <= w - 1 && j.y >= 0 && j.y <= h - 1)) {
      out.emplace_back("visible joint outside image");
      break;
    }
  }
  if (s.densepose) {
    const auto& d = *s.densepose;
    const bool dims_ok = d.part_index.height == h && d.part_index.width == w && d.u.height == h &&
                         d.u.width == w && d.v.height == h && d.v.width == w &&
                         d.part_index.size() == static_cast<std::size_t>(h) * w &&
                         d.u.size() == d.part_index.size() && d.v.size() == d.part_index.size();
    if (!dims_ok) {
      out.emplace_back("dense-pose dimensions differ from image");
    } else {
      bool part_range = false, uv_range = false, uv_background = false;
      for (std::size_t i = 0; i < d.part_index.size(); ++i) {
        const float u = d.u.data[i];
        const float v = d.v.data[i];
        if (d.part_index.data[i] > d.num_parts) part_range = true;
        if (!(u >= 0.0f && u <= 1.0f && v >= 0.0f && v <= 1.0f)) uv_range = true;
        if (d.part_index.data[i] == 0 && (u != 0.0f || v != 0.0f)) uv_background = true;
      }
      if (part_range) out.emplace_back("part index out of range");
      if (uv_range) out.emplace_back("UV outside [0,1]");
      if (uv_background) out.emplace_back("UV nonzero on background");
    }
  }
  return out;
}

}  // namespace spd
