#include "spd/core/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace spd {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Raw row-major PNG writer. `bytes` holds rows of width * channels samples at
// the given bit depth (16-bit samples big-endian, as PNG stores them).
void write_png(const fs::path& path, int height, int width, int bit_depth, int color_type,
               int channels, const std::vector<std::uint8_t>& bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path, "PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError(path, "write failed");
}

struct PngData {
  int height = 0;
  int width = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> bytes;
};

PngData read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError(path, "cannot open for reading");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path, "not a readable PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  PngData d;
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.bit_depth = png_get_bit_depth(png, info);
  d.color_type = png_get_color_type(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  d.bytes.resize(stride * d.height);
  for (int y = 0; y < d.height; ++y) png_read_row(png, d.bytes.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

void ensure_parent(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError(path.parent_path(), "cannot create directory: " + ec.message());
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s, const fs::path& path) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError(path, "bad number '" + s + "'");
  return v;
}

}  // namespace

void write_png_gray8(const fs::path& path, const Raster<std::uint8_t>& r) {
  write_png(path, r.height, r.width, 8, PNG_COLOR_TYPE_GRAY, 1, r.data);
}

Raster<std::uint8_t> read_png_gray8(const fs::path& path) {
  PngData d = read_png(path);
  if (d.bit_depth != 8 || d.color_type != PNG_COLOR_TYPE_GRAY) {
    throw IoError(path, "expected 8-bit single-channel PNG");
  }
  Raster<std::uint8_t> r(d.height, d.width);
  r.data = std::move(d.bytes);
  return r;
}

void write_png_gray16(const fs::path& path, const Raster<std::uint16_t>& r) {
  std::vector<std::uint8_t> bytes(r.size() * 2);
  for (std::size_t i = 0; i < r.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(r.data[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(r.data[i] & 0xff);
  }
  write_png(path, r.height, r.width, 16, PNG_COLOR_TYPE_GRAY, 1, bytes);
}

Raster<std::uint16_t> read_png_gray16(const fs::path& path) {
  PngData d = read_png(path);
  if (d.bit_depth != 16 || d.color_type != PNG_COLOR_TYPE_GRAY) {
    throw IoError(path, "expected 16-bit single-channel PNG");
  }
  Raster<std::uint16_t> r(d.height, d.width);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r.data[i] = static_cast<std::uint16_t>((d.bytes[2 * i] << 8) | d.bytes[2 * i + 1]);
  }
  return r;
}

void write_png_rgb8(const fs::path& path, int height, int width, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) {
    throw IoError(path, "RGB buffer size does not match dimensions");
  }
  write_png(path, height, width, 8, PNG_COLOR_TYPE_RGB, 3, rgb);
}

std::vector<std::uint8_t> read_png_rgb8(const fs::path& path, int& height, int& width) {
  PngData d = read_png(path);
  if (d.bit_depth != 8 || d.color_type != PNG_COLOR_TYPE_RGB) throw IoError(path, "expected 8-bit RGB PNG");
  height = d.height;
  width = d.width;
  return std::move(d.bytes);
}

float uv_from_u16(std::uint16_t q) { return static_cast<float>(q) / 65535.0f; }
std::uint16_t uv_to_u16(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(c * 65535.0));
}
float quantize_uv(double v) { return uv_from_u16(uv_to_u16(static_cast<float>(v))); }

float pixel_from_u8(std::uint8_t q) { return static_cast<float>(q) / 255.0f; }
std::uint8_t pixel_to_u8(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}
float quantize_pixel(double v) { return pixel_from_u8(pixel_to_u8(static_cast<float>(v))); }

void write_manifest(const fs::path& path, const Manifest& m) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << "# spd-manifest 1\n";
  out << "num_classes\t" << m.num_classes << "\n";
  out << "num_parts\t" << m.num_parts << "\n";
  out << "joints";
  for (const auto& j : m.joint_names) out << "\t" << j;
  out << "\n";
  out << "skeletons\t" << m.skeletons.generic_string() << "\n";
  for (const auto& e : m.entries) {
    out << "sample\t" << e.sample_id << "\timage=" << e.image.generic_string()
        << "\tmask=" << e.mask.generic_string();
    if (e.parts) out << "\tparts=" << e.parts->generic_string();
    if (e.u) out << "\tu=" << e.u->generic_string();
    if (e.v) out << "\tv=" << e.v->generic_string();
    out << "\n";
  }
  if (!out) throw IoError(path, "write failed");
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open manifest");
  Manifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    const std::string where = "line " + std::to_string(line_no);
    const std::string& key = fields[0];
    if (key == "num_classes" && fields.size() == 2) {
      m.num_classes = static_cast<int>(parse_double(fields[1], path));
    } else if (key == "num_parts" && fields.size() == 2) {
      m.num_parts = static_cast<int>(parse_double(fields[1], path));
    } else if (key == "joints") {
      m.joint_names.assign(fields.begin() + 1, fields.end());
    } else if (key == "skeletons" && fields.size() == 2) {
      m.skeletons = fields[1];
    } else if (key == "sample" && fields.size() >= 4) {
      ManifestEntry e;
      e.sample_id = fields[1];
      for (std::size_t i = 2; i < fields.size(); ++i) {
        const auto eq = fields[i].find('=');
        if (eq == std::string::npos) throw IoError(path, where + ": malformed field '" + fields[i] + "'");
        const std::string k = fields[i].substr(0, eq);
        const fs::path v = fields[i].substr(eq + 1);
        if (k == "image") e.image = v;
        else if (k == "mask") e.mask = v;
        else if (k == "parts") e.parts = v;
        else if (k == "u") e.u = v;
        else if (k == "v") e.v = v;
        else throw IoError(path, where + ": unknown annotation type '" + k + "'");
      }
      if (e.image.empty() || e.mask.empty()) throw IoError(path, where + ": sample needs image and mask");
      m.entries.push_back(std::move(e));
    } else {
      throw IoError(path, where + ": unrecognised record '" + key + "'");
    }
  }
  return m;
}

void write_skeleton_file(const fs::path& path, const std::vector<SkeletonRecord>& records) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& r : records) {
    out << r.sample_id << "\n";
    for (std::size_t i = 0; i < r.skeleton.joints.size(); ++i) {
      const Joint& j = r.skeleton.joints[i];
      out << i << " " << format_double(j.x) << " " << format_double(j.y) << " " << (j.visible ? 1 : 0) << "\n";
    }
  }
  if (!out) throw IoError(path, "write failed");
}

std::vector<SkeletonRecord> read_skeleton_file(const fs::path& path, int num_joints) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open skeleton file");
  std::vector<SkeletonRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SkeletonRecord r;
    r.sample_id = line;
    r.skeleton.joints.resize(num_joints);
    for (int i = 0; i < num_joints; ++i) {
      if (!std::getline(in, line)) throw IoError(path, "truncated record for " + r.sample_id);
      std::stringstream ss(line);
      std::string idx, xs, ys, vis;
      ss >> idx >> xs >> ys >> vis;
      if (idx != std::to_string(i) || (vis != "0" && vis != "1")) {
        throw IoError(path, "bad joint line '" + line + "' in record " + r.sample_id);
      }
      r.skeleton.joints[i] = Joint{parse_double(xs, path), parse_double(ys, path), vis == "1"};
    }
    out.push_back(std::move(r));
  }
  return out;
}

fs::path save_split(const std::vector<AnnotatedSample>& samples, const fs::path& dir,
                    const std::vector<std::string>& joint_names) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
  for (const char* sub : {"images", "masks", "parts", "uv"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError(dir / sub, "cannot create directory: " + ec.message());
  }
  Manifest m;
  m.joint_names = joint_names;
  m.skeletons = "skeletons.txt";
  std::vector<SkeletonRecord> skeletons;
  for (const auto& s : samples) {
    m.num_classes = s.mask.num_classes;
    if (s.densepose) m.num_parts = s.densepose->num_parts;
    ManifestEntry e;
    e.sample_id = s.sample_id;
    e.image = fs::path("images") / (s.sample_id + ".png");
    e.mask = fs::path("masks") / (s.sample_id + ".png");
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(s.image.height) * s.image.width * 3);
    for (int y = 0; y < s.image.height; ++y)
      for (int x = 0; x < s.image.width; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(static_cast<std::size_t>(y) * s.image.width + x) * 3 + c] = pixel_to_u8(s.image.at(c, y, x));
    write_png_rgb8(dir / e.image, s.image.height, s.image.width, rgb);
    write_png_gray8(dir / e.mask, s.mask.labels);
    if (s.densepose) {
      const auto& d = *s.densepose;
      e.parts = fs::path("parts") / (s.sample_id + ".png");
      e.u = fs::path("uv") / (s.sample_id + "_u.png");
      e.v = fs::path("uv") / (s.sample_id + "_v.png");
      write_png_gray8(dir / *e.parts, d.part_index);
      Raster<std::uint16_t> qu(d.u.height, d.u.width), qv(d.v.height, d.v.width);
      for (std::size_t i = 0; i < qu.size(); ++i) {
        qu.data[i] = uv_to_u16(d.u.data[i]);
        qv.data[i] = uv_to_u16(d.v.data[i]);
      }
      write_png_gray16(dir / *e.u, qu);
      write_png_gray16(dir / *e.v, qv);
    }
    skeletons.push_back({s.sample_id, s.skeleton});
    m.entries.push_back(std::move(e));
  }
  write_skeleton_file(dir / m.skeletons, skeletons);
  const fs::path manifest = dir / "manifest.txt";
  write_manifest(manifest, m);
  return manifest;
}

std::vector<AnnotatedSample> load_split(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  const int num_joints = m.joint_names.empty() ? kDefaultNumJoints : static_cast<int>(m.joint_names.size());
  std::map<std::string, Skeleton> skeletons;
  if (!m.skeletons.empty()) {
    for (auto& r : read_skeleton_file(base / m.skeletons, num_joints)) {
      skeletons.emplace(r.sample_id, std::move(r.skeleton));
    }
  }
  std::vector<AnnotatedSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    AnnotatedSample s;
    s.sample_id = e.sample_id;
    int h = 0, w = 0;
    const auto rgb = read_png_rgb8(base / e.image, h, w);
    s.image = Image(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          s.image.at(c, y, x) = pixel_from_u8(rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
    s.mask.labels = read_png_gray8(base / e.mask);
    s.mask.num_classes = m.num_classes;
    if (auto it = skeletons.find(e.sample_id); it != skeletons.end()) s.skeleton = it->second;
    if (e.has_densepose()) {
      DensePoseMap d;
      d.num_parts = m.num_parts;
      d.part_index = read_png_gray8(base / *e.parts);
      const auto qu = read_png_gray16(base / *e.u);
      const auto qv = read_png_gray16(base / *e.v);
      d.u = Raster<float>(qu.height, qu.width);
      d.v = Raster<float>(qv.height, qv.width);
      for (std::size_t i = 0; i < qu.size(); ++i) d.u.data[i] = uv_from_u16(qu.data[i]);
      for (std::size_t i = 0; i < qv.size(); ++i) d.v.data[i] = uv_from_u16(qv.data[i]);
      s.densepose = std::move(d);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace spd
