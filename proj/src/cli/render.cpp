#include "spd/cli/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "spd/core/io.hpp"

namespace spd::cli {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

Rgb blend(Rgb a, Rgb b, double alpha) {
  Rgb out{};
  for (int i = 0; i < 3; ++i) out[i] = to_byte((1 - alpha) * a[i] + alpha * b[i]);
  return out;
}

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, Rgb c) {
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.set(y, x, c);
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

constexpr double kWidth = 640, kHeight = 360, kLeft = 56, kRight = 16, kTop = 24, kBottom = 40;

}  // namespace

Rgb RgbImage::at(int y, int x) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void RgbImage::set(int y, int x, Rgb c) {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
}

Rgb palette(int label) {
  if (label <= 0) return {0, 0, 0};
  const double h = std::fmod(label * 0.6180339887498949, 1.0) * 6.0;
  const double s = label % 2 ? 0.85 : 0.6;
  const double v = label % 3 ? 0.95 : 0.75;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    case 5: r = v, g = p, b = q; break;
    default: break;
  }
  return {to_byte(r * 255), to_byte(g * 255), to_byte(b * 255)};
}

RgbImage to_rgb(const Image& image) {
  RgbImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      out.set(y, x, {pixel_to_u8(image.at(0, y, x)), pixel_to_u8(image.at(1, y, x)), pixel_to_u8(image.at(2, y, x))});
    }
  }
  return out;
}

RgbImage label_overlay(const Image& image, const Raster<std::uint8_t>& labels, double alpha) {
  if (labels.height != image.height || labels.width != image.width) {
    throw std::invalid_argument("overlay labels do not match the image size");
  }
  RgbImage out = to_rgb(image);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const int l = labels.at(y, x);
      if (l > 0) out.set(y, x, blend(out.at(y, x), palette(l), alpha));
    }
  }
  return out;
}

RgbImage skeleton_overlay(const Image& image, const Skeleton& skeleton, const std::vector<int>& parents) {
  RgbImage out = to_rgb(image);
  for (auto& b : out.rgb) b = static_cast<std::uint8_t>(b / 2);
  const auto& j = skeleton.joints;
  for (std::size_t i = 0; i < j.size() && i < parents.size(); ++i) {
    const int p = parents[i];
    if (p < 0 || !j[i].visible || !j[static_cast<std::size_t>(p)].visible) continue;
    draw_line(out, j[p].x, j[p].y, j[i].x, j[i].y, palette(static_cast<int>(i) + 1));
  }
  for (const Joint& joint : j) {
    if (!joint.visible) continue;
    const int cx = static_cast<int>(std::lround(joint.x)), cy = static_cast<int>(std::lround(joint.y));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x >= 0 && y >= 0 && x < out.width && y < out.height) out.set(y, x, {255, 255, 255});
      }
    }
  }
  return out;
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
  write_png_rgb8(path, img.height, img.width, img.rgb);
}

std::string loss_curve_svg(const std::vector<objectives::LossBreakdown>& history) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  double ymax = 0;
  for (const auto& b : history) ymax = std::max({ymax, b.total, b.l_seg, b.l_pose, b.l_dense});
  if (!(ymax > 0)) ymax = 1;
  const std::size_t n = history.size();
  auto xpos = [&](std::size_t i) { return kLeft + (n > 1 ? pw * static_cast<double>(i) / (n - 1) : pw / 2); };
  auto ypos = [&](double v) { return kTop + ph * (1 - v / ymax); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << num(ymax)
    << "</text>\n";
  s << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + ph << "\" text-anchor=\"end\" font-size=\"11\">0</text>\n";
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 8
    << "\" text-anchor=\"middle\" font-size=\"12\">iteration (" << n << " logged)</text>\n";

  struct Series {
    const char* name;
    double objectives::LossBreakdown::*field;
    Rgb color;
  };
  const Series series[] = {{"total", &objectives::LossBreakdown::total, {0, 0, 0}},
                           {"l_seg", &objectives::LossBreakdown::l_seg, palette(1)},
                           {"l_pose", &objectives::LossBreakdown::l_pose, palette(2)},
                           {"l_dense", &objectives::LossBreakdown::l_dense, palette(3)}};
  double legend_x = kLeft + 8;
  for (const Series& ser : series) {
    s << "<polyline class=\"" << ser.name << "\" fill=\"none\" stroke=\"" << hex(ser.color) << "\" points=\"";
    for (std::size_t i = 0; i < n; ++i) s << (i ? " " : "") << num(xpos(i)) << "," << num(ypos(history[i].*ser.field));
    s << "\"/>\n";
    s << "<text x=\"" << legend_x << "\" y=\"" << kTop - 8 << "\" font-size=\"11\" fill=\"" << hex(ser.color) << "\">"
      << ser.name << "</text>\n";
    legend_x += 70;
  }
  s << "</svg>\n";
  return s.str();
}

std::string class_iou_svg(const std::vector<metrics::ClassMetrics>& classes) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double slot = classes.empty() ? pw : pw / static_cast<double>(classes.size());
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\" font-size=\"11\">1</text>\n";
  s << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + ph << "\" text-anchor=\"end\" font-size=\"11\">0</text>\n";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& c = classes[i];
    const double h = ph * std::clamp(c.iou, 0.0, 1.0);
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.1;
    s << "<rect class=\"bar\" data-class=\"" << c.cls << "\" x=\"" << num(x) << "\" y=\"" << num(kTop + ph - h)
      << "\" width=\"" << num(slot * 0.8) << "\" height=\"" << num(h) << "\" fill=\""
      << hex(c.cls == 0 ? Rgb{128, 128, 128} : palette(c.cls)) << "\"/>\n";
    s << "<text x=\"" << num(x + slot * 0.4) << "\" y=\"" << kTop + ph + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << c.cls << "</text>\n";
  }
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 8
    << "\" text-anchor=\"middle\" font-size=\"12\">class (IoU)</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace spd::cli
