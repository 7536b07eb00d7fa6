#include "spd/synth/figure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "spd/core/io.hpp"

namespace spd::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Small deterministic generator; platform-independent unlike std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return splitmix64(state_++); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

double hash_noise(std::uint64_t seed, int x, int y, int c) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(x) << 32) ^
                                                       (static_cast<std::uint64_t>(y) << 8) ^ c));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Rest direction (image coordinates, y down) and length of the bone ending
// at each joint, in figure heights.
struct RestBone {
  double dx, dy, length;
};

const std::array<RestBone, kNumJoints>& rest_bones() {
  static const std::array<RestBone, kNumJoints> table = [] {
    std::array<RestBone, kNumJoints> t{};
    auto set = [&](int j, double dx, double dy, double len) {
      const double n = std::hypot(dx, dy);
      t[j] = RestBone{dx / n, dy / n, len};
    };
    set(kPelvis, 0, -1, 0);
    set(kThorax, 0, -1, 0.30);
    set(kUpperNeck, 0, -1, 0.07);
    set(kHeadTop, 0, -1, 0.17);
    set(kRShoulder, -1, 0, 0.11);
    set(kLShoulder, 1, 0, 0.11);
    set(kRElbow, -0.25, 1, 0.16);
    set(kRWrist, -0.1, 1, 0.15);
    set(kLElbow, 0.25, 1, 0.16);
    set(kLWrist, 0.1, 1, 0.15);
    set(kRHip, -1, 0, 0.06);
    set(kLHip, 1, 0, 0.06);
    set(kRKnee, -0.05, 1, 0.22);
    set(kRAnkle, 0, 1, 0.21);
    set(kLKnee, 0.05, 1, 0.22);
    set(kLAnkle, 0, 1, 0.21);
    return t;
  }();
  return table;
}

struct Palette {
  std::array<std::array<double, 3>, kNumSegClasses> class_rgb{};
  std::array<double, 3> bg_base{};
  std::array<double, 3> bg_wave{};
  std::array<double, 3> occluder{};
  double wave_fx = 0, wave_fy = 0, wave_phase = 0;
  bool hat = false;
};

std::array<double, 3> random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

Palette make_palette(std::uint64_t seed) {
  Rng rng(seed);
  Palette p;
  const std::array<double, 3> skin{rng.uniform(0.55, 0.95), rng.uniform(0.40, 0.75), rng.uniform(0.30, 0.60)};
  const auto shirt = random_color(rng, 0.05, 0.95);
  const auto pants = random_color(rng, 0.05, 0.80);
  const auto shoes = random_color(rng, 0.0, 0.5);
  const auto hair = random_color(rng, 0.0, 0.45);
  const auto hat = random_color(rng, 0.1, 0.95);
  p.hat = rng.uniform() < 0.3;
  auto shade = [](std::array<double, 3> c, double k) {
    for (double& v : c) v = std::clamp(v * k, 0.0, 1.0);
    return c;
  };
  p.class_rgb[kBackground] = {0, 0, 0};
  p.class_rgb[kHair] = hair;
  p.class_rgb[kFace] = skin;
  p.class_rgb[kNeck] = shade(skin, 0.9);
  p.class_rgb[kUpperClothes] = shirt;
  p.class_rgb[kPants] = shade(pants, 0.85);
  p.class_rgb[kLeftUpperArm] = shade(shirt, 1.08);
  p.class_rgb[kRightUpperArm] = shade(shirt, 0.92);
  p.class_rgb[kLeftForearm] = shade(skin, 1.05);
  p.class_rgb[kRightForearm] = shade(skin, 0.95);
  p.class_rgb[kLeftHand] = shade(skin, 1.15);
  p.class_rgb[kRightHand] = shade(skin, 0.85);
  p.class_rgb[kLeftThigh] = shade(pants, 1.1);
  p.class_rgb[kRightThigh] = shade(pants, 0.95);
  p.class_rgb[kLeftShin] = shade(pants, 1.2);
  p.class_rgb[kRightShin] = shade(pants, 0.8);
  p.class_rgb[kLeftShoe] = shade(shoes, 1.1);
  p.class_rgb[kRightShoe] = shade(shoes, 0.9);
  p.class_rgb[kHat] = hat;
  p.bg_base = random_color(rng, 0.2, 0.8);
  p.bg_wave = random_color(rng, 0.0, 0.15);
  p.occluder = random_color(rng, 0.1, 0.9);
  p.wave_fx = rng.uniform(0.05, 0.4);
  p.wave_fy = rng.uniform(0.05, 0.4);
  p.wave_phase = rng.uniform(0, 2 * kPi);
  return p;
}

void check_spec(const FigureSpec& spec) {
  if (spec.joint_angles.size() != static_cast<std::size_t>(kNumJoints)) {
    throw std::invalid_argument("figure spec needs " + std::to_string(kNumJoints) + " joint angles, got " +
                                std::to_string(spec.joint_angles.size()));
  }
  if (spec.limb_widths.size() != bones().size()) {
    throw std::invalid_argument("figure spec needs " + std::to_string(bones().size()) + " limb widths");
  }
  for (double w : spec.limb_widths) {
    if (!(w > 0)) throw std::invalid_argument("limb widths must be positive");
  }
  if (!(spec.scale > 0)) throw std::invalid_argument("figure scale must be positive");
}

struct Capsule {
  double ax, ay, bx, by, radius;
  const Bone* bone;
};

std::vector<Capsule> capsules(const FigureSpec& spec, const std::vector<std::array<double, 2>>& joints,
                              double px_per_height) {
  std::vector<Capsule> out;
  const auto& bs = bones();
  for (std::size_t i = 0; i < bs.size(); ++i) {
    const Bone& b = bs[i];
    Capsule c{};
    c.bone = &b;
    c.ax = joints[b.parent][0];
    c.ay = joints[b.parent][1];
    if (b.child >= 0) {
      c.bx = joints[b.child][0];
      c.by = joints[b.child][1];
    } else {
      // Extension continues the direction of the bone ending at `parent`.
      const int grand = joint_parents()[b.parent];
      double dx = c.ax - joints[grand][0];
      double dy = c.ay - joints[grand][1];
      const double n = std::hypot(dx, dy);
      dx = n > 0 ? dx / n : 0;
      dy = n > 0 ? dy / n : 1;
      c.bx = c.ax + dx * b.extension * px_per_height;
      c.by = c.ay + dy * b.extension * px_per_height;
    }
    c.radius = 0.5 * spec.limb_widths[i] * px_per_height;
    out.push_back(c);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& joint_names() {
  static const std::vector<std::string> names{
      "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "pelvis", "thorax",
      "upper_neck", "head_top", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist"};
  return names;
}

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{
      "background", "hair", "face", "neck", "upper_clothes", "pants", "left_upper_arm",
      "right_upper_arm", "left_forearm", "right_forearm", "left_hand", "right_hand", "left_thigh",
      "right_thigh", "left_shin", "right_shin", "left_shoe", "right_shoe", "hat"};
  return names;
}

const std::vector<Bone>& bones() {
  // Dense-pose parts follow the 24-part body chart numbering: 1/2 torso,
  // 3/4 hands, 5/6 feet, 7-14 legs, 15-22 arms, 23/24 head.
  static const std::vector<Bone> table{
      {"torso", kPelvis, kThorax, 0, kUpperClothes, {1, 2}, 0.20},
      {"r_hipbone", kPelvis, kRHip, 0, kPants, {1, 2}, 0.12},
      {"l_hipbone", kPelvis, kLHip, 0, kPants, {1, 2}, 0.12},
      {"r_shoulderbone", kThorax, kRShoulder, 0, kUpperClothes, {1, 2}, 0.09},
      {"l_shoulderbone", kThorax, kLShoulder, 0, kUpperClothes, {1, 2}, 0.09},
      {"r_thigh", kRHip, kRKnee, 0, kRightThigh, {7, 9}, 0.10},
      {"r_shin", kRKnee, kRAnkle, 0, kRightShin, {11, 13}, 0.08},
      {"r_foot", kRAnkle, -1, 0.06, kRightShoe, {6, 6}, 0.065},
      {"l_thigh", kLHip, kLKnee, 0, kLeftThigh, {8, 10}, 0.10},
      {"l_shin", kLKnee, kLAnkle, 0, kLeftShin, {12, 14}, 0.08},
      {"l_foot", kLAnkle, -1, 0.06, kLeftShoe, {5, 5}, 0.065},
      {"neck", kThorax, kUpperNeck, 0, kNeck, {23, 24}, 0.06},
      {"head", kUpperNeck, kHeadTop, 0, kFace, {23, 24}, 0.15},
      {"r_upper_arm", kRShoulder, kRElbow, 0, kRightUpperArm, {16, 18}, 0.07},
      {"r_forearm", kRElbow, kRWrist, 0, kRightForearm, {20, 22}, 0.06},
      {"r_hand", kRWrist, -1, 0.05, kRightHand, {3, 3}, 0.065},
      {"l_upper_arm", kLShoulder, kLElbow, 0, kLeftUpperArm, {15, 17}, 0.07},
      {"l_forearm", kLElbow, kLWrist, 0, kLeftForearm, {19, 21}, 0.06},
      {"l_hand", kLWrist, -1, 0.05, kLeftHand, {4, 4}, 0.065},
  };
  return table;
}

const std::array<int, kNumJoints>& joint_parents() {
  static const std::array<int, kNumJoints> parents = [] {
    std::array<int, kNumJoints> p{};
    p[kPelvis] = -1;
    p[kThorax] = kPelvis;
    p[kUpperNeck] = kThorax;
    p[kHeadTop] = kUpperNeck;
    p[kRShoulder] = kThorax;
    p[kLShoulder] = kThorax;
    p[kRElbow] = kRShoulder;
    p[kRWrist] = kRElbow;
    p[kLElbow] = kLShoulder;
    p[kLWrist] = kLElbow;
    p[kRHip] = kPelvis;
    p[kLHip] = kPelvis;
    p[kRKnee] = kRHip;
    p[kRAnkle] = kRKnee;
    p[kLKnee] = kLHip;
    p[kLAnkle] = kLKnee;
    return p;
  }();
  return parents;
}

const std::array<std::array<double, 2>, kNumJoints>& joint_angle_ranges() {
  static const std::array<std::array<double, 2>, kNumJoints> ranges = [] {
    std::array<std::array<double, 2>, kNumJoints> r{};
    r[kPelvis] = {-0.15, 0.15};
    r[kThorax] = {-0.15, 0.15};
    r[kUpperNeck] = {-0.2, 0.2};
    r[kHeadTop] = {-0.25, 0.25};
    r[kRShoulder] = {-0.1, 0.1};
    r[kLShoulder] = {-0.1, 0.1};
    r[kRElbow] = {-0.4, 1.5};
    r[kRWrist] = {-0.3, 1.6};
    r[kLElbow] = {-1.5, 0.4};
    r[kLWrist] = {-1.6, 0.3};
    r[kRHip] = {-0.1, 0.1};
    r[kLHip] = {-0.1, 0.1};
    r[kRKnee] = {-0.15, 0.45};
    r[kRAnkle] = {-0.5, 0.3};
    r[kLKnee] = {-0.45, 0.15};
    r[kLAnkle] = {-0.3, 0.5};
    return r;
  }();
  return ranges;
}

FigureSpec identity_spec() {
  FigureSpec s;
  s.joint_angles.assign(kNumJoints, 0.0);
  for (const Bone& b : bones()) s.limb_widths.push_back(b.base_width);
  return s;
}

FigureSpec sample_figure(std::uint64_t rng_seed) {
  Rng rng(splitmix64(rng_seed ^ 0x5eedf16aULL));
  FigureSpec s;
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& r = joint_angle_ranges()[j];
    s.joint_angles.push_back(rng.uniform(r[0], r[1]));
  }
  for (const Bone& b : bones()) s.limb_widths.push_back(b.base_width * rng.uniform(0.85, 1.15));
  s.scale = rng.uniform(0.78, 0.9);
  s.translation = {rng.uniform(0.45, 0.55), rng.uniform(0.50, 0.56)};
  if (rng.uniform() < 0.3) {
    const double w = rng.uniform(0.2, 0.45);
    const double h = rng.uniform(0.15, 0.35);
    const double x0 = rng.uniform(0.0, 1.0 - w);
    const double y0 = rng.uniform(0.0, 1.0 - h);
    s.occluder = Rect{x0, y0, x0 + w, y0 + h};
  }
  s.palette_seed = rng.next();
  return s;
}

std::vector<std::array<double, 2>> joint_positions(const FigureSpec& spec, int height, int width) {
  check_spec(spec);
  const double px = spec.scale * (std::min(height, width) - 1);
  std::vector<std::array<double, 2>> pos(kNumJoints);
  std::array<double, kNumJoints> rot{};
  pos[kPelvis] = {spec.translation[0] * (width - 1), spec.translation[1] * (height - 1)};
  rot[kPelvis] = spec.joint_angles[kPelvis];
  // Parents precede children in this order.
  static const std::array<int, kNumJoints - 1> order{kThorax, kUpperNeck, kHeadTop, kRShoulder, kLShoulder,
                                                      kRElbow, kRWrist,   kLElbow,  kLWrist,    kRHip,
                                                      kLHip,   kRKnee,    kRAnkle,  kLKnee,     kLAnkle};
  for (int j : order) {
    const int p = joint_parents()[j];
    rot[j] = rot[p] + spec.joint_angles[j];
    const RestBone& rb = rest_bones()[j];
    const double c = std::cos(rot[j]), s = std::sin(rot[j]);
    const double dx = c * rb.dx - s * rb.dy;
    const double dy = s * rb.dx + c * rb.dy;
    pos[j] = {pos[p][0] + dx * rb.length * px, pos[p][1] + dy * rb.length * px};
  }
  return pos;
}

AnnotatedSample render_sample(const FigureSpec& spec, int height, int width) {
  check_spec(spec);
  if (height < 64 || width < 64) throw std::invalid_argument("render_sample needs a canvas of at least 64 x 64");
  const double px_per_height = spec.scale * (std::min(height, width) - 1);
  const auto joints = joint_positions(spec, height, width);
  const auto caps = capsules(spec, joints, px_per_height);
  const Palette pal = make_palette(spec.palette_seed);

  AnnotatedSample out;
  out.mask.labels = Raster<std::uint8_t>(height, width, 0);
  out.mask.num_classes = kNumSegClasses;
  DensePoseMap dp;
  dp.part_index = Raster<std::uint8_t>(height, width, 0);
  dp.u = Raster<float>(height, width, 0.0f);
  dp.v = Raster<float>(height, width, 0.0f);
  dp.num_parts = kDefaultNumParts;
  Raster<double> shade(height, width, 1.0);

  for (const Capsule& c : caps) {
    const double len = std::hypot(c.bx - c.ax, c.by - c.ay);
    const double dx = len > 0 ? (c.bx - c.ax) / len : 0.0;
    const double dy = len > 0 ? (c.by - c.ay) / len : 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(c.ax, c.bx) - c.radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(c.ax, c.bx) + c.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(c.ay, c.by) - c.radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(c.ay, c.by) + c.radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double rx = x - c.ax, ry = y - c.ay;
        const double along = rx * dx + ry * dy;
        const double perp = dx * ry - dy * rx;
        const double t = std::clamp(along, 0.0, len);
        const double ex = rx - t * dx, ey = ry - t * dy;
        if (ex * ex + ey * ey > c.radius * c.radius) continue;
        const double u = std::clamp((along + c.radius) / (len + 2 * c.radius), 0.0, 1.0);
        const double v = std::clamp((perp + c.radius) / (2 * c.radius), 0.0, 1.0);
        std::uint8_t cls = c.bone->seg_class;
        if (cls == kFace && u >= 0.55) cls = (pal.hat && u >= 0.78) ? kHat : kHair;
        out.mask.labels.at(y, x) = cls;
        dp.part_index.at(y, x) = c.bone->parts[v < 0.5 ? 0 : 1];
        dp.u.at(y, x) = quantize_uv(u);
        dp.v.at(y, x) = quantize_uv(v);
        shade.at(y, x) = 0.8 + 0.35 * (1.0 - std::abs(2.0 * v - 1.0));
      }
    }
  }
  if (std::all_of(out.mask.labels.data.begin(), out.mask.labels.data.end(), [](std::uint8_t c) { return c == 0; })) {
    throw std::invalid_argument("figure projects entirely outside the canvas");
  }

  std::optional<Rect> occ_px;
  if (spec.occluder) {
    const Rect& r = *spec.occluder;
    occ_px = Rect{r.x0 * (width - 1), r.y0 * (height - 1), r.x1 * (width - 1), r.y1 * (height - 1)};
  }

  out.image = Image(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool occluded = occ_px && occ_px->contains(x, y);
      if (occluded) {
        out.mask.labels.at(y, x) = 0;
        dp.part_index.at(y, x) = 0;
        dp.u.at(y, x) = 0.0f;
        dp.v.at(y, x) = 0.0f;
      }
      const std::uint8_t cls = out.mask.labels.at(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        double val;
        if (occluded) {
          val = pal.occluder[ch] + 0.05 * ((x / 4 + y / 4) % 2);
        } else if (cls == 0) {
          val = pal.bg_base[ch] + pal.bg_wave[ch] * std::sin(pal.wave_fx * x + pal.wave_fy * y + pal.wave_phase);
        } else {
          val = pal.class_rgb[cls][ch] * shade.at(y, x);
        }
        val += 0.04 * (hash_noise(spec.palette_seed, x, y, ch) - 0.5);
        out.image.at(ch, y, x) = quantize_pixel(std::clamp(val, 0.0, 1.0));
      }
    }
  }

  // A joint is visible unless it leaves the canvas, sits under the occluder,
  // or none of its incident capsules shows within a capsule radius of it.
  out.skeleton.joints.resize(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    const double jx = joints[j][0], jy = joints[j][1];
    Joint& joint = out.skeleton.joints[j];
    joint.x = jx;
    joint.y = jy;
    bool visible = jx >= 0 && jx <= width - 1 && jy >= 0 && jy <= height - 1;
    if (visible && occ_px && occ_px->contains(jx, jy)) visible = false;
    if (visible) {
      bool shown = false;
      for (const Capsule& c : caps) {
        const Bone& b = *c.bone;
        if (b.parent != j && b.child != j) continue;
        const double tol = c.radius;
        const int ya = std::max(0, static_cast<int>(std::floor(jy - tol)));
        const int yb = std::min(height - 1, static_cast<int>(std::ceil(jy + tol)));
        const int xa = std::max(0, static_cast<int>(std::floor(jx - tol)));
        const int xb = std::min(width - 1, static_cast<int>(std::ceil(jx + tol)));
        for (int y = ya; y <= yb && !shown; ++y) {
          for (int x = xa; x <= xb && !shown; ++x) {
            if ((x - jx) * (x - jx) + (y - jy) * (y - jy) > tol * tol) continue;
            const std::uint8_t cls = out.mask.labels.at(y, x);
            shown = cls == b.seg_class || (b.seg_class == kFace && (cls == kHair || cls == kHat));
          }
        }
        if (shown) break;
      }
      visible = shown;
    }
    joint.visible = visible;
  }
  out.densepose = std::move(dp);
  return out;
}

std::uint64_t sample_seed(std::uint64_t base_seed, int index) {
  return splitmix64(splitmix64(base_seed) + static_cast<std::uint64_t>(index));
}

std::vector<AnnotatedSample> generate_samples(int count, std::uint64_t base_seed, int height, int width) {
  if (count < 1) throw std::invalid_argument("sample count must be at least 1");
  std::vector<AnnotatedSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    // Rare draws can leave the canvas; step to the next seed deterministically.
    for (std::uint64_t attempt = 0;; ++attempt) {
      try {
        AnnotatedSample s = render_sample(sample_figure(sample_seed(base_seed, i) + attempt * 0x10000ULL), height, width);
        char id[32];
        std::snprintf(id, sizeof id, "sample_%06d", i);
        s.sample_id = id;
        out.push_back(std::move(s));
        break;
      } catch (const std::invalid_argument&) {
        if (attempt > 16) throw;
      }
    }
  }
  return out;
}

std::filesystem::path generate_split(int count, std::uint64_t base_seed, const std::filesystem::path& out_dir,
                                     int height, int width) {
  return save_split(generate_samples(count, base_seed, height, width), out_dir, joint_names());
}

}  // namespace spd::synth
