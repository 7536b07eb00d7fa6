#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spd/core/io.hpp"
#include "spd/core/types.hpp"
#include "spd/synth/figure.hpp"
#include "test_util.hpp"

using namespace spd;

namespace {

AnnotatedSample consistent_sample() {
  AnnotatedSample s = synth::render_sample(synth::identity_spec(), 64, 64);
  s.sample_id = "identity";
  return s;
}

}  // namespace

TEST_CASE("default_config carries the published weights and label counts") {
  const ModelConfig c = default_config();
  CHECK(c.lambda_s == 1.0);
  CHECK(c.lambda_p == 0.8);
  CHECK(c.lambda_d == 0.6);
  CHECK(c.num_joints == 16);
  CHECK(c.num_classes == 19);
  CHECK(c.num_parts == 24);
  CHECK(c.variant == Variant::kSPD);
  CHECK(c.backbone_blocks.size() == 5);
  CHECK_NOTHROW(check_config(c));
}

TEST_CASE("check_config rejects malformed backbones and weights") {
  ModelConfig c = default_config();
  c.backbone_blocks.pop_back();
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = default_config();
  c.backbone_blocks[2].width = 0;
  CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("zero channel width"), std::invalid_argument);
  c = default_config();
  c.lambda_p = -0.1;
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = default_config();
  c.aspp_rates = {1, 0};
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
}

TEST_CASE("variant names round-trip") {
  for (Variant v : {Variant::kSPD, Variant::kSP, Variant::kSD, Variant::kS}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("SX"), std::invalid_argument);
  CHECK(has_pose(Variant::kSP));
  CHECK_FALSE(has_pose(Variant::kSD));
  CHECK(has_dense(Variant::kSD));
  CHECK_FALSE(has_dense(Variant::kS));
}

TEST_CASE("validate_sample on a consistent sample is empty") {
  CHECK(validate_sample(consistent_sample()).empty());
}

TEST_CASE("validate_sample reports an out-of-range class") {
  AnnotatedSample s = consistent_sample();
  s.mask.labels.at(3, 3) = static_cast<std::uint8_t>(s.mask.num_classes);
  CHECK(validate_sample(s) == std::vector<std::string>{"class index out of range"});
}

TEST_CASE("validate_sample reports UV on background") {
  AnnotatedSample s = consistent_sample();
  REQUIRE(s.densepose->part_index.at(0, 0) == 0);
  s.densepose->u.at(0, 0) = 0.5f;
  CHECK(validate_sample(s) == std::vector<std::string>{"UV nonzero on background"});
}

TEST_CASE("validate_sample flags every randomised corruption and nothing else") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    AnnotatedSample s = synth::render_sample(synth::sample_figure(trial), 64, 64);
    REQUIRE(validate_sample(s).empty());
    auto& d = *s.densepose;
    const int y = static_cast<int>(rng() % 64);
    const int x = static_cast<int>(rng() % 64);
    switch (trial % 6) {
      case 0:
        s.mask.labels.at(y, x) = static_cast<std::uint8_t>(19 + rng() % 200);
        break;
      case 1:
        d.part_index.at(y, x) = 0;
        d.u.at(y, x) = 0.25f;
        break;
      case 2:
        d.v.at(y, x) = 1.5f;
        break;
      case 3:
        s.skeleton.joints.pop_back();
        break;
      case 4:
        s.skeleton.joints[rng() % 16] = Joint{-3.0, 10.0, true};
        break;
      case 5:
        s.mask.labels = Raster<std::uint8_t>(63, 64, 0);
        break;
    }
    CHECK_FALSE(validate_sample(s).empty());
  }
}

TEST_CASE("split round-trips through disk bit-identically") {
  test::TempDir dir("roundtrip");
  std::vector<AnnotatedSample> samples = synth::generate_samples(3, 99);
  samples[1].densepose.reset();  // dense-pose annotation is optional per sample
  const auto manifest = save_split(samples, dir.path(), synth::joint_names());
  const auto loaded = load_split(manifest);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].sample_id == samples[i].sample_id);
    CHECK(loaded[i].image == samples[i].image);
    CHECK(loaded[i].mask == samples[i].mask);
    CHECK(loaded[i].skeleton == samples[i].skeleton);
    CHECK(loaded[i].densepose == samples[i].densepose);
  }
  const Manifest m = read_manifest(manifest);
  CHECK(m.joint_names == synth::joint_names());
  CHECK_FALSE(m.entries[1].has_densepose());
}

TEST_CASE("skeleton file uses one id line then joint_index x y visible lines") {
  test::TempDir dir("skel");
  Skeleton sk;
  sk.joints = {{1.5, 2.25, true}, {0.1, 63.0, false}};
  write_skeleton_file(dir.path() / "s.txt", {{"abc", sk}});
  std::ifstream in(dir.path() / "s.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "abc\n0 1.5 2.25 1\n1 0.1 63 0\n");
  const auto back = read_skeleton_file(dir.path() / "s.txt", 2);
  REQUIRE(back.size() == 1);
  CHECK(back[0].skeleton == sk);
}

TEST_CASE("uv and pixel quantisation is exact on re-quantisation") {
  for (int q = 0; q < 65536; q += 97) {
    const float v = uv_from_u16(static_cast<std::uint16_t>(q));
    CHECK(uv_to_u16(v) == q);
  }
  for (int q = 0; q < 256; ++q) CHECK(pixel_to_u8(pixel_from_u8(static_cast<std::uint8_t>(q))) == q);
}

TEST_CASE("I/O errors carry the offending path") {
  CHECK_THROWS_WITH_AS(read_manifest("/nonexistent/dir/manifest.txt"), doctest::Contains("/nonexistent/dir"),
                       IoError);
  CHECK_THROWS_WITH_AS(read_png_gray8("/nonexistent/x.png"), doctest::Contains("/nonexistent/x.png"), IoError);
}
