#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "model_util.hpp"
#include "spd/cli/commands.hpp"
#include "spd/cli/render.hpp"
#include "spd/core/io.hpp"
#include "spd/synth/figure.hpp"
#include "spd/trainer/config_json.hpp"
#include "test_util.hpp"

using namespace spd;
using namespace spd::cli;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Run {
  int status;
  std::string out;
  std::string err;
};

template <typename Cmd>
Run run(Cmd cmd, const Overrides& o) {
  std::ostringstream out, err;
  const int status = cmd(o, out, err);
  return {status, out.str(), err.str()};
}

/// Small splits plus a run config pointing at them.
struct Workspace {
  spd::test::TempDir dir{"cli"};

  explicit Workspace(long iterations = 3, json extra = json::object()) {
    synth::generate_split(4, 42, root() / "train");
    synth::generate_split(3, 900, root() / "eval");
    json j = {{"model", trainer::model_config_to_json(spd::test::tiny_config(Variant::kSPD))},
              {"trainer", {{"iterations", iterations}, {"batch_size", 2}}},
              {"train_manifest", "train/manifest.txt"},
              {"eval_manifest", "eval/manifest.txt"},
              {"out_dir", "run"},
              {"seeds", {1}}};
    j.merge_patch(extra);
    write("run.json", j.dump(2));
  }
  [[nodiscard]] fs::path root() const { return dir.path(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(root() / name) << text; }
  [[nodiscard]] Overrides with(const std::string& config = "run.json") const {
    Overrides o;
    o.config = root() / config;
    return o;
  }
};

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("synth writes the requested count deterministically and rejects zero") {
  spd::test::TempDir dir("synth");
  Overrides o;
  o.count = 8;
  o.seed = 42;
  o.out = dir.path() / "a";
  const Run a = run(cmd_synth, o);
  REQUIRE(a.status == 0);
  CHECK(a.out.find("manifest.txt") != std::string::npos);
  CHECK(read_manifest(dir.path() / "a" / "manifest.txt").entries.size() == 8);

  o.out = dir.path() / "b";
  REQUIRE(run(cmd_synth, o).status == 0);
  for (const auto& f : fs::recursive_directory_iterator(dir.path() / "a")) {
    if (!f.is_regular_file()) continue;
    const fs::path rel = fs::relative(f.path(), dir.path() / "a");
    CHECK(slurp(f.path()) == slurp(dir.path() / "b" / rel));
  }

  o.count = 0;
  const Run z = run(cmd_synth, o);
  CHECK(z.status != 0);
  CHECK(z.err.find("count") != std::string::npos);
}

TEST_CASE("run config: unknown keys are rejected by name, relative paths resolve against the file") {
  Workspace w;
  w.write("bad.json", R"({"model": {}, "trainer": {"iteration": 3}})");
  const Run bad = run(cmd_train, w.with("bad.json"));
  CHECK(bad.status != 0);
  CHECK(bad.err.find("'iteration'") != std::string::npos);

  w.write("bad2.json", R"({"modle": {}})");
  CHECK(run(cmd_train, w.with("bad2.json")).err.find("'modle'") != std::string::npos);

  const RunConfig c = load_run_config(w.root() / "run.json");
  CHECK(*c.train_manifest == w.root() / "train" / "manifest.txt");
  CHECK(c.out_dir == w.root() / "run");
  CHECK(c.train.iterations == 3);
  CHECK(c.train.model == spd::test::tiny_config(Variant::kSPD));

  CHECK_THROWS_AS(parse_run_config(R"({"seeds": []})", "."), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config(R"({"seeds": "one"})", "."), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("not json", "."), std::invalid_argument);
}

TEST_CASE("train writes checkpoint and log; reruns are byte-identical") {
  Workspace w;
  const Run a = run(cmd_train, w.with());
  REQUIRE_MESSAGE(a.status == 0, a.err);
  const fs::path run_dir = w.root() / "run";
  CHECK(fs::is_regular_file(run_dir / kCheckpointFile));
  const auto log = lines(slurp(run_dir / kTrainLogFile));
  REQUIRE(log.size() == 3);
  CHECK(log[2].rfind("iteration=3 ", 0) == 0);

  const std::string ckpt = slurp(run_dir / kCheckpointFile);
  Overrides again = w.with();
  again.out = w.root() / "run2";
  REQUIRE(run(cmd_train, again).status == 0);
  CHECK(slurp(w.root() / "run2" / kTrainLogFile) == slurp(run_dir / kTrainLogFile));
  CHECK(slurp(w.root() / "run2" / kCheckpointFile) == ckpt);
}

TEST_CASE("flags win over the config file") {
  Workspace w;
  Overrides o = w.with();
  o.variant = "S";
  o.seed = 11;
  o.out = w.root() / "s_run";
  REQUIRE(run(cmd_train, o).status == 0);
  for (const auto& l : lines(slurp(w.root() / "s_run" / kTrainLogFile))) {
    CHECK(l.find(" l_pose=0 ") != std::string::npos);
    CHECK(l.find(" l_dense=0 ") != std::string::npos);
  }
  const auto state = trainer::load_checkpoint(w.root() / "s_run" / kCheckpointFile);
  CHECK(state.config.model.variant == Variant::kS);
  CHECK(state.config.model.seed == 11);

  Overrides bad = w.with();
  bad.variant = "SDP";
  CHECK(run(cmd_train, bad).status != 0);
}

TEST_CASE("train resumes from a checkpoint to the same bytes as an uninterrupted run") {
  Workspace full(4);
  REQUIRE(run(cmd_train, full.with()).status == 0);

  Workspace part(2);
  REQUIRE(run(cmd_train, part.with()).status == 0);
  Workspace rest(4);
  Overrides o = rest.with();
  o.checkpoint = part.root() / "run" / kCheckpointFile;
  const Run r = run(cmd_train, o);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(lines(r.out).size() == 3);  // two steps plus the checkpoint line
  CHECK(slurp(rest.root() / "run" / kTrainLogFile) == slurp(full.root() / "run" / kTrainLogFile));
  CHECK(slurp(rest.root() / "run" / kCheckpointFile) == slurp(full.root() / "run" / kCheckpointFile));
}

TEST_CASE("divergent training exits nonzero citing the iteration") {
  Workspace w(5, {{"trainer", {{"learning_rate", 1e30}}}});
  const Run r = run(cmd_train, w.with());
  CHECK(r.status != 0);
  CHECK(r.err.find("at iteration") != std::string::npos);
  CHECK_FALSE(fs::exists(w.root() / "run" / kCheckpointFile));
}

TEST_CASE("eval writes report files; self-check scores 1; missing inputs fail") {
  Workspace w;
  REQUIRE(run(cmd_train, w.with()).status == 0);
  const Run e = run(cmd_eval, w.with());
  REQUIRE_MESSAGE(e.status == 0, e.err);
  const std::string kv = slurp(w.root() / "run" / "metrics.kv");
  for (const char* key : {"iou=", "precision=", "recall=", "f1=", "med_pixels=", "gps="}) {
    CHECK(("\n" + kv).find(std::string("\n") + key) != std::string::npos);
  }
  CHECK(fs::is_regular_file(w.root() / "run" / "report.txt"));

  Overrides self = w.with();
  self.self_check = true;
  self.out = w.root() / "self";
  REQUIRE(run(cmd_eval, self).status == 0);
  const std::string skv = slurp(w.root() / "self" / "metrics.kv");
  for (const char* line : {"iou=1\n", "precision=1\n", "recall=1\n", "f1=1\n", "med_pixels=0\n", "gps=1\n"}) {
    CHECK_MESSAGE(skv.find(line) != std::string::npos, line);
  }

  auto no_dense = load_split(w.root() / "eval" / "manifest.txt");
  for (auto& s : no_dense) s.densepose.reset();
  const fs::path nd = save_split(no_dense, w.root() / "nodense", synth::joint_names());
  Overrides o = w.with();
  o.manifest = nd;
  o.out = w.root() / "nd_out";
  REQUIRE(run(cmd_eval, o).status == 0);
  CHECK(slurp(w.root() / "nd_out" / "metrics.kv").find("gps=") == std::string::npos);

  Overrides missing = w.with();
  missing.checkpoint = w.root() / "nope.ckpt";
  const Run m = run(cmd_eval, missing);
  CHECK(m.status != 0);
  CHECK(m.err.find("nope.ckpt") != std::string::npos);
}

TEST_CASE("ablate writes a four-row table and flags failed cells with a nonzero exit") {
  Workspace w(1);
  const Run a = run(cmd_ablate, w.with());
  REQUIRE_MESSAGE(a.status == 0, a.err);
  const std::string tsv = slurp(w.root() / "run" / "ablation.tsv");
  for (const char* v : {"SPD\t1\t", "SP\t1\t", "SD\t1\t", "S\t1\t"}) CHECK(tsv.find(v) != std::string::npos);
  CHECK(fs::is_regular_file(w.root() / "run" / "ablation.txt"));

  synth::generate_split(2, 5, w.root() / "odd", 80, 64);
  Overrides o = w.with();
  o.manifest = w.root() / "odd" / "manifest.txt";
  o.out = w.root() / "odd_run";
  const Run bad = run(cmd_ablate, o);
  CHECK(bad.status != 0);
  CHECK(slurp(w.root() / "odd_run" / "ablation.txt").find("failed") != std::string::npos);
}

TEST_CASE("report renders five overlays per sample and two plots, deterministically") {
  Workspace w;
  REQUIRE(run(cmd_train, w.with()).status == 0);
  Overrides o = w.with();
  o.out = w.root() / "rep";
  const Run r = run(cmd_report, o);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  std::set<std::string> pngs;
  for (const auto& f : fs::directory_iterator(w.root() / "rep")) {
    if (f.path().extension() == ".png") pngs.insert(f.path().filename().string());
  }
  CHECK(pngs.size() == 15);
  for (const char* suffix : {"_input", "_target", "_pred", "_skeleton", "_parts"}) {
    CHECK(pngs.count(std::string("sample_000000") + suffix + ".png") == 1);
  }
  const std::string svg = slurp(w.root() / "rep" / "loss_curve.svg");
  const auto start = svg.find("points=\"") + 8;
  const std::string pts = svg.substr(start, svg.find('"', start) - start);
  CHECK(std::count(pts.begin(), pts.end(), ',') == 3);
  const std::string bars = slurp(w.root() / "rep" / "class_iou.svg");
  std::size_t n_bars = 0;
  for (auto p = bars.find("class=\"bar\""); p != std::string::npos; p = bars.find("class=\"bar\"", p + 1)) ++n_bars;
  CHECK(n_bars == 19);

  Overrides again = w.with();
  again.out = w.root() / "rep2";
  again.count = 1;
  REQUIRE(run(cmd_report, again).status == 0);
  for (const char* f : {"sample_000000_pred.png", "sample_000000_skeleton.png", "loss_curve.svg", "class_iou.svg"}) {
    CHECK(slurp(w.root() / "rep" / f) == slurp(w.root() / "rep2" / f));
  }
  CHECK_FALSE(fs::exists(w.root() / "rep2" / "sample_000001_input.png"));
}

TEST_CASE("palette: fixed, background black, labels distinct") {
  CHECK(palette(0) == Rgb{0, 0, 0});
  std::set<Rgb> seen;
  for (int c = 1; c <= 24; ++c) {
    CHECK(palette(c) == palette(c));
    CHECK(palette(c) != Rgb{0, 0, 0});
    seen.insert(palette(c));
  }
  CHECK(seen.size() == 24);
}

TEST_CASE("overlays: background pixels keep the image; joints are drawn") {
  const AnnotatedSample s = synth::render_sample(synth::identity_spec(), 64, 64);
  const RgbImage base = to_rgb(s.image);
  const RgbImage over = label_overlay(s.image, s.mask.labels);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (s.mask.labels.at(y, x) == 0) {
        REQUIRE(over.at(y, x) == base.at(y, x));
      } else {
        REQUIRE(over.at(y, x) != base.at(y, x));
      }
    }
  }
  const auto& pa = synth::joint_parents();
  const RgbImage sk = skeleton_overlay(s.image, s.skeleton, std::vector<int>(pa.begin(), pa.end()));
  for (const Joint& j : s.skeleton.joints) {
    if (j.visible) CHECK(sk.at(static_cast<int>(std::lround(j.y)), static_cast<int>(std::lround(j.x))) == Rgb{255, 255, 255});
  }
  Raster<std::uint8_t> wrong(32, 32, 0);
  CHECK_THROWS_AS(label_overlay(s.image, wrong), std::invalid_argument);
}

TEST_CASE("svg plots: one point per logged iteration") {
  std::vector<objectives::LossBreakdown> h(7);
  for (std::size_t i = 0; i < h.size(); ++i) h[i].total = h[i].l_seg = 1.0 / (1 + static_cast<double>(i));
  const std::string svg = loss_curve_svg(h);
  for (const char* series : {"total", "l_seg", "l_pose", "l_dense"}) {
    const auto at = svg.find(std::string("class=\"") + series + "\"");
    REQUIRE(at != std::string::npos);
    const auto start = svg.find("points=\"", at) + 8;
    const std::string pts = svg.substr(start, svg.find('"', start) - start);
    CHECK(std::count(pts.begin(), pts.end(), ',') == 7);
  }
  CHECK(loss_curve_svg({}).find("<svg") == 0);
}
