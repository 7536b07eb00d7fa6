// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit status is nonzero if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "spd/metrics/metrics.hpp"
#include "spd/model/model.hpp"
#include "spd/objectives/losses.hpp"
#include "spd/synth/figure.hpp"
#include "spd/trainer/trainer.hpp"

using namespace spd;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kMedTol = 1e-9;
constexpr double kGpsTol = 1e-9;
constexpr double kSoftmaxTol = 1e-6;
constexpr double kResumeTol = 1e-6;
constexpr double kOverfitMiou = 0.90;
constexpr long kOverfitMaxIterations = 3000;
constexpr long kOverfitChunk = 250;
constexpr long kAblationIterations = 1500;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  Outcome& o;
  void operator()(bool ok, const std::string& what) {
    if (!ok) {
      o.pass = false;
      if (!o.detail.empty()) o.detail += "; ";
      o.detail += "failed: " + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

Outcome f1_arithmetic() {
  Outcome o;
  Check check{o};
  const double a = metrics::f1_score(0.67, 0.70), b = metrics::f1_score(0.69, 0.53);
  check(round2(a) == 0.68, "F1(0.67, 0.70) = " + fmt("%.6f", a));
  check(round2(b) == 0.60, "F1(0.69, 0.53) = " + fmt("%.6f", b));
  if (o.pass) o.detail = "F1(0.67,0.70)=" + fmt("%.4f", a) + "~0.68, F1(0.69,0.53)=" + fmt("%.4f", b) + "~0.60";
  return o;
}

Outcome joint_loss_weighting() {
  Outcome o;
  Check check{o};
  const auto b = objectives::joint_loss(1, 1, 1, objectives::weights_for(default_config()));
  check(b.total == 2.4, "total = " + fmt("%.17g", b.total));
  if (o.pass) o.detail = "joint_loss(1,1,1) = 2.4 with weights (1, 0.8, 0.6)";
  return o;
}

SegMask random_mask(int h, int w, int k, std::mt19937_64& rng) { return spd::test::random_seg_mask(h, w, k, rng); }

DensePoseMap random_dense(int h, int w, int parts, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DensePoseMap d;
  d.num_parts = parts;
  d.part_index = Raster<std::uint8_t>(h, w);
  d.u = Raster<float>(h, w);
  d.v = Raster<float>(h, w);
  for (std::size_t i = 0; i < d.part_index.size(); ++i) {
    const int p = static_cast<int>(rng() % (parts + 1));
    d.part_index.data[i] = static_cast<std::uint8_t>(p);
    if (p > 0) {
      d.u.data[i] = static_cast<float>(u(rng));
      d.v.data[i] = static_cast<float>(u(rng));
    }
  }
  return d;
}

Outcome gradient_suite() {
  using spd::test::grad_check;
  using spd::test::random_tensor;
  Outcome o;
  Check check{o};
  std::mt19937_64 rng(20240);
  constexpr int kInstances = 20;
  double worst_seg = 0, worst_pose = 0, worst_dense = 0;
  for (int t = 0; t < kInstances; ++t) {
    const int n = 1 + t % 3, k = 2 + t % 18, h = 2 + t % 4, w = 2 + (t / 4) % 3;
    auto logits = nn::constant(random_tensor(nn::Shape{n, k, h, w}, rng, -3, 3));
    std::vector<SegMask> masks;
    for (int b = 0; b < n; ++b) masks.push_back(random_mask(h, w, k, rng));
    worst_seg = std::max(worst_seg, grad_check({logits}, [&] { return objectives::seg_loss(logits, masks); }).max_rel_error);

    auto coords = nn::constant(random_tensor(nn::Shape{n, kDefaultNumJoints, 1, 2}, rng, 0, 1));
    std::vector<Skeleton> sks(n);
    for (auto& s : sks) {
      for (int j = 0; j < kDefaultNumJoints; ++j) {
        s.joints.push_back({static_cast<double>(rng() % 64), static_cast<double>(rng() % 48), rng() % 5 != 0});
      }
      s.joints[0].visible = true;
    }
    worst_pose = std::max(worst_pose, grad_check({coords}, [&] {
                                        return objectives::pose_loss(coords, sks, 48, 64).value;
                                      }).max_rel_error);

    const int parts = 1 + t % 6;
    auto part_logits = nn::constant(random_tensor(nn::Shape{n, parts + 1, h, w}, rng, -2, 2));
    auto uv = nn::constant(random_tensor(nn::Shape{n, 2, h, w}, rng, -1.5, 2.5));
    std::vector<DensePoseMap> maps;
    for (int b = 0; b < n; ++b) maps.push_back(random_dense(h, w, parts, rng));
    std::vector<const DensePoseMap*> targets;
    for (const auto& m : maps) targets.push_back(&m);
    for (DenseLossForm form : {DenseLossForm::kProduct, DenseLossForm::kSum}) {
      worst_dense = std::max(worst_dense, grad_check({part_logits, uv}, [&] {
                                            return objectives::dense_loss(part_logits, uv, targets, form, 1.0);
                                          }).max_rel_error);
    }
  }
  check(worst_seg < kGradRelTol, "seg rel error " + fmt("%.3g", worst_seg));
  check(worst_pose < kGradRelTol, "pose rel error " + fmt("%.3g", worst_pose));
  check(worst_dense < kGradRelTol, "dense rel error " + fmt("%.3g", worst_dense));
  o.detail = (o.pass ? "" : o.detail + " | ") + std::to_string(kInstances) +
             " instances per loss; worst relative error seg " + fmt("%.2e", worst_seg) + ", pose " +
             fmt("%.2e", worst_pose) + ", dense " + fmt("%.2e", worst_dense);
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  Check check{o};
  std::mt19937_64 rng(4242);
  int mismatches = 0;
  std::vector<std::pair<SegMask, SegMask>> all;
  metrics::ConfusionAccumulator total(kDefaultNumClasses);
  for (int i = 0; i < 100; ++i) {
    const int k = 2 + static_cast<int>(rng() % (kDefaultNumClasses - 1));
    SegMask target = random_mask(16, 16, k, rng), pred = random_mask(16, 16, k, rng);
    target.num_classes = pred.num_classes = kDefaultNumClasses;
    // Bias towards agreement so scores are not all near zero.
    for (std::size_t p = 0; p < pred.labels.size(); ++p) {
      if (rng() % 3) pred.labels.data[p] = target.labels.data[p];
    }
    metrics::ConfusionAccumulator acc(kDefaultNumClasses);
    acc.accumulate(pred, target);
    total.accumulate(pred, target);
    const auto want = spd::test::oracle_scores(spd::test::count_pixels({{pred, target}}, kDefaultNumClasses));
    const auto prf = metrics::precision_recall_f1(acc);
    if (metrics::miou(acc) != want.miou || prf.precision != want.precision || prf.recall != want.recall ||
        prf.f1 != want.f1) {
      ++mismatches;
    }
    all.emplace_back(pred, target);
  }
  const auto agg = spd::test::oracle_scores(spd::test::count_pixels(all, kDefaultNumClasses));
  check(mismatches == 0, std::to_string(mismatches) + " of 100 mask pairs differ from pixel counting");
  check(metrics::miou(total) == agg.miou && metrics::precision_recall_f1(total).f1 == agg.f1,
        "aggregate over 100 pairs differs from pixel counting");

  double worst_med = 0;
  for (int i = 0; i < 100; ++i) {
    Skeleton a, b;
    std::uniform_real_distribution<double> pos(0, 64);
    double sum = 0;
    int n = 0;
    for (int j = 0; j < kDefaultNumJoints; ++j) {
      a.joints.push_back({pos(rng), pos(rng), true});
      b.joints.push_back({pos(rng), pos(rng), j == 0 || rng() % 4 != 0});
      if (b.joints[j].visible) {
        const double dx = a.joints[j].x - b.joints[j].x, dy = a.joints[j].y - b.joints[j].y;
        sum += std::sqrt(dx * dx + dy * dy);
        ++n;
      }
    }
    worst_med = std::max(worst_med, std::abs(metrics::mean_euclidean_distance(a, b) - sum / n));
  }
  check(worst_med <= kMedTol, "mED error " + fmt("%.3g", worst_med));

  DensePoseMap target;
  target.part_index = Raster<std::uint8_t>(4, 4, 3);
  target.u = Raster<float>(4, 4, 0.25f);
  target.v = Raster<float>(4, 4, 0.5f);
  const auto points = metrics::foreground_points(target);
  const double perfect = metrics::geodesic_point_similarity(target, target, points);
  DensePoseMap shifted = target;
  for (auto& u : shifted.u.data) u = 0.5f;  // d = 0.25 in chart units
  const double at_k = metrics::geodesic_point_similarity(shifted, target, points, {0.25});
  DensePoseMap half = target;
  for (auto& u : half.u.data) u = 0.375f;  // d = 0.125, doubled by the chart size
  const double scaled = metrics::geodesic_point_similarity(half, target, points, {0.25}, {2.0});
  check(std::abs(perfect - 1.0) <= kGpsTol, "GPS perfect = " + fmt("%.12g", perfect));
  check(std::abs(at_k - std::exp(-0.5)) <= kGpsTol, "GPS at d=k = " + fmt("%.12g", at_k));
  check(std::abs(scaled - std::exp(-0.5)) <= kGpsTol, "GPS with chart size = " + fmt("%.12g", scaled));
  if (o.pass) {
    o.detail = "100 mask pairs exact vs pixel counting; mED error " + fmt("%.1e", worst_med) + "; GPS perfect=1, d=k -> " +
               fmt("%.9f", at_k);
  }
  return o;
}

Outcome shape_invariants() {
  Outcome o;
  Check check{o};
  const ModelConfig cfg = default_config();
  const auto net = model::build_variant<float>(cfg);
  std::vector<AnnotatedSample> samples = synth::generate_samples(2, 31337);
  std::vector<const AnnotatedSample*> ptrs{&samples[0], &samples[1]};
  nn::NoGradGuard guard;
  const auto out = net->forward(nn::constant(model::stack_images<float>(ptrs)), false);
  const auto& logits = out.seg.final_logits->value;
  check(logits.shape() == nn::Shape{2, 19, 64, 64}, "seg logits shape " + nn::to_string(logits.shape()));
  const nn::Tensor<float> probs = nn::softmax_channels(logits);
  double worst = 0;
  for (int n = 0; n < 2; ++n) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        double s = 0;
        for (int c = 0; c < 19; ++c) s += probs.at(n, c, y, x);
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
  }
  check(worst <= kSoftmaxTol, "softmax sum error " + fmt("%.3g", worst));
  check(out.pose && out.pose->refined_coords->value.shape() == nn::Shape{2, 16, 1, 2}, "pose coordinates not (2,16,1,2)");
  check(out.dense && out.dense->part_logits->value.shape() == nn::Shape{2, 25, 64, 64}, "part logits not 25 channels");
  bool uv_ok = out.dense.has_value();
  if (out.dense) {
    for (float v : out.dense->uv->value.vec()) uv_ok = uv_ok && v >= 0.0f && v <= 1.0f;
    for (const auto& d : model::predict_densepose(out.dense->part_logits->value, out.dense->uv->value)) {
      for (std::size_t i = 0; i < d.u.size(); ++i) {
        uv_ok = uv_ok && d.u.data[i] >= 0 && d.u.data[i] <= 1 && d.v.data[i] >= 0 && d.v.data[i] <= 1;
      }
    }
  }
  check(uv_ok, "UV outside [0, 1]");
  const auto skeletons = model::to_pixels(out.pose->refined_coords->value, 64, 64);
  check(skeletons.size() == 2 && skeletons[0].size() == 16, "decoded skeleton does not have 16 joints");

  int invalid = 0;
  std::string first;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    try {
      const auto v = validate_sample(synth::render_sample(synth::sample_figure(seed), 64, 64));
      if (!v.empty()) {
        ++invalid;
        if (first.empty()) first = "seed " + std::to_string(seed) + ": " + v.front();
      }
    } catch (const std::exception& e) {
      ++invalid;
      if (first.empty()) first = "seed " + std::to_string(seed) + ": " + e.what();
    }
  }
  check(invalid == 0, std::to_string(invalid) + " of 1000 generated samples invalid (" + first + ")");
  if (o.pass) o.detail = "softmax sum error " + fmt("%.1e", worst) + "; K=19, N=16, P+1=25; 1000/1000 samples valid";
  return o;
}

Outcome overfit() {
  Outcome o;
  Check check{o};
  const auto data = synth::generate_samples(8, 7);
  trainer::TrainConfig tc;
  tc.iterations = kOverfitMaxIterations;
  trainer::TrainState s = trainer::init_state(tc);
  const double threshold = std::log(19.0) / 10.0;
  double l_seg = 0, iou = 0;
  while (s.iteration < kOverfitMaxIterations) {
    trainer::train_steps(s, data, kOverfitChunk);
    // Mean over the last chunk of logged training losses.
    l_seg = 0;
    for (std::size_t i = s.loss_history.size() - kOverfitChunk; i < s.loss_history.size(); ++i) {
      l_seg += s.loss_history[i].l_seg;
    }
    l_seg /= kOverfitChunk;
    iou = trainer::evaluate(*s.model, data).iou;
    std::printf("  overfit: iteration %ld  l_seg %.4f  train mIoU %.4f\n", s.iteration, l_seg, iou);
    std::fflush(stdout);
    if (l_seg < threshold && iou >= kOverfitMiou) break;
  }
  check(l_seg < threshold, "l_seg " + fmt("%.4f", l_seg) + " >= ln(19)/10");
  check(iou >= kOverfitMiou, "train mIoU " + fmt("%.4f", iou));
  o.detail = (o.pass ? "" : o.detail + " | ") + std::to_string(s.iteration) + " iterations: l_seg " +
             fmt("%.4f", l_seg) + " (< " + fmt("%.4f", threshold) + "), train mIoU " + fmt("%.4f", iou);
  return o;
}

Outcome ablation_trend() {
  Outcome o;
  Check check{o};
  const auto train = synth::generate_samples(256, 1000);
  const auto eval = synth::generate_samples(64, 900000);
  trainer::TrainConfig tc;
  tc.iterations = kAblationIterations;
  const auto table = trainer::run_ablation(tc, train, eval, {1, 2, 3}, {}, [](const std::string& line) {
    std::printf("  ablation: %s\n", line.c_str());
    std::fflush(stdout);
  });
  std::printf("%s", trainer::ablation_text(table).c_str());
  for (const auto& c : table.cells) check(c.error.empty(), std::string(variant_name(c.variant)) + ": " + c.error);
  const auto spd = table.mean(Variant::kSPD, &metrics::MetricReport::iou);
  const auto sd = table.mean(Variant::kSD, &metrics::MetricReport::iou);
  const auto s = table.mean(Variant::kS, &metrics::MetricReport::iou);
  if (spd && sd && s) {
    check(*spd >= *s, "mean SPD " + fmt("%.4f", *spd) + " < S " + fmt("%.4f", *s));
    check(*spd >= *sd, "mean SPD " + fmt("%.4f", *spd) + " < SD " + fmt("%.4f", *sd));
    o.detail = (o.pass ? "" : o.detail + " | ") + "mean IoU SPD " + fmt("%.4f", *spd) + ", SD " + fmt("%.4f", *sd) +
               ", S " + fmt("%.4f", *s);
  } else {
    check(false, "missing ablation means");
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  Check check{o};
  const auto data = synth::generate_samples(8, 55);
  trainer::TrainConfig tc;
  tc.iterations = 20;
  auto run = [&](std::string& log) {
    return trainer::train(tc, data, [&](const std::string& l) { log += l + "\n"; });
  };
  std::string log_a, log_b;
  const auto a = run(log_a);
  const auto b = run(log_b);
  check(log_a == log_b, "training logs differ");
  trainer::EvalOptions one, many;
  one.workers = 1;
  many.workers = 4;
  const std::string kv_a = metrics::to_key_values(trainer::evaluate(*a.model, data, one));
  const std::string kv_b = metrics::to_key_values(trainer::evaluate(*b.model, data, many));
  check(kv_a == kv_b, "metric reports differ");

  const auto dir = std::filesystem::temp_directory_path() / ("spd_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  trainer::TrainConfig half = tc;
  half.iterations = 10;
  const auto first = trainer::train(half, data);
  trainer::save_checkpoint(first, dir / "half.ckpt");
  auto resumed = trainer::load_checkpoint(dir / "half.ckpt");
  trainer::train_steps(resumed, data, 10);
  std::filesystem::remove_all(dir);
  double worst = 0;
  for (const auto& [name, p] : a.model->store().parameters()) {
    const auto& q = resumed.model->store().parameters().at(name)->value;
    for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, std::abs(double(p->value[i]) - q[i]));
  }
  for (std::size_t i = 0; i < a.loss_history.size(); ++i) {
    worst = std::max(worst, std::abs(a.loss_history[i].total - resumed.loss_history.at(i).total));
  }
  check(worst <= kResumeTol, "resume differs by " + fmt("%.3g", worst));
  if (o.pass) o.detail = "logs and reports bit-identical; resume max difference " + fmt("%.1e", worst);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{{1, "F1 arithmetic", f1_arithmetic},
                                        {2, "joint-loss weighting", joint_loss_weighting},
                                        {3, "gradient suite", gradient_suite},
                                        {4, "metric oracle suite", metric_oracles},
                                        {5, "shape/invariant suite", shape_invariants},
                                        {6, "overfit smoke test", overfit},
                                        {7, "ablation trend", ablation_trend},
                                        {8, "determinism", determinism}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %s: %s (%s) [%.1fs]\n", c.id, c.name, r.pass ? "PASS" : "FAIL", r.detail.c_str(), secs);
    std::fflush(stdout);
    if (!r.pass) ++failed;
  }
  return failed ? 1 : 0;
}
