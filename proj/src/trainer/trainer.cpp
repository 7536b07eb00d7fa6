#include "spd/trainer/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include "spd/core/io.hpp"
#include "spd/trainer/config_json.hpp"

namespace spd::trainer {

using nn::Tensor;
using nn::Var;

NonFiniteLoss::NonFiniteLoss(long it, const std::string& comp)
    : std::runtime_error("non-finite " + comp + " at iteration " + std::to_string(it)),
      iteration(it),
      component(comp) {}

TrainState init_state(const TrainConfig& config) {
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  TrainState s;
  s.config = config;
  s.model = model::build_variant<float>(config.model);
  for (const auto& [name, p] : s.model->store().parameters()) {
    s.adam.m.emplace(name, Tensor<float>(p->value.shape()));
    s.adam.v.emplace(name, Tensor<float>(p->value.shape()));
  }
  return s;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, long iteration, int batch_size, std::size_t n) {
  if (n == 0) throw std::invalid_argument("empty dataset");
  std::vector<std::size_t> out;
  long cached_epoch = -1;
  std::vector<std::size_t> perm(n);
  for (int k = 0; k < batch_size; ++k) {
    const std::uint64_t pos = static_cast<std::uint64_t>(iteration) * batch_size + k;
    const long epoch = static_cast<long>(pos / n);
    if (epoch != cached_epoch) {
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

namespace {

void adam_step(TrainState& s) {
  const TrainConfig& c = s.config;
  const double t = static_cast<double>(s.iteration + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  const float step = static_cast<float>(c.learning_rate / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(c.adam_eps);
  for (const auto& [name, p] : s.model->store().parameters()) {
    if (!p->has_grad()) continue;
    Tensor<float>& m = s.adam.m.at(name);
    Tensor<float>& v = s.adam.v.at(name);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const float g = p->grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p->value[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace

void train_steps(TrainState& state, const std::vector<AnnotatedSample>& data, long iterations, const LogSink& sink) {
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  model::Model<float>& net = *state.model;
  const ModelConfig& mc = net.config();
  const objectives::LossWeights weights = objectives::weights_for(mc);
  for (long step = 0; step < iterations; ++step) {
    const long it = state.iteration + 1;
    const auto idx = batch_indices(mc.seed, state.iteration, state.config.batch_size, data.size());
    std::vector<const AnnotatedSample*> batch;
    std::vector<SegMask> masks;
    std::vector<Skeleton> skeletons;
    std::vector<const DensePoseMap*> dense;
    for (std::size_t i : idx) {
      batch.push_back(&data[i]);
      masks.push_back(data[i].mask);
      skeletons.push_back(data[i].skeleton);
      dense.push_back(data[i].densepose ? &*data[i].densepose : nullptr);
    }
    const Var<float> images = nn::constant(model::stack_images<float>(batch));
    const int h = images->value.shape().h, w = images->value.shape().w;

    net.store().zero_grad();
    const auto out = net.forward(images, true);
    const Var<float> ls = objectives::seg_loss(out.seg.final_logits, masks);
    Var<float> lp, ld;
    if (out.pose) lp = objectives::pose_loss(out.pose->refined_coords, skeletons, h, w).value;
    if (out.dense) {
      ld = objectives::dense_loss(out.dense->part_logits, out.dense->uv, dense, mc.dense_loss_form, mc.huber_delta);
    }
    const auto breakdown = objectives::joint_loss(
        ls->value[0], lp ? std::optional<double>(lp->value[0]) : std::nullopt,
        ld ? std::optional<double>(ld->value[0]) : std::nullopt, weights);
    if (!std::isfinite(breakdown.l_seg)) throw NonFiniteLoss(it, "l_seg");
    if (!std::isfinite(breakdown.l_pose)) throw NonFiniteLoss(it, "l_pose");
    if (!std::isfinite(breakdown.l_dense)) throw NonFiniteLoss(it, "l_dense");
    if (!std::isfinite(breakdown.total)) throw NonFiniteLoss(it, "total");

    nn::backward(objectives::joint_loss_graph(ls, lp, ld, weights));
    adam_step(state);
    state.iteration = it;
    state.loss_history.push_back(breakdown);
    if (sink) sink(objectives::format_log_line(it, breakdown));
  }
}

TrainState train(const TrainConfig& config, const std::vector<AnnotatedSample>& data, const LogSink& sink) {
  TrainState s = init_state(config);
  train_steps(s, data, config.iterations, sink);
  return s;
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'C', 'K', 'P', 'T', '1'};

void require_little_endian() {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  if constexpr (std::endian::native != std::endian::little) {
    throw std::runtime_error("checkpoint I/O requires a little-endian host");
  }
}

struct Entry {
  std::string name;
  const Tensor<float>* tensor;
};

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  require_little_endian();
  std::vector<Entry> entries;
  const auto& store = state.model->store();
  for (const auto& [name, p] : store.parameters()) entries.push_back({"param/" + name, &p->value});
  for (const auto& [name, t] : state.adam.m) entries.push_back({"adam_m/" + name, &t});
  for (const auto& [name, t] : state.adam.v) entries.push_back({"adam_v/" + name, &t});
  for (const auto& [name, t] : store.buffers()) entries.push_back({"buffer/" + name, &t});

  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Entry& e : entries) {
    const nn::Shape s = e.tensor->shape();
    index.push_back({{"name", e.name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += e.tensor->size() * sizeof(float);
  }
  nlohmann::json header = {{"format", 1},
                           {"config", train_config_to_json(state.config)},
                           {"iteration", state.iteration},
                           {"tensors", index},
                           {"loss_history", {{"offset", offset}, {"count", state.loss_history.size()}}}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open checkpoint for writing");
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Entry& e : entries) {
    out.write(reinterpret_cast<const char*>(e.tensor->data()),
              static_cast<std::streamsize>(e.tensor->size() * sizeof(float)));
  }
  for (const auto& b : state.loss_history) {
    const double row[4] = {b.l_seg, b.l_pose, b.l_dense, b.total};
    out.write(reinterpret_cast<const char*>(row), sizeof row);
  }
  if (!out) throw IoError(path, "write failed");
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path, "not a checkpoint archive");
  if (len > (1u << 30)) throw IoError(path, "corrupt checkpoint header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path, "truncated checkpoint header");
  const std::streamoff base = in.tellg();

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("corrupt checkpoint header: ") + e.what());
  }
  TrainState s = init_state(train_config_from_json(header.at("config")));
  s.iteration = header.at("iteration").get<long>();

  auto& store = s.model->store();
  std::map<std::string, Tensor<float>*> targets;
  for (const auto& [name, p] : store.parameters()) targets["param/" + name] = &p->value;
  for (auto& [name, t] : s.adam.m) targets["adam_m/" + name] = &t;
  for (auto& [name, t] : s.adam.v) targets["adam_v/" + name] = &t;
  for (auto& [name, t] : store.buffers()) targets["buffer/" + name] = &t;

  std::size_t seen = 0;
  for (const auto& e : header.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    auto it = targets.find(name);
    if (it == targets.end()) throw IoError(path, "unexpected tensor '" + name + "'");
    const auto shp = e.at("shape").get<std::vector<int>>();
    const nn::Shape shape{shp.at(0), shp.at(1), shp.at(2), shp.at(3)};
    if (!(shape == it->second->shape())) throw IoError(path, "shape mismatch for '" + name + "'");
    in.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(it->second->data()),
            static_cast<std::streamsize>(it->second->size() * sizeof(float)));
    if (!in) throw IoError(path, "truncated tensor '" + name + "'");
    ++seen;
  }
  if (seen != targets.size()) throw IoError(path, "checkpoint is missing tensors");

  const auto& lh = header.at("loss_history");
  const auto count = lh.at("count").get<std::size_t>();
  in.seekg(base + static_cast<std::streamoff>(lh.at("offset").get<std::uint64_t>()));
  const objectives::LossWeights w = objectives::weights_for(s.config.model);
  for (std::size_t i = 0; i < count; ++i) {
    double row[4];
    in.read(reinterpret_cast<char*>(row), sizeof row);
    if (!in) throw IoError(path, "truncated loss history");
    s.loss_history.push_back({row[0], row[1], row[2], row[3], w});
  }
  return s;
}

int resolve_workers(int requested) {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("SPD_NUM_WORKERS")) {
    const int e = std::atoi(env);
    if (e > 0) n = e;
  }
  if (requested > 0) n = std::min(n, requested);
  return std::max(1, n);
}

Prediction predict(const model::Model<float>& net, const AnnotatedSample& s) {
  nn::NoGradGuard guard;
  const Var<float> x = nn::constant(model::stack_images<float>({&s}));
  const auto out = net.forward(x, false);
  Prediction p;
  p.mask = model::predict_mask(out.seg.final_logits->value).front();
  if (out.pose) p.skeleton = model::to_pixels(out.pose->refined_coords->value, s.image.height, s.image.width).front();
  if (out.dense) p.densepose = model::predict_densepose(out.dense->part_logits->value, out.dense->uv->value).front();
  return p;
}

namespace {

struct SampleResult {
  std::optional<metrics::ConfusionAccumulator> confusion;
  metrics::DistanceAccumulator med;
  metrics::GpsAccumulator gps;
};

}  // namespace

metrics::MetricReport evaluate(const model::Model<float>& net, const std::vector<AnnotatedSample>& data,
                               const EvalOptions& opt) {
  if (data.empty()) throw std::invalid_argument("evaluation dataset is empty");
  const ModelConfig& mc = net.config();
  const bool pose = has_pose(mc.variant);
  const bool dense = has_dense(mc.variant);
  std::vector<SampleResult> results(data.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(data.size());

  auto work = [&] {
    nn::NoGradGuard guard;
    for (std::size_t i = next++; i < data.size(); i = next++) {
      const AnnotatedSample& s = data[i];
      SampleResult& r = results[i];
      try {
        r.confusion.emplace(mc.num_classes);
        if (opt.self_check) {
          r.confusion->accumulate(s.mask, s.mask);
          if (pose) r.med.add(s.skeleton, s.skeleton);
          if (dense && s.densepose) r.gps.add(*s.densepose, *s.densepose, opt.gps_k, opt.gps_chart_size);
          continue;
        }
        const Prediction p = predict(net, s);
        r.confusion->accumulate(p.mask, s.mask);
        if (p.skeleton && s.skeleton.size() == mc.num_joints) r.med.add(*p.skeleton, s.skeleton);
        if (p.densepose && s.densepose) r.gps.add(*p.densepose, *s.densepose, opt.gps_k, opt.gps_chart_size);
      } catch (const std::exception& e) {
        errors[i] = s.sample_id + ": " + e.what();
      }
    }
  };
  const int workers = std::min<int>(resolve_workers(opt.workers), static_cast<int>(data.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const std::string& e : errors) {
    if (!e.empty()) throw std::runtime_error("evaluation failed on " + e);
  }

  metrics::ConfusionAccumulator conf(mc.num_classes);
  metrics::DistanceAccumulator med;
  metrics::GpsAccumulator gps;
  for (const SampleResult& r : results) {
    conf.merge(*r.confusion);
    med.merge(r.med);
    gps.merge(r.gps);
  }
  return metrics::make_report(conf, pose ? &med : nullptr, dense ? &gps : nullptr);
}

std::optional<double> AblationTable::mean(Variant v, double metrics::MetricReport::*field) const {
  double sum = 0;
  int n = 0;
  for (const AblationCell& c : cells) {
    if (c.variant != v || !c.report) continue;
    sum += (*c.report).*field;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

AblationTable run_ablation(const TrainConfig& base, const std::vector<AnnotatedSample>& train_data,
                           const std::vector<AnnotatedSample>& eval_data, const std::vector<std::uint64_t>& seeds,
                           const EvalOptions& eval_options, const LogSink& progress) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  AblationTable table;
  table.seeds = seeds;
  for (Variant v : kAllVariants) {
    for (std::uint64_t seed : seeds) {
      AblationCell cell;
      cell.variant = v;
      cell.seed = seed;
      try {
        TrainConfig cfg = base;
        cfg.model.variant = v;
        cfg.model.seed = seed;
        const TrainState s = train(cfg, train_data);
        cell.report = evaluate(*s.model, eval_data, eval_options);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (progress) {
        char line[200];
        if (cell.report) {
          std::snprintf(line, sizeof line, "variant=%s seed=%llu iou=%.6f precision=%.6f recall=%.6f f1=%.6f",
                        std::string(variant_name(v)).c_str(), static_cast<unsigned long long>(seed),
                        cell.report->iou, cell.report->precision, cell.report->recall, cell.report->f1);
        } else {
          std::snprintf(line, sizeof line, "variant=%s seed=%llu error=%s", std::string(variant_name(v)).c_str(),
                        static_cast<unsigned long long>(seed), cell.error.c_str());
        }
        progress(line);
      }
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

namespace {

std::string fmt4(std::optional<double> v) {
  if (!v) return "   -  ";
  char b[32];
  std::snprintf(b, sizeof b, "%.4f", *v);
  return b;
}

}  // namespace

std::string ablation_text(const AblationTable& t) {
  using R = metrics::MetricReport;
  std::string s = "Model  Seed   IoU     Pr      Rec     F1\n";
  char line[200];
  for (Variant v : kAllVariants) {
    const std::string name(variant_name(v));
    for (const AblationCell& c : t.cells) {
      if (c.variant != v) continue;
      if (c.report) {
        std::snprintf(line, sizeof line, "%-5s  %-5llu  %.4f  %.4f  %.4f  %.4f\n", name.c_str(),
                      static_cast<unsigned long long>(c.seed), c.report->iou, c.report->precision, c.report->recall,
                      c.report->f1);
      } else {
        std::snprintf(line, sizeof line, "%-5s  %-5llu  failed: %s\n", name.c_str(),
                      static_cast<unsigned long long>(c.seed), c.error.c_str());
      }
      s += line;
    }
    s += name + std::string(7 - std::min<std::size_t>(name.size(), 5), ' ') + "mean   " + fmt4(t.mean(v, &R::iou)) +
         "  " + fmt4(t.mean(v, &R::precision)) + "  " + fmt4(t.mean(v, &R::recall)) + "  " + fmt4(t.mean(v, &R::f1)) +
         "\n";
  }
  return s;
}

std::string ablation_rows(const AblationTable& t) {
  using R = metrics::MetricReport;
  std::string s = "variant\tseed\tiou\tprecision\trecall\tf1\terror\n";
  auto num = [](std::optional<double> v) {
    if (!v) return std::string();
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", *v);
    return std::string(b);
  };
  for (Variant v : kAllVariants) {
    const std::string name(variant_name(v));
    for (const AblationCell& c : t.cells) {
      if (c.variant != v) continue;
      const R* r = c.report ? &*c.report : nullptr;
      s += name + "\t" + std::to_string(c.seed) + "\t" + num(r ? std::optional(r->iou) : std::nullopt) + "\t" +
           num(r ? std::optional(r->precision) : std::nullopt) + "\t" +
           num(r ? std::optional(r->recall) : std::nullopt) + "\t" + num(r ? std::optional(r->f1) : std::nullopt) +
           "\t" + c.error + "\n";
    }
    s += name + "\tmean\t" + num(t.mean(v, &R::iou)) + "\t" + num(t.mean(v, &R::precision)) + "\t" +
         num(t.mean(v, &R::recall)) + "\t" + num(t.mean(v, &R::f1)) + "\t\n";
  }
  return s;
}

}  // namespace spd::trainer
