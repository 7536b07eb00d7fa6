#include "spd/cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spd/cli/render.hpp"
#include "spd/core/io.hpp"
#include "spd/synth/figure.hpp"
#include "spd/trainer/config_json.hpp"

namespace spd::cli {

namespace {

using nlohmann::json;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open for writing");
  f << text;
  if (!f) throw IoError(path, "write failed");
}

fs::path require_file(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw std::invalid_argument(std::string("no ") + what + " given");
  if (!fs::is_regular_file(*p)) throw IoError(*p, std::string(what) + " not found");
  return *p;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError(dir, "cannot create output directory");
}

// `train_dir` receives the config's own output directory, which is where
// `train` put the checkpoint even when --out redirects this command.
RunConfig base_config(const Overrides& o, fs::path* train_dir = nullptr) {
  RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
  if (train_dir) *train_dir = c.out_dir;
  if (o.seed) c.train.model.seed = *o.seed;
  if (o.variant) c.train.model.variant = parse_variant(*o.variant);
  if (o.out) c.out_dir = *o.out;
  c.eval.self_check = o.self_check;
  check_config(c.train.model);
  return c;
}

template <typename F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const trainer::NonFiniteLoss& e) {
    err << "error: training diverged: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

std::vector<AnnotatedSample> load_checked(const fs::path& manifest) {
  auto data = load_split(manifest);
  if (data.empty()) throw std::invalid_argument(manifest.string() + ": manifest lists no samples");
  return data;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("run config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  trainer::reject_unknown_keys(
      j, {"model", "trainer", "train_manifest", "eval_manifest", "out_dir", "seeds", "eval"}, "run config");

  RunConfig c;
  json t = j.value("trainer", json::object());
  if (!t.is_object()) throw std::invalid_argument("'trainer' must be an object");
  trainer::reject_unknown_keys(t, {"iterations", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps"},
                               "trainer config");
  t["model"] = j.value("model", json::object());
  c.train = trainer::train_config_from_json(t);

  try {
    if (j.contains("train_manifest")) c.train_manifest = resolve(base_dir, j["train_manifest"].get<std::string>());
    if (j.contains("eval_manifest")) c.eval_manifest = resolve(base_dir, j["eval_manifest"].get<std::string>());
    if (j.contains("out_dir")) c.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("eval")) {
      const json& e = j["eval"];
      trainer::reject_unknown_keys(e, {"workers", "gps_k", "gps_chart_size"}, "eval config");
      c.eval.workers = e.value("workers", c.eval.workers);
      c.eval.gps_k = e.value("gps_k", c.eval.gps_k);
      c.eval.gps_chart_size = e.value("gps_chart_size", c.eval.gps_chart_size);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("run config has a value of the wrong type: ") + e.what());
  }
  if (c.seeds.empty()) throw std::invalid_argument("run config 'seeds' must not be empty");
  if (c.eval.workers < 0) throw std::invalid_argument("eval.workers must be >= 0");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open run config");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_run_config(ss.str(), path.parent_path());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

int cmd_synth(const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
    if (!o.count) throw std::invalid_argument("--count is required");
    if (*o.count < 1) throw std::invalid_argument("--count must be at least 1");
    const fs::path dir = o.out ? *o.out : c.out_dir;
    const fs::path manifest = synth::generate_split(*o.count, o.seed.value_or(0), dir);
    out << manifest.string() << "\n";
    return 0;
  });
}

int cmd_train(const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig c = base_config(o);
    const fs::path manifest = require_file(o.manifest ? o.manifest : c.train_manifest, "training manifest");
    std::optional<fs::path> resume;
    if (o.checkpoint) resume = require_file(o.checkpoint, "checkpoint");
    prepare_dir(c.out_dir);

    const auto data = load_checked(manifest);
    trainer::TrainState state = resume ? trainer::load_checkpoint(*resume) : trainer::init_state(c.train);
    if (resume && !(state.config.model == c.train.model)) {
      throw std::invalid_argument("checkpoint model config differs from the run config");
    }
    state.config = c.train;

    const fs::path log_path = c.out_dir / kTrainLogFile;
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError(log_path, "cannot open for writing");
    for (std::size_t i = 0; i < state.loss_history.size(); ++i) {
      log << objectives::format_log_line(static_cast<long>(i) + 1, state.loss_history[i]) << "\n";
    }
    const auto sink = [&](const std::string& line) {
      log << line << "\n";
      out << line << "\n";
    };
    const long remaining = std::max(0L, c.train.iterations - state.iteration);
    trainer::train_steps(state, data, remaining, sink);
    log.flush();
    if (!log) throw IoError(log_path, "write failed");

    const fs::path ckpt = c.out_dir / kCheckpointFile;
    trainer::save_checkpoint(state, ckpt);
    out << "checkpoint " << ckpt.string() << "\n";
    return 0;
  });
}

int cmd_eval(const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    fs::path train_dir;
    const RunConfig c = base_config(o, &train_dir);
    const fs::path ckpt = require_file(o.checkpoint ? *o.checkpoint : train_dir / kCheckpointFile, "checkpoint");
    const fs::path manifest = require_file(o.manifest ? o.manifest : c.eval_manifest, "evaluation manifest");
    prepare_dir(c.out_dir);

    const auto state = trainer::load_checkpoint(ckpt);
    const auto data = load_checked(manifest);
    const metrics::MetricReport r = trainer::evaluate(*state.model, data, c.eval);
    const std::string text = metrics::to_text(r);
    write_text(c.out_dir / "report.txt", text);
    write_text(c.out_dir / "metrics.kv", metrics::to_key_values(r));
    out << text;
    return 0;
  });
}

int cmd_ablate(const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig c = base_config(o);
    if (o.seed) c.seeds = {*o.seed};
    const fs::path train_manifest = require_file(o.manifest ? o.manifest : c.train_manifest, "training manifest");
    const fs::path eval_manifest = require_file(c.eval_manifest, "evaluation manifest");
    prepare_dir(c.out_dir);

    const auto train_data = load_checked(train_manifest);
    const auto eval_data = load_checked(eval_manifest);
    const auto table = trainer::run_ablation(c.train, train_data, eval_data, c.seeds, c.eval,
                                             [&](const std::string& line) { out << line << "\n" << std::flush; });
    const std::string text = trainer::ablation_text(table);
    write_text(c.out_dir / "ablation.txt", text);
    write_text(c.out_dir / "ablation.tsv", trainer::ablation_rows(table));
    out << text;
    for (const auto& cell : table.cells) {
      if (!cell.error.empty()) {
        err << "error: " << variant_name(cell.variant) << " seed " << cell.seed << ": " << cell.error << "\n";
      }
    }
    const bool failed = std::any_of(table.cells.begin(), table.cells.end(),
                                    [](const trainer::AblationCell& cell) { return !cell.error.empty(); });
    return failed ? 1 : 0;
  });
}

int cmd_report(const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    fs::path train_dir;
    const RunConfig c = base_config(o, &train_dir);
    const fs::path ckpt = require_file(o.checkpoint ? *o.checkpoint : train_dir / kCheckpointFile, "checkpoint");
    const fs::path manifest = require_file(o.manifest ? o.manifest : c.eval_manifest, "evaluation manifest");
    if (o.count && *o.count < 1) throw std::invalid_argument("--count must be at least 1");
    prepare_dir(c.out_dir);

    const auto state = trainer::load_checkpoint(ckpt);
    const auto data = load_checked(manifest);
    const auto& parents_arr = synth::joint_parents();
    const std::vector<int> parents(parents_arr.begin(), parents_arr.end());
    const std::size_t shown = o.count ? std::min<std::size_t>(static_cast<std::size_t>(*o.count), data.size())
                                      : data.size();
    for (std::size_t i = 0; i < shown; ++i) {
      const AnnotatedSample& s = data[i];
      const trainer::Prediction p = trainer::predict(*state.model, s);
      const fs::path stem = c.out_dir / s.sample_id;
      write_rgb_png(stem.string() + "_input.png", to_rgb(s.image));
      write_rgb_png(stem.string() + "_target.png", label_overlay(s.image, s.mask.labels));
      write_rgb_png(stem.string() + "_pred.png", label_overlay(s.image, p.mask.labels));
      write_rgb_png(stem.string() + "_skeleton.png",
                    skeleton_overlay(s.image, p.skeleton ? *p.skeleton : s.skeleton, parents));
      Raster<std::uint8_t> parts(s.image.height, s.image.width, 0);
      if (p.densepose) {
        parts = p.densepose->part_index;
      } else if (s.densepose) {
        parts = s.densepose->part_index;
      }
      write_rgb_png(stem.string() + "_parts.png", label_overlay(s.image, parts));
    }
    const metrics::MetricReport r = trainer::evaluate(*state.model, data, c.eval);
    write_text(c.out_dir / "loss_curve.svg", loss_curve_svg(state.loss_history));
    write_text(c.out_dir / "class_iou.svg", class_iou_svg(r.per_class));
    out << "wrote " << shown * 5 << " overlays and 2 plots to " << c.out_dir.string() << "\n";
    return 0;
  });
}

}  // namespace spd::cli
