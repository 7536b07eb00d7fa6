#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spd/trainer/trainer.hpp"

namespace spd::cli {

namespace fs = std::filesystem;

/// Run configuration file (JSON). Keys:
///   model, trainer {iterations, batch_size, learning_rate, beta1, beta2, adam_eps},
///   train_manifest, eval_manifest, out_dir, seeds, eval {workers, gps_k, gps_chart_size}.
/// Relative paths are resolved against the file's directory.
struct RunConfig {
  trainer::TrainConfig train;
  std::optional<fs::path> train_manifest;
  std::optional<fs::path> eval_manifest;
  fs::path out_dir = "out";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  trainer::EvalOptions eval;
};

/// Throws std::invalid_argument (unknown keys, bad values) or IoError.
RunConfig load_run_config(const fs::path& path);
RunConfig parse_run_config(const std::string& text, const fs::path& base_dir);

/// Command-line flags; any that are set win over the config file.
struct Overrides {
  std::optional<fs::path> config;
  std::optional<int> count;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> manifest;
  std::optional<std::string> variant;
  bool self_check = false;
};

/// Each command returns the process exit status (0 on success) and reports
/// errors on `err` rather than throwing.
int cmd_synth(const Overrides& o, std::ostream& out, std::ostream& err);
int cmd_train(const Overrides& o, std::ostream& out, std::ostream& err);
int cmd_eval(const Overrides& o, std::ostream& out, std::ostream& err);
int cmd_ablate(const Overrides& o, std::ostream& out, std::ostream& err);
int cmd_report(const Overrides& o, std::ostream& out, std::ostream& err);

inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kTrainLogFile = "train.log";

}  // namespace spd::cli
