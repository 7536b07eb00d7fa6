#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spd/core/types.hpp"
#include "spd/metrics/metrics.hpp"
#include "spd/model/model.hpp"
#include "spd/objectives/losses.hpp"

namespace spd::trainer {

struct TrainConfig {
  ModelConfig model = default_config();
  long iterations = 1000;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool operator==(const TrainConfig&) const = default;
};

/// Adam moments keyed by parameter name.
struct AdamState {
  std::map<std::string, nn::Tensor<float>> m;
  std::map<std::string, nn::Tensor<float>> v;
};

/// Everything needed to continue training. Batch order is a pure function
/// of (model.seed, iteration), so no RNG state beyond those is stored.
struct TrainState {
  TrainConfig config;
  long iteration = 0;
  std::unique_ptr<model::Model<float>> model;
  AdamState adam;
  std::vector<objectives::LossBreakdown> loss_history;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(long iteration, const std::string& component);
  long iteration;
  std::string component;
};

/// Fresh state with an initialised model for `config.model.variant`.
TrainState init_state(const TrainConfig& config);

/// Dataset indices for one iteration: consecutive slices of a per-epoch
/// permutation seeded from (seed, epoch).
std::vector<std::size_t> batch_indices(std::uint64_t seed, long iteration, int batch_size, std::size_t dataset_size);

using LogSink = std::function<void(const std::string& line)>;

/// Runs `iterations` more optimisation steps. Appends one LossBreakdown per
/// step and emits its log line to `sink` if given. Throws NonFiniteLoss
/// (after logging nothing for that step) if any component is not finite.
void train_steps(TrainState& state, const std::vector<AnnotatedSample>& data, long iterations,
                 const LogSink& sink = {});

/// init_state followed by train_steps(config.iterations).
TrainState train(const TrainConfig& config, const std::vector<AnnotatedSample>& data, const LogSink& sink = {});

/// Binary archive: magic, JSON header (config, iteration, tensor index),
/// raw little-endian payload.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Decoded eval-mode outputs for one sample. Absent branches stay empty.
struct Prediction {
  SegMask mask;
  std::optional<Skeleton> skeleton;
  std::optional<DensePoseMap> densepose;
};

Prediction predict(const model::Model<float>& model, const AnnotatedSample& sample);

struct EvalOptions {
  int workers = 0;  // 0: SPD_NUM_WORKERS or hardware concurrency
  std::vector<double> gps_k{0.255};
  std::vector<double> gps_chart_size{1.0};
  bool self_check = false;  // score targets against themselves
};

/// Eval-mode pass over all samples. mED is reported for variants with a
/// pose branch, GPS for variants with a dense-pose branch and samples that
/// carry dense-pose targets; otherwise the fields stay absent.
metrics::MetricReport evaluate(const model::Model<float>& model, const std::vector<AnnotatedSample>& data,
                               const EvalOptions& options = {});

/// Worker count from SPD_NUM_WORKERS (if set and positive) capped by
/// `requested` when nonzero.
int resolve_workers(int requested);

struct AblationCell {
  Variant variant = Variant::kSPD;
  std::uint64_t seed = 0;
  std::optional<metrics::MetricReport> report;
  std::string error;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationCell> cells;  // variant-major, seeds in order

  /// Mean of a metric over successful seeds for a variant; nullopt if none.
  [[nodiscard]] std::optional<double> mean(Variant v, double metrics::MetricReport::*field) const;
};

inline constexpr Variant kAllVariants[] = {Variant::kSPD, Variant::kSP, Variant::kSD, Variant::kS};

/// Trains and evaluates every variant for every seed with identical data
/// order. A failing cell records its error and the others still run.
AblationTable run_ablation(const TrainConfig& base, const std::vector<AnnotatedSample>& train_data,
                           const std::vector<AnnotatedSample>& eval_data, const std::vector<std::uint64_t>& seeds,
                           const EvalOptions& eval_options = {}, const LogSink& progress = {});

/// Table shaped rows SPD/SP/SD/S by columns IoU/Pr/Rec/F1, per seed and mean.
std::string ablation_text(const AblationTable& t);
/// Tab-separated rows: variant, seed (or "mean"), iou, precision, recall, f1, error.
std::string ablation_rows(const AblationTable& t);

}  // namespace spd::trainer
