#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spd/core/types.hpp"

namespace spd::metrics {

/// K x K pixel counts, rows = target class, columns = predicted class.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes);

  /// Throws std::invalid_argument on dimension or class-count mismatch.
  void accumulate(const SegMask& pred, const SegMask& target);
  void merge(const ConfusionAccumulator& other);

  [[nodiscard]] int num_classes() const { return k_; }
  [[nodiscard]] std::uint64_t at(int target, int pred) const { return m_[static_cast<std::size_t>(target) * k_ + pred]; }
  [[nodiscard]] std::uint64_t total() const { return total_; }
  [[nodiscard]] std::uint64_t row_sum(int c) const;
  [[nodiscard]] std::uint64_t col_sum(int c) const;

 private:
  int k_;
  std::vector<std::uint64_t> m_;
  std::uint64_t total_ = 0;
};

struct ClassMetrics {
  int cls = 0;
  double iou = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t support = 0;  // target pixels
};

/// Mean IoU over classes with nonzero union. With `support_weighted`, the
/// average is weighted by target pixel count. Throws std::domain_error on an
/// empty accumulator.
double miou(const ConfusionAccumulator& acc, bool support_weighted = false);

struct PrecisionRecallF1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Macro precision and recall over classes with nonzero denominators; F1 is
/// the harmonic mean of the two macro values.
PrecisionRecallF1 precision_recall_f1(const ConfusionAccumulator& acc);

/// Harmonic mean; 0 when both inputs are 0.
double f1_score(double precision, double recall);

std::vector<ClassMetrics> per_class(const ConfusionAccumulator& acc);

/// Mean pixel distance over joints visible in both skeletons. With
/// `unnormalised`, the plain sum. Throws std::domain_error if no joint is
/// mutually visible and std::invalid_argument on length mismatch.
double mean_euclidean_distance(const Skeleton& pred, const Skeleton& target, bool unnormalised = false);

/// Running sum/count of joint distances over many samples.
struct DistanceAccumulator {
  double sum = 0;
  std::uint64_t count = 0;
  void add(const Skeleton& pred, const Skeleton& target);
  void merge(const DistanceAccumulator& o) {
    sum += o.sum;
    count += o.count;
  }
};

struct GpsPoint {
  int y = 0;
  int x = 0;
};

/// Proxy geodesic point similarity. For each point, a part mismatch scores
/// 0; otherwise d = |(du, dv)| * chart_size[part] and the score is
/// exp(-d^2 / (2 k[part]^2)). `k` and `chart_size` hold either one entry
/// (shared by all parts) or one per part (index part - 1). Throws
/// std::invalid_argument for an empty point list or k <= 0.
double geodesic_point_similarity(const DensePoseMap& pred, const DensePoseMap& target,
                                 const std::vector<GpsPoint>& points, const std::vector<double>& k = {0.255},
                                 const std::vector<double>& chart_size = {1.0});

/// Every target foreground pixel, row-major.
std::vector<GpsPoint> foreground_points(const DensePoseMap& target);

struct GpsAccumulator {
  double sum = 0;
  std::uint64_t count = 0;
  void add(const DensePoseMap& pred, const DensePoseMap& target, const std::vector<double>& k = {0.255},
           const std::vector<double>& chart_size = {1.0});
  void merge(const GpsAccumulator& o) {
    sum += o.sum;
    count += o.count;
  }
};

struct MetricReport {
  double iou = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::vector<ClassMetrics> per_class;
  std::optional<double> med_pixels;
  std::optional<double> gps;
};

MetricReport make_report(const ConfusionAccumulator& acc, const DistanceAccumulator* med,
                         const GpsAccumulator* gps);

/// "key=value" lines: iou, precision, recall, f1, optional med_pixels and
/// gps, then class.<c>.<field> entries. Values use round-trip precision.
std::string to_key_values(const MetricReport& r);

/// Human-readable table.
std::string to_text(const MetricReport& r, const std::vector<std::string>& class_names = {});

}  // namespace spd::metrics
