#include "spd/metrics/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace spd::metrics {

ConfusionAccumulator::ConfusionAccumulator(int num_classes)
    : k_(num_classes), m_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
}

void ConfusionAccumulator::accumulate(const SegMask& pred, const SegMask& target) {
  if (pred.labels.height != target.labels.height || pred.labels.width != target.labels.width) {
    throw std::invalid_argument("accumulate: prediction and target dims differ");
  }
  if (pred.num_classes != k_ || target.num_classes != k_) {
    throw std::invalid_argument("accumulate: class count differs from accumulator K=" + std::to_string(k_));
  }
  for (std::size_t i = 0; i < pred.labels.data.size(); ++i) {
    const int t = target.labels.data[i];
    const int p = pred.labels.data[i];
    if (t >= k_ || p >= k_) throw std::invalid_argument("accumulate: class index out of range");
    ++m_[static_cast<std::size_t>(t) * k_ + p];
  }
  total_ += pred.labels.data.size();
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.k_ != k_) throw std::invalid_argument("merge: class counts differ");
  for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += other.m_[i];
  total_ += other.total_;
}

std::uint64_t ConfusionAccumulator::row_sum(int c) const {
  std::uint64_t s = 0;
  for (int p = 0; p < k_; ++p) s += at(c, p);
  return s;
}

std::uint64_t ConfusionAccumulator::col_sum(int c) const {
  std::uint64_t s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, c);
  return s;
}

namespace {

void require_nonempty(const ConfusionAccumulator& acc) {
  if (acc.total() == 0) throw std::domain_error("metrics requested on an empty accumulator");
}

}  // namespace

double miou(const ConfusionAccumulator& acc, bool support_weighted) {
  require_nonempty(acc);
  double sum = 0, weight = 0;
  for (int c = 0; c < acc.num_classes(); ++c) {
    const std::uint64_t tp = acc.at(c, c);
    const std::uint64_t uni = acc.row_sum(c) + acc.col_sum(c) - tp;
    if (uni == 0) continue;
    const double w = support_weighted ? static_cast<double>(acc.row_sum(c)) : 1.0;
    sum += w * static_cast<double>(tp) / static_cast<double>(uni);
    weight += w;
  }
  return weight > 0 ? sum / weight : 0.0;
}

double f1_score(double precision, double recall) {
  const double d = precision + recall;
  return d > 0 ? 2.0 * precision * recall / d : 0.0;
}

PrecisionRecallF1 precision_recall_f1(const ConfusionAccumulator& acc) {
  require_nonempty(acc);
  double psum = 0, rsum = 0;
  int pn = 0, rn = 0;
  for (int c = 0; c < acc.num_classes(); ++c) {
    const std::uint64_t tp = acc.at(c, c);
    if (const std::uint64_t col = acc.col_sum(c); col > 0) {
      psum += static_cast<double>(tp) / static_cast<double>(col);
      ++pn;
    }
    if (const std::uint64_t row = acc.row_sum(c); row > 0) {
      rsum += static_cast<double>(tp) / static_cast<double>(row);
      ++rn;
    }
  }
  PrecisionRecallF1 r;
  r.precision = pn ? psum / pn : 0.0;
  r.recall = rn ? rsum / rn : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

std::vector<ClassMetrics> per_class(const ConfusionAccumulator& acc) {
  std::vector<ClassMetrics> out;
  for (int c = 0; c < acc.num_classes(); ++c) {
    ClassMetrics m;
    m.cls = c;
    const double tp = static_cast<double>(acc.at(c, c));
    const std::uint64_t row = acc.row_sum(c), col = acc.col_sum(c);
    m.support = row;
    const std::uint64_t uni = row + col - acc.at(c, c);
    m.iou = uni ? tp / static_cast<double>(uni) : 0.0;
    m.precision = col ? tp / static_cast<double>(col) : 0.0;
    m.recall = row ? tp / static_cast<double>(row) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    out.push_back(m);
  }
  return out;
}

double mean_euclidean_distance(const Skeleton& pred, const Skeleton& target, bool unnormalised) {
  if (pred.size() != target.size()) throw std::invalid_argument("mED: skeletons differ in joint count");
  double sum = 0;
  int n = 0;
  for (int j = 0; j < pred.size(); ++j) {
    const Joint& a = pred.joints[j];
    const Joint& b = target.joints[j];
    if (!a.visible || !b.visible) continue;
    sum += std::hypot(a.x - b.x, a.y - b.y);
    ++n;
  }
  if (n == 0) throw std::domain_error("mED: no mutually visible joints");
  return unnormalised ? sum : sum / n;
}

void DistanceAccumulator::add(const Skeleton& pred, const Skeleton& target) {
  if (pred.size() != target.size()) throw std::invalid_argument("mED: skeletons differ in joint count");
  for (int j = 0; j < pred.size(); ++j) {
    const Joint& a = pred.joints[j];
    const Joint& b = target.joints[j];
    if (!a.visible || !b.visible) continue;
    sum += std::hypot(a.x - b.x, a.y - b.y);
    ++count;
  }
}

namespace {

double per_part(const std::vector<double>& v, int part) {
  return v.size() == 1 ? v[0] : v.at(static_cast<std::size_t>(part - 1));
}

void check_gps_params(const std::vector<double>& k, const std::vector<double>& chart) {
  if (k.empty() || chart.empty()) throw std::invalid_argument("GPS: k and chart sizes must be non-empty");
  for (double v : k) {
    if (!(v > 0)) throw std::invalid_argument("GPS: normalisation k must be positive");
  }
  for (double v : chart) {
    if (!(v > 0)) throw std::invalid_argument("GPS: chart sizes must be positive");
  }
}

double point_score(const DensePoseMap& pred, const DensePoseMap& target, GpsPoint p, const std::vector<double>& k,
                   const std::vector<double>& chart) {
  const int part = target.part_index.at(p.y, p.x);
  if (part == 0 || pred.part_index.at(p.y, p.x) != part) return 0.0;
  const double du = static_cast<double>(pred.u.at(p.y, p.x)) - target.u.at(p.y, p.x);
  const double dv = static_cast<double>(pred.v.at(p.y, p.x)) - target.v.at(p.y, p.x);
  const double d = std::hypot(du, dv) * per_part(chart, part);
  const double kk = per_part(k, part);
  return std::exp(-d * d / (2.0 * kk * kk));
}

}  // namespace

double geodesic_point_similarity(const DensePoseMap& pred, const DensePoseMap& target,
                                 const std::vector<GpsPoint>& points, const std::vector<double>& k,
                                 const std::vector<double>& chart_size) {
  if (points.empty()) throw std::invalid_argument("GPS: no annotated points");
  check_gps_params(k, chart_size);
  double sum = 0;
  for (const GpsPoint& p : points) sum += point_score(pred, target, p, k, chart_size);
  return sum / static_cast<double>(points.size());
}

std::vector<GpsPoint> foreground_points(const DensePoseMap& target) {
  std::vector<GpsPoint> pts;
  for (int y = 0; y < target.part_index.height; ++y) {
    for (int x = 0; x < target.part_index.width; ++x) {
      if (target.part_index.at(y, x) > 0) pts.push_back({y, x});
    }
  }
  return pts;
}

void GpsAccumulator::add(const DensePoseMap& pred, const DensePoseMap& target, const std::vector<double>& k,
                         const std::vector<double>& chart_size) {
  check_gps_params(k, chart_size);
  for (const GpsPoint& p : foreground_points(target)) {
    sum += point_score(pred, target, p, k, chart_size);
    ++count;
  }
}

MetricReport make_report(const ConfusionAccumulator& acc, const DistanceAccumulator* med, const GpsAccumulator* gps) {
  MetricReport r;
  r.iou = miou(acc);
  const PrecisionRecallF1 prf = precision_recall_f1(acc);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  r.per_class = per_class(acc);
  if (med && med->count > 0) r.med_pixels = med->sum / static_cast<double>(med->count);
  if (gps && gps->count > 0) r.gps = gps->sum / static_cast<double>(gps->count);
  return r;
}

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_key_values(const MetricReport& r) {
  std::string s;
  s += "iou=" + num(r.iou) + "\n";
  s += "precision=" + num(r.precision) + "\n";
  s += "recall=" + num(r.recall) + "\n";
  s += "f1=" + num(r.f1) + "\n";
  if (r.med_pixels) s += "med_pixels=" + num(*r.med_pixels) + "\n";
  if (r.gps) s += "gps=" + num(*r.gps) + "\n";
  for (const ClassMetrics& c : r.per_class) {
    const std::string p = "class." + std::to_string(c.cls) + ".";
    s += p + "iou=" + num(c.iou) + "\n";
    s += p + "precision=" + num(c.precision) + "\n";
    s += p + "recall=" + num(c.recall) + "\n";
    s += p + "f1=" + num(c.f1) + "\n";
    s += p + "support=" + std::to_string(c.support) + "\n";
  }
  return s;
}

std::string to_text(const MetricReport& r, const std::vector<std::string>& class_names) {
  char line[160];
  std::string s;
  std::snprintf(line, sizeof line, "IoU %.4f  Pr %.4f  Rec %.4f  F1 %.4f\n", r.iou, r.precision, r.recall, r.f1);
  s += line;
  if (r.med_pixels) {
    std::snprintf(line, sizeof line, "mED %.3f px\n", *r.med_pixels);
    s += line;
  }
  if (r.gps) {
    std::snprintf(line, sizeof line, "GPS (proxy) %.4f\n", *r.gps);
    s += line;
  }
  s += "\nclass                 IoU      Pr       Rec      F1       support\n";
  for (const ClassMetrics& c : r.per_class) {
    const std::string name =
        c.cls < static_cast<int>(class_names.size()) ? class_names[c.cls] : std::to_string(c.cls);
    std::snprintf(line, sizeof line, "%-20s  %.4f   %.4f   %.4f   %.4f   %llu\n", name.c_str(), c.iou, c.precision,
                  c.recall, c.f1, static_cast<unsigned long long>(c.support));
    s += line;
  }
  return s;
}

}  // namespace spd::metrics
