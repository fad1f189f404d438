#ifndef AFFORGE_METRICS_HPP
#define AFFORGE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afforge/error.hpp"
#include "afforge/grid.hpp"
#include "afforge/lift.hpp"

namespace afforge::metrics {

/// Conventions that the benchmark literature leaves open. Reports carry them so
/// numbers from different tools can be compared explicitly.
struct MetricConfig {
  double gt_threshold = 0.5;   // GT binarization for aIoU / AUC: gt >= threshold
  int iou_steps = 100;         // aIoU thresholds k / iou_steps for k = 1 .. iou_steps - 1
  double epsilon = 1e-12;      // smoothing added to the second distribution of KL
  double nss_fixation = 0.5;   // fixation pixels: gt / max(gt) >= nss_fixation
  double coverage_tau = 0.5;

  nlohmann::json to_json() const {
    return {{"gt_threshold", gt_threshold},
            {"aiou_thresholds", {{"first", 1.0 / iou_steps}, {"last", (iou_steps - 1.0) / iou_steps},
                                 {"step", 1.0 / iou_steps}}},
            {"epsilon", epsilon},
            {"kld_direction", "Q=gt, P=pred"},
            {"nss_fixation", nss_fixation},
            {"coverage_tau", coverage_tau}};
  }
};

namespace detail {

template <typename T>
void check_lengths(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "prediction and ground truth differ in length");
  if (a.empty()) throw Error(ErrorKind::EmptyInput, "empty maps");
}

template <typename T>
double nonneg_sum(std::span<const T> x) {
  double s = 0.0;
  for (T v : x) {
    if (!(v >= 0) || !std::isfinite(static_cast<double>(v))) {
      throw Error(ErrorKind::InvalidArgument, "distribution entries must be finite and non-negative");
    }
    s += v;
  }
  return s;
}

/// KL(Q || P) with Q = first normalized, P = (second + eps) normalized.
/// Absent when Q has no mass.
template <typename T>
std::optional<double> kl_divergence(std::span<const T> q_raw, std::span<const T> p_raw, double eps) {
  const double q_sum = nonneg_sum(q_raw);
  const double p_sum = nonneg_sum(p_raw) + eps * static_cast<double>(p_raw.size());
  if (!(q_sum > 0.0)) return std::nullopt;
  if (!(p_sum > 0.0)) return std::nullopt;
  double kl = 0.0;
  for (std::size_t i = 0; i < q_raw.size(); ++i) {
    if (!(q_raw[i] > 0)) continue;
    const double q = q_raw[i] / q_sum;
    const double p = (p_raw[i] + eps) / p_sum;
    kl += q * std::log(q / p);
  }
  return std::max(kl, 0.0);
}

}  // namespace detail

/// IoU of (pred >= t) against (gt >= gt_threshold), averaged over the threshold
/// sweep. A threshold where both sets are empty scores 1.
template <std::floating_point T>
double aiou(std::span<const T> pred, std::span<const T> gt, const MetricConfig& cfg = {}) {
  detail::check_lengths(pred, gt);
  double total = 0.0;
  for (int k = 1; k < cfg.iou_steps; ++k) {
    const double t = static_cast<double>(k) / cfg.iou_steps;
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] >= t;
      const bool g = gt[i] >= cfg.gt_threshold;
      inter += (p && g) ? 1 : 0;
      uni += (p || g) ? 1 : 0;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / (cfg.iou_steps - 1);
}

/// Mann-Whitney AUC with midranks for ties. Absent if GT is all one class.
template <std::floating_point T>
std::optional<double> auc(std::span<const T> pred, std::span<const T> gt, const MetricConfig& cfg = {}) {
  detail::check_lengths(pred, gt);
  const std::size_t n = pred.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pred[a] < pred[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && pred[order[hi + 1]] == pred[order[lo]]) ++hi;
    const double midrank = (static_cast<double>(lo) + static_cast<double>(hi)) / 2.0 + 1.0;
    for (std::size_t j = lo; j <= hi; ++j) {
      if (gt[order[j]] >= cfg.gt_threshold) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    lo = hi + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// Histogram intersection of the two mass-normalized maps.
template <std::floating_point T>
std::optional<double> sim(std::span<const T> pred, std::span<const T> gt) {
  detail::check_lengths(pred, gt);
  const double ps = detail::nonneg_sum(pred);
  const double gs = detail::nonneg_sum(gt);
  if (!(ps > 0.0) || !(gs > 0.0)) return std::nullopt;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::min(pred[i] / ps, gt[i] / gs);
  return std::clamp(s, 0.0, 1.0);
}

template <std::floating_point T>
double mae(std::span<const T> pred, std::span<const T> gt) {
  detail::check_lengths(pred, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(static_cast<double>(pred[i]) - gt[i]);
  return s / static_cast<double>(pred.size());
}

/// KL(GT || pred) over normalized maps; pred is epsilon-smoothed. Absent for zero-mass GT.
template <std::floating_point T>
std::optional<double> kld(std::span<const T> pred, std::span<const T> gt, const MetricConfig& cfg = {}) {
  detail::check_lengths(pred, gt);
  return detail::kl_divergence(gt, pred, cfg.epsilon);
}

/// Mean z-scored prediction (population std) over fixation pixels gt/max(gt) >= cfg.nss_fixation.
/// A constant prediction scores 0. Absent when there is no fixation.
template <std::floating_point T>
std::optional<double> nss(std::span<const T> pred, std::span<const T> gt, const MetricConfig& cfg = {}) {
  detail::check_lengths(pred, gt);
  const double gmax = *std::max_element(gt.begin(), gt.end());
  if (!(gmax > 0.0)) return std::nullopt;
  const double n = static_cast<double>(pred.size());
  double mean = 0.0;
  for (T v : pred) mean += v;
  mean /= n;
  double var = 0.0;
  for (T v : pred) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  double z_sum = 0.0;
  std::size_t fix = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] / gmax >= cfg.nss_fixation) {
      z_sum += sd > 0.0 ? (pred[i] - mean) / sd : 0.0;
      ++fix;
    }
  }
  if (fix == 0) return std::nullopt;
  return z_sum / static_cast<double>(fix);
}

template <std::floating_point T>
using Annotations = std::vector<std::span<const T>>;

/// Fraction of points whose max heat across annotations is >= tau. Absent without annotations.
template <std::floating_point T>
std::optional<double> coverage(const Annotations<T>& annotations, double tau = 0.5) {
  if (annotations.empty()) return std::nullopt;
  const std::size_t n = annotations.front().size();
  if (n == 0) throw Error(ErrorKind::EmptyInput, "annotations have no points");
  for (const auto& a : annotations) {
    if (a.size() != n) throw Error(ErrorKind::LengthMismatch, "annotations of one object differ in length");
  }
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T m = annotations.front()[i];
    for (const auto& a : annotations) m = std::max(m, a[i]);
    if (m >= tau) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(n);
}

/// Mean KL(a || b) over ordered pairs a != b, with b epsilon-smoothed. Pairs whose
/// first member has zero mass are skipped. Absent with fewer than two annotations.
template <std::floating_point T>
std::optional<double> diversity(const Annotations<T>& annotations, double eps = 1e-12) {
  if (annotations.size() < 2) return std::nullopt;
  const std::size_t n = annotations.front().size();
  for (const auto& a : annotations) {
    if (a.size() != n) throw Error(ErrorKind::LengthMismatch, "annotations of one object differ in length");
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    for (std::size_t b = 0; b < annotations.size(); ++b) {
      if (a == b) continue;
      if (auto kl = detail::kl_divergence(annotations[a], annotations[b], eps)) {
        total += *kl;
        ++pairs;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  return total / static_cast<double>(pairs);
}

inline Annotations<float> as_annotations(const std::vector<Heatmap3D>& heatmaps) {
  Annotations<float> out;
  for (const auto& h : heatmaps) out.emplace_back(h.values);
  return out;
}

/// Optional-valued metric with the reason it is missing.
struct MetricValue {
  std::optional<double> value;
  std::string note;
};

inline MetricValue with_note(std::optional<double> v, const char* why) {
  return {v, v ? std::string{} : std::string(why)};
}

struct MetricReport {
  MetricValue aiou, auc, sim3d, mae;  // 3D
  MetricValue kld, sim2d, nss;        // 2D
};

template <std::floating_point T>
void evaluate_3d(MetricReport& r, std::span<const T> pred, std::span<const T> gt, const MetricConfig& cfg = {}) {
  r.aiou = {aiou(pred, gt, cfg), {}};
  r.auc = with_note(auc(pred, gt, cfg), "degenerate: ground truth has a single class");
  r.sim3d = with_note(sim(pred, gt), "zero mass");
  r.mae = {mae(pred, gt), {}};
}

template <std::floating_point T>
void evaluate_2d(MetricReport& r, const Grid<T>& pred, const Grid<T>& gt, const MetricConfig& cfg = {}) {
  if (!pred.same_shape(gt)) throw Error(ErrorKind::DimensionMismatch, "2D maps differ in size");
  r.kld = with_note(kld(pred.values(), gt.values(), cfg), "zero-mass ground truth");
  r.sim2d = with_note(sim(pred.values(), gt.values()), "zero mass");
  r.nss = with_note(nss(pred.values(), gt.values(), cfg), "empty fixation set");
}

inline nlohmann::json to_json(const MetricValue& m) {
  if (m.value) return *m.value;
  if (m.note.empty()) return nullptr;
  return {{"value", nullptr}, {"note", m.note}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  auto put = [&](const char* key, const MetricValue& m) {
    if (m.value || !m.note.empty()) j[key] = to_json(m);
  };
  put("aIoU", r.aiou);
  put("AUC", r.auc);
  put("SIM_3d", r.sim3d);
  put("MAE", r.mae);
  put("KLD", r.kld);
  put("SIM_2d", r.sim2d);
  put("NSS", r.nss);
  return j;
}

/// Mean over present values only; absent entries never count as zero.
class Aggregate {
 public:
  void add(const MetricValue& m) {
    if (m.value) {
      sum_ += *m.value;
      ++count_;
    } else if (!m.note.empty()) {
      ++absent_;
    }
  }
  nlohmann::json to_json() const {
    return {{"mean", count_ ? nlohmann::json(sum_ / count_) : nlohmann::json(nullptr)},
            {"count", count_},
            {"absent", absent_}};
  }

 private:
  double sum_ = 0.0;
  std::size_t count_ = 0;
  std::size_t absent_ = 0;
};

}  // namespace afforge::metrics

#endif  // AFFORGE_METRICS_HPP
