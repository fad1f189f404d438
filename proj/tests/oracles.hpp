// Brute-force reference implementations used only by the tests. None of these
// call into the library code paths they are compared against.
#ifndef AFFORGE_TESTS_ORACLES_HPP
#define AFFORGE_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oracle {

using Vec = std::vector<double>;

inline std::optional<double> aiou(const Vec& pred, const Vec& gt) {
  std::set<std::size_t> g;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] >= 0.5) g.insert(i);
  long double sum = 0;
  for (int k = 1; k <= 99; ++k) {
    const double t = k / 100.0;
    std::set<std::size_t> p;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] >= t) p.insert(i);
    std::set<std::size_t> inter, uni(p);
    for (auto i : g) {
      if (p.count(i)) inter.insert(i);
      uni.insert(i);
    }
    sum += uni.empty() ? 1.0L : static_cast<long double>(inter.size()) / uni.size();
  }
  return static_cast<double>(sum / 99);
}

/// O(N^2) pair counting: P(pred_pos > pred_neg) + 0.5 P(tie).
inline std::optional<double> auc(const Vec& pred, const Vec& gt) {
  long double wins = 0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] >= 0.5) ++pos; else ++neg;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(gt[i] >= 0.5)) continue;
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (gt[j] >= 0.5) continue;
      if (pred[i] > pred[j]) wins += 1;
      else if (pred[i] == pred[j]) wins += 0.5L;
    }
  }
  return static_cast<double>(wins / (static_cast<long double>(pos) * neg));
}

inline std::optional<Vec> normalized(const Vec& x, double eps = 0.0) {
  long double s = 0;
  for (double v : x) s += v + eps;
  if (!(s > 0)) return std::nullopt;
  Vec out;
  for (double v : x) out.push_back(static_cast<double>((v + eps) / s));
  return out;
}

inline std::optional<double> sim(const Vec& pred, const Vec& gt) {
  auto p = normalized(pred), q = normalized(gt);
  if (!p || !q) return std::nullopt;
  long double s = 0;
  for (std::size_t i = 0; i < p->size(); ++i) s += std::min((*p)[i], (*q)[i]);
  return static_cast<double>(s);
}

inline double mae(const Vec& pred, const Vec& gt) {
  long double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - gt[i]);
  return static_cast<double>(s / pred.size());
}

/// KL(q || p), p smoothed by eps before normalization.
inline std::optional<double> kl(const Vec& q_raw, const Vec& p_raw, double eps = 1e-12) {
  auto q = normalized(q_raw), p = normalized(p_raw, eps);
  if (!q || !p) return std::nullopt;
  long double s = 0;
  for (std::size_t i = 0; i < q->size(); ++i) {
    if ((*q)[i] > 0) s += (*q)[i] * std::log((*q)[i] / (*p)[i]);
  }
  return static_cast<double>(s);
}

inline std::optional<double> kld(const Vec& pred, const Vec& gt) { return kl(gt, pred); }

inline std::optional<double> nss(const Vec& pred, const Vec& gt) {
  const double gmax = *std::max_element(gt.begin(), gt.end());
  if (!(gmax > 0)) return std::nullopt;
  long double mean = 0, sq = 0;
  for (double v : pred) mean += v;
  mean /= pred.size();
  for (double v : pred) sq += (v - mean) * (v - mean);
  const long double sd = std::sqrt(sq / pred.size());
  std::vector<long double> z;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] / gmax >= 0.5) z.push_back(sd > 0 ? (pred[i] - mean) / sd : 0.0L);
  }
  if (z.empty()) return std::nullopt;
  long double s = 0;
  for (auto v : z) s += v;
  return static_cast<double>(s / z.size());
}

inline std::optional<double> coverage(const std::vector<Vec>& ann, double tau = 0.5) {
  if (ann.empty()) return std::nullopt;
  std::set<std::size_t> covered;
  for (const auto& a : ann)
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] >= tau) covered.insert(i);
  return static_cast<double>(covered.size()) / ann.front().size();
}

inline std::optional<double> diversity(const std::vector<Vec>& ann) {
  if (ann.size() < 2) return std::nullopt;
  long double s = 0;
  std::size_t n = 0;
  for (std::size_t a = 0; a < ann.size(); ++a)
    for (std::size_t b = 0; b < ann.size(); ++b) {
      if (a == b) continue;
      if (auto d = kl(ann[a], ann[b])) {
        s += *d;
        ++n;
      }
    }
  if (n == 0) return std::nullopt;
  return static_cast<double>(s / n);
}

/// FPS recomputing each candidate's distance to the whole selected set at every step.
inline std::vector<std::uint32_t> fps(const Eigen::Matrix3Xd& pts, std::size_t k) {
  const std::size_t m = static_cast<std::size_t>(pts.cols());
  auto d2 = [&](std::size_t i, const Eigen::Vector3d& c) {
    const double dx = pts(0, i) - c.x(), dy = pts(1, i) - c.y(), dz = pts(2, i) - c.z();
    return dx * dx + dy * dy + dz * dz;
  };
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < m; ++i) centroid += pts.col(i);
  centroid /= static_cast<double>(m);
  std::vector<std::uint32_t> sel;
  std::size_t first = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (d2(i, centroid) > d2(first, centroid)) first = i;
  sel.push_back(static_cast<std::uint32_t>(first));
  while (sel.size() < std::min(k, m)) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double md = std::numeric_limits<double>::infinity();
      for (auto s : sel) md = std::min(md, d2(i, pts.col(s)));
      if (md > best) {
        best = md;
        arg = i;
      }
    }
    sel.push_back(static_cast<std::uint32_t>(arg));
  }
  return sel;
}

/// Fronto-parallel two-plane scene seen by a camera at the origin looking down +z.
struct TwoPlanes {
  double near_z = 2.0, far_z = 4.0;
  double near_x0 = -0.3, near_x1 = 0.5, near_y0 = -0.4, near_y1 = 0.2;
  int width = 64, height = 64;
  double f = 60.0, cx = 31.5, cy = 31.5;

  bool near_hit(double px, double py) const {
    const double x = (px - cx) / f * near_z, y = (py - cy) / f * near_z;
    return x >= near_x0 && x <= near_x1 && y >= near_y0 && y <= near_y1;
  }
  /// Depth of the first surface along the ray through pixel centre (px, py).
  double first_surface(int px, int py) const { return near_hit(px, py) ? near_z : far_z; }

  /// Visible iff the first surface through the point's nearest pixel is the point's own plane.
  bool visible(const Eigen::Vector3d& p) const {
    const double u = f * p.x() / p.z() + cx, v = f * p.y() / p.z() + cy;
    if (u < 0 || v < 0 || u > width - 1 || v > height - 1) return false;
    return first_surface(static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))) == p.z();
  }
};

}  // namespace oracle

#endif  // AFFORGE_TESTS_ORACLES_HPP
