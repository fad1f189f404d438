#ifndef AFFORGE_PARTIAL_HPP
#define AFFORGE_PARTIAL_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "afforge/error.hpp"
#include "afforge/geom.hpp"
#include "afforge/lift.hpp"

namespace afforge {

inline constexpr std::size_t kPartialPoints = 2048;

struct PartialRecord {
  std::string object_id;
  int source_view = 0;
  std::vector<std::uint32_t> indices;  // into the full cloud, FPS selection order
  bool under_sampled = false;
  std::optional<std::vector<float>> heat;  // full-shape heat restricted to `indices`

  bool operator==(const PartialRecord&) const = default;
};

/// Ascending indices of the points visible from `cam`.
inline std::vector<std::uint32_t> visible_subset(const PointCloud& pc, const CameraView& cam,
                                                 const VisibilityParams& vp) {
  const auto mask = visible(pc, cam, vp);
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

namespace detail {

inline double squared_distance(const Eigen::Matrix3Xd& pts, Eigen::Index a, const Eigen::Vector3d& b) {
  const double dx = pts(0, a) - b.x();
  const double dy = pts(1, a) - b.y();
  const double dz = pts(2, a) - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace detail

/// Deterministic greedy farthest point sampling over the columns of `points`.
///
/// Starts at the point farthest from the centroid, then repeatedly takes the point
/// whose squared distance to the selected set is largest. Ties go to the lowest
/// index. Returns min(k, M) indices in selection order.
inline std::vector<std::uint32_t> farthest_point_sample(const Eigen::Matrix3Xd& points, std::size_t k) {
  const Eigen::Index m = points.cols();
  if (m < 1) throw Error(ErrorKind::EmptyInput, "farthest point sampling on an empty set");
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "sample count must be at least 1");
  const std::size_t take = std::min<std::size_t>(k, static_cast<std::size_t>(m));

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < m; ++i) centroid += points.col(i);
  centroid /= static_cast<double>(m);

  Eigen::Index first = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double d = detail::squared_distance(points, i, centroid);
    if (d > best) {
      best = d;
      first = i;
    }
  }

  std::vector<std::uint32_t> selected;
  selected.reserve(take);
  std::vector<double> min_dist(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(m), 0);
  Eigen::Index current = first;
  while (selected.size() < take) {
    selected.push_back(static_cast<std::uint32_t>(current));
    taken[static_cast<std::size_t>(current)] = 1;
    const Eigen::Vector3d c = points.col(current);
    Eigen::Index next = -1;
    double next_dist = -1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      double& md = min_dist[static_cast<std::size_t>(i)];
      md = std::min(md, detail::squared_distance(points, i, c));
      if (md > next_dist) {
        next_dist = md;
        next = i;
      }
    }
    if (next < 0) break;
    current = next;
  }
  return selected;
}

/// Visible subset from `cam`, downsampled to k points by FPS. Fewer than k visible
/// points yields all of them with under_sampled set.
inline PartialRecord make_partial(const PointCloud& pc, const CameraView& cam, const VisibilityParams& vp,
                                  std::size_t k = kPartialPoints, const Heatmap3D* heat = nullptr) {
  if (heat && heat->size() != pc.size()) throw Error(ErrorKind::LengthMismatch, "heatmap and cloud sizes differ");
  const auto vis = visible_subset(pc, cam, vp);
  if (vis.empty()) {
    throw Error(ErrorKind::NoVisiblePoints, "no points visible from view " + std::to_string(cam.view_id));
  }
  PartialRecord rec;
  rec.object_id = pc.object_id;
  rec.source_view = cam.view_id;
  if (vis.size() < k) {
    rec.indices = vis;
    rec.under_sampled = true;
  } else {
    Eigen::Matrix3Xd sub(3, static_cast<Eigen::Index>(vis.size()));
    for (std::size_t j = 0; j < vis.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = pc.positions.col(vis[j]);
    const auto local = farthest_point_sample(sub, k);
    rec.indices.reserve(local.size());
    for (auto j : local) rec.indices.push_back(vis[j]);
  }
  if (heat) {
    std::vector<float> restricted;
    restricted.reserve(rec.indices.size());
    for (auto i : rec.indices) restricted.push_back(heat->values[i]);
    rec.heat = std::move(restricted);
  }
  return rec;
}

}  // namespace afforge

#endif  // AFFORGE_PARTIAL_HPP
