#ifndef AFFORGE_LIFT_HPP
#define AFFORGE_LIFT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "afforge/clients.hpp"
#include "afforge/error.hpp"
#include "afforge/geom.hpp"
#include "afforge/grid.hpp"

namespace afforge {

struct Heatmap2D {
  int view_id = 0;
  Grid<float> values;  // in [0,1]

  bool operator==(const Heatmap2D&) const = default;
};

struct Heatmap3D {
  std::string object_id;
  std::string query_id;
  std::vector<float> values;          // in [0,1]
  std::vector<std::uint32_t> support; // views that saw the point and contributed
  bool low_support = true;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const Heatmap3D&) const = default;
};

/// Logistic function; exp() is only ever taken of a non-positive argument.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Heatmap2D logits_to_heatmap(const MaskLogits& m) {
  Heatmap2D h{m.view_id, Grid<float>(m.logits.width(), m.logits.height())};
  auto out = h.values.values();
  auto in = m.logits.values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(sigmoid(in[i]));
  return h;
}

enum class Combiner { Mean, Max, SumOver25 };

inline std::string_view to_string(Combiner c) {
  switch (c) {
    case Combiner::Mean: return "mean";
    case Combiner::Max: return "max";
    case Combiner::SumOver25: return "sum_normalized_by_25";
  }
  return "mean";
}

inline Combiner parse_combiner(std::string_view s) {
  if (s == "mean") return Combiner::Mean;
  if (s == "max") return Combiner::Max;
  if (s == "sum_normalized_by_25") return Combiner::SumOver25;
  throw Error(ErrorKind::InvalidArgument, "unknown combiner '" + std::string(s) + "'");
}

struct FusionParams {
  Combiner combiner = Combiner::Mean;
  std::uint32_t low_support_views = 3;
};

/// One view's vote: the camera (with depth) and its 2D heatmap.
struct Contribution {
  std::reference_wrapper<const CameraView> view;
  std::reference_wrapper<const Heatmap2D> heatmap;
};

/// Visibility-gated voting of per-view 2D heatmaps onto the point cloud.
///
/// Contributions are accumulated in ascending view_id order and points in
/// ascending index order, so the result does not depend on input order.
/// With the default mean combiner a point seen by views S gets the mean of the
/// bilinearly sampled heat over S; unseen points get 0 and support 0.
inline Heatmap3D fuse_views(const PointCloud& pc, std::vector<Contribution> contributions,
                            const VisibilityParams& vp, const FusionParams& params = {}) {
  std::sort(contributions.begin(), contributions.end(), [](const Contribution& a, const Contribution& b) {
    return a.view.get().view_id < b.view.get().view_id;
  });
  for (std::size_t k = 0; k < contributions.size(); ++k) {
    const CameraView& cam = contributions[k].view;
    const Heatmap2D& heat = contributions[k].heatmap;
    if (heat.values.width() != cam.width || heat.values.height() != cam.height) {
      throw Error(ErrorKind::DimensionMismatch,
                  "heatmap for view " + std::to_string(cam.view_id) + " does not match the view dimensions");
    }
    if (heat.view_id != cam.view_id) {
      throw Error(ErrorKind::InvalidArgument, "heatmap view_id differs from its camera");
    }
    if (k > 0 && contributions[k - 1].view.get().view_id == cam.view_id) {
      throw Error(ErrorKind::InvalidArgument, "duplicate contribution for view " + std::to_string(cam.view_id));
    }
  }

  const std::size_t n = pc.size();
  std::vector<double> acc(n, 0.0);
  Heatmap3D out;
  out.object_id = pc.object_id;
  out.support.assign(n, 0);
  for (const auto& c : contributions) {
    const CameraView& cam = c.view;
    const Heatmap2D& heat = c.heatmap;
    for (std::size_t i = 0; i < n; ++i) {
      const auto px = visible_projection(pc.point(i), cam, vp);
      if (!px) continue;
      const double h = sample_bilinear(heat.values, px->u, px->v);
      if (params.combiner == Combiner::Max) {
        acc[i] = std::max(acc[i], h);
      } else {
        acc[i] += h;
      }
      ++out.support[i];
    }
  }

  out.values.resize(n);
  std::uint32_t max_support = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t s = out.support[i];
    max_support = std::max(max_support, s);
    double v = 0.0;
    if (s > 0) {
      switch (params.combiner) {
        case Combiner::Mean: v = acc[i] / s; break;
        case Combiner::Max: v = acc[i]; break;
        case Combiner::SumOver25: v = acc[i] / 25.0; break;
      }
    }
    out.values[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  out.low_support = max_support < params.low_support_views;
  return out;
}

}  // namespace afforge

#endif  // AFFORGE_LIFT_HPP
