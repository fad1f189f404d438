#ifndef AFFORGE_MOCK_CLIENTS_HPP
#define AFFORGE_MOCK_CLIENTS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "afforge/clients.hpp"
#include "afforge/fixtures.hpp"

namespace afforge {

/// Exact squared Euclidean distance transform (Felzenszwalb & Huttenlocher):
/// for every pixel, squared distance to the nearest pixel where `inside` holds.
/// Pixels are +inf when `inside` is empty.
inline Grid<double> squared_distance_transform(const Grid<std::uint8_t>& inside) {
  constexpr double far = 1e20;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int w = inside.width(), h = inside.height();
  Grid<double> d(w, h, far);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (inside(x, y)) d(x, y) = 0.0;

  // Lower envelope of parabolas along one line.
  auto pass = [](const std::vector<double>& f, std::vector<double>& out) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(f.size());
    std::vector<double> z(f.size() + 1);
    auto cross = [&](int q, int p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p)); };
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
      double s = cross(q, v[k]);
      while (s <= z[k]) {
        --k;
        s = cross(q, v[k]);
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
      while (z[k + 1] < q) ++k;
      const double dq = q - v[k];
      out[q] = dq * dq + f[v[k]];
    }
  };

  std::vector<double> line, out;
  for (int x = 0; x < w; ++x) {
    line.resize(static_cast<std::size_t>(h));
    out.resize(line.size());
    for (int y = 0; y < h; ++y) line[y] = d(x, y);
    pass(line, out);
    for (int y = 0; y < h; ++y) d(x, y) = out[y];
  }
  for (int y = 0; y < h; ++y) {
    line.resize(static_cast<std::size_t>(w));
    out.resize(line.size());
    for (int x = 0; x < w; ++x) line[x] = d(x, y);
    pass(line, out);
    for (int x = 0; x < w; ++x) d(x, y) = out[x] >= far / 2 ? inf : out[x];
  }
  return d;
}

struct MockConfig {
  RingSpec ring;             // must match the cameras the dataset was built with
  double alpha = 8.0;        // logit slope
  double r0 = 0.5;           // logit zero crossing, pixels from the region
  int max_points = 3;
  bool fail_points = false;  // inject ServiceUnreachable for testing degradation
  bool fail_segments = false;
};

/// Deterministic stand-ins for the three model services, backed by the analytic
/// fixtures. Pure functions of (config, inputs); safe to call concurrently.
class MockServices final : public QueryService, public PointService, public SegmentService {
 public:
  explicit MockServices(MockConfig cfg = {}) : cfg_(std::move(cfg)) {}

  const MockConfig& config() const noexcept { return cfg_; }

  std::vector<AffordanceQuery> generate_queries(const std::vector<ImageRef>& views, const PromptConfig&) override {
    if (views.empty()) throw Error(ErrorKind::InvalidArgument, "generate_queries needs at least one view");
    const std::string& object_id = views.front().object_id;
    const auto* fx = fixtures::find_fixture(object_id);
    static const std::array<std::string, 5> generic{
        "where you would hold the object", "where you would push the object", "where you would lift the object",
        "where you would press on the object", "where you would touch the object"};
    const auto& phrases = fx ? fx->affordances : generic;
    std::vector<AffordanceQuery> out;
    for (int k = 0; k < kQueriesPerObject; ++k) {
      AffordanceQuery q;
      q.query_id = "q" + std::to_string(k);
      q.object_id = object_id;
      q.object_class = fx ? fx->class_tag : "object";
      q.affordance_phrase = phrases[static_cast<std::size_t>(k)];
      q.text = "Point to the part " + q.affordance_phrase;
      out.push_back(std::move(q));
    }
    return out;
  }

  /// Single point at the pixel centroid of the query's region, or nothing when
  /// the region is not visible in this view.
  std::vector<InteractionPoint> point_at(const ImageRef& view, int width, int height,
                                         const AffordanceQuery& query) override {
    if (cfg_.fail_points) throw Error(ErrorKind::ServiceUnreachable, "mock pointing service disabled");
    const auto* fx = fixtures::find_fixture(view.object_id);
    const int region = region_index(query.query_id);
    if (!fx || region < 0) return {};
    const auto rc = cast(*fx, view.view_id, width, height);
    double sx = 0.0, sy = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (rc.region(x, y) == region) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    }
    if (count == 0) return {};
    std::vector<InteractionPoint> pts{{view.view_id, sx / count, sy / count, 1.0}};
    return normalize_points(std::move(pts), width, height, cfg_.max_points);
  }

  /// Logits alpha * (r0 - dist(pixel, region)) for the region nearest each prompt,
  /// combined across prompts by elementwise max.
  MaskLogits segment_at(const ImageRef& view, int width, int height,
                        const std::vector<InteractionPoint>& points) override {
    if (cfg_.fail_segments) throw Error(ErrorKind::ServiceUnreachable, "mock segmentation service disabled");
    if (points.empty()) throw Error(ErrorKind::InvalidArgument, "segment_at needs at least one prompt point");
    const auto* fx = fixtures::find_fixture(view.object_id);
    std::vector<Grid<float>> per_point;
    if (!fx) {
      per_point.emplace_back(width, height, static_cast<float>(-cfg_.alpha * 10.0));
      return {view.view_id, union_logits(per_point)};
    }
    const auto rc = cast(*fx, view.view_id, width, height);
    std::array<std::optional<Grid<double>>, 5> dist;
    auto region_dist = [&](int r) -> const Grid<double>& {
      if (!dist[r]) {
        Grid<std::uint8_t> inside(width, height, 0);
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) inside(x, y) = rc.region(x, y) == r ? 1 : 0;
        dist[r] = squared_distance_transform(inside);
      }
      return *dist[r];
    };
    for (const auto& p : points) {
      const int px = std::clamp(static_cast<int>(std::lround(p.u)), 0, width - 1);
      const int py = std::clamp(static_cast<int>(std::lround(p.v)), 0, height - 1);
      int chosen = -1;
      double chosen_d = std::numeric_limits<double>::infinity();
      for (int r = 0; r < 5; ++r) {
        const double d = region_dist(r)(px, py);
        if (d < chosen_d) {
          chosen_d = d;
          chosen = r;
        }
      }
      Grid<float> logits(width, height);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const double d = chosen >= 0 ? std::sqrt(region_dist(chosen)(x, y)) : 1e6;
          logits(x, y) = static_cast<float>(std::max(-60.0, cfg_.alpha * (cfg_.r0 - std::min(d, 1e6))));
        }
      }
      per_point.push_back(std::move(logits));
    }
    return {view.view_id, union_logits(per_point)};
  }

 private:
  static int region_index(const std::string& query_id) {
    if (query_id.size() != 2 || query_id[0] != 'q' || query_id[1] < '0' || query_id[1] > '4') return -1;
    return query_id[1] - '0';
  }

  fixtures::RayCast cast(const fixtures::Fixture& fx, int view_id, int width, int height) const {
    RingSpec ring = cfg_.ring;
    if (ring.width != width || ring.height != height) {
      throw Error(ErrorKind::DimensionMismatch, "mock ring spec does not match the requested view size");
    }
    return fixtures::ray_cast(fx.shape, ring_camera(ring, view_id));
  }

  MockConfig cfg_;
};

}  // namespace afforge

#endif  // AFFORGE_MOCK_CLIENTS_HPP
