#ifndef AFFORGE_FIXTURES_HPP
#define AFFORGE_FIXTURES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "afforge/error.hpp"
#include "afforge/geom.hpp"
#include "afforge/grid.hpp"
#include "afforge/image.hpp"

namespace afforge::fixtures {

// Synthetic objects with analytically known affordance regions. Every object has
// five disjoint regions, one per query; region ids are 0..4, -1 is "no region".

enum class Shape { Cube, Sphere, Cylinder };

inline constexpr double kCubeHalf = 0.5;
inline constexpr double kSphereRadius = 0.5;
inline constexpr double kCylinderRadius = 0.4;
inline constexpr double kCylinderHalfHeight = 0.5;

struct Fixture {
  std::string object_id;
  std::string class_tag;
  Shape shape = Shape::Cube;
  std::array<std::string, 5> affordances;  // phrase completing "Point to the part ..."
};

inline const std::vector<Fixture>& builtin_fixtures() {
  static const std::vector<Fixture> all{
      {"cube", "box", Shape::Cube,
       {"where you would grab to carry the box", "where you would open the lid of the box",
        "where you would push to slide the box", "where you would lean the box against",
        "where you would stick a shipping label on the box"}},
      {"sphere", "ball", Shape::Sphere,
       {"where you would press to test the ball's firmness", "where you would catch the ball with your right hand",
        "where you would catch the ball with your left hand", "where you would kick the ball",
        "where you would hold the ball against your body"}},
      {"cylinder", "mug", Shape::Cylinder,
       {"where you would hold the mug", "where you would drink from the mug",
        "where you would wipe the mug clean", "where you would write a name on the mug",
        "where you would wrap your fingers around the mug"}},
  };
  return all;
}

inline const Fixture* find_fixture(std::string_view object_id) {
  for (const auto& f : builtin_fixtures()) {
    if (f.object_id == object_id) return &f;
  }
  return nullptr;
}

/// Region of a surface point; points are assumed to lie on the shape.
inline int region_of(Shape shape, const Point3& p) {
  switch (shape) {
    case Shape::Cube: {
      Eigen::Index axis = 0;
      p.cwiseAbs().maxCoeff(&axis);
      const bool positive = p[axis] > 0.0;
      if (axis == 0) return positive ? 0 : 3;
      if (axis == 1) return positive ? 4 : 2;
      return positive ? 1 : -1;
    }
    case Shape::Sphere: {
      if (p.z() > 0.3) return 0;
      if (p.x() > 0.3) return 1;
      if (p.x() < -0.3) return 2;
      if (p.y() > 0.3) return 3;
      if (p.y() < -0.3) return 4;
      return -1;
    }
    case Shape::Cylinder: {
      if (p.z() >= kCylinderHalfHeight - 1e-9) return 1;
      if (p.z() <= -kCylinderHalfHeight + 1e-9) return -1;
      const double deg = std::atan2(p.y(), p.x()) * 180.0 / std::numbers::pi;
      auto near = [&](double centre) {
        double d = std::fmod(std::abs(deg - centre), 360.0);
        return std::min(d, 360.0 - d) < 30.0;
      };
      if (near(0.0)) return 0;
      if (near(180.0)) return 2;
      if (near(90.0)) return 3;
      if (near(-90.0)) return 4;
      return -1;
    }
  }
  return -1;
}

struct RayHit {
  double t = 0.0;
  Point3 normal = Point3::Zero();
};

/// Nearest intersection with t > 0 of origin + t * dir.
inline std::optional<RayHit> intersect(Shape shape, const Point3& origin, const Point3& dir) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (shape) {
    case Shape::Cube: {
      double t_near = -inf, t_far = inf;
      int axis_near = -1;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
          if (std::abs(origin[a]) > kCubeHalf) return std::nullopt;
          continue;
        }
        double t0 = (-kCubeHalf - origin[a]) / dir[a];
        double t1 = (kCubeHalf - origin[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > t_near) {
          t_near = t0;
          axis_near = a;
        }
        t_far = std::min(t_far, t1);
      }
      if (t_near > t_far || t_near <= 0.0 || axis_near < 0) return std::nullopt;
      RayHit hit{t_near, Point3::Zero()};
      hit.normal[axis_near] = dir[axis_near] > 0.0 ? -1.0 : 1.0;
      return hit;
    }
    case Shape::Sphere: {
      const double a = dir.squaredNorm();
      const double b = 2.0 * origin.dot(dir);
      const double c = origin.squaredNorm() - kSphereRadius * kSphereRadius;
      const double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) return std::nullopt;
      const double t = (-b - std::sqrt(disc)) / (2.0 * a);
      if (t <= 0.0) return std::nullopt;
      return RayHit{t, (origin + t * dir).normalized()};
    }
    case Shape::Cylinder: {
      std::optional<RayHit> best;
      auto consider = [&](double t, const Point3& n) {
        if (t > 0.0 && (!best || t < best->t)) best = RayHit{t, n};
      };
      const double a = dir.x() * dir.x() + dir.y() * dir.y();
      if (a > 1e-15) {
        const double b = 2.0 * (origin.x() * dir.x() + origin.y() * dir.y());
        const double c = origin.x() * origin.x() + origin.y() * origin.y() - kCylinderRadius * kCylinderRadius;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
          const double t = (-b - std::sqrt(disc)) / (2.0 * a);
          const Point3 p = origin + t * dir;
          if (std::abs(p.z()) <= kCylinderHalfHeight) consider(t, Point3(p.x(), p.y(), 0.0).normalized());
        }
      }
      if (std::abs(dir.z()) > 1e-15) {
        for (double zc : {kCylinderHalfHeight, -kCylinderHalfHeight}) {
          const double t = (zc - origin.z()) / dir.z();
          const Point3 p = origin + t * dir;
          if (p.x() * p.x() + p.y() * p.y() <= kCylinderRadius * kCylinderRadius) {
            consider(t, Point3(0.0, 0.0, zc > 0.0 ? 1.0 : -1.0));
          }
        }
      }
      return best;
    }
  }
  return std::nullopt;
}

/// Uniform double in [0,1) from a 64-bit engine, identical on every platform.
inline double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Area-uniform surface samples; cylinder samples exclude the rim so region
/// membership is unambiguous.
inline Eigen::Matrix3Xd sample_surface(Shape shape, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Point3 p;
    switch (shape) {
      case Shape::Cube: {
        const int face = static_cast<int>(rng() % 6);
        const double a = (unit_double(rng) - 0.5) * 2.0 * kCubeHalf * 0.999;
        const double b = (unit_double(rng) - 0.5) * 2.0 * kCubeHalf * 0.999;
        const double s = (face % 2 == 0) ? kCubeHalf : -kCubeHalf;
        const int axis = face / 2;
        p[axis] = s;
        p[(axis + 1) % 3] = a;
        p[(axis + 2) % 3] = b;
        break;
      }
      case Shape::Sphere: {
        const double z = 2.0 * unit_double(rng) - 1.0;
        const double phi = 2.0 * std::numbers::pi * unit_double(rng);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        p = kSphereRadius * Point3(r * std::cos(phi), r * std::sin(phi), z);
        break;
      }
      case Shape::Cylinder: {
        const double side = 2.0 * std::numbers::pi * kCylinderRadius * 2.0 * kCylinderHalfHeight;
        const double cap = std::numbers::pi * kCylinderRadius * kCylinderRadius;
        const double pick = unit_double(rng) * (side + 2.0 * cap);
        const double phi = 2.0 * std::numbers::pi * unit_double(rng);
        if (pick < side) {
          const double z = (unit_double(rng) - 0.5) * 2.0 * kCylinderHalfHeight * 0.999;
          p = Point3(kCylinderRadius * std::cos(phi), kCylinderRadius * std::sin(phi), z);
        } else {
          const double r = kCylinderRadius * 0.999 * std::sqrt(unit_double(rng));
          const double z = pick < side + cap ? kCylinderHalfHeight : -kCylinderHalfHeight;
          p = Point3(r * std::cos(phi), r * std::sin(phi), z);
        }
        break;
      }
    }
    pts.col(static_cast<Eigen::Index>(i)) = p;
  }
  return pts;
}

/// World-space ray through pixel centre (x, y); camera-frame depth of origin + t * dir is t.
inline std::pair<Point3, Point3> pixel_ray(const CameraView& cam, double x, double y) {
  const Point3 d_cam = cam.intrinsics.inverse() * Point3(x, y, 1.0);
  const Eigen::Isometry3d cam_to_world = cam.world_to_camera.inverse();
  return {cam_to_world.translation(), cam_to_world.linear() * d_cam};
}

/// Per-pixel ray cast: depth (0 where the ray misses) and region id (-2 background).
struct RayCast {
  DepthMap depth;
  Grid<int> region;
  Grid<float> shade;  // Lambert term for the render
};

inline RayCast ray_cast(Shape shape, const CameraView& cam) {
  RayCast rc{DepthMap(cam.width, cam.height, 0.0f), Grid<int>(cam.width, cam.height, -2),
             Grid<float>(cam.width, cam.height, 0.0f)};
  const Point3 light = Point3(0.4, -0.3, 0.85).normalized();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto [o, d] = pixel_ray(cam, x, y);
      const auto hit = intersect(shape, o, d);
      if (!hit) continue;
      rc.depth(x, y) = static_cast<float>(hit->t);
      rc.region(x, y) = region_of(shape, o + hit->t * d);
      rc.shade(x, y) = static_cast<float>(0.35 + 0.65 * std::max(0.0, hit->normal.dot(light)));
    }
  }
  return rc;
}

inline Image render_rgba(Shape shape, const RayCast& rc) {
  static constexpr std::array<std::array<double, 3>, 3> base{{{200, 150, 90}, {90, 160, 210}, {225, 225, 215}}};
  const auto& col = base[static_cast<std::size_t>(shape)];
  Image img(rc.depth.width(), rc.depth.height(), 4, 0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (rc.region(x, y) == -2) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(col[c] * rc.shade(x, y)));
      img.at(x, y, 3) = 255;
    }
  }
  return img;
}

struct FixtureScene {
  PointCloud cloud;
  std::vector<CameraView> views;  // with depth maps
  std::vector<Image> renders;     // RGBA
};

inline constexpr std::size_t kDefaultFixturePoints = 4096;

inline FixtureScene build_scene(const Fixture& fx, const RingSpec& ring = {},
                                std::size_t n_points = kDefaultFixturePoints, std::uint64_t seed = 1) {
  FixtureScene scene;
  scene.cloud.object_id = fx.object_id;
  scene.cloud.positions = sample_surface(fx.shape, n_points, seed);
  for (int k = 0; k < ring.count; ++k) {
    CameraView cam = ring_camera(ring, k);
    auto rc = ray_cast(fx.shape, cam);
    cam.depth = rc.depth;
    cam.image = ImageRef{fx.object_id, k, {}};
    scene.renders.push_back(render_rgba(fx.shape, rc));
    scene.views.push_back(std::move(cam));
  }
  return scene;
}

/// Analytic ground truth heat for query `region`: 1 inside the region, else 0.
inline std::vector<float> ground_truth(const Fixture& fx, const PointCloud& pc, int region) {
  std::vector<float> gt(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) gt[i] = region_of(fx.shape, pc.point(i)) == region ? 1.0f : 0.0f;
  return gt;
}

}  // namespace afforge::fixtures

#endif  // AFFORGE_FIXTURES_HPP
