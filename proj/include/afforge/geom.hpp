#ifndef AFFORGE_GEOM_HPP
#define AFFORGE_GEOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "afforge/error.hpp"
#include "afforge/grid.hpp"

namespace afforge {

using Point3 = Eigen::Vector3d;

/// Opaque handle to a rendered RGB(A) view. Mocks key on (object_id, view_id),
/// live clients read the PNG at `path`.
struct ImageRef {
  std::string object_id;
  int view_id = 0;
  std::string path;

  bool operator==(const ImageRef&) const = default;
};

struct PointCloud {
  std::string object_id;
  Eigen::Matrix3Xd positions;  // one column per point

  std::size_t size() const noexcept { return static_cast<std::size_t>(positions.cols()); }
  Point3 point(std::size_t i) const { return positions.col(static_cast<Eigen::Index>(i)); }

  double bbox_diag() const {
    if (positions.cols() == 0) return 0.0;
    return (positions.rowwise().maxCoeff() - positions.rowwise().minCoeff()).norm();
  }
};

inline void validate(const PointCloud& pc) {
  if (pc.positions.cols() < 1) throw Error(ErrorKind::EmptyInput, "point cloud has no points");
  if (!pc.positions.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite point coordinate");
  if (!(pc.bbox_diag() > 0.0)) throw Error(ErrorKind::InvalidArgument, "degenerate point cloud bounding box");
}

struct CameraView {
  int view_id = 0;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();
  int width = 0;
  int height = 0;
  DepthMap depth;  // camera-frame z; 0 or non-finite means no surface
  ImageRef image;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }
};

inline void validate(const CameraView& cam) {
  if (cam.width <= 0 || cam.height <= 0) throw Error(ErrorKind::InvalidArgument, "camera has empty image");
  if (!(cam.fx() > 0.0 && cam.fy() > 0.0)) throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
  if (!(cam.cx() >= 0.0 && cam.cx() < cam.width && cam.cy() >= 0.0 && cam.cy() < cam.height)) {
    throw Error(ErrorKind::InvalidArgument, "principal point outside image");
  }
  const Eigen::Matrix3d r = cam.world_to_camera.linear();
  if (!(((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-6)) {
    throw Error(ErrorKind::InvalidArgument, "world_to_camera rotation is not orthonormal");
  }
  if (!cam.depth.empty() && (cam.depth.width() != cam.width || cam.depth.height() != cam.height)) {
    throw Error(ErrorKind::DimensionMismatch, "depth map does not match camera dimensions");
  }
}

/// Depth-test tolerances: |z_cam - d*| <= rel_tol * d* + abs_tol.
struct VisibilityParams {
  double rel_tol = 0.01;
  double abs_tol = 0.0;
};

inline VisibilityParams default_visibility(const PointCloud& pc, double rel_tol = 0.01, double abs_scale = 1e-4) {
  return {rel_tol, abs_scale * pc.bbox_diag()};
}

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
  double z_cam = 0.0;
};

inline std::optional<PixelCoord> try_project(const Point3& p, const CameraView& cam) {
  const Point3 pc = cam.world_to_camera * p;
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Point3 h = cam.intrinsics * pc;
  return PixelCoord{h.x() / pc.z(), h.y() / pc.z(), pc.z()};
}

/// Perspective projection without clamping to the image bounds.
inline PixelCoord project(const Point3& p, const CameraView& cam) {
  if (auto px = try_project(p, cam)) return *px;
  throw Error(ErrorKind::BehindCamera, "point has non-positive camera-frame depth");
}

inline Point3 backproject(double u, double v, double d, const CameraView& cam) {
  if (!(d > 0.0)) throw Error(ErrorKind::NonPositiveDepth, "backproject needs positive depth");
  const Point3 ray = cam.intrinsics.inverse() * Point3(u, v, 1.0);
  const Point3 pc = ray * (d / ray.z());
  return cam.world_to_camera.inverse() * pc;
}

/// Border pixels count as inside: 0 <= u <= W-1, 0 <= v <= H-1.
inline bool in_image(double u, double v, int width, int height) {
  return u >= 0.0 && v >= 0.0 && u <= width - 1.0 && v <= height - 1.0;
}

/// Visibility of one point. Returns the projection when visible.
/// Depth is sampled at the nearest pixel, never interpolated.
inline std::optional<PixelCoord> visible_projection(const Point3& p, const CameraView& cam,
                                                    const VisibilityParams& vp) {
  auto px = try_project(p, cam);
  if (!px || !in_image(px->u, px->v, cam.width, cam.height)) return std::nullopt;
  const int x = static_cast<int>(std::lround(px->u));
  const int y = static_cast<int>(std::lround(px->v));
  const double d = cam.depth(x, y);
  if (!std::isfinite(d) || !(d > 0.0)) return std::nullopt;
  if (std::abs(px->z_cam - d) > vp.rel_tol * d + vp.abs_tol) return std::nullopt;
  return px;
}

using VisibilityMask = std::vector<std::uint8_t>;

inline VisibilityMask visible(const PointCloud& pc, const CameraView& cam, const VisibilityParams& vp) {
  if (cam.depth.width() != cam.width || cam.depth.height() != cam.height) {
    throw Error(ErrorKind::DimensionMismatch, "visibility test needs a depth map matching the camera");
  }
  VisibilityMask mask(pc.size(), 0);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    mask[i] = visible_projection(pc.point(i), cam, vp).has_value() ? 1 : 0;
  }
  return mask;
}

/// Bilinear lookup. Exact at integer coordinates and on constant patches; the
/// result is clamped to the range of the four enclosing texels.
template <typename T>
double sample_bilinear(const Grid<T>& map, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0 && u <= map.width() - 1.0 && v <= map.height() - 1.0)) {
    throw Error(ErrorKind::OutOfRange, "bilinear sample outside map");
  }
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, map.width() - 1);
  const int y1 = std::min(y0 + 1, map.height() - 1);
  const double ax = u - x0;
  const double ay = v - y0;
  const double v00 = map(x0, y0), v10 = map(x1, y0), v01 = map(x0, y1), v11 = map(x1, y1);
  const double w00 = (1.0 - ax) * (1.0 - ay), w10 = ax * (1.0 - ay);
  const double w01 = (1.0 - ax) * ay, w11 = ax * ay;
  const double raw = w00 * v00 + w10 * v10 + w01 * v01 + w11 * v11;
  const double lo = std::min(std::min(v00, v10), std::min(v01, v11));
  const double hi = std::max(std::max(v00, v10), std::max(v01, v11));
  return std::clamp(raw, lo, hi);
}

/// OpenCV-style pose (x right, y down, z forward) looking from eye at target.
inline Eigen::Isometry3d look_at(const Point3& eye, const Point3& target, const Point3& up = Point3::UnitZ()) {
  const Point3 forward = (target - eye).normalized();
  Point3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Point3::UnitY());
  right.normalize();
  const Point3 down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = r;
  t.translation() = -r * eye;
  return t;
}

struct RingSpec {
  int count = 25;
  double elevation_deg = 20.0;
  double distance = 2.2;
  int width = 128;
  int height = 128;
  double focal = 110.0;
};

/// Camera centre of ring view k: equal azimuth steps starting at +x, fixed elevation.
inline Point3 ring_eye(const RingSpec& ring, int view_id) {
  const double az = 2.0 * std::numbers::pi * view_id / ring.count;
  const double el = ring.elevation_deg * std::numbers::pi / 180.0;
  return ring.distance * Point3(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el));
}

/// Camera for ring view k without a depth map.
inline CameraView ring_camera(const RingSpec& ring, int view_id) {
  CameraView cam;
  cam.view_id = view_id;
  cam.width = ring.width;
  cam.height = ring.height;
  cam.intrinsics << ring.focal, 0.0, (ring.width - 1) / 2.0,
                    0.0, ring.focal, (ring.height - 1) / 2.0,
                    0.0, 0.0, 1.0;
  cam.world_to_camera = look_at(ring_eye(ring, view_id), Point3::Zero());
  return cam;
}

}  // namespace afforge

#endif  // AFFORGE_GEOM_HPP
