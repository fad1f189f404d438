#ifndef AFFORGE_REPROJECT_HPP
#define AFFORGE_REPROJECT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "afforge/error.hpp"
#include "afforge/geom.hpp"
#include "afforge/image.hpp"
#include "afforge/lift.hpp"

namespace afforge {

/// 2 px at 512 wide, scaled linearly with width, never below 0.5 px.
inline double default_splat_radius(int width) { return std::max(0.5, 2.0 * width / 512.0); }

/// Visibility-gated point splatting. Each visible point writes its heat to every
/// pixel centre within radius_px of its projection; overlapping writes keep the max.
inline Heatmap2D render_heatmap_2d(const Heatmap3D& h, const PointCloud& pc, const CameraView& cam,
                                   const VisibilityParams& vp, double radius_px) {
  if (!(radius_px >= 0.5)) throw Error(ErrorKind::InvalidArgument, "splat radius must be >= 0.5 px");
  if (h.size() != pc.size()) throw Error(ErrorKind::LengthMismatch, "heatmap and point cloud sizes differ");
  Heatmap2D out{cam.view_id, Grid<float>(cam.width, cam.height, 0.0f)};
  const double r2 = radius_px * radius_px;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const float heat = std::clamp(h.values[i], 0.0f, 1.0f);
    if (heat <= 0.0f) continue;
    const auto px = visible_projection(pc.point(i), cam, vp);
    if (!px) continue;
    const int x_lo = std::max(0, static_cast<int>(std::ceil(px->u - radius_px)));
    const int x_hi = std::min(cam.width - 1, static_cast<int>(std::floor(px->u + radius_px)));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(px->v - radius_px)));
    const int y_hi = std::min(cam.height - 1, static_cast<int>(std::floor(px->v + radius_px)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = x - px->u, dy = y - px->v;
        if (dx * dx + dy * dy > r2) continue;
        float& dst = out.values(x, y);
        dst = std::max(dst, heat);
      }
    }
  }
  return out;
}

struct ViewScore {
  int view_id = 0;
  double score = 0.0;
};

/// Per-view sum of the heat of points visible in that view.
inline std::vector<ViewScore> view_scores(const Heatmap3D& h, const PointCloud& pc, std::span<const CameraView> cams,
                                          const VisibilityParams& vp) {
  if (h.size() != pc.size()) throw Error(ErrorKind::LengthMismatch, "heatmap and point cloud sizes differ");
  std::vector<ViewScore> scores;
  scores.reserve(cams.size());
  for (const auto& cam : cams) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      if (h.values[i] > 0.0f && visible_projection(pc.point(i), cam, vp)) sum += h.values[i];
    }
    scores.push_back({cam.view_id, sum});
  }
  return scores;
}

struct ViewSelection {
  int best = 0;
  int challenge = 0;
  bool all_zero = false;

  bool operator==(const ViewSelection&) const = default;
};

inline constexpr std::array<int, 4> kChallengeOffsets{-2, -1, 1, 2};

/// Best = argmax score (lowest view_id on ties); challenge = best shifted by a seeded
/// choice of ring offset in {-2,-1,+1,+2}, wrapped around the ring. All-zero scores
/// select view 0 and set all_zero.
inline ViewSelection select_viewpoints(std::span<const ViewScore> scores, std::uint64_t seed) {
  if (scores.empty()) throw Error(ErrorKind::EmptyInput, "no view scores");
  const int ring = static_cast<int>(scores.size());
  ViewSelection sel;
  std::optional<ViewScore> best;
  bool any_positive = false;
  for (const auto& s : scores) {
    if (s.score > 0.0) any_positive = true;
    if (!best || s.score > best->score || (s.score == best->score && s.view_id < best->view_id)) best = s;
  }
  if (!any_positive) {
    sel.all_zero = true;
    sel.best = 0;
  } else {
    sel.best = best->view_id;
  }
  std::mt19937_64 rng(seed);
  const int offset = kChallengeOffsets[rng() % kChallengeOffsets.size()];
  sel.challenge = ((sel.best + offset) % ring + ring) % ring;
  return sel;
}

struct CompositeResult {
  Image rgb;         // 224 x 224 RGB
  Grid<float> heat;  // paired heatmap under the same geometric transform
  int crop_x = 0;
  int crop_y = 0;
  bool flipped = false;
};

inline constexpr int kAugmentResize = 256;
inline constexpr int kAugmentCrop = 224;

/// Alpha-over composite onto a background stretched to the render size, then
/// resize to 256x256, seeded 224x224 crop and seeded horizontal flip (p = 0.5).
/// When `heat` is given it goes through the identical geometric transform.
inline CompositeResult composite_background(const Image& render, const Image& bg, std::uint64_t seed,
                                            const Grid<float>* heat = nullptr) {
  if (render.channels != 4) throw Error(ErrorKind::MissingAlpha, "render needs an alpha channel");
  if (bg.channels != 3 && bg.channels != 4) throw Error(ErrorKind::InvalidArgument, "background must be RGB(A)");
  if (heat && (heat->width() != render.width || heat->height() != render.height)) {
    throw Error(ErrorKind::DimensionMismatch, "heatmap does not match the render");
  }
  const Image bg_fit = resize_bilinear(bg, render.width, render.height);
  Image over(render.width, render.height, 3);
  for (int y = 0; y < render.height; ++y) {
    for (int x = 0; x < render.width; ++x) {
      const unsigned a = render.at(x, y, 3);
      for (int c = 0; c < 3; ++c) {
        const unsigned fg = render.at(x, y, c);
        const unsigned b = bg_fit.at(x, y, c);
        over.at(x, y, c) = static_cast<std::uint8_t>((a * fg + (255u - a) * b + 127u) / 255u);
      }
    }
  }

  std::mt19937_64 rng(seed);
  CompositeResult out;
  out.crop_x = static_cast<int>(rng() % (kAugmentResize - kAugmentCrop + 1));
  out.crop_y = static_cast<int>(rng() % (kAugmentResize - kAugmentCrop + 1));
  out.flipped = (rng() & 1u) != 0;

  const Image big = resize_bilinear(over, kAugmentResize, kAugmentResize);
  out.rgb = Image(kAugmentCrop, kAugmentCrop, 3);
  for (int y = 0; y < kAugmentCrop; ++y) {
    for (int x = 0; x < kAugmentCrop; ++x) {
      const int sx = out.crop_x + (out.flipped ? kAugmentCrop - 1 - x : x);
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = big.at(sx, out.crop_y + y, c);
    }
  }
  if (heat) {
    const Grid<float> big_heat = resize_bilinear(*heat, kAugmentResize, kAugmentResize);
    out.heat = Grid<float>(kAugmentCrop, kAugmentCrop);
    for (int y = 0; y < kAugmentCrop; ++y) {
      for (int x = 0; x < kAugmentCrop; ++x) {
        const int sx = out.crop_x + (out.flipped ? kAugmentCrop - 1 - x : x);
        out.heat(x, y) = big_heat(sx, out.crop_y + y);
      }
    }
  }
  return out;
}

}  // namespace afforge

#endif  // AFFORGE_REPROJECT_HPP
