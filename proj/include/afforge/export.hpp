#ifndef AFFORGE_EXPORT_HPP
#define AFFORGE_EXPORT_HPP

#include <random>
#include <string>
#include <vector>

#include "afforge/reproject.hpp"
#include "afforge/seed.hpp"
#include "afforge/store.hpp"

namespace afforge {

struct ExportParams {
  VisibilityParams vp;
  double splat_radius_px = 0.0;            // 0 picks default_splat_radius(width)
  std::vector<fs::path> backgrounds;       // RGB(A) PNGs; empty means procedural gradients
};

struct ExportedView {
  int view_id = 0;
  std::string role;  // "best" or "challenge"
  std::string image;    // relative to the dataset root
  std::string heatmap;  // relative to the dataset root
  int crop_x = 0;
  int crop_y = 0;
  bool flipped = false;
};

/// Seeded two-colour vertical gradient used when no background images are configured.
inline Image procedural_background(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::array<std::array<int, 3>, 2> c{};
  for (auto& col : c)
    for (auto& ch : col) ch = static_cast<int>(rng() % 256);
  Image img(64, 64, 3);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        img.at(x, y, ch) = static_cast<std::uint8_t>((c[0][ch] * (63 - y) + c[1][ch] * y + 31) / 63);
      }
    }
  }
  return img;
}

inline Image as_rgba(const Image& img) {
  if (img.channels == 4) return img;
  Image out(img.width, img.height, 4, 255);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, img.channels == 1 ? 0 : c);
  return out;
}

/// Composite and heatmap PNGs for the record's best and challenge views. Filenames
/// depend only on (object_id, query_id, view_id): exports/<id>/<q>_v<k>.png and
/// <q>_v<k>_heat.png.
inline std::vector<ExportedView> export_2d_pairs(const Store& store, const AnnotationRecord& record,
                                                 const PointCloud& pc, const std::vector<CameraView>& views,
                                                 const ExportParams& params) {
  if (!record.selection) throw Error(ErrorKind::InvalidArgument, "record has no view selection");
  const auto& id = record.query.object_id;
  const auto& q = record.query.query_id;
  std::vector<ExportedView> out;
  const std::pair<int, const char*> picks[] = {{record.selection->best, "best"},
                                               {record.selection->challenge, "challenge"}};
  for (const auto& [view_id, role] : picks) {
    const auto cam_it = std::find_if(views.begin(), views.end(), [&](const CameraView& c) { return c.view_id == view_id; });
    if (cam_it == views.end()) throw Error(ErrorKind::UnknownView, "no view " + std::to_string(view_id));
    const CameraView& cam = *cam_it;
    const double radius = params.splat_radius_px > 0 ? params.splat_radius_px : default_splat_radius(cam.width);
    const auto heat = render_heatmap_2d(record.heatmap, pc, cam, params.vp, radius);

    const std::uint64_t seed = derive_seed(record.provenance.seed, q + "/" + std::to_string(view_id));
    Image bg;
    if (params.backgrounds.empty()) {
      bg = procedural_background(derive_seed(seed, "background"));
    } else {
      bg = read_png(params.backgrounds[derive_seed(seed, "background") % params.backgrounds.size()]);
    }
    const Image render = as_rgba(read_png(cam.image.path));
    const auto comp = composite_background(render, bg, seed, &heat.values);

    ExportedView ev;
    ev.view_id = view_id;
    ev.role = role;
    const std::string stem = "exports/" + id + "/" + q + "_v" + std::to_string(view_id);
    ev.image = stem + ".png";
    ev.heatmap = stem + "_heat.png";
    ev.crop_x = comp.crop_x;
    ev.crop_y = comp.crop_y;
    ev.flipped = comp.flipped;
    write_png(store.root() / ev.image, comp.rgb);
    write_png(store.root() / ev.heatmap, to_gray8(comp.heat));
    out.push_back(std::move(ev));
  }
  return out;
}

inline json to_json(const ExportedView& e) {
  return {{"view_id", e.view_id}, {"role", e.role},     {"image", e.image},     {"heatmap", e.heatmap},
          {"crop_x", e.crop_x},   {"crop_y", e.crop_y}, {"flipped", e.flipped}};
}

}  // namespace afforge

#endif  // AFFORGE_EXPORT_HPP
