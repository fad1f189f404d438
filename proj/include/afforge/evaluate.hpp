#ifndef AFFORGE_EVALUATE_HPP
#define AFFORGE_EVALUATE_HPP

#include <map>
#include <string>
#include <vector>

#include "afforge/metrics.hpp"
#include "afforge/released.hpp"
#include "afforge/reproject.hpp"
#include "afforge/store.hpp"

namespace afforge {

/// Scores every ground-truth record that has a prediction with the same record id.
/// 3D metrics use the per-point heat; 2D metrics compare both heatmaps rendered
/// into the ground truth's best view. Refined ground truth is preferred when present.
inline json evaluate_dataset(const Store& pred, const Store& gt, const metrics::MetricConfig& cfg = {}) {
  std::set<std::string> available;
  for (const auto& e : pred.manifest().records) available.insert(e.record_id);

  std::map<std::string, metrics::Aggregate> agg;
  json per = json::object();
  json missing = json::array();
  std::map<std::string, std::pair<PointCloud, std::vector<CameraView>>> scenes;
  for (const auto& e : gt.manifest().records) {
    if (!available.count(e.record_id)) {
      missing.push_back(e.record_id);
      continue;
    }
    const auto g = gt.read_record(e.record_id);
    const auto p = pred.read_record(e.record_id);
    const auto refined = gt.read_refined(e.object_id, e.query_id);
    const Heatmap3D& gh = refined ? *refined : g.heatmap;
    metrics::MetricReport rep;
    metrics::evaluate_3d<float>(rep, p.heatmap.values, gh.values, cfg);
    if (g.selection && gt.manifest().find_object(e.object_id)) {
      auto it = scenes.find(e.object_id);
      if (it == scenes.end()) it = scenes.emplace(e.object_id, std::pair{gt.load_cloud(e.object_id), gt.load_views(e.object_id)}).first;
      const auto& [pc, views] = it->second;
      const auto vp = default_visibility(pc);
      const auto cam_it = std::find_if(views.begin(), views.end(),
                                       [&](const CameraView& c) { return c.view_id == g.selection->best; });
      if (cam_it == views.end()) throw Error(ErrorKind::UnknownView, "best view missing for " + e.record_id);
      const auto& cam = *cam_it;
      const double r = default_splat_radius(cam.width);
      metrics::evaluate_2d(rep, render_heatmap_2d(p.heatmap, pc, cam, vp, r).values,
                           render_heatmap_2d(gh, pc, cam, vp, r).values, cfg);
    }
    per[e.record_id] = metrics::to_json(rep);
    agg["aIoU"].add(rep.aiou);
    agg["AUC"].add(rep.auc);
    agg["SIM_3d"].add(rep.sim3d);
    agg["MAE"].add(rep.mae);
    agg["KLD"].add(rep.kld);
    agg["SIM_2d"].add(rep.sim2d);
    agg["NSS"].add(rep.nss);
  }
  json aggregate = json::object();
  for (const auto& [k, a] : agg) aggregate[k] = a.to_json();
  return {{"config", cfg.to_json()}, {"records", per}, {"aggregate", aggregate}, {"missing", missing}};
}

inline json stats_json(const std::vector<ObjectStats>& stats) {
  json objects = json::object();
  metrics::Aggregate cov, div;
  for (const auto& s : stats) {
    objects[s.object_id] = {{"coverage", s.coverage ? json(*s.coverage) : json(nullptr)},
                            {"diversity", s.diversity ? json(*s.diversity) : json(nullptr)}};
    cov.add(metrics::with_note(s.coverage, "no annotations"));
    div.add(metrics::with_note(s.diversity, "fewer than two non-empty annotations"));
  }
  return {{"objects", objects}, {"coverage", cov.to_json()}, {"diversity", div.to_json()}};
}

/// Coverage and diversity per object over its stored (refined when present) records.
inline json dataset_stats(const Store& store, const metrics::MetricConfig& cfg = {}) {
  std::map<std::string, std::vector<Heatmap3D>> by_object;
  for (const auto& e : store.manifest().records) {
    auto h = store.read_refined(e.object_id, e.query_id);
    by_object[e.object_id].push_back(h ? std::move(*h) : store.read_record(e.record_id).heatmap);
  }
  std::vector<ObjectStats> stats;
  for (const auto& [id, hs] : by_object) stats.push_back(object_stats(id, hs, cfg));
  return stats_json(stats);
}

inline json released_stats(const fs::path& dir, const metrics::MetricConfig& cfg = {}) {
  std::vector<ObjectStats> stats;
  for (const auto& o : released::import_dir(dir)) stats.push_back(object_stats(o.object_id, o.heatmaps, cfg));
  std::sort(stats.begin(), stats.end(), [](const auto& a, const auto& b) { return a.object_id < b.object_id; });
  return stats_json(stats);
}

}  // namespace afforge

#endif  // AFFORGE_EVALUATE_HPP
