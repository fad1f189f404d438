#ifndef AFFORGE_ENGINE_HPP
#define AFFORGE_ENGINE_HPP

#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "afforge/config.hpp"
#include "afforge/export.hpp"
#include "afforge/fixtures.hpp"
#include "afforge/lift.hpp"
#include "afforge/partial.hpp"
#include "afforge/reproject.hpp"
#include "afforge/seed.hpp"
#include "afforge/store.hpp"

namespace afforge {

/// Runs fn(i) for i in [0, n) on up to `threads` threads. The first exception is
/// rethrown after every started task has finished.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t t = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex err_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < t; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!first) first = std::current_exception();
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

/// Fixed-bucket latency histogram in milliseconds; thread-safe.
class LatencyHistogram {
 public:
  static constexpr std::array<double, 12> kBounds{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000};

  LatencyHistogram() = default;
  LatencyHistogram(const LatencyHistogram& o) {
    std::lock_guard lock(o.mu_);
    counts_ = o.counts_;
    n_ = o.n_;
    total_ = o.total_;
    max_ = o.max_;
  }
  LatencyHistogram& operator=(const LatencyHistogram&) = delete;

  void add(double ms) {
    std::lock_guard lock(mu_);
    const auto it = std::lower_bound(kBounds.begin(), kBounds.end(), ms);
    ++counts_[static_cast<std::size_t>(it - kBounds.begin())];
    ++n_;
    total_ += ms;
    max_ = std::max(max_, ms);
  }

  std::size_t count() const {
    std::lock_guard lock(mu_);
    return n_;
  }

  json to_json() const {
    std::lock_guard lock(mu_);
    json buckets = json::array();
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      buckets.push_back({{"le_ms", i < kBounds.size() ? json(kBounds[i]) : json("inf")}, {"count", counts_[i]}});
    }
    return {{"count", n_}, {"mean_ms", n_ ? total_ / static_cast<double>(n_) : 0.0}, {"max_ms", max_}, {"buckets", buckets}};
  }

 private:
  mutable std::mutex mu_;
  std::array<std::size_t, kBounds.size() + 1> counts_{};
  std::size_t n_ = 0;
  double total_ = 0.0;
  double max_ = 0.0;
};

class StageTimer {
 public:
  explicit StageTimer(LatencyHistogram* h) : h_(h), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    if (h_) h_->add(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count());
  }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  LatencyHistogram* h_;
  std::chrono::steady_clock::time_point start_;
};

struct StageLatencies {
  LatencyHistogram queries, points, segments, fusion, persist;

  json to_json() const {
    return {{"queries", queries.to_json()},
            {"points", points.to_json()},
            {"segments", segments.to_json()},
            {"fusion", fusion.to_json()},
            {"persist", persist.to_json()}};
  }
};

enum class ObjectStatus { Succeeded, Degraded, Failed, Skipped };

inline const char* to_string(ObjectStatus s) {
  switch (s) {
    case ObjectStatus::Succeeded: return "succeeded";
    case ObjectStatus::Degraded: return "degraded";
    case ObjectStatus::Failed: return "failed";
    case ObjectStatus::Skipped: return "skipped";
  }
  return "?";
}

struct ObjectResult {
  std::string object_id;
  ObjectStatus status = ObjectStatus::Succeeded;
  std::vector<AnnotationRecord> records;
  std::size_t missing_cells = 0;
  std::string error;
};

namespace detail {

/// One (query, view) cell of stages 2 and 3.
struct Cell {
  std::vector<InteractionPoint> points;
  std::optional<Heatmap2D> heat;
  bool missing = false;
};

inline Cell run_cell(const ServiceSet& services, const RetryPolicy& retry, const CameraView& cam,
                     const AffordanceQuery& query, StageLatencies* lat) {
  Cell cell;
  try {
    {
      StageTimer t(lat ? &lat->points : nullptr);
      cell.points = call_with_retry(retry, [&] { return services.pointer->point_at(cam.image, cam.width, cam.height, query); });
    }
    if (cell.points.empty()) return cell;  // nothing to point at in this view
    MaskLogits m;
    {
      StageTimer t(lat ? &lat->segments : nullptr);
      m = call_with_retry(retry, [&] { return services.segmenter->segment_at(cam.image, cam.width, cam.height, cell.points); });
    }
    if (m.logits.width() != cam.width || m.logits.height() != cam.height) {
      throw Error(ErrorKind::DimensionMismatch, "mask size differs from view " + std::to_string(cam.view_id));
    }
    m.view_id = cam.view_id;
    cell.heat = logits_to_heatmap(m);
  } catch (const Error&) {
    cell.missing = true;
    cell.heat.reset();
  }
  return cell;
}

}  // namespace detail

/// Stage 1 on cfg.stage1_views, stages 2 and 3 on every view for every query,
/// then fusion, viewpoint selection, persistence and 2D export. The outputs are
/// a pure function of (dataset, config, services, run_seed).
inline ObjectResult run_object(Store& store, const std::string& object_id, const ServiceSet& services,
                               const Config& cfg, std::uint64_t run_seed, StageLatencies* lat = nullptr) {
  ObjectResult result;
  result.object_id = object_id;
  const PointCloud pc = store.load_cloud(object_id);
  const std::vector<CameraView> views = store.load_views(object_id);
  const VisibilityParams vp = cfg.visibility_for(pc);
  const std::uint64_t object_seed = derive_seed(run_seed, object_id);

  std::vector<ImageRef> stage1;
  for (int k : cfg.stage1_views) {
    const auto it = std::find_if(views.begin(), views.end(), [&](const CameraView& c) { return c.view_id == k; });
    if (it == views.end()) throw Error(ErrorKind::UnknownView, object_id + " has no view " + std::to_string(k));
    stage1.push_back(it->image);
  }

  std::vector<AffordanceQuery> queries;
  try {
    StageTimer t(lat ? &lat->queries : nullptr);
    queries = call_with_retry(cfg.retry, [&] {
      auto qs = services.queries->generate_queries(stage1, cfg.prompt);
      if (qs.size() != static_cast<std::size_t>(kQueriesPerObject)) {
        throw Error(ErrorKind::MalformedResponse, "expected 5 queries, got " + std::to_string(qs.size()));
      }
      return qs;
    });
  } catch (const Error& e) {
    result.status = ObjectStatus::Failed;
    result.error = e.what();
    return result;
  }
  for (auto& q : queries) q.object_id = object_id;

  const std::size_t nv = views.size();
  std::vector<detail::Cell> cells(queries.size() * nv);
  parallel_for(cells.size(), cfg.view_concurrency, [&](std::size_t i) {
    cells[i] = detail::run_cell(services, cfg.retry, views[i % nv], queries[i / nv], lat);
  });

  bool any_failed = false;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    AnnotationRecord r;
    r.query = queries[qi];
    r.provenance.seed = object_seed;
    std::vector<Contribution> contribs;
    for (std::size_t k = 0; k < nv; ++k) {
      const auto& cell = cells[qi * nv + k];
      const int vid = views[k].view_id;
      if (cell.missing) {
        r.provenance.missing_views.push_back(vid);
        ++result.missing_cells;
        continue;
      }
      r.provenance.points[vid] = cell.points;
      if (cell.heat) {
        contribs.push_back({views[k], *cell.heat});
        r.provenance.contributing_views.push_back(vid);
      }
    }
    // No evidence at all, and at least one view failed rather than simply seeing nothing.
    r.failed = r.provenance.contributing_views.empty() && !r.provenance.missing_views.empty();
    any_failed = any_failed || r.failed;
    {
      StageTimer t(lat ? &lat->fusion : nullptr);
      r.heatmap = fuse_views(pc, contribs, vp, cfg.fusion);
      r.heatmap.query_id = r.query.query_id;
      const auto scores = view_scores(r.heatmap, pc, views, vp);
      r.selection = select_viewpoints(scores, derive_seed(object_seed, r.query.query_id));
    }
    result.records.push_back(std::move(r));
  }

  {
    StageTimer t(lat ? &lat->persist : nullptr);
    ExportParams ep;
    ep.vp = vp;
    ep.splat_radius_px = cfg.splat_radius_px;
    for (const auto& b : cfg.backgrounds) ep.backgrounds.emplace_back(b);
    json sidecar = json::object();
    for (std::size_t qi = 0; qi < result.records.size(); ++qi) {
      const auto& r = result.records[qi];
      for (std::size_t k = 0; k < nv; ++k) {
        if (const auto& h = cells[qi * nv + k].heat) store.write_view_heatmap(object_id, r.query.query_id, *h);
      }
      store.write_record(r);
      if (cfg.export_2d) {
        json pairs = json::array();
        for (const auto& ev : export_2d_pairs(store, r, pc, views, ep)) pairs.push_back(to_json(ev));
        sidecar[r.query.query_id] = {{"pairs", pairs},
                                     {"all_zero", r.selection->all_zero},
                                     {"failed", r.failed}};
      }
    }
    if (cfg.export_2d) write_text_file(store.export_dir(object_id) / "pairs.json", sidecar.dump(2) + "\n");
    store.register_records(result.records);
    if (!any_failed) write_text_file(store.complete_marker(object_id), "ok\n");
  }

  if (any_failed) {
    result.status = ObjectStatus::Failed;
    result.error = "no view produced evidence for at least one query";
  } else if (result.missing_cells > 0) {
    result.status = ObjectStatus::Degraded;
  }
  return result;
}

struct RunReport {
  std::map<std::string, ObjectStatus> objects;
  std::map<std::string, std::string> errors;
  StageLatencies latency;

  std::size_t count(ObjectStatus s) const {
    return static_cast<std::size_t>(std::count_if(objects.begin(), objects.end(), [&](const auto& kv) { return kv.second == s; }));
  }

  json to_json() const {
    json per = json::object();
    for (const auto& [id, s] : objects) per[id] = to_string(s);
    return {{"succeeded", count(ObjectStatus::Succeeded)},
            {"degraded", count(ObjectStatus::Degraded)},
            {"failed", count(ObjectStatus::Failed)},
            {"skipped", count(ObjectStatus::Skipped)},
            {"objects", per},
            {"errors", errors},
            {"latency", latency.to_json()}};
  }
};

/// Worker pool over objects. With `resume`, objects that already carry a
/// completion marker are skipped.
inline RunReport run_batch(Store& store, const std::vector<std::string>& object_ids, const ServiceSet& services,
                           const Config& cfg, std::uint64_t run_seed, bool resume = true) {
  RunReport report;
  std::mutex mu;
  parallel_for(object_ids.size(), cfg.workers, [&](std::size_t i) {
    const auto& id = object_ids[i];
    if (resume && fs::exists(store.complete_marker(id))) {
      std::lock_guard lock(mu);
      report.objects[id] = ObjectStatus::Skipped;
      return;
    }
    ObjectResult r;
    try {
      r = run_object(store, id, services, cfg, run_seed, &report.latency);
    } catch (const Error& e) {
      r.status = ObjectStatus::Failed;
      r.error = e.what();
    }
    std::lock_guard lock(mu);
    report.objects[id] = r.status;
    if (!r.error.empty()) report.errors[id] = r.error;
  });
  return report;
}

/// Writes the analytic fixtures (cloud, 25 ring views with depth, renders) into a dataset.
inline void write_fixture_dataset(Store& store, const std::vector<fixtures::Fixture>& which,
                                  const RingSpec& ring = {}, std::size_t n_points = fixtures::kDefaultFixturePoints,
                                  std::uint64_t seed = 1) {
  store.bulk([&] {
    for (const auto& fx : which) {
      const auto scene = fixtures::build_scene(fx, ring, n_points, seed);
      store.write_object(scene.cloud, scene.views, scene.renders, fx.class_tag);
    }
  });
}

/// Re-fuses a stored record from its per-view 2D heatmaps, preferring refined ones.
inline Heatmap3D refuse_record(const Store& store, const AnnotationRecord& r, const FusionParams& fp,
                               const VisibilityParams* vp_override = nullptr) {
  const auto& id = r.query.object_id;
  const auto& q = r.query.query_id;
  const PointCloud pc = store.load_cloud(id);
  const auto views = store.load_views(id);
  const VisibilityParams vp = vp_override ? *vp_override : default_visibility(pc);
  std::vector<Heatmap2D> heats;
  std::vector<const CameraView*> cams;
  for (const auto& cam : views) {
    auto h = store.read_view_heatmap(id, q, cam.view_id, true);
    if (!h) h = store.read_view_heatmap(id, q, cam.view_id, false);
    if (!h) continue;
    heats.push_back(std::move(*h));
    cams.push_back(&cam);
  }
  std::vector<Contribution> contribs;
  for (std::size_t i = 0; i < heats.size(); ++i) contribs.push_back({*cams[i], heats[i]});
  Heatmap3D out = fuse_views(pc, contribs, vp, fp);
  out.query_id = q;
  return out;
}

}  // namespace afforge

#endif  // AFFORGE_ENGINE_HPP
