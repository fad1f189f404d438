// afforge command-line front end.
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "afforge/config.hpp"
#include "afforge/engine.hpp"
#include "afforge/evaluate.hpp"
#include "afforge/http_clients.hpp"
#include "afforge/mock_clients.hpp"
#include "afforge/review.hpp"
#include "afforge/review_server.hpp"

using namespace afforge;

namespace {

Config load(const std::string& path) {
  if (path.empty()) {
    Config c;
    apply_env(c.http);
    return c;
  }
  return load_config(path);
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text_file(out, j.dump(2) + "\n");
  }
}

std::vector<std::string> all_objects(const Store& store, const std::vector<std::string>& requested) {
  return requested.empty() ? store.object_ids() : requested;
}

std::vector<std::string> record_ids(const Store& store, const std::string& one) {
  if (!one.empty()) return {one};
  std::vector<std::string> ids;
  for (const auto& e : store.manifest().records) ids.push_back(e.record_id);
  return ids;
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"afforge: multi-view affordance annotation engine"};
  app.require_subcommand(1);

  std::string dataset, config_path, out;

  // fixtures
  auto* fx_cmd = app.add_subcommand("fixtures", "Write the analytic cube/sphere/cylinder fixtures into a dataset");
  std::size_t fx_points = fixtures::kDefaultFixturePoints;
  std::vector<std::string> fx_which;
  fx_cmd->add_option("--dataset", dataset, "Dataset root")->required();
  fx_cmd->add_option("--points", fx_points, "Points per object");
  fx_cmd->add_option("--objects", fx_which, "Subset of cube, sphere, cylinder");

  // generate
  auto* gen = app.add_subcommand("generate", "Run the three-stage pipeline over a dataset");
  bool mock = false, no_resume = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::vector<std::string> objects;
  gen->add_option("--dataset", dataset, "Dataset root")->required();
  gen->add_option("--config", config_path, "TOML config");
  gen->add_flag("--mock", mock, "Use the deterministic mock services");
  gen->add_option("--seed", seed, "Run seed (overrides engine.seed)");
  gen->add_option("--workers", workers, "Object workers (overrides engine.workers)");
  gen->add_option("--objects", objects, "Object ids (default: all)");
  gen->add_flag("--no-resume", no_resume, "Reprocess objects that already completed");
  gen->add_option("--out", out, "Write the run report here instead of stdout");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Re-fuse records from their stored per-view heatmaps");
  std::string record;
  bool write_back = false;
  fuse->add_option("--dataset", dataset, "Dataset root")->required();
  fuse->add_option("--config", config_path, "TOML config");
  fuse->add_option("--record", record, "Record id object:query (default: all)");
  fuse->add_flag("--write", write_back, "Store the re-fused heatmap as the refined version");

  // render2d
  auto* r2d = app.add_subcommand("render2d", "Render a record's 3D heatmap into one view as a grayscale PNG");
  int view = -1;
  double radius = 0.0;
  r2d->add_option("--dataset", dataset, "Dataset root")->required();
  r2d->add_option("--record", record, "Record id object:query")->required();
  r2d->add_option("--view", view, "View id (default: the record's best view)");
  r2d->add_option("--radius", radius, "Splat radius in pixels (default scales with width)");
  r2d->add_option("--out", out, "Output PNG")->required();

  // partial
  auto* part = app.add_subcommand("partial", "Build partial-view point subsets");
  std::vector<int> part_views{0};
  std::size_t part_k = kPartialPoints;
  part->add_option("--dataset", dataset, "Dataset root")->required();
  part->add_option("--config", config_path, "TOML config");
  part->add_option("--objects", objects, "Object ids (default: all)");
  part->add_option("--views", part_views, "Source views");
  part->add_option("--k", part_k, "Points per partial");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Benchmark metrics of predictions against ground truth");
  std::string pred_dir, gt_dir;
  eval->add_option("--pred", pred_dir, "Prediction dataset root")->required();
  eval->add_option("--gt", gt_dir, "Ground-truth dataset root")->required();
  eval->add_option("--config", config_path, "TOML config");
  eval->add_option("--out", out, "Report JSON path");

  // stats
  auto* stats = app.add_subcommand("stats", "Coverage and diversity per object and dataset means");
  std::string released_dir;
  auto* ds_opt = stats->add_option("--dataset", dataset, "Dataset root");
  auto* rel_opt = stats->add_option("--released", released_dir, "Directory with annotations.jsonl and .npy files");
  ds_opt->excludes(rel_opt);
  stats->add_option("--config", config_path, "TOML config");
  stats->add_option("--out", out, "Output JSON path");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the review API");
  std::optional<int> port;
  std::string host = "127.0.0.1";
  serve->add_option("--dataset", dataset, "Dataset root")->required();
  serve->add_option("--config", config_path, "TOML config");
  serve->add_option("--port", port, "Port (default 8787)");
  serve->add_option("--host", host, "Bind address");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = load(config_path);

    if (*fx_cmd) {
      Store store(dataset);
      std::vector<fixtures::Fixture> which;
      for (const auto& f : fixtures::builtin_fixtures()) {
        if (fx_which.empty() || std::find(fx_which.begin(), fx_which.end(), f.object_id) != fx_which.end()) {
          which.push_back(f);
        }
      }
      if (which.empty()) throw Error(ErrorKind::InvalidArgument, "no matching fixtures");
      write_fixture_dataset(store, which, cfg.mock.ring, fx_points);
      std::cout << "wrote " << which.size() << " fixture objects to " << dataset << "\n";
    } else if (*gen) {
      if (seed) cfg.seed = *seed;
      if (workers) cfg.workers = *workers;
      Store store(dataset);
      MockServices mock_services(cfg.mock);
      std::unique_ptr<HttpServices> http;
      ServiceSet services{&mock_services, &mock_services, &mock_services};
      if (!mock) {
        http = std::make_unique<HttpServices>(cfg.http);
        services = {http.get(), http.get(), http.get()};
      }
      const auto report = run_batch(store, all_objects(store, objects), services, cfg, cfg.seed, !no_resume);
      emit(report.to_json(), out);
      return report.count(ObjectStatus::Failed) ? 2 : 0;
    } else if (*fuse) {
      Store store(dataset);
      json res = json::object();
      for (const auto& id : record_ids(store, record)) {
        const auto r = store.read_record(id);
        const auto pc = store.load_cloud(r.query.object_id);
        const auto vp = cfg.visibility_for(pc);
        const auto h = refuse_record(store, r, cfg.fusion, &vp);
        double diff = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) diff = std::max(diff, std::abs(double(h.values[i]) - r.heatmap.values[i]));
        if (write_back) store.write_refined(h);
        res[id] = {{"max_abs_diff", diff}, {"low_support", h.low_support}};
      }
      emit(res, "");
    } else if (*r2d) {
      Store store(dataset);
      const auto r = store.read_record(record);
      const auto pc = store.load_cloud(r.query.object_id);
      const auto views = store.load_views(r.query.object_id);
      const int k = view >= 0 ? view : (r.selection ? r.selection->best : 0);
      const auto cam = std::find_if(views.begin(), views.end(), [&](const CameraView& c) { return c.view_id == k; });
      if (cam == views.end()) throw Error(ErrorKind::UnknownView, "no view " + std::to_string(k));
      const auto refined = store.read_refined(r.query.object_id, r.query.query_id);
      const auto h = render_heatmap_2d(refined ? *refined : r.heatmap, pc, *cam, cfg.visibility_for(pc),
                                       radius > 0 ? radius : default_splat_radius(cam->width));
      write_png(out, to_gray8(h.values));
      std::cout << "wrote " << out << "\n";
    } else if (*part) {
      Store store(dataset);
      json res = json::object();
      for (const auto& id : all_objects(store, objects)) {
        const auto pc = store.load_cloud(id);
        const auto views = store.load_views(id);
        for (int k : part_views) {
          const auto cam = std::find_if(views.begin(), views.end(), [&](const CameraView& c) { return c.view_id == k; });
          if (cam == views.end()) throw Error(ErrorKind::UnknownView, id + " has no view " + std::to_string(k));
          const auto p = make_partial(pc, *cam, cfg.visibility_for(pc), part_k);
          store.register_partial(p);
          res[id][std::to_string(k)] = {{"count", p.indices.size()}, {"under_sampled", p.under_sampled}};
        }
      }
      emit(res, "");
    } else if (*eval) {
      const Store pred(pred_dir), gt(gt_dir);
      emit(evaluate_dataset(pred, gt, cfg.metrics), out);
    } else if (*stats) {
      if (!released_dir.empty()) {
        emit(released_stats(released_dir, cfg.metrics), out);
      } else if (!dataset.empty()) {
        emit(dataset_stats(Store(dataset), cfg.metrics), out);
      } else {
        throw Error(ErrorKind::InvalidArgument, "stats needs --dataset or --released");
      }
    } else if (*serve) {
      Store store(dataset);
      review::ReviewService svc(store, cfg);
      httplib::Server srv;
      review::install_routes(srv, svc, cfg.cors_origin);
      g_server = &srv;
      std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
      std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
      const int p = port.value_or(cfg.port);
      std::cout << "review API on http://" << host << ":" << p << "/api" << std::endl;
      if (!srv.listen(host, p)) throw Error(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(p));
      svc.persist_splits();
    }
  } catch (const Error& e) {
    std::cerr << "afforge: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
