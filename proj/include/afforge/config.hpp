#ifndef AFFORGE_CONFIG_HPP
#define AFFORGE_CONFIG_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <toml.hpp>

#include "afforge/clients.hpp"
#include "afforge/http_clients.hpp"
#include "afforge/lift.hpp"
#include "afforge/metrics.hpp"
#include "afforge/mock_clients.hpp"

namespace afforge {

/// Every tunable in one place. Loaded from TOML; unknown keys are rejected so typos
/// don't silently fall back to defaults.
struct Config {
  // [visibility]
  double rel_tol = 0.01;
  double abs_tol_scale = 1e-4;  // absolute tolerance as a fraction of the cloud's bbox diagonal
  // [fusion]
  FusionParams fusion;
  // [clients]
  HttpConfig http;
  RetryPolicy retry;
  PromptConfig prompt;
  // [engine]
  int workers = 1;
  int view_concurrency = 4;
  std::vector<int> stage1_views{0, 5, 10, 15, 20};
  std::uint64_t seed = 0;
  bool export_2d = true;
  double splat_radius_px = 0.0;  // 0: 2 px at 512 wide, scaled with width
  std::vector<std::string> backgrounds;
  // [metrics]
  metrics::MetricConfig metrics;
  // [mock]
  MockConfig mock;
  // [review]
  int port = 8787;
  std::string cors_origin = "*";

  VisibilityParams visibility_for(const PointCloud& pc) const {
    return default_visibility(pc, rel_tol, abs_tol_scale);
  }
};

namespace detail {

template <typename T>
void take(const toml::table& t, std::string_view key, T& dst) {
  const auto* node = t.get(key);
  if (!node) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value<bool>()) { dst = *v; return; }
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node->value<std::int64_t>()) { dst = static_cast<T>(*v); return; }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) { dst = *v; return; }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) { dst = *v; return; }
  }
  throw Error(ErrorKind::InvalidArgument, "config key '" + std::string(key) + "' has the wrong type");
}

template <typename T>
void take_list(const toml::table& t, std::string_view key, std::vector<T>& dst) {
  const auto* node = t.get(key);
  if (!node) return;
  const auto* arr = node->as_array();
  if (!arr) throw Error(ErrorKind::InvalidArgument, "config key '" + std::string(key) + "' must be an array");
  dst.clear();
  for (const auto& el : *arr) {
    if constexpr (std::is_integral_v<T>) {
      auto v = el.value<std::int64_t>();
      if (!v) throw Error(ErrorKind::InvalidArgument, "config key '" + std::string(key) + "' needs integers");
      dst.push_back(static_cast<T>(*v));
    } else {
      auto v = el.value<std::string>();
      if (!v) throw Error(ErrorKind::InvalidArgument, "config key '" + std::string(key) + "' needs strings");
      dst.push_back(*v);
    }
  }
}

inline void check_keys(const toml::table& t, std::string_view section, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : t) {
    if (std::find(keys.begin(), keys.end(), k.str()) == keys.end()) {
      throw Error(ErrorKind::InvalidArgument, "unknown config key " + std::string(section) + "." + std::string(k.str()));
    }
  }
}

inline const toml::table* section(const toml::table& root, std::string_view name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw Error(ErrorKind::InvalidArgument, "config section [" + std::string(name) + "] must be a table");
  return t;
}

}  // namespace detail

inline Config config_from_toml(const toml::table& root) {
  using detail::take;
  Config c;
  detail::check_keys(root, "", {"visibility", "fusion", "clients", "engine", "metrics", "mock", "review"});
  if (const auto* t = detail::section(root, "visibility")) {
    detail::check_keys(*t, "visibility", {"rel_tol", "abs_tol_scale"});
    take(*t, "rel_tol", c.rel_tol);
    take(*t, "abs_tol_scale", c.abs_tol_scale);
  }
  if (const auto* t = detail::section(root, "fusion")) {
    detail::check_keys(*t, "fusion", {"combiner", "low_support_views"});
    std::string comb(to_string(c.fusion.combiner));
    take(*t, "combiner", comb);
    c.fusion.combiner = parse_combiner(comb);
    take(*t, "low_support_views", c.fusion.low_support_views);
  }
  if (const auto* t = detail::section(root, "clients")) {
    detail::check_keys(*t, "clients",
                       {"query_url", "point_url", "segment_url", "token", "timeout_ms", "max_in_flight", "max_points",
                        "transport_retries", "malformed_retries", "backoff_ms", "system_template", "query_template"});
    take(*t, "query_url", c.http.query.base_url);
    take(*t, "point_url", c.http.point.base_url);
    take(*t, "segment_url", c.http.segment.base_url);
    take(*t, "token", c.http.bearer_token);
    std::int64_t ms = c.http.timeout.count();
    take(*t, "timeout_ms", ms);
    c.http.timeout = std::chrono::milliseconds(ms);
    int in_flight = c.http.query.max_in_flight;
    take(*t, "max_in_flight", in_flight);
    c.http.query.max_in_flight = c.http.point.max_in_flight = c.http.segment.max_in_flight = in_flight;
    take(*t, "max_points", c.http.max_points);
    c.mock.max_points = c.http.max_points;
    take(*t, "transport_retries", c.retry.transport_retries);
    take(*t, "malformed_retries", c.retry.malformed_retries);
    std::int64_t backoff = c.retry.backoff.count();
    take(*t, "backoff_ms", backoff);
    c.retry.backoff = std::chrono::milliseconds(backoff);
    take(*t, "system_template", c.prompt.system_template);
    take(*t, "query_template", c.prompt.query_template);
  }
  if (const auto* t = detail::section(root, "engine")) {
    detail::check_keys(*t, "engine", {"workers", "view_concurrency", "stage1_views", "seed", "export_2d",
                                      "splat_radius_px", "backgrounds"});
    take(*t, "workers", c.workers);
    take(*t, "view_concurrency", c.view_concurrency);
    detail::take_list(*t, "stage1_views", c.stage1_views);
    take(*t, "seed", c.seed);
    take(*t, "export_2d", c.export_2d);
    take(*t, "splat_radius_px", c.splat_radius_px);
    detail::take_list(*t, "backgrounds", c.backgrounds);
  }
  if (const auto* t = detail::section(root, "metrics")) {
    detail::check_keys(*t, "metrics", {"gt_threshold", "iou_steps", "epsilon", "nss_fixation", "coverage_tau"});
    take(*t, "gt_threshold", c.metrics.gt_threshold);
    take(*t, "iou_steps", c.metrics.iou_steps);
    take(*t, "epsilon", c.metrics.epsilon);
    take(*t, "nss_fixation", c.metrics.nss_fixation);
    take(*t, "coverage_tau", c.metrics.coverage_tau);
  }
  if (const auto* t = detail::section(root, "mock")) {
    detail::check_keys(*t, "mock", {"alpha", "r0"});
    take(*t, "alpha", c.mock.alpha);
    take(*t, "r0", c.mock.r0);
  }
  if (const auto* t = detail::section(root, "review")) {
    detail::check_keys(*t, "review", {"port", "cors_origin"});
    take(*t, "port", c.port);
    take(*t, "cors_origin", c.cors_origin);
  }
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  try {
    Config c = config_from_toml(toml::parse_file(path.string()));
    apply_env(c.http);
    return c;
  } catch (const toml::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "config " + path.string() + ": " + std::string(e.description()));
  }
}

inline Config config_from_string(std::string_view text) {
  try {
    return config_from_toml(toml::parse(text));
  } catch (const toml::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "config: " + std::string(e.description()));
  }
}

}  // namespace afforge

#endif  // AFFORGE_CONFIG_HPP
