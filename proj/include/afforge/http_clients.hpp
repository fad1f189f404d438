#ifndef AFFORGE_HTTP_CLIENTS_HPP
#define AFFORGE_HTTP_CLIENTS_HPP

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "afforge/clients.hpp"
#include "afforge/image.hpp"

namespace afforge {

struct Endpoint {
  std::string base_url;  // scheme://host[:port][/prefix]
  int max_in_flight = 4;
};

struct HttpConfig {
  Endpoint query, point, segment;
  std::string bearer_token;  // sent as "Authorization: Bearer ..." when non-empty
  std::chrono::milliseconds timeout{60000};
  int max_points = 3;
};

/// Fills endpoint URLs from AFFORGE_QUERY_URL / AFFORGE_POINT_URL / AFFORGE_SEGMENT_URL
/// and the token from AFFORGE_TOKEN, leaving fields untouched when unset.
inline void apply_env(HttpConfig& cfg) {
  auto env = [](const char* name, std::string& dst) {
    if (const char* v = std::getenv(name); v && *v) dst = v;
  };
  env("AFFORGE_QUERY_URL", cfg.query.base_url);
  env("AFFORGE_POINT_URL", cfg.point.base_url);
  env("AFFORGE_SEGMENT_URL", cfg.segment.base_url);
  env("AFFORGE_TOKEN", cfg.bearer_token);
}

namespace detail {

/// Splits "http://host:8080/api" into ("http://host:8080", "/api").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorKind::InvalidArgument, "service URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

inline std::string image_b64(const ImageRef& ref) {
  if (ref.path.empty()) throw Error(ErrorKind::InvalidArgument, "view image has no path: " + ref.object_id);
  return base64_encode(read_file_bytes(ref.path));
}

class Semaphore {
 public:
  explicit Semaphore(int n) : sem_(std::max(1, n)) {}
  void acquire() { sem_.acquire(); }
  void release() { sem_.release(); }

 private:
  std::counting_semaphore<> sem_;
};

}  // namespace detail

/// Live clients for the three model services. One shared instance may be used from
/// many threads; in-flight requests per service are capped by Endpoint::max_in_flight.
/// Each call is a single attempt: wrap in call_with_retry for retries.
class HttpServices final : public QueryService, public PointService, public SegmentService {
 public:
  explicit HttpServices(HttpConfig cfg)
      : cfg_(std::move(cfg)),
        query_slots_(cfg_.query.max_in_flight),
        point_slots_(cfg_.point.max_in_flight),
        segment_slots_(cfg_.segment.max_in_flight) {
    for (const auto* e : {&cfg_.query, &cfg_.point, &cfg_.segment}) {
      if (e->base_url.empty()) throw Error(ErrorKind::InvalidArgument, "service URL not configured");
    }
  }

  std::vector<AffordanceQuery> generate_queries(const std::vector<ImageRef>& views, const PromptConfig& pc) override {
    if (views.empty()) throw Error(ErrorKind::InvalidArgument, "generate_queries needs at least one view");
    std::vector<std::string> images;
    for (const auto& v : views) images.push_back(detail::image_b64(v));
    const auto body = post(cfg_.query, query_slots_, "/v1/queries", wire::query_request(images, pc));
    return wire::parse_queries(body, views.front().object_id);
  }

  std::vector<InteractionPoint> point_at(const ImageRef& view, int width, int height,
                                         const AffordanceQuery& query) override {
    const auto body = post(cfg_.point, point_slots_, "/v1/point",
                           wire::point_request(detail::image_b64(view), query.text, cfg_.max_points));
    return normalize_points(wire::parse_points(body, view.view_id), width, height, cfg_.max_points);
  }

  MaskLogits segment_at(const ImageRef& view, int width, int height,
                        const std::vector<InteractionPoint>& points) override {
    const auto body =
        post(cfg_.segment, segment_slots_, "/v1/segment", wire::segment_request(detail::image_b64(view), points));
    return wire::parse_logits(body, view.view_id, width, height);
  }

 private:
  std::string post(const Endpoint& ep, detail::Semaphore& slots, const std::string& path,
                   const nlohmann::json& payload) {
    const auto [host, prefix] = detail::split_url(ep.base_url);
    httplib::Client client(host);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!cfg_.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.bearer_token);

    const auto res = [&] {
      slots.acquire();
      struct Release {
        detail::Semaphore& s;
        ~Release() { s.release(); }
      } guard{slots};
      return client.Post(prefix + path, headers, payload.dump(), "application/json");
    }();

    if (!res) {
      const auto err = res.error();
      const auto msg = host + path + ": " + httplib::to_string(err);
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        throw Error(ErrorKind::Timeout, msg);
      }
      throw Error(ErrorKind::ServiceUnreachable, msg);
    }
    if (res->status >= 500 || res->status == 429) {
      throw Error(ErrorKind::ServiceUnreachable, host + path + " returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      throw Error(ErrorKind::MalformedResponse, host + path + " returned HTTP " + std::to_string(res->status));
    }
    return res->body;
  }

  HttpConfig cfg_;
  detail::Semaphore query_slots_, point_slots_, segment_slots_;
};

}  // namespace afforge

#endif  // AFFORGE_HTTP_CLIENTS_HPP
