// HTTP front end for review::ReviewService. Needs cpp-httplib on the include path.
#ifndef AFFORGE_REVIEW_SERVER_HPP
#define AFFORGE_REVIEW_SERVER_HPP

#include <httplib.h>

#include "afforge/review.hpp"

namespace afforge::review {

inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotFound:
    case ErrorKind::UnknownId: return 404;
    case ErrorKind::InvalidArgument:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::UnknownView:
    case ErrorKind::LengthMismatch: return 422;
    default: return 500;
  }
}

namespace detail {

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, const Error& e) {
  send_json(res, {{"error", afforge::to_string(e.kind())}, {"message", e.what()}}, http_status(e.kind()));
}

inline json parse_body(const httplib::Request& req) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::InvalidArgument, "request body must be a JSON object");
  return j;
}

inline std::size_t parse_count(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto s = req.get_param_value(key);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error(ErrorKind::InvalidArgument, std::string(key) + " must be a non-negative integer");
  }
  return v;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, {{"error", "Internal"}, {"message", e.what()}}, 500);
    }
  };
}

}  // namespace detail

inline constexpr std::size_t kMaxPageSize = 500;

/// Registers the /api routes, the /files static mount and CORS handling.
inline void install_routes(httplib::Server& srv, ReviewService& svc, const std::string& cors_origin = "*") {
  using detail::guarded;
  using detail::send_json;

  srv.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type, Authorization"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/api/pairs", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            PairFilter f;
            if (req.has_param("split")) f.split = req.get_param_value("split");
            if (req.has_param("status")) {
              const auto s = parse_status(req.get_param_value("status"));
              if (!s) throw Error(ErrorKind::InvalidArgument, "unknown status filter");
              f.status = *s;
            }
            f.offset = detail::parse_count(req, "offset", 0);
            f.limit = std::min(detail::parse_count(req, "limit", 50), kMaxPageSize);
            send_json(res, svc.list_pairs(f));
          }));

  srv.Get(R"(/api/pairs/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, svc.get_pair(req.matches[1]));
          }));

  srv.Post(R"(/api/pairs/([^/]+)/rating)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             svc.state_of(id);  // 404 before validating the body
             send_json(res, svc.submit_rating(rating_from_json(id, detail::parse_body(req))));
           }));

  srv.Post(R"(/api/pairs/([^/]+)/refine)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             svc.state_of(id);
             const auto body = detail::parse_body(req);
             if (!body.contains("view_id") || !body["view_id"].is_number_integer()) {
               throw Error(ErrorKind::InvalidArgument, "view_id is required");
             }
             const auto& h = body.contains("heatmap") ? body["heatmap"] : json();
             if (!h.is_object() || !h.contains("h") || !h.contains("w") || !h.contains("data")) {
               throw Error(ErrorKind::InvalidArgument, "heatmap {h, w, data} is required");
             }
             const auto grid = decode_map({h["h"].get<int>(), h["w"].get<int>(), h["data"].get<std::string>()});
             send_json(res, svc.submit_refinement(id, body["view_id"].get<int>(), grid,
                                                  body.value("rater_id", std::string{})));
           }));

  srv.Get("/api/stats", guarded([&svc](const httplib::Request&, httplib::Response& res) { send_json(res, svc.stats()); }));

  srv.set_mount_point("/files", svc.store().root().string());
}

}  // namespace afforge::review

#endif  // AFFORGE_REVIEW_SERVER_HPP
