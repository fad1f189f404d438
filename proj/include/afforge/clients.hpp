#ifndef AFFORGE_CLIENTS_HPP
#define AFFORGE_CLIENTS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "afforge/codec.hpp"
#include "afforge/error.hpp"
#include "afforge/geom.hpp"
#include "afforge/grid.hpp"

namespace afforge {

inline constexpr int kQueriesPerObject = 5;

struct AffordanceQuery {
  std::string query_id;
  std::string object_id;
  std::string text;
  std::string affordance_phrase;
  std::string object_class;

  bool operator==(const AffordanceQuery&) const = default;
};

struct InteractionPoint {
  int view_id = 0;
  double u = 0.0;
  double v = 0.0;
  double confidence = 1.0;

  bool operator==(const InteractionPoint&) const = default;
};

struct MaskLogits {
  int view_id = 0;
  Grid<float> logits;
};

/// Service-side prompt configuration; forwarded verbatim as "prompt_cfg".
struct PromptConfig {
  std::string system_template =
      "First identify the object's semantic class from the views. Then write five queries, each of the form "
      "\"Point to the part ...\", describing where a person would interact with that kind of object.";
  std::string query_template = "Point to the part {affordance}";
};

inline nlohmann::json to_json(const PromptConfig& cfg) {
  return {{"system_template", cfg.system_template}, {"query_template", cfg.query_template}};
}

/// Stage 1: five affordance queries from a handful of views.
class QueryService {
 public:
  virtual ~QueryService() = default;
  virtual std::vector<AffordanceQuery> generate_queries(const std::vector<ImageRef>& views,
                                                        const PromptConfig& cfg) = 0;
};

/// Stage 2: up to K interaction points for one view and query.
class PointService {
 public:
  virtual ~PointService() = default;
  virtual std::vector<InteractionPoint> point_at(const ImageRef& view, int width, int height,
                                                 const AffordanceQuery& query) = 0;
};

/// Stage 3: mask logits prompted by interaction points.
class SegmentService {
 public:
  virtual ~SegmentService() = default;
  virtual MaskLogits segment_at(const ImageRef& view, int width, int height,
                                const std::vector<InteractionPoint>& points) = 0;
};

/// Non-owning bundle handed to the engine.
struct ServiceSet {
  QueryService* queries = nullptr;
  PointService* pointer = nullptr;
  SegmentService* segmenter = nullptr;
};

// Shared post-processing applied by every client implementation.

/// Drops out-of-bounds points, sorts by confidence (stable on ties) and keeps at most max_points.
inline std::vector<InteractionPoint> normalize_points(std::vector<InteractionPoint> points, int width, int height,
                                                      int max_points) {
  std::erase_if(points, [&](const InteractionPoint& p) {
    return !std::isfinite(p.u) || !std::isfinite(p.v) || !in_image(p.u, p.v, width, height);
  });
  std::stable_sort(points.begin(), points.end(),
                   [](const InteractionPoint& a, const InteractionPoint& b) { return a.confidence > b.confidence; });
  if (max_points >= 0 && points.size() > static_cast<std::size_t>(max_points)) {
    points.resize(static_cast<std::size_t>(max_points));
  }
  return points;
}

/// Union of per-point masks: elementwise max of logits.
inline Grid<float> union_logits(const std::vector<Grid<float>>& per_point) {
  if (per_point.empty()) throw Error(ErrorKind::EmptyInput, "no logit maps to combine");
  Grid<float> out = per_point.front();
  for (std::size_t k = 1; k < per_point.size(); ++k) {
    if (!per_point[k].same_shape(out)) throw Error(ErrorKind::DimensionMismatch, "logit maps differ in size");
    auto dst = out.values();
    auto src = per_point[k].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  }
  return out;
}

// Wire protocol bodies.

namespace wire {

inline nlohmann::json query_request(const std::vector<std::string>& images_b64, const PromptConfig& cfg) {
  return {{"images", images_b64}, {"prompt_cfg", to_json(cfg)}};
}

inline nlohmann::json point_request(const std::string& image_b64, const std::string& text, int max_points) {
  return {{"image", image_b64}, {"text", text}, {"max_points", max_points}};
}

inline nlohmann::json segment_request(const std::string& image_b64, const std::vector<InteractionPoint>& points) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) pts.push_back({{"u", p.u}, {"v", p.v}});
  return {{"image", image_b64}, {"points", pts}};
}

/// Parses {"object_class", "queries": [{"text", "affordance"}]}. Throws MalformedResponse
/// unless exactly five usable queries are present.
inline std::vector<AffordanceQuery> parse_queries(const std::string& body, const std::string& object_id) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::MalformedResponse, "query response is not JSON");
  const auto cls = j.value("object_class", std::string{});
  const auto qs = j.find("queries");
  if (cls.empty() || qs == j.end() || !qs->is_array()) {
    throw Error(ErrorKind::MalformedResponse, "query response missing object_class or queries");
  }
  std::vector<AffordanceQuery> out;
  for (const auto& q : *qs) {
    if (!q.is_object() || !q.contains("text") || !q["text"].is_string() || !q.contains("affordance") ||
        !q["affordance"].is_string()) {
      continue;
    }
    AffordanceQuery aq;
    aq.object_id = object_id;
    aq.query_id = "q" + std::to_string(out.size());
    aq.text = q["text"].get<std::string>();
    aq.affordance_phrase = q["affordance"].get<std::string>();
    aq.object_class = cls;
    if (aq.text.empty() || aq.affordance_phrase.empty()) continue;
    out.push_back(std::move(aq));
  }
  if (out.size() != kQueriesPerObject) {
    throw Error(ErrorKind::MalformedResponse,
                "expected 5 queries, service returned " + std::to_string(out.size()) + " usable ones");
  }
  return out;
}

inline std::vector<InteractionPoint> parse_points(const std::string& body, int view_id) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("points") || !j["points"].is_array()) {
    throw Error(ErrorKind::MalformedResponse, "point response missing points array");
  }
  std::vector<InteractionPoint> out;
  for (const auto& p : j["points"]) {
    if (!p.is_object() || !p.contains("u") || !p.contains("v") || !p["u"].is_number() || !p["v"].is_number()) {
      throw Error(ErrorKind::MalformedResponse, "point entry without numeric u/v");
    }
    InteractionPoint ip;
    ip.view_id = view_id;
    ip.u = p["u"].get<double>();
    ip.v = p["v"].get<double>();
    ip.confidence = p.contains("confidence") && p["confidence"].is_number() ? p["confidence"].get<double>() : 1.0;
    out.push_back(ip);
  }
  return out;
}

inline MaskLogits parse_logits(const std::string& body, int view_id, int width, int height) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("logits") || !j["logits"].is_object()) {
    throw Error(ErrorKind::MalformedResponse, "segment response missing logits");
  }
  const auto& l = j["logits"];
  if (!l.contains("h") || !l.contains("w") || !l.contains("data") || !l["data"].is_string()) {
    throw Error(ErrorKind::MalformedResponse, "logits object needs h, w, data");
  }
  Grid<float> grid;
  try {
    grid = decode_map({l["h"].get<int>(), l["w"].get<int>(), l["data"].get<std::string>()});
  } catch (const Error& e) {
    throw Error(ErrorKind::MalformedResponse, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedResponse, e.what());
  }
  if (grid.width() != width || grid.height() != height) {
    throw Error(ErrorKind::MalformedResponse, "logit map size does not match the view");
  }
  for (float f : grid.values()) {
    if (!std::isfinite(f)) throw Error(ErrorKind::MalformedResponse, "non-finite logit");
  }
  return {view_id, std::move(grid)};
}

inline nlohmann::json logits_response(const Grid<float>& logits) {
  const auto enc = encode_map(logits);
  return {{"logits", {{"h", enc.h}, {"w", enc.w}, {"data", enc.data}}}};
}

}  // namespace wire

/// Transport errors get `transport_retries` extra attempts with exponential backoff;
/// malformed payloads get `malformed_retries` reprompts. Anything else propagates.
struct RetryPolicy {
  int transport_retries = 3;
  int malformed_retries = 1;
  std::chrono::milliseconds backoff{200};
};

template <typename Fn>
auto call_with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  int transport_failures = 0;
  int malformed_failures = 0;
  auto delay = policy.backoff;
  for (;;) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.is_transport() && transport_failures < policy.transport_retries) {
        ++transport_failures;
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
        delay *= 2;
        continue;
      }
      if (e.kind() == ErrorKind::MalformedResponse && malformed_failures < policy.malformed_retries) {
        ++malformed_failures;
        continue;
      }
      throw;
    }
  }
}

}  // namespace afforge

#endif  // AFFORGE_CLIENTS_HPP
