#ifndef AFFORGE_REVIEW_HPP
#define AFFORGE_REVIEW_HPP

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "afforge/codec.hpp"
#include "afforge/config.hpp"
#include "afforge/engine.hpp"
#include "afforge/store.hpp"

namespace afforge::review {

enum class Tier { Good, Ok, NotGood };

inline const char* to_string(Tier t) {
  switch (t) {
    case Tier::Good: return "good";
    case Tier::Ok: return "ok";
    case Tier::NotGood: return "not_good";
  }
  return "?";
}

inline Tier parse_tier(const std::string& s) {
  if (s == "good") return Tier::Good;
  if (s == "ok") return Tier::Ok;
  if (s == "not_good") return Tier::NotGood;
  throw Error(ErrorKind::InvalidArgument, "invalid tier '" + s + "'");
}

inline ReviewStatus status_of(Tier t) {
  switch (t) {
    case Tier::Good: return ReviewStatus::Good;
    case Tier::Ok: return ReviewStatus::Ok;
    case Tier::NotGood: return ReviewStatus::NotGood;
  }
  return ReviewStatus::Unreviewed;
}

struct Criteria {
  bool semantic_relevance = true;
  bool spatial_accuracy = true;
  bool coverage = true;

  bool all_pass() const { return semantic_relevance && spatial_accuracy && coverage; }
  bool operator==(const Criteria&) const = default;
};

struct Rating {
  std::string record_id;
  std::string rater_id;
  Tier tier = Tier::Good;
  Criteria criteria;
  std::string timestamp;

  bool operator==(const Rating&) const = default;
};

/// good needs every criterion to pass; not_good needs at least one failure.
inline void check_rating(const Rating& r) {
  if (r.rater_id.empty()) throw Error(ErrorKind::InvalidArgument, "rater_id is required");
  if (r.tier == Tier::Good && !r.criteria.all_pass()) {
    throw Error(ErrorKind::InvalidArgument, "a good rating requires all three criteria to pass");
  }
  if (r.tier == Tier::NotGood && r.criteria.all_pass()) {
    throw Error(ErrorKind::InvalidArgument, "a not_good rating requires at least one failing criterion");
  }
}

namespace detail {

inline bool parse_pass(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::InvalidArgument, std::string("criteria.") + key + " is required");
  if (it->is_boolean()) return it->get<bool>();
  if (it->is_string()) {
    if (*it == "pass") return true;
    if (*it == "fail") return false;
  }
  throw Error(ErrorKind::InvalidArgument, std::string("criteria.") + key + " must be pass or fail");
}

}  // namespace detail

inline Rating rating_from_json(const std::string& record_id, const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "rating must be a JSON object");
  Rating r;
  r.record_id = record_id;
  if (!j.contains("rater_id") || !j["rater_id"].is_string()) throw Error(ErrorKind::InvalidArgument, "rater_id is required");
  r.rater_id = j["rater_id"].get<std::string>();
  if (!j.contains("tier") || !j["tier"].is_string()) throw Error(ErrorKind::InvalidArgument, "tier is required");
  r.tier = parse_tier(j["tier"].get<std::string>());
  const auto& c = j.contains("criteria") ? j["criteria"] : json::object();
  if (!c.is_object()) throw Error(ErrorKind::InvalidArgument, "criteria must be an object");
  r.criteria = {detail::parse_pass(c, "semantic_relevance"), detail::parse_pass(c, "spatial_accuracy"),
                detail::parse_pass(c, "coverage")};
  r.timestamp = j.value("timestamp", std::string{});
  return r;
}

inline json to_json(const Rating& r) {
  auto pf = [](bool b) { return b ? "pass" : "fail"; };
  return {{"record_id", r.record_id},
          {"rater_id", r.rater_id},
          {"tier", to_string(r.tier)},
          {"criteria",
           {{"semantic_relevance", pf(r.criteria.semantic_relevance)},
            {"spatial_accuracy", pf(r.criteria.spatial_accuracy)},
            {"coverage", pf(r.criteria.coverage)}}},
          {"timestamp", r.timestamp}};
}

/// Review state of one record, reconstructible from the log alone.
struct RecordState {
  ReviewStatus status = ReviewStatus::Unreviewed;
  std::string last_rater;
  std::optional<Tier> last_tier;
  std::map<std::string, Rating> ratings;  // latest per rater
  std::set<int> refined_views;
  std::size_t overwrites = 0;

  bool operator==(const RecordState&) const = default;
};

using ReviewState = std::map<std::string, RecordState>;

/// Applies one log event. Status follows the most recent event: a rating sets its
/// tier, a refinement sets refined. Same-rater ratings replace each other.
inline void apply_event(ReviewState& state, const json& ev) {
  const auto type = ev.at("type").get<std::string>();
  const auto id = ev.at("record_id").get<std::string>();
  auto& rs = state[id];
  if (type == "rating") {
    Rating r = rating_from_json(id, ev.at("rating"));
    if (rs.ratings.count(r.rater_id)) ++rs.overwrites;
    rs.status = status_of(r.tier);
    rs.last_rater = r.rater_id;
    rs.last_tier = r.tier;
    rs.ratings[r.rater_id] = std::move(r);
  } else if (type == "refine") {
    rs.status = ReviewStatus::Refined;
    rs.last_rater = ev.value("rater_id", std::string{});
    rs.refined_views.insert(ev.at("view_id").get<int>());
  } else {
    throw Error(ErrorKind::CorruptBlob, "unknown review log event '" + type + "'");
  }
}

inline ReviewState replay(const fs::path& log) {
  ReviewState state;
  std::ifstream in(log);
  if (!in) return state;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto ev = json::parse(line, nullptr, false);
    if (ev.is_discarded()) throw Error(ErrorKind::CorruptBlob, "unparsable review log line");
    apply_event(state, ev);
  }
  return state;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct PairFilter {
  std::optional<std::string> split;  // train | test | held_out
  std::optional<ReviewStatus> status;
  std::size_t offset = 0;
  std::size_t limit = 50;
};

/// The review workflow over a dataset: ratings, refinements, stats. Writes to a
/// record are serialized by a per-record mutex; the append log has its own lock.
class ReviewService {
 public:
  ReviewService(Store& store, Config cfg) : store_(store), cfg_(std::move(cfg)) {
    for (const auto& r : store_.manifest().records) {
      locks_.emplace(r.record_id, std::make_unique<std::mutex>());
      records_.emplace(r.record_id, r);
    }
    state_ = replay(store_.review_log());
  }

  Store& store() { return store_; }

  ReviewState state() const {
    std::shared_lock lock(state_mu_);
    return state_;
  }

  RecordState state_of(const std::string& id) const {
    require(id);
    std::shared_lock lock(state_mu_);
    const auto it = state_.find(id);
    return it == state_.end() ? RecordState{} : it->second;
  }

  Splits splits() const {
    std::vector<SplitInput> in;
    std::shared_lock lock(state_mu_);
    for (const auto& [id, e] : records_) {
      const auto it = state_.find(id);
      in.push_back({id, e.object_id, it == state_.end() ? ReviewStatus::Unreviewed : it->second.status});
    }
    return build_test_split(in);
  }

  json list_pairs(const PairFilter& f) const {
    std::set<std::string> in_split;
    if (f.split) {
      const auto s = splits();
      const std::vector<std::string>* list = *f.split == "train"      ? &s.train
                                             : *f.split == "test"     ? &s.test
                                             : *f.split == "held_out" ? &s.held_out
                                                                      : nullptr;
      if (!list) throw Error(ErrorKind::InvalidArgument, "unknown split '" + *f.split + "'");
      in_split.insert(list->begin(), list->end());
    }
    json items = json::array();
    std::size_t total = 0;
    std::shared_lock lock(state_mu_);
    for (const auto& [id, e] : records_) {
      if (f.split && !in_split.count(id)) continue;
      const auto it = state_.find(id);
      const auto status = it == state_.end() ? ReviewStatus::Unreviewed : it->second.status;
      if (f.status && status != *f.status) continue;
      if (total >= f.offset && items.size() < f.limit) {
        items.push_back({{"record_id", id},
                         {"object_id", e.object_id},
                         {"query_id", e.query_id},
                         {"status", to_string(status)},
                         {"refined_views", it == state_.end() ? 0 : it->second.refined_views.size()}});
      }
      ++total;
    }
    return {{"total", total}, {"offset", f.offset}, {"limit", f.limit}, {"items", items}};
  }

  json get_pair(const std::string& id) const {
    const auto& entry = require(id);
    const auto record = store_.read_record(id);
    const auto st = state_of(id);
    const auto& q = record.query.query_id;
    const auto refined = store_.read_refined(entry.object_id, q);
    const auto& fused = refined ? *refined : record.heatmap;

    json views = json::array();
    for (const auto& vm : store_.object(entry.object_id).views) {
      json v = {{"view_id", vm.view_id}, {"width", vm.width}, {"height", vm.height}, {"image", "/files/" + vm.image}};
      const bool is_refined = st.refined_views.count(vm.view_id) > 0;
      auto h = store_.read_view_heatmap(entry.object_id, q, vm.view_id, is_refined);
      if (h) {
        const auto enc = encode_map(h->values);
        v["heatmap"] = {{"h", enc.h}, {"w", enc.w}, {"data", enc.data}};
      } else {
        v["heatmap"] = nullptr;
      }
      v["refined"] = is_refined;
      if (record.selection) {
        v["role"] = vm.view_id == record.selection->best        ? "best"
                    : vm.view_id == record.selection->challenge ? "challenge"
                                                                : "";
      }
      views.push_back(std::move(v));
    }
    const auto pc = store_.load_cloud(entry.object_id);
    std::vector<float> xyz;
    xyz.reserve(pc.size() * 3);
    for (std::size_t i = 0; i < pc.size(); ++i)
      for (int d = 0; d < 3; ++d) xyz.push_back(static_cast<float>(pc.point(i)[d]));
    json ratings = json::array();
    for (const auto& [rater, r] : st.ratings) ratings.push_back(to_json(r));
    std::vector<int> refined_views(st.refined_views.begin(), st.refined_views.end());
    return {{"record_id", id},
            {"object_id", entry.object_id},
            {"query",
             {{"query_id", q},
              {"text", record.query.text},
              {"affordance_phrase", record.query.affordance_phrase},
              {"object_class", record.query.object_class}}},
            {"status", to_string(st.status)},
            {"refined_views", refined_views},
            {"ratings", ratings},
            {"selection", record.selection ? json{{"best", record.selection->best},
                                                  {"challenge", record.selection->challenge},
                                                  {"all_zero", record.selection->all_zero}}
                                           : json(nullptr)},
            {"views", views},
            {"fused",
             {{"num_points", fused.size()},
              {"refined", refined.has_value()},
              {"low_support", fused.low_support},
              {"values", base64_encode(pack_f32_le(fused.values))},
              {"points", base64_encode(pack_f32_le(xyz))}}}};
  }

  /// Last write wins; a repeat rating by the same rater is logged as an overwrite.
  json submit_rating(Rating r) {
    require(r.record_id);
    check_rating(r);
    if (r.timestamp.empty()) r.timestamp = utc_now();
    std::lock_guard rec(*locks_.at(r.record_id));
    bool overwrite = false;
    {
      std::shared_lock lock(state_mu_);
      const auto it = state_.find(r.record_id);
      overwrite = it != state_.end() && it->second.ratings.count(r.rater_id);
    }
    json ev = {{"type", "rating"}, {"record_id", r.record_id}, {"rating", to_json(r)}, {"overwrite", overwrite}};
    commit(ev);
    const auto st = state_of(r.record_id);
    persist_review(r.record_id, st);
    return {{"record_id", r.record_id}, {"status", to_string(st.status)}, {"overwrite", overwrite}};
  }

  /// Replaces one view's 2D heatmap, re-fuses and stores the refined 3D heatmap.
  json submit_refinement(const std::string& id, int view_id, const Grid<float>& values, const std::string& rater_id) {
    const auto& entry = require(id);
    std::lock_guard rec(*locks_.at(id));
    const auto views = store_.load_views(entry.object_id);
    const auto cam = std::find_if(views.begin(), views.end(), [&](const CameraView& c) { return c.view_id == view_id; });
    if (cam == views.end()) throw Error(ErrorKind::UnknownView, "no view " + std::to_string(view_id) + " for " + id);
    if (values.width() != cam->width || values.height() != cam->height) {
      throw Error(ErrorKind::DimensionMismatch, "edited heatmap is " + std::to_string(values.width()) + "x" +
                                                    std::to_string(values.height()) + ", view is " +
                                                    std::to_string(cam->width) + "x" + std::to_string(cam->height));
    }
    for (float v : values.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorKind::InvalidArgument, "heatmap values must lie in [0, 1]");
    }
    const auto record = store_.read_record(id);
    store_.write_view_heatmap(entry.object_id, entry.query_id, Heatmap2D{view_id, values}, true);
    const auto pc = store_.load_cloud(entry.object_id);
    const auto vp = cfg_.visibility_for(pc);
    Heatmap3D fused = refuse_record(store_, record, cfg_.fusion, &vp);
    fused.object_id = entry.object_id;
    store_.write_refined(fused);
    commit({{"type", "refine"}, {"record_id", id}, {"view_id", view_id}, {"rater_id", rater_id}, {"timestamp", utc_now()}});
    const auto st = state_of(id);
    persist_review(id, st);
    std::vector<int> refined(st.refined_views.begin(), st.refined_views.end());
    return {{"record_id", id}, {"status", to_string(st.status)}, {"refined_views", refined}};
  }

  json stats() const {
    std::size_t good = 0, ok = 0, not_good = 0, rated = 0, refined_records = 0, refined_views = 0, overwrites = 0;
    std::map<std::string, std::size_t> by_status;
    {
      std::shared_lock lock(state_mu_);
      for (const auto& [id, e] : records_) {
        const auto it = state_.find(id);
        if (it == state_.end()) {
          ++by_status["unreviewed"];
          continue;
        }
        const auto& s = it->second;
        ++by_status[to_string(s.status)];
        overwrites += s.overwrites;
        if (!s.refined_views.empty()) {
          ++refined_records;
          refined_views += s.refined_views.size();
        }
        if (!s.last_tier) continue;
        ++rated;
        switch (*s.last_tier) {
          case Tier::Good: ++good; break;
          case Tier::Ok: ++ok; break;
          case Tier::NotGood: ++not_good; break;
        }
      }
    }
    auto frac = [&](std::size_t n) { return rated ? static_cast<double>(n) / static_cast<double>(rated) : 0.0; };
    const auto s = splits();
    return {{"records", records_.size()},
            {"rated", rated},
            {"tiers", {{"good", good}, {"ok", ok}, {"not_good", not_good}}},
            {"tier_fractions", {{"good", frac(good)}, {"ok", frac(ok)}, {"not_good", frac(not_good)}}},
            {"status", by_status},
            {"refined_records", refined_records},
            {"refined_views", refined_views},
            {"overwrites", overwrites},
            {"splits", {{"train", s.train.size()}, {"test", s.test.size()}, {"held_out", s.held_out.size()}}}};
  }

  /// Writes the current split assignment into the manifest.
  Splits persist_splits() {
    auto s = splits();
    store_.set_splits(s);
    return s;
  }

 private:
  const RecordEntry& require(const std::string& id) const {
    const auto it = records_.find(id);
    if (it == records_.end()) throw Error(ErrorKind::NotFound, "unknown record " + id);
    return it->second;
  }

  void commit(const json& ev) {
    {
      std::lock_guard lock(log_mu_);
      const auto path = store_.review_log();
      fs::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::app | std::ios::binary);
      out << ev.dump() << '\n';
      out.flush();
      if (!out) throw Error(ErrorKind::Io, "cannot append to " + path.string());
    }
    std::unique_lock lock(state_mu_);
    apply_event(state_, ev);
  }

  void persist_review(const std::string& id, const RecordState& st) const {
    const auto& e = records_.at(id);
    Review rv;
    rv.status = st.status;
    rv.rater_id = st.last_rater;
    rv.refined_views.assign(st.refined_views.begin(), st.refined_views.end());
    store_.write_review(e.object_id, e.query_id, rv);
  }

  Store& store_;
  Config cfg_;
  std::map<std::string, RecordEntry> records_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  mutable std::shared_mutex state_mu_;
  ReviewState state_;
  std::mutex log_mu_;
};

}  // namespace afforge::review

#endif  // AFFORGE_REVIEW_HPP
