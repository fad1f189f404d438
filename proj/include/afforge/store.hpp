#ifndef AFFORGE_STORE_HPP
#define AFFORGE_STORE_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afforge/clients.hpp"
#include "afforge/codec.hpp"
#include "afforge/geom.hpp"
#include "afforge/image.hpp"
#include "afforge/lift.hpp"
#include "afforge/partial.hpp"
#include "afforge/reproject.hpp"

namespace afforge {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kEngineVersion = "afforge-0.1.0";

// ---------------------------------------------------------------------------
// Typed blobs

inline std::vector<std::uint8_t> heat_blob(std::span<const float> values) {
  return encode_blob(kHeatMagic, 1, static_cast<std::uint32_t>(values.size()), pack_f32_le(values));
}

inline std::vector<float> read_heat_blob(std::span<const std::uint8_t> bytes) {
  return unpack_f32_le(decode_blob(kHeatMagic, bytes, 4).payload);
}

inline std::vector<std::uint8_t> u32_blob(const BlobMagic& magic, std::span<const std::uint32_t> values) {
  std::vector<std::uint8_t> payload;
  payload.reserve(values.size() * 4);
  for (auto v : values) put_u32(payload, v);
  return encode_blob(magic, 1, static_cast<std::uint32_t>(values.size()), payload);
}

inline std::vector<std::uint32_t> read_u32_blob(const BlobMagic& magic, std::span<const std::uint8_t> bytes) {
  const auto blob = decode_blob(magic, bytes, 4);
  std::vector<std::uint32_t> out(blob.payload.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_u32(blob.payload, 4 * i);
  return out;
}

inline std::vector<std::uint8_t> map_blob(const BlobMagic& magic, const Grid<float>& map) {
  return encode_blob(magic, static_cast<std::uint32_t>(map.height()), static_cast<std::uint32_t>(map.width()),
                     pack_f32_le(map.values()));
}

inline Grid<float> read_map_blob(const BlobMagic& magic, std::span<const std::uint8_t> bytes) {
  auto blob = decode_blob(magic, bytes, 4);
  return Grid<float>(static_cast<int>(blob.cols), static_cast<int>(blob.rows), unpack_f32_le(blob.payload));
}

/// Points as N rows of three little-endian float64.
inline std::vector<std::uint8_t> points_blob(const Eigen::Matrix3Xd& pts) {
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<std::size_t>(pts.cols()) * 24);
  for (Eigen::Index i = 0; i < pts.cols(); ++i)
    for (int d = 0; d < 3; ++d) put_u64(payload, std::bit_cast<std::uint64_t>(pts(d, i)));
  return encode_blob(kPointsMagic, static_cast<std::uint32_t>(pts.cols()), 3, payload);
}

inline Eigen::Matrix3Xd read_points_blob(std::span<const std::uint8_t> bytes) {
  const auto blob = decode_blob(kPointsMagic, bytes, 8);
  if (blob.cols != 3) throw Error(ErrorKind::CorruptBlob, "point blob must have 3 columns");
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(blob.rows));
  for (std::uint32_t i = 0; i < blob.rows; ++i)
    for (int d = 0; d < 3; ++d) pts(d, i) = std::bit_cast<double>(get_u64(blob.payload, 24 * i + 8 * d));
  return pts;
}

// ---------------------------------------------------------------------------
// Records

enum class ReviewStatus { Unreviewed, Good, Ok, NotGood, Refined };

inline const char* to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::Unreviewed: return "unreviewed";
    case ReviewStatus::Good: return "good";
    case ReviewStatus::Ok: return "ok";
    case ReviewStatus::NotGood: return "not_good";
    case ReviewStatus::Refined: return "refined";
  }
  return "unreviewed";
}

inline std::optional<ReviewStatus> parse_status(std::string_view s) {
  for (auto v : {ReviewStatus::Unreviewed, ReviewStatus::Good, ReviewStatus::Ok, ReviewStatus::NotGood,
                 ReviewStatus::Refined}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

struct Review {
  ReviewStatus status = ReviewStatus::Unreviewed;
  std::string rater_id;
  std::vector<int> refined_views;  // ascending

  bool operator==(const Review&) const = default;
};

struct Provenance {
  std::map<int, std::vector<InteractionPoint>> points;  // per view, as returned by the pointing stage
  std::vector<int> contributing_views;                  // views with a stored 2D heatmap
  std::vector<int> missing_views;                       // cells that failed after retries
  std::string engine_version = kEngineVersion;
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

struct AnnotationRecord {
  AffordanceQuery query;
  Heatmap3D heatmap;
  Provenance provenance;
  Review review;
  std::optional<ViewSelection> selection;
  bool failed = false;  // every view failed for this query

  std::string object_id() const { return query.object_id; }
  std::string record_id() const { return query.object_id + ":" + query.query_id; }
  bool operator==(const AnnotationRecord&) const = default;
};

inline std::pair<std::string, std::string> split_record_id(const std::string& id) {
  const auto colon = id.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == id.size()) {
    throw Error(ErrorKind::UnknownId, "malformed record id: " + id);
  }
  return {id.substr(0, colon), id.substr(colon + 1)};
}

// ---------------------------------------------------------------------------
// Manifest

struct ViewMeta {
  int view_id = 0;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();
  std::string image;  // relative to the dataset root
  std::string depth;
};

struct ObjectEntry {
  std::string object_id;
  std::string class_tag;
  std::string points;
  std::size_t num_points = 0;
  std::vector<ViewMeta> views;
};

struct RecordEntry {
  std::string record_id;
  std::string object_id;
  std::string query_id;
  std::string path;
};

struct PartialEntry {
  std::string object_id;
  int source_view = 0;
  bool under_sampled = false;
  std::size_t count = 0;
  std::string indices;
};

struct Splits {
  std::vector<std::string> train, test, held_out;
  bool operator==(const Splits&) const = default;
};

struct Manifest {
  int schema_version = kSchemaVersion;
  std::vector<ObjectEntry> objects;
  std::vector<RecordEntry> records;
  std::vector<PartialEntry> partials;
  Splits splits;

  const ObjectEntry* find_object(std::string_view id) const {
    for (const auto& o : objects)
      if (o.object_id == id) return &o;
    return nullptr;
  }
};

namespace detail {

inline json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from(const json& a) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(R * C)) {
    throw Error(ErrorKind::InvalidArgument, "matrix field has the wrong number of entries");
  }
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) m(r, c) = a[static_cast<std::size_t>(r * C + c)].get<double>();
  return m;
}

inline void check_schema(const json& j, const std::string& what) {
  const int v = j.value("schema_version", -1);
  if (v != kSchemaVersion) {
    throw Error(ErrorKind::SchemaVersionMismatch,
                what + " has schema_version " + std::to_string(v) + ", expected " + std::to_string(kSchemaVersion));
  }
}

}  // namespace detail

inline json to_json(const Manifest& m) {
  json objects = json::array();
  for (const auto& o : m.objects) {
    json views = json::array();
    for (const auto& v : o.views) {
      views.push_back({{"view_id", v.view_id},
                       {"width", v.width},
                       {"height", v.height},
                       {"intrinsics", detail::matrix_json(v.intrinsics)},
                       {"world_to_camera", detail::matrix_json(v.world_to_camera.matrix())},
                       {"image", v.image},
                       {"depth", v.depth}});
    }
    objects.push_back({{"object_id", o.object_id},
                       {"class_tag", o.class_tag},
                       {"points", o.points},
                       {"num_points", o.num_points},
                       {"views", views}});
  }
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back(
        {{"record_id", r.record_id}, {"object_id", r.object_id}, {"query_id", r.query_id}, {"path", r.path}});
  }
  json partials = json::array();
  for (const auto& p : m.partials) {
    partials.push_back({{"object_id", p.object_id},
                        {"partial", {{"source_view", p.source_view}, {"under_sampled", p.under_sampled}}},
                        {"count", p.count},
                        {"indices", p.indices}});
  }
  return {{"schema_version", m.schema_version},
          {"objects", objects},
          {"records", records},
          {"partials", partials},
          {"splits", {{"train", m.splits.train}, {"test", m.splits.test}, {"held_out", m.splits.held_out}}}};
}

inline Manifest manifest_from_json(const json& j) {
  detail::check_schema(j, "manifest");
  Manifest m;
  for (const auto& o : j.at("objects")) {
    ObjectEntry e;
    e.object_id = o.at("object_id").get<std::string>();
    e.class_tag = o.value("class_tag", std::string{});
    e.points = o.at("points").get<std::string>();
    e.num_points = o.at("num_points").get<std::size_t>();
    for (const auto& v : o.at("views")) {
      ViewMeta vm;
      vm.view_id = v.at("view_id").get<int>();
      vm.width = v.at("width").get<int>();
      vm.height = v.at("height").get<int>();
      vm.intrinsics = detail::matrix_from<3, 3>(v.at("intrinsics"));
      vm.world_to_camera.matrix() = detail::matrix_from<4, 4>(v.at("world_to_camera"));
      vm.image = v.at("image").get<std::string>();
      vm.depth = v.at("depth").get<std::string>();
      e.views.push_back(std::move(vm));
    }
    m.objects.push_back(std::move(e));
  }
  for (const auto& r : j.at("records")) {
    m.records.push_back({r.at("record_id").get<std::string>(), r.at("object_id").get<std::string>(),
                         r.at("query_id").get<std::string>(), r.at("path").get<std::string>()});
  }
  for (const auto& p : j.value("partials", json::array())) {
    m.partials.push_back({p.at("object_id").get<std::string>(), p.at("partial").at("source_view").get<int>(),
                          p.at("partial").at("under_sampled").get<bool>(), p.at("count").get<std::size_t>(),
                          p.at("indices").get<std::string>()});
  }
  if (j.contains("splits")) {
    const auto& s = j["splits"];
    m.splits.train = s.value("train", std::vector<std::string>{});
    m.splits.test = s.value("test", std::vector<std::string>{});
    m.splits.held_out = s.value("held_out", std::vector<std::string>{});
  }
  return m;
}

/// Problems found in a manifest: dangling paths and duplicate ids. Empty means valid.
inline std::vector<std::string> validate_manifest(const fs::path& root, const Manifest& m) {
  std::vector<std::string> problems;
  auto need = [&](const std::string& rel, const std::string& what) {
    if (rel.empty() || !fs::exists(root / rel)) problems.push_back("dangling path for " + what + ": " + rel);
  };
  std::set<std::string> objects, records;
  for (const auto& o : m.objects) {
    if (!objects.insert(o.object_id).second) problems.push_back("duplicate object id: " + o.object_id);
    need(o.points, o.object_id + " points");
    std::set<int> views;
    for (const auto& v : o.views) {
      if (!views.insert(v.view_id).second) {
        problems.push_back("duplicate view " + std::to_string(v.view_id) + " in " + o.object_id);
      }
      need(v.image, o.object_id + " view " + std::to_string(v.view_id) + " image");
      need(v.depth, o.object_id + " view " + std::to_string(v.view_id) + " depth");
    }
  }
  for (const auto& r : m.records) {
    if (!records.insert(r.record_id).second) problems.push_back("duplicate record id: " + r.record_id);
    if (!objects.count(r.object_id)) problems.push_back("record " + r.record_id + " references unknown object");
    need(r.path, "record " + r.record_id);
  }
  for (const auto& p : m.partials) need(p.indices, p.object_id + " partial");
  std::set<std::string> in_split;
  for (const auto* list : {&m.splits.train, &m.splits.test, &m.splits.held_out}) {
    for (const auto& id : *list) {
      if (!records.count(id)) problems.push_back("split lists unknown record " + id);
      if (!in_split.insert(id).second) problems.push_back("record in more than one split: " + id);
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitInput {
  std::string record_id;
  std::string object_id;
  ReviewStatus status = ReviewStatus::Unreviewed;
};

/// Object-level separation: records of any object touched by review never enter
/// train. Test holds good, ok and refined records; everything else on a reviewed
/// object is held out. `reviewed_ids` must name known records.
inline Splits build_test_split(std::span<const SplitInput> records, std::span<const std::string> reviewed_ids) {
  std::map<std::string, const SplitInput*> by_id;
  for (const auto& r : records) by_id[r.record_id] = &r;
  std::set<std::string> reviewed_objects;
  for (const auto& id : reviewed_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorKind::UnknownId, "reviewed id not among records: " + id);
    reviewed_objects.insert(it->second->object_id);
  }
  const std::set<std::string> reviewed(reviewed_ids.begin(), reviewed_ids.end());
  Splits s;
  for (const auto& [id, r] : by_id) {
    const bool usable = r->status == ReviewStatus::Good || r->status == ReviewStatus::Ok ||
                        r->status == ReviewStatus::Refined;
    if (reviewed.count(id) && usable) {
      s.test.push_back(id);
    } else if (reviewed_objects.count(r->object_id)) {
      s.held_out.push_back(id);
    } else {
      s.train.push_back(id);
    }
  }
  return s;
}

/// Splits from stored statuses: every record whose status is not unreviewed counts as reviewed.
inline Splits build_test_split(std::span<const SplitInput> records) {
  std::vector<std::string> reviewed;
  for (const auto& r : records)
    if (r.status != ReviewStatus::Unreviewed) reviewed.push_back(r.record_id);
  return build_test_split(records, reviewed);
}

// ---------------------------------------------------------------------------
// Store

inline void write_text_file(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// On-disk dataset rooted at one directory:
///   manifest.json
///   objects/<id>/points.bin, views/<k>.png, views/<k>.depth, partials/<k>.idx
///   records/<id>/<q>.json, <q>.heat, <q>.support, <q>.views/<k>.h2d
///   exports/<id>/...
/// Manifest writes are serialized by an internal mutex and land via atomic rename.
class Store {
 public:
  explicit Store(fs::path root) : root_(std::move(root)) {
    if (fs::exists(manifest_path())) {
      manifest_ = manifest_from_json(parse_json_file(manifest_path()));
    }
  }

  const fs::path& root() const noexcept { return root_; }
  fs::path manifest_path() const { return root_ / "manifest.json"; }

  static std::string object_rel(const std::string& id) { return "objects/" + id; }
  static std::string points_rel(const std::string& id) { return object_rel(id) + "/points.bin"; }
  static std::string image_rel(const std::string& id, int k) {
    return object_rel(id) + "/views/" + std::to_string(k) + ".png";
  }
  static std::string depth_rel(const std::string& id, int k) {
    return object_rel(id) + "/views/" + std::to_string(k) + ".depth";
  }
  static std::string partial_rel(const std::string& id, int k) {
    return object_rel(id) + "/partials/" + std::to_string(k) + ".idx";
  }
  static std::string record_rel(const std::string& id, const std::string& q) { return "records/" + id + "/" + q; }

  fs::path record_json(const std::string& id, const std::string& q) const {
    return root_ / (record_rel(id, q) + ".json");
  }
  fs::path record_heat(const std::string& id, const std::string& q, bool refined = false) const {
    return root_ / (record_rel(id, q) + (refined ? ".refined.heat" : ".heat"));
  }
  fs::path record_support(const std::string& id, const std::string& q, bool refined = false) const {
    return root_ / (record_rel(id, q) + (refined ? ".refined.support" : ".support"));
  }
  fs::path view_heatmap(const std::string& id, const std::string& q, int k, bool refined = false) const {
    return root_ / (record_rel(id, q) + ".views") / (std::to_string(k) + (refined ? ".refined.h2d" : ".h2d"));
  }
  fs::path complete_marker(const std::string& id) const { return root_ / "records" / id / "complete"; }
  fs::path export_dir(const std::string& id) const { return root_ / "exports" / id; }
  fs::path review_log() const { return root_ / "review" / "log.jsonl"; }

  Manifest manifest() const {
    std::lock_guard lock(mu_);
    return manifest_;
  }

  // -- objects ------------------------------------------------------------

  /// Writes points, view images and depth maps, then registers the object.
  void write_object(const PointCloud& pc, const std::vector<CameraView>& views, const std::vector<Image>& images,
                    const std::string& class_tag = {}) {
    validate(pc);
    if (images.size() != views.size()) throw Error(ErrorKind::LengthMismatch, "one image per view required");
    ObjectEntry e;
    e.object_id = pc.object_id;
    e.class_tag = class_tag;
    e.points = points_rel(pc.object_id);
    e.num_points = pc.size();
    write_file_bytes(root_ / e.points, points_blob(pc.positions));
    for (std::size_t k = 0; k < views.size(); ++k) {
      const auto& v = views[k];
      validate(v);
      ViewMeta vm{v.view_id, v.width, v.height, v.intrinsics, v.world_to_camera,
                  image_rel(pc.object_id, v.view_id), depth_rel(pc.object_id, v.view_id)};
      write_png(root_ / vm.image, images[k]);
      write_file_bytes(root_ / vm.depth, map_blob(kDepthMagic, v.depth));
      e.views.push_back(std::move(vm));
    }
    std::lock_guard lock(mu_);
    std::erase_if(manifest_.objects, [&](const ObjectEntry& o) { return o.object_id == e.object_id; });
    manifest_.objects.push_back(std::move(e));
    sort_manifest();
    save_locked();
  }

  PointCloud load_cloud(const std::string& id) const {
    const auto e = object(id);
    PointCloud pc{id, read_points_blob(read_file_bytes(root_ / e.points))};
    if (pc.size() != e.num_points) throw Error(ErrorKind::CorruptBlob, "point count differs from manifest");
    return pc;
  }

  /// Cameras with depth maps and image refs, in manifest order (ascending view id).
  std::vector<CameraView> load_views(const std::string& id) const {
    const auto e = object(id);
    std::vector<CameraView> out;
    for (const auto& vm : e.views) {
      CameraView cam;
      cam.view_id = vm.view_id;
      cam.width = vm.width;
      cam.height = vm.height;
      cam.intrinsics = vm.intrinsics;
      cam.world_to_camera = vm.world_to_camera;
      cam.depth = read_map_blob(kDepthMagic, read_file_bytes(root_ / vm.depth));
      if (cam.depth.width() != cam.width || cam.depth.height() != cam.height) {
        throw Error(ErrorKind::DimensionMismatch, "depth map size differs from view " + std::to_string(vm.view_id));
      }
      cam.image = ImageRef{id, vm.view_id, (root_ / vm.image).string()};
      out.push_back(std::move(cam));
    }
    return out;
  }

  ObjectEntry object(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto* e = manifest_.find_object(id);
    if (!e) throw Error(ErrorKind::UnknownId, "object not in manifest: " + id);
    return *e;
  }

  std::vector<std::string> object_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& o : manifest_.objects) ids.push_back(o.object_id);
    return ids;
  }

  // -- records ------------------------------------------------------------

  /// Blobs first, JSON last (atomic rename), so a readable JSON implies complete blobs.
  void write_record(const AnnotationRecord& r) const {
    const auto& id = r.query.object_id;
    const auto& q = r.query.query_id;
    if (r.heatmap.values.size() != r.heatmap.support.size()) {
      throw Error(ErrorKind::LengthMismatch, "heatmap values and support differ in length");
    }
    write_file_bytes(record_heat(id, q), heat_blob(r.heatmap.values));
    write_file_bytes(record_support(id, q), u32_blob(kSupportMagic, r.heatmap.support));
    write_text_file(record_json(id, q), record_to_json(r).dump(2) + "\n");
  }

  AnnotationRecord read_record(const std::string& id, const std::string& q) const {
    const auto path = record_json(id, q);
    if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "no record " + id + ":" + q);
    const json j = parse_json_file(path);
    detail::check_schema(j, "record " + id + ":" + q);
    AnnotationRecord r = record_from_json(j);
    r.heatmap.values = read_heat_blob(read_file_bytes(record_heat(id, q)));
    r.heatmap.support = read_u32_blob(kSupportMagic, read_file_bytes(record_support(id, q)));
    const auto n = j.at("heatmap").at("num_points").get<std::size_t>();
    if (r.heatmap.values.size() != n || r.heatmap.support.size() != n) {
      throw Error(ErrorKind::CorruptBlob, "record " + id + ":" + q + " blob length differs from num_points");
    }
    return r;
  }

  AnnotationRecord read_record(const std::string& record_id) const {
    const auto [id, q] = split_record_id(record_id);
    return read_record(id, q);
  }

  /// Rewrites only the review block of a stored record.
  void write_review(const std::string& id, const std::string& q, const Review& review) const {
    const auto path = record_json(id, q);
    if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "no record " + id + ":" + q);
    json j = parse_json_file(path);
    j["review"] = {{"status", to_string(review.status)},
                   {"rater_id", review.rater_id},
                   {"refined_views", review.refined_views}};
    write_text_file(path, j.dump(2) + "\n");
  }

  /// Refined 3D heatmap stored next to the original, if any.
  std::optional<Heatmap3D> read_refined(const std::string& id, const std::string& q) const {
    if (!fs::exists(record_heat(id, q, true))) return std::nullopt;
    Heatmap3D h;
    h.object_id = id;
    h.query_id = q;
    h.values = read_heat_blob(read_file_bytes(record_heat(id, q, true)));
    h.support = read_u32_blob(kSupportMagic, read_file_bytes(record_support(id, q, true)));
    std::uint32_t max_support = 0;
    for (auto s : h.support) max_support = std::max(max_support, s);
    h.low_support = max_support < 3;
    return h;
  }

  void write_refined(const Heatmap3D& h) const {
    write_file_bytes(record_heat(h.object_id, h.query_id, true), heat_blob(h.values));
    write_file_bytes(record_support(h.object_id, h.query_id, true), u32_blob(kSupportMagic, h.support));
  }

  void write_view_heatmap(const std::string& id, const std::string& q, const Heatmap2D& h, bool refined = false) const {
    write_file_bytes(view_heatmap(id, q, h.view_id, refined), map_blob(kMap2dMagic, h.values));
  }

  std::optional<Heatmap2D> read_view_heatmap(const std::string& id, const std::string& q, int k,
                                             bool refined = false) const {
    const auto path = view_heatmap(id, q, k, refined);
    if (!fs::exists(path)) return std::nullopt;
    return Heatmap2D{k, read_map_blob(kMap2dMagic, read_file_bytes(path))};
  }

  /// Registers records in the manifest (replacing entries with the same id).
  void register_records(const std::vector<AnnotationRecord>& records) {
    std::lock_guard lock(mu_);
    for (const auto& r : records) {
      const auto rid = r.record_id();
      std::erase_if(manifest_.records, [&](const RecordEntry& e) { return e.record_id == rid; });
      manifest_.records.push_back(
          {rid, r.query.object_id, r.query.query_id, record_rel(r.query.object_id, r.query.query_id) + ".json"});
    }
    sort_manifest();
    save_locked();
  }

  void register_partial(const PartialRecord& p) {
    const auto rel = partial_rel(p.object_id, p.source_view);
    write_file_bytes(root_ / rel, u32_blob(kIndexMagic, p.indices));
    std::lock_guard lock(mu_);
    std::erase_if(manifest_.partials, [&](const PartialEntry& e) {
      return e.object_id == p.object_id && e.source_view == p.source_view;
    });
    manifest_.partials.push_back({p.object_id, p.source_view, p.under_sampled, p.indices.size(), rel});
    sort_manifest();
    save_locked();
  }

  std::vector<std::uint32_t> read_partial_indices(const PartialEntry& e) const {
    return read_u32_blob(kIndexMagic, read_file_bytes(root_ / e.indices));
  }

  void set_splits(Splits s) {
    std::lock_guard lock(mu_);
    manifest_.splits = std::move(s);
    save_locked();
  }

  /// Recomputes splits from the statuses stored in each record.
  Splits rebuild_splits() {
    std::vector<SplitInput> inputs;
    for (const auto& e : manifest().records) {
      const json j = parse_json_file(root_ / e.path);
      const auto status = parse_status(j.at("review").at("status").get<std::string>());
      inputs.push_back({e.record_id, e.object_id, status.value_or(ReviewStatus::Unreviewed)});
    }
    auto s = build_test_split(inputs);
    set_splits(s);
    return s;
  }

  void save() {
    std::lock_guard lock(mu_);
    save_locked();
  }

  /// Runs `fn` with manifest writes suppressed, then writes the manifest once.
  template <typename Fn>
  void bulk(Fn&& fn) {
    {
      std::lock_guard lock(mu_);
      ++deferred_;
    }
    struct Resume {
      Store& s;
      ~Resume() {
        std::lock_guard lock(s.mu_);
        --s.deferred_;
        s.save_locked();
      }
    } resume{*this};
    fn();
  }

  // -- JSON helpers ---------------------------------------------------------

  static json parse_json_file(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::CorruptBlob, "invalid JSON in " + path.string());
    return j;
  }

  static json record_to_json(const AnnotationRecord& r) {
    json pts = json::object();
    for (const auto& [view, list] : r.provenance.points) {
      json a = json::array();
      for (const auto& p : list) a.push_back({{"u", p.u}, {"v", p.v}, {"confidence", p.confidence}});
      pts[std::to_string(view)] = a;
    }
    json sel = nullptr;
    if (r.selection) {
      sel = {{"best", r.selection->best}, {"challenge", r.selection->challenge}, {"all_zero", r.selection->all_zero}};
    }
    const auto& q = r.query;
    return {{"schema_version", kSchemaVersion},
            {"record_id", r.record_id()},
            {"object_id", q.object_id},
            {"query",
             {{"query_id", q.query_id},
              {"text", q.text},
              {"affordance_phrase", q.affordance_phrase},
              {"object_class", q.object_class}}},
            {"heatmap",
             {{"num_points", r.heatmap.values.size()},
              {"values", q.query_id + ".heat"},
              {"support", q.query_id + ".support"},
              {"low_support", r.heatmap.low_support}}},
            {"provenance",
             {{"points", pts},
              {"contributing_views", r.provenance.contributing_views},
              {"missing_views", r.provenance.missing_views},
              {"engine_version", r.provenance.engine_version},
              {"seed", r.provenance.seed}}},
            {"selection", sel},
            {"failed", r.failed},
            {"review",
             {{"status", to_string(r.review.status)},
              {"rater_id", r.review.rater_id},
              {"refined_views", r.review.refined_views}}}};
  }

  static AnnotationRecord record_from_json(const json& j) {
    AnnotationRecord r;
    const auto& q = j.at("query");
    r.query.object_id = j.at("object_id").get<std::string>();
    r.query.query_id = q.at("query_id").get<std::string>();
    r.query.text = q.at("text").get<std::string>();
    r.query.affordance_phrase = q.at("affordance_phrase").get<std::string>();
    r.query.object_class = q.at("object_class").get<std::string>();
    r.heatmap.object_id = r.query.object_id;
    r.heatmap.query_id = r.query.query_id;
    r.heatmap.low_support = j.at("heatmap").at("low_support").get<bool>();
    const auto& p = j.at("provenance");
    for (const auto& [view, list] : p.at("points").items()) {
      auto& dst = r.provenance.points[std::stoi(view)];
      for (const auto& e : list) {
        dst.push_back({std::stoi(view), e.at("u").get<double>(), e.at("v").get<double>(),
                       e.at("confidence").get<double>()});
      }
    }
    r.provenance.contributing_views = p.at("contributing_views").get<std::vector<int>>();
    r.provenance.missing_views = p.at("missing_views").get<std::vector<int>>();
    r.provenance.engine_version = p.at("engine_version").get<std::string>();
    r.provenance.seed = p.at("seed").get<std::uint64_t>();
    if (const auto& s = j.at("selection"); !s.is_null()) {
      r.selection = ViewSelection{s.at("best").get<int>(), s.at("challenge").get<int>(), s.at("all_zero").get<bool>()};
    }
    r.failed = j.at("failed").get<bool>();
    const auto& rv = j.at("review");
    const auto status = parse_status(rv.at("status").get<std::string>());
    if (!status) throw Error(ErrorKind::CorruptBlob, "unknown review status in record");
    r.review.status = *status;
    r.review.rater_id = rv.at("rater_id").get<std::string>();
    r.review.refined_views = rv.at("refined_views").get<std::vector<int>>();
    return r;
  }

 private:
  void sort_manifest() {
    std::sort(manifest_.objects.begin(), manifest_.objects.end(),
              [](const ObjectEntry& a, const ObjectEntry& b) { return a.object_id < b.object_id; });
    std::sort(manifest_.records.begin(), manifest_.records.end(),
              [](const RecordEntry& a, const RecordEntry& b) { return a.record_id < b.record_id; });
    std::sort(manifest_.partials.begin(), manifest_.partials.end(), [](const PartialEntry& a, const PartialEntry& b) {
      return std::tie(a.object_id, a.source_view) < std::tie(b.object_id, b.source_view);
    });
  }

  void save_locked() const {
    if (deferred_ == 0) write_text_file(manifest_path(), to_json(manifest_).dump(2) + "\n");
  }

  fs::path root_;
  mutable std::mutex mu_;
  Manifest manifest_;
  int deferred_ = 0;
};

}  // namespace afforge

#endif  // AFFORGE_STORE_HPP
