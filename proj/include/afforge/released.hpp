// Best-effort importer for the released annotation dump: an annotations.jsonl index
// with one object per line, pointing at .npy arrays for points (N x 3) and
// heatmaps (Q x N).
#ifndef AFFORGE_RELEASED_HPP
#define AFFORGE_RELEASED_HPP

#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afforge/codec.hpp"
#include "afforge/image.hpp"
#include "afforge/lift.hpp"
#include "afforge/metrics.hpp"

namespace afforge::released {

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // C order
};

/// Minimal .npy reader: little-endian float32/float64, C order.
inline NpyArray read_npy(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t magic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (bytes.size() < 10 || !std::equal(std::begin(magic), std::end(magic), bytes.begin())) {
    throw Error(ErrorKind::CorruptBlob, "not an .npy file");
  }
  const int major = bytes[6];
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw Error(ErrorKind::CorruptBlob, "truncated .npy header");
    header_len = get_u32(bytes, 8);
    offset = 12;
  } else {
    throw Error(ErrorKind::SchemaVersionMismatch, ".npy version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw Error(ErrorKind::CorruptBlob, "truncated .npy header");
  const std::string header(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                           bytes.begin() + static_cast<std::ptrdiff_t>(offset + header_len));
  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')"))) {
    throw Error(ErrorKind::CorruptBlob, ".npy header without descr");
  }
  const std::string descr = m[1];
  if (std::regex_search(header, std::regex(R"('fortran_order'\s*:\s*True)"))) {
    throw Error(ErrorKind::InvalidArgument, "Fortran-ordered .npy arrays are not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw Error(ErrorKind::CorruptBlob, ".npy header without shape");
  }
  NpyArray arr;
  const std::string dims = m[1];
  const std::regex digits(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), digits), end; it != end; ++it) {
    arr.shape.push_back(std::stoull(it->str()));
  }
  std::size_t count = 1;
  for (auto d : arr.shape) count *= d;
  const std::size_t elem = descr == "<f4" ? 4 : descr == "<f8" ? 8 : 0;
  if (elem == 0) throw Error(ErrorKind::InvalidArgument, "unsupported .npy dtype " + descr);
  const std::size_t data_at = offset + header_len;
  if (bytes.size() - data_at != count * elem) throw Error(ErrorKind::CorruptBlob, ".npy payload length mismatch");
  arr.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    arr.data[i] = elem == 4 ? static_cast<double>(std::bit_cast<float>(get_u32(bytes, data_at + 4 * i)))
                            : std::bit_cast<double>(get_u64(bytes, data_at + 8 * i));
  }
  return arr;
}

struct ReleasedObject {
  std::string object_id;
  std::string object_class;
  Eigen::Matrix3Xd points;
  std::vector<std::string> queries;
  std::vector<Heatmap3D> heatmaps;  // one per query
};

inline ReleasedObject parse_entry(const std::filesystem::path& dir, const nlohmann::json& j) {
  ReleasedObject o;
  o.object_id = j.at("object_id").get<std::string>();
  o.object_class = j.value("class", std::string{});
  const auto pts = read_npy(read_file_bytes(dir / j.at("points").get<std::string>()));
  if (pts.shape.size() != 2 || pts.shape[1] != 3) throw Error(ErrorKind::DimensionMismatch, "points must be N x 3");
  const std::size_t n = pts.shape[0];
  o.points.resize(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) o.points(d, static_cast<Eigen::Index>(i)) = pts.data[3 * i + d];
  o.queries = j.value("queries", std::vector<std::string>{});
  const auto hm = read_npy(read_file_bytes(dir / j.at("heatmaps").get<std::string>()));
  if (hm.shape.size() != 2 || hm.shape[1] != n) {
    throw Error(ErrorKind::DimensionMismatch, "heatmaps must be Q x N for " + o.object_id);
  }
  for (std::size_t q = 0; q < hm.shape[0]; ++q) {
    Heatmap3D h;
    h.object_id = o.object_id;
    h.query_id = "q" + std::to_string(q);
    h.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) h.values[i] = static_cast<float>(hm.data[q * n + i]);
    h.support.assign(n, 0);
    o.heatmaps.push_back(std::move(h));
  }
  return o;
}

inline std::vector<ReleasedObject> import_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / "annotations.jsonl");
  if (!in) throw Error(ErrorKind::Io, "no annotations.jsonl in " + dir.string());
  std::vector<ReleasedObject> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::CorruptBlob, "bad JSON line in annotations.jsonl");
    out.push_back(parse_entry(dir, j));
  }
  return out;
}

}  // namespace afforge::released

namespace afforge {

struct ObjectStats {
  std::string object_id;
  std::optional<double> coverage;
  std::optional<double> diversity;
};

/// Coverage and diversity for one object's annotations.
inline ObjectStats object_stats(const std::string& object_id, const std::vector<Heatmap3D>& heatmaps,
                                const metrics::MetricConfig& cfg = {}) {
  const auto ann = metrics::as_annotations(heatmaps);
  return {object_id, metrics::coverage(ann, cfg.coverage_tau), metrics::diversity(ann, cfg.epsilon)};
}

}  // namespace afforge

#endif  // AFFORGE_RELEASED_HPP
