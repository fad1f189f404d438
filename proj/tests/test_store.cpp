#include <gtest/gtest.h>

#include <fstream>

#include "afforge/config.hpp"
#include "afforge/engine.hpp"
#include "afforge/export.hpp"
#include "afforge/released.hpp"
#include "afforge/store.hpp"
#include "test_support.hpp"

using namespace afforge;
namespace fs = std::filesystem;

namespace {

AnnotationRecord sample_record(const std::string& obj, const std::string& q, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  AnnotationRecord r;
  r.query = {q, obj, "Point to the part where you hold it", "where you hold it", "mug"};
  r.heatmap.object_id = obj;
  r.heatmap.query_id = q;
  for (std::size_t i = 0; i < n; ++i) {
    r.heatmap.values.push_back(u(rng));
    r.heatmap.support.push_back(static_cast<std::uint32_t>(rng() % 26));
  }
  r.heatmap.low_support = false;
  r.provenance.points[3] = {{3, 10.25, 20.5, 0.9}, {3, 1.0 / 3.0, 7.0, 1.0}};
  r.provenance.points[4] = {};
  r.provenance.contributing_views = {3};
  r.provenance.missing_views = {7, 8};
  r.provenance.seed = 0xfeedfacecafebeefULL;
  r.review.status = ReviewStatus::Refined;
  r.review.rater_id = "rater-2";
  r.review.refined_views = {3};
  r.selection = ViewSelection{3, 5, false};
  return r;
}

void expect_same(const AnnotationRecord& a, const AnnotationRecord& b) {
  EXPECT_EQ(a.query, b.query);
  ASSERT_EQ(a.heatmap.values.size(), b.heatmap.values.size());
  EXPECT_EQ(0, std::memcmp(a.heatmap.values.data(), b.heatmap.values.data(), a.heatmap.values.size() * 4));
  EXPECT_EQ(a.heatmap.support, b.heatmap.support);
  EXPECT_EQ(a.heatmap.low_support, b.heatmap.low_support);
  EXPECT_EQ(a.provenance.points, b.provenance.points);
  EXPECT_EQ(a.provenance.contributing_views, b.provenance.contributing_views);
  EXPECT_EQ(a.provenance.missing_views, b.provenance.missing_views);
  EXPECT_EQ(a.provenance.seed, b.provenance.seed);
  EXPECT_EQ(a.provenance.engine_version, b.provenance.engine_version);
  EXPECT_EQ(a.review.status, b.review.status);
  EXPECT_EQ(a.review.rater_id, b.review.rater_id);
  EXPECT_EQ(a.review.refined_views, b.review.refined_views);
  EXPECT_EQ(a.selection, b.selection);
  EXPECT_EQ(a.failed, b.failed);
}

std::vector<std::uint8_t> npy_bytes(const std::vector<std::size_t>& shape, const std::vector<double>& data, bool f32) {
  std::string dims;
  for (auto d : shape) dims += std::to_string(d) + ", ";
  std::string header = "{'descr': '" + std::string(f32 ? "<f4" : "<f8") + "', 'fortran_order': False, 'shape': (" +
                       dims + "), }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::vector<std::uint8_t> out{0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  for (double v : data) {
    if (f32) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

}  // namespace

TEST(Blob, HeatBlobIsHeaderPlusFourBytesPerPoint) {
  std::vector<float> v(16384, 0.25f);
  const auto blob = heat_blob(v);
  EXPECT_EQ(blob.size() - 20, 65536u);
  EXPECT_EQ(read_heat_blob(blob), v);
}

TEST(Blob, LittleEndianLayout) {
  const std::vector<float> v{1.0f};
  const auto blob = heat_blob(v);
  ASSERT_EQ(blob.size(), 24u);
  // 1.0f = 0x3f800000, stored least significant byte first.
  EXPECT_EQ(blob[20], 0x00);
  EXPECT_EQ(blob[21], 0x00);
  EXPECT_EQ(blob[22], 0x80);
  EXPECT_EQ(blob[23], 0x3f);
}

TEST(Store, RecordRoundTripIsBitIdentical) {
  const auto dir = testing_support::temp_dir("store_roundtrip");
  Store store(dir);
  for (int i = 0; i < 5; ++i) {
    const auto r = sample_record("obj_a", "q" + std::to_string(i), 1000 + 17 * i, 40 + i);
    store.write_record(r);
    expect_same(r, store.read_record("obj_a:q" + std::to_string(i)));
  }
  AnnotationRecord plain = sample_record("obj:with:colons", "q0", 3, 1);
  plain.selection.reset();
  plain.failed = true;
  plain.review = {};
  store.write_record(plain);
  expect_same(plain, store.read_record("obj:with:colons:q0"));
}

TEST(Store, TruncatedBlobIsCorrupt) {
  const auto dir = testing_support::temp_dir("store_trunc");
  Store store(dir);
  store.write_record(sample_record("o", "q0", 64, 3));
  auto bytes = read_file_bytes(store.record_heat("o", "q0"));
  bytes.resize(bytes.size() - 4);
  write_file_bytes(store.record_heat("o", "q0"), bytes);
  try {
    store.read_record("o", "q0");
    FAIL() << "expected CorruptBlob";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptBlob);
  }
}

TEST(Store, ShortButConsistentBlobStillMismatchesJson) {
  const auto dir = testing_support::temp_dir("store_short");
  Store store(dir);
  store.write_record(sample_record("o", "q0", 64, 3));
  std::vector<float> fewer(63, 0.5f);
  write_file_bytes(store.record_heat("o", "q0"), heat_blob(fewer));
  try {
    store.read_record("o", "q0");
    FAIL() << "expected CorruptBlob";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptBlob);
  }
}

TEST(Store, WrongSchemaVersion) {
  const auto dir = testing_support::temp_dir("store_schema");
  Store store(dir);
  store.write_record(sample_record("o", "q0", 8, 3));
  auto j = Store::parse_json_file(store.record_json("o", "q0"));
  j["schema_version"] = 99;
  write_text_file(store.record_json("o", "q0"), j.dump());
  try {
    store.read_record("o", "q0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaVersionMismatch);
  }
  EXPECT_THROW(manifest_from_json({{"schema_version", 2}, {"objects", json::array()}, {"records", json::array()}}),
               Error);
}

TEST(Store, MissingRecordIsNotFound) {
  Store store(testing_support::temp_dir("store_missing"));
  try {
    store.read_record("nope:q0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotFound);
  }
}

TEST(Store, ObjectRoundTripAndManifestValidation) {
  const auto dir = testing_support::temp_dir("store_object");
  RingSpec ring;
  ring.count = 25;
  ring.width = ring.height = 48;
  ring.focal = 40.0;
  {
    Store store(dir);
    write_fixture_dataset(store, {fixtures::builtin_fixtures()[0]}, ring, 512);
    store.write_record(sample_record("cube", "q0", 512, 9));
    store.register_records({sample_record("cube", "q0", 512, 9)});
  }
  Store store(dir);  // reopen from disk
  const auto scene = fixtures::build_scene(fixtures::builtin_fixtures()[0], ring, 512);
  const auto pc = store.load_cloud("cube");
  EXPECT_EQ(pc.positions, scene.cloud.positions);
  const auto views = store.load_views("cube");
  ASSERT_EQ(views.size(), 25u);
  for (std::size_t k = 0; k < views.size(); ++k) {
    EXPECT_EQ(views[k].depth, scene.views[k].depth);
    EXPECT_TRUE(views[k].intrinsics.isApprox(scene.views[k].intrinsics, 0.0));
    EXPECT_TRUE(views[k].world_to_camera.matrix().isApprox(scene.views[k].world_to_camera.matrix(), 0.0));
    EXPECT_EQ(read_png(views[k].image.path).pixels, scene.renders[k].pixels);
  }
  EXPECT_TRUE(validate_manifest(dir, store.manifest()).empty());

  auto m = store.manifest();
  m.records.push_back(m.records.front());
  m.objects.front().views[3].image = "objects/cube/views/missing.png";
  const auto problems = validate_manifest(dir, m);
  ASSERT_EQ(problems.size(), 2u);
  EXPECT_NE(problems[0].find("missing.png"), std::string::npos);
  EXPECT_NE(problems[1].find("duplicate record"), std::string::npos);
  // Manifest JSON round trip is lossless.
  EXPECT_EQ(to_json(manifest_from_json(to_json(store.manifest()))), to_json(store.manifest()));
}

TEST(Splits, NothingReviewedMeansAllTrain) {
  std::vector<SplitInput> in;
  for (int o = 0; o < 4; ++o)
    for (int q = 0; q < 5; ++q) in.push_back({"o" + std::to_string(o) + ":q" + std::to_string(q), "o" + std::to_string(o)});
  const auto s = build_test_split(in);
  EXPECT_EQ(s.train.size(), 20u);
  EXPECT_TRUE(s.test.empty());
  EXPECT_TRUE(s.held_out.empty());
}

TEST(Splits, OneReviewedRecordRemovesWholeObjectFromTrain) {
  std::vector<SplitInput> in;
  for (int o = 0; o < 3; ++o)
    for (int q = 0; q < 5; ++q) in.push_back({"o" + std::to_string(o) + ":q" + std::to_string(q), "o" + std::to_string(o)});
  in[7].status = ReviewStatus::Good;  // o1:q2
  const auto s = build_test_split(in);
  EXPECT_EQ(s.test, std::vector<std::string>{"o1:q2"});
  EXPECT_EQ(s.held_out.size(), 4u);
  EXPECT_EQ(s.train.size(), 10u);
  for (const auto& id : s.train) EXPECT_NE(split_record_id(id).first, "o1");

  const std::vector<std::string> unknown{"o9:q0"};
  try {
    build_test_split(in, unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownId);
  }
}

TEST(Splits, NotGoodStaysOutOfTestButBlocksTrain) {
  std::vector<SplitInput> in{{"a:q0", "a", ReviewStatus::NotGood},
                             {"a:q1", "a", ReviewStatus::Refined},
                             {"b:q0", "b", ReviewStatus::Ok},
                             {"c:q0", "c", ReviewStatus::Unreviewed}};
  const auto s = build_test_split(in);
  EXPECT_EQ(s.test, (std::vector<std::string>{"a:q1", "b:q0"}));
  EXPECT_EQ(s.held_out, std::vector<std::string>{"a:q0"});
  EXPECT_EQ(s.train, std::vector<std::string>{"c:q0"});
}

TEST(Export, TwoPairsDeterministicNamesAndZeroHeat) {
  const auto dir = testing_support::temp_dir("export");
  RingSpec ring;
  ring.width = ring.height = 64;
  ring.focal = 55.0;
  Store store(dir);
  write_fixture_dataset(store, {fixtures::builtin_fixtures()[0]}, ring, 1024);
  const auto pc = store.load_cloud("cube");
  const auto views = store.load_views("cube");

  AnnotationRecord r;
  r.query = {"q1", "cube", "t", "p", "box"};
  r.heatmap.object_id = "cube";
  r.heatmap.query_id = "q1";
  r.heatmap.values.assign(pc.size(), 0.0f);
  r.heatmap.support.assign(pc.size(), 0);
  r.provenance.seed = 11;
  r.selection = select_viewpoints(view_scores(r.heatmap, pc, views, default_visibility(pc)), 11);
  EXPECT_TRUE(r.selection->all_zero);

  ExportParams ep;
  ep.vp = default_visibility(pc);
  const auto first = export_2d_pairs(store, r, pc, views, ep);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].image, "exports/cube/q1_v0.png");
  EXPECT_EQ(first[0].heatmap, "exports/cube/q1_v0_heat.png");
  EXPECT_EQ(first[1].role, "challenge");
  for (const auto& ev : first) {
    const auto img = read_png(dir / ev.image);
    const auto heat = read_png(dir / ev.heatmap);
    EXPECT_EQ(img.width, 224);
    EXPECT_EQ(img.channels, 3);
    EXPECT_EQ(heat.channels, 1);
    EXPECT_TRUE(std::all_of(heat.pixels.begin(), heat.pixels.end(), [](auto p) { return p == 0; }));
  }
  const auto bytes = read_file_bytes(dir / first[1].image);
  const auto again = export_2d_pairs(store, r, pc, views, ep);
  EXPECT_EQ(to_json(again[1]), to_json(first[1]));
  EXPECT_EQ(read_file_bytes(dir / again[1].image), bytes);
}

TEST(Released, NpyReaderBothDtypes) {
  const std::vector<double> vals{0.5, -1.25, 3.0, 1e-3, 7.0, 8.0};
  for (bool f32 : {true, false}) {
    const auto arr = released::read_npy(npy_bytes({2, 3}, vals, f32));
    EXPECT_EQ(arr.shape, (std::vector<std::size_t>{2, 3}));
    for (std::size_t i = 0; i < vals.size(); ++i) EXPECT_EQ(arr.data[i], f32 ? static_cast<float>(vals[i]) : vals[i]);
  }
  auto bad = npy_bytes({2, 3}, vals, false);
  bad.pop_back();
  EXPECT_THROW(released::read_npy(bad), Error);
}

TEST(Released, ImportDirAndStats) {
  const auto dir = testing_support::temp_dir("released");
  const std::vector<double> pts{0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
  const std::vector<double> hm{1, 0, 0, 0, 0, 1, 0, 0};  // two queries on four points
  write_file_bytes(dir / "p.npy", npy_bytes({4, 3}, pts, true));
  write_file_bytes(dir / "h.npy", npy_bytes({2, 4}, hm, true));
  write_text_file(dir / "annotations.jsonl",
                  R"({"object_id": "x1", "class": "mug", "points": "p.npy", "queries": ["a", "b"], "heatmaps": "h.npy"})"
                  "\n");
  const auto objs = released::import_dir(dir);
  ASSERT_EQ(objs.size(), 1u);
  EXPECT_EQ(objs[0].points.cols(), 4);
  EXPECT_EQ(objs[0].points(2, 3), 1.0);
  ASSERT_EQ(objs[0].heatmaps.size(), 2u);
  const auto st = object_stats("x1", objs[0].heatmaps);
  ASSERT_TRUE(st.coverage.has_value());
  EXPECT_DOUBLE_EQ(*st.coverage, 0.5);
}
