#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include <gtest/gtest.h>

#include "afforge/fixtures.hpp"
#include "afforge/http_clients.hpp"
#include "afforge/lift.hpp"
#include "afforge/mock_clients.hpp"
#include "test_support.hpp"

using namespace afforge;
using nlohmann::json;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no afforge::Error thrown";
  return ErrorKind::InvalidArgument;
}

json five_queries(int n = 5) {
  json q = json::array();
  for (int i = 0; i < n; ++i) q.push_back({{"text", "Point to the part p" + std::to_string(i)}, {"affordance", "p"}});
  return {{"object_class", "mug"}, {"queries", q}};
}

/// Local stand-in for the model services running on an ephemeral port.
class FakeServer {
 public:
  FakeServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpConfig config_for(const std::string& url) {
  HttpConfig cfg;
  cfg.query.base_url = cfg.point.base_url = cfg.segment.base_url = url;
  cfg.timeout = std::chrono::milliseconds(2000);
  return cfg;
}

ImageRef tiny_image(const std::string& name) {
  const auto dir = testing_support::temp_dir("clients_" + name);
  write_png(dir / "v.png", Image(4, 4, 3, 100));
  return {"obj", 0, (dir / "v.png").string()};
}

}  // namespace

TEST(NormalizePoints, DropsSortsAndCaps) {
  std::vector<InteractionPoint> pts{{0, 1, 1, 0.2}, {0, -1, 1, 0.9}, {0, 2, 2, 0.8},
                                    {0, 3, 3, 0.8}, {0, 9, 0, 1.0},  {0, 7, 7, 0.5}};
  const auto out = normalize_points(pts, 8, 8, 3);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].u, 2);  // 0.8, first of the tie
  EXPECT_EQ(out[1].u, 3);
  EXPECT_EQ(out[2].u, 7);
  EXPECT_TRUE(normalize_points({{0, NAN, 1, 1}}, 8, 8, 3).empty());
}

TEST(Codec, Base64AndFloatMaps) {
  const std::string foobar = "foobar";
  const std::vector<std::uint8_t> bytes(foobar.begin(), foobar.end());
  EXPECT_EQ(base64_encode(bytes), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm9vYg=="), std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 4));
  EXPECT_THROW(base64_decode("abc"), Error);

  Grid<float> g(3, 2, std::vector<float>{1.5f, -2.0f, 0.0f, 1e-30f, 3.25f, -0.0f});
  const auto enc = encode_map(g);
  EXPECT_EQ(enc.h, 2);
  EXPECT_EQ(enc.w, 3);
  const auto raw = base64_decode(enc.data);
  ASSERT_EQ(raw.size(), 24u);
  EXPECT_EQ(raw[0], 0x00);  // 1.5f = 0x3FC00000, little-endian
  EXPECT_EQ(raw[3], 0x3F);
  const auto back = decode_map(enc);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(back.values()[i]),
                                                std::bit_cast<std::uint32_t>(g.values()[i]));
}

TEST(Wire, ParseErrors) {
  EXPECT_EQ(kind_of([] { wire::parse_queries("not json", "o"); }), ErrorKind::MalformedResponse);
  EXPECT_EQ(kind_of([] { wire::parse_queries(five_queries(4).dump(), "o"); }), ErrorKind::MalformedResponse);
  EXPECT_EQ(kind_of([] { wire::parse_queries(five_queries(6).dump(), "o"); }), ErrorKind::MalformedResponse);
  const auto qs = wire::parse_queries(five_queries().dump(), "o");
  ASSERT_EQ(qs.size(), 5u);
  EXPECT_EQ(qs[4].query_id, "q4");
  EXPECT_EQ(qs[0].object_class, "mug");

  EXPECT_EQ(kind_of([] { wire::parse_points(R"({"points":[{"u":"a","v":1}]})", 0); }),
            ErrorKind::MalformedResponse);
  const auto pts = wire::parse_points(R"({"points":[{"u":1.5,"v":2}]})", 3);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].confidence, 1.0);
  EXPECT_EQ(pts[0].view_id, 3);

  const auto ok = wire::logits_response(Grid<float>(4, 3, 0.5f)).dump();
  EXPECT_EQ(wire::parse_logits(ok, 1, 4, 3).logits(3, 2), 0.5f);
  EXPECT_EQ(kind_of([&] { wire::parse_logits(ok, 1, 3, 4); }), ErrorKind::MalformedResponse);
  const auto nan = wire::logits_response(Grid<float>(2, 2, std::numeric_limits<float>::quiet_NaN())).dump();
  EXPECT_EQ(kind_of([&] { wire::parse_logits(nan, 1, 2, 2); }), ErrorKind::MalformedResponse);
  auto short_data = json::parse(ok);
  short_data["logits"]["data"] = "AAAA";
  EXPECT_EQ(kind_of([&] { wire::parse_logits(short_data.dump(), 1, 4, 3); }), ErrorKind::MalformedResponse);
}

TEST(Mock, DeterministicAndDisjointUnion) {
  const auto scene = fixtures::build_scene(*fixtures::find_fixture("cylinder"), {}, 256);
  MockServices a, b;
  const auto& view = scene.views[2].image;
  const auto qa = a.generate_queries({view}, {});
  EXPECT_EQ(qa, b.generate_queries({view}, {}));
  EXPECT_EQ(qa[0].object_class, "mug");
  EXPECT_EQ(qa[0].text, "Point to the part where you would hold the mug");

  const auto p0 = a.point_at(view, 128, 128, qa[0]);
  const auto p3 = a.point_at(view, 128, 128, qa[3]);
  ASSERT_EQ(p0.size(), 1u);
  ASSERT_EQ(p3.size(), 1u);
  EXPECT_EQ(p0, b.point_at(view, 128, 128, qa[0]));
  const auto l0 = a.segment_at(view, 128, 128, p0).logits;
  const auto l3 = a.segment_at(view, 128, 128, p3).logits;
  const auto both = a.segment_at(view, 128, 128, {p0[0], p3[0]}).logits;
  EXPECT_EQ(l0, b.segment_at(view, 128, 128, p0).logits);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) ASSERT_EQ(both(x, y), std::max(l0(x, y), l3(x, y)));
}

TEST(Mock, FailureInjection) {
  MockConfig cfg;
  cfg.fail_points = true;
  MockServices m(cfg);
  AffordanceQuery q{"q0", "cube", "t", "a", "box"};
  EXPECT_EQ(kind_of([&] { m.point_at({"cube", 0, {}}, 128, 128, q); }), ErrorKind::ServiceUnreachable);
}

TEST(LogitsToHeatmap, AllZeroLogitsGiveHalf) {
  const auto h = logits_to_heatmap({2, Grid<float>(5, 4, 0.0f)});
  for (float v : h.values.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Retry, PolicyCountsAttempts) {
  int calls = 0;
  const RetryPolicy fast{3, 1, std::chrono::milliseconds(0)};
  EXPECT_EQ(kind_of([&] {
              call_with_retry(fast, [&]() -> int {
                ++calls;
                throw Error(ErrorKind::Timeout, "x");
              });
            }),
            ErrorKind::Timeout);
  EXPECT_EQ(calls, 4);
  calls = 0;
  EXPECT_EQ(kind_of([&] {
              call_with_retry(fast, [&]() -> int {
                ++calls;
                throw Error(ErrorKind::InvalidArgument, "x");
              });
            }),
            ErrorKind::InvalidArgument);
  EXPECT_EQ(calls, 1);
}

TEST(HttpServices, FourQueriesTwiceIsMalformed) {
  FakeServer fake;
  std::atomic<int> hits{0};
  fake.server().Post("/v1/queries", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto body = json::parse(req.body);
    EXPECT_EQ(body["images"].size(), 1u);
    EXPECT_TRUE(body["prompt_cfg"].contains("system_template"));
    res.set_content(five_queries(4).dump(), "application/json");
  });
  HttpServices http(config_for(fake.url()));
  const auto img = tiny_image("four");
  EXPECT_EQ(kind_of([&] { call_with_retry(RetryPolicy{}, [&] { return http.generate_queries({img}, {}); }); }),
            ErrorKind::MalformedResponse);
  EXPECT_EQ(hits.load(), 2);
}

TEST(HttpServices, TransportRetriesThenSuccess) {
  FakeServer fake;
  std::atomic<int> hits{0};
  std::string auth;
  fake.server().Post("/api/v1/point", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 503;
      return;
    }
    auth = req.get_header_value("Authorization");
    const auto body = json::parse(req.body);
    EXPECT_EQ(body["max_points"], 3);
    EXPECT_EQ(body["text"], "Point to the part x");
    res.set_content(R"({"points":[{"u":1,"v":1,"confidence":0.3},{"u":2,"v":2,"confidence":0.9},{"u":99,"v":0}]})",
                    "application/json");
  });
  auto cfg = config_for(fake.url() + "/api/");
  cfg.bearer_token = "secret";
  HttpServices http(cfg);
  const auto img = tiny_image("retry");
  AffordanceQuery q{"q0", "obj", "Point to the part x", "x", "thing"};
  const auto pts =
      call_with_retry(RetryPolicy{3, 1, std::chrono::milliseconds(1)}, [&] { return http.point_at(img, 4, 4, q); });
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(auth, "Bearer secret");
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].u, 2);
}

TEST(HttpServices, SegmentRoundTripAndTimeout) {
  FakeServer fake;
  fake.server().Post("/v1/segment", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    if (body["points"][0]["u"] == 0.0) std::this_thread::sleep_for(std::chrono::milliseconds(600));
    Grid<float> l(4, 4, -1.0f);
    l(1, 2) = 5.0f;
    res.set_content(wire::logits_response(l).dump(), "application/json");
  });
  auto cfg = config_for(fake.url());
  cfg.timeout = std::chrono::milliseconds(250);
  HttpServices http(cfg);
  const auto img = tiny_image("segment");
  const auto m = http.segment_at(img, 4, 4, {{0, 1.0, 2.0, 1.0}});
  EXPECT_EQ(m.logits(1, 2), 5.0f);
  EXPECT_EQ(kind_of([&] { http.segment_at(img, 4, 4, {{0, 0.0, 0.0, 1.0}}); }), ErrorKind::Timeout);
}

TEST(HttpServices, UnreachableHost) {
  std::string url;
  {
    FakeServer probe;  // grab a free port, then close it
    url = probe.url();
  }
  HttpServices http(config_for(url));
  AffordanceQuery q{"q0", "obj", "t", "a", "c"};
  EXPECT_EQ(kind_of([&] { http.point_at(tiny_image("down"), 4, 4, q); }), ErrorKind::ServiceUnreachable);
}
