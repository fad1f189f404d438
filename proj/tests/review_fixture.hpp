#ifndef AFFORGE_TESTS_REVIEW_FIXTURE_HPP
#define AFFORGE_TESTS_REVIEW_FIXTURE_HPP

#include <algorithm>
#include <random>

#include "afforge/review.hpp"

namespace testing_support {

struct ReviewFixture {
  std::size_t reviewed_objects = 1000;
  std::size_t unreviewed_objects = 200;
  std::size_t good = 3615, ok = 615, not_good = 770;  // 72.3% / 12.3% / 15.4% of 5,000
  std::uint64_t seed = 2024;
};

inline std::string fixture_object(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "obj%05zu", i);
  return buf;
}

/// Records only (tiny heatmaps, no views): enough for ratings, stats and splits.
inline void write_review_records(afforge::Store& store, const ReviewFixture& fx) {
  using namespace afforge;
  store.bulk([&] {
    std::vector<AnnotationRecord> batch;
    for (std::size_t o = 0; o < fx.reviewed_objects + fx.unreviewed_objects; ++o) {
      for (int q = 0; q < kQueriesPerObject; ++q) {
        AnnotationRecord r;
        r.query = {"q" + std::to_string(q), fixture_object(o), "Point to the part", "part", "thing"};
        r.heatmap.object_id = r.query.object_id;
        r.heatmap.query_id = r.query.query_id;
        r.heatmap.values.assign(8, 0.25f * static_cast<float>(q % 4));
        r.heatmap.support.assign(8, 3);
        r.selection = ViewSelection{0, 1, false};
        store.write_record(r);
        batch.push_back(std::move(r));
      }
    }
    store.register_records(batch);
  });
}

/// Rates every record of the first `reviewed_objects` objects with the fixture's tier mix.
inline void submit_fixture_ratings(afforge::review::ReviewService& svc, const ReviewFixture& fx) {
  using namespace afforge::review;
  std::vector<std::string> ids;
  for (std::size_t o = 0; o < fx.reviewed_objects; ++o)
    for (int q = 0; q < afforge::kQueriesPerObject; ++q) ids.push_back(fixture_object(o) + ":q" + std::to_string(q));
  std::mt19937_64 rng(fx.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Rating r;
    r.record_id = ids[i];
    r.rater_id = "rater" + std::to_string(i % 10);
    r.timestamp = "2025-01-01T00:00:00Z";
    if (i < fx.good) {
      r.tier = Tier::Good;
    } else if (i < fx.good + fx.ok) {
      r.tier = Tier::Ok;
      r.criteria.coverage = (i % 2) == 0;
    } else {
      r.tier = Tier::NotGood;
      r.criteria.spatial_accuracy = false;
    }
    svc.submit_rating(r);
  }
}

}  // namespace testing_support

#endif  // AFFORGE_TESTS_REVIEW_FIXTURE_HPP
