#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "afforge/fixtures.hpp"
#include "afforge/partial.hpp"
#include "oracles.hpp"

using namespace afforge;

namespace {

Eigen::Matrix3Xd cols(std::initializer_list<Eigen::Vector3d> pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  Eigen::Index i = 0;
  for (const auto& p : pts) m.col(i++) = p;
  return m;
}

Eigen::Matrix3Xd random_points(std::mt19937_64& rng, Eigen::Index m) {
  Eigen::Matrix3Xd pts(3, m);
  // Integer lattice coordinates produce plenty of exact distance ties.
  const bool lattice = rng() % 2 == 0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> k(-3, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int d = 0; d < 3; ++d) pts(d, i) = lattice ? k(rng) : u(rng);
  }
  return pts;
}

}  // namespace

TEST(Fps, CollinearHandExample) {
  // Centroid 3.25: x = 10 is farthest, then x = 0 is farthest from it.
  const auto pts = cols({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {10, 0, 0}});
  EXPECT_EQ(farthest_point_sample(pts, 2), (std::vector<std::uint32_t>{3, 0}));
  EXPECT_EQ(farthest_point_sample(pts, 4), (std::vector<std::uint32_t>{3, 0, 2, 1}));
}

TEST(Fps, SquareTiesGoToLowestIndex) {
  const auto pts = cols({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}});
  EXPECT_EQ(farthest_point_sample(pts, 4), (std::vector<std::uint32_t>{0, 2, 1, 3}));
}

TEST(Fps, Errors) {
  try {
    farthest_point_sample(Eigen::Matrix3Xd(3, 0), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
  EXPECT_THROW(farthest_point_sample(cols({{0, 0, 0}}), 0), Error);
  EXPECT_EQ(farthest_point_sample(cols({{0, 0, 0}, {1, 1, 1}}), 10).size(), 2u);
}

TEST(Fps, DuplicatePointsStillDistinctIndices) {
  const auto pts = cols({{1, 0, 0}, {1, 0, 0}, {1, 0, 0}, {0, 0, 0}});
  const auto sel = farthest_point_sample(pts, 4);
  EXPECT_EQ(std::set<std::uint32_t>(sel.begin(), sel.end()).size(), 4u);
}

TEST(Fps, MatchesBruteForceAndPrefixStable) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 512);
    const auto pts = random_points(rng, m);
    const std::size_t k = 1 + rng() % static_cast<std::size_t>(m + 4);
    const auto sel = farthest_point_sample(pts, k);
    ASSERT_EQ(sel, oracle::fps(pts, k)) << "trial " << t;
    ASSERT_EQ(sel.size(), std::min<std::size_t>(k, m));
    const auto shorter = farthest_point_sample(pts, std::max<std::size_t>(1, k / 2));
    ASSERT_TRUE(std::equal(shorter.begin(), shorter.end(), sel.begin()));
  }
}

TEST(Fps, GreedyStepInvariant) {
  // Each pick's distance to the earlier picks is never smaller than any later
  // pick's distance to its own predecessors.
  std::mt19937_64 rng(3);
  const auto pts = random_points(rng, 400);
  const auto sel = farthest_point_sample(pts, 64);
  std::vector<double> gap;
  for (std::size_t s = 1; s < sel.size(); ++s) {
    double md = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < s; ++r) md = std::min(md, (pts.col(sel[s]) - pts.col(sel[r])).squaredNorm());
    gap.push_back(md);
  }
  for (std::size_t i = 1; i < gap.size(); ++i) EXPECT_LE(gap[i], gap[i - 1]);
}

TEST(MakePartial, FixtureCloudGivesUniqueVisibleIndices) {
  const auto scene = fixtures::build_scene(*fixtures::find_fixture("sphere"), {}, 16384);
  const auto vp = default_visibility(scene.cloud);
  const auto& cam = scene.views[3];
  const auto rec = make_partial(scene.cloud, cam, vp);
  EXPECT_EQ(rec.indices.size(), kPartialPoints);
  EXPECT_FALSE(rec.under_sampled);
  EXPECT_EQ(rec.source_view, 3);
  EXPECT_EQ(std::set<std::uint32_t>(rec.indices.begin(), rec.indices.end()).size(), kPartialPoints);
  const auto mask = visible(scene.cloud, cam, vp);
  for (auto i : rec.indices) ASSERT_TRUE(mask[i]);
  EXPECT_EQ(make_partial(scene.cloud, cam, vp), rec);
}

TEST(MakePartial, UnderSampledAndHeatRestriction) {
  const auto scene = fixtures::build_scene(*fixtures::find_fixture("cube"), {}, 600);
  const auto vp = default_visibility(scene.cloud);
  Heatmap3D heat{scene.cloud.object_id, "q0", std::vector<float>(600), std::vector<std::uint32_t>(600, 1), false};
  for (std::size_t i = 0; i < 600; ++i) heat.values[i] = static_cast<float>(i) / 600.0f;
  const auto rec = make_partial(scene.cloud, scene.views[0], vp, kPartialPoints, &heat);
  EXPECT_TRUE(rec.under_sampled);
  EXPECT_EQ(rec.indices, visible_subset(scene.cloud, scene.views[0], vp));
  ASSERT_TRUE(rec.heat.has_value());
  ASSERT_EQ(rec.heat->size(), rec.indices.size());
  for (std::size_t j = 0; j < rec.indices.size(); ++j) EXPECT_EQ((*rec.heat)[j], heat.values[rec.indices[j]]);

  Heatmap3D wrong = heat;
  wrong.values.resize(10);
  try {
    make_partial(scene.cloud, scene.views[0], vp, kPartialPoints, &wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
}

TEST(MakePartial, NothingVisible) {
  const auto scene = fixtures::build_scene(*fixtures::find_fixture("cube"), {}, 100);
  PointCloud behind = scene.cloud;
  const Eigen::Vector3d eye = ring_eye(RingSpec{}, 0);
  for (Eigen::Index i = 0; i < behind.positions.cols(); ++i) behind.positions.col(i) = eye * 3.0;
  try {
    make_partial(behind, scene.views[0], default_visibility(behind));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoVisiblePoints);
  }
}
