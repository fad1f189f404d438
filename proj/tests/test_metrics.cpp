#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "afforge/metrics.hpp"
#include "oracles.hpp"

using namespace afforge;
namespace m = afforge::metrics;
using Vec = std::vector<double>;

namespace {

std::span<const double> s(const Vec& v) { return v; }

/// Mix of continuous, quantized (many ties), binary and sparse maps.
Vec random_map(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v(n);
  switch (rng() % 4) {
    case 0: for (auto& x : v) x = u(rng); break;
    case 1: for (auto& x : v) x = std::floor(u(rng) * 5.0) / 4.0; break;
    case 2: for (auto& x : v) x = u(rng) < 0.4 ? 1.0 : 0.0; break;
    default: for (auto& x : v) x = u(rng) < 0.2 ? u(rng) : 0.0; break;
  }
  return v;
}

void expect_same(std::optional<double> got, std::optional<double> want, double tol = 1e-9) {
  ASSERT_EQ(got.has_value(), want.has_value());
  if (got) {
    EXPECT_NEAR(*got, *want, tol);
  }
}

}  // namespace

TEST(Aiou, IdenticalAndComplementBinary) {
  const Vec gt{1, 0, 1, 1, 0, 0, 1, 0};
  Vec inv(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) inv[i] = 1 - gt[i];
  EXPECT_DOUBLE_EQ(m::aiou(s(gt), s(gt)), 1.0);
  EXPECT_DOUBLE_EQ(m::aiou(s(inv), s(gt)), 0.0);
}

TEST(Aiou, UniformPredictionAgainstFortyPercent) {
  // pred = 0.6 everywhere: thresholds 0.01..0.60 select all points (IoU 0.4),
  // thresholds 0.61..0.99 select none (IoU 0). Mean = 60 * 0.4 / 99.
  Vec gt(10, 0.0);
  for (int i = 0; i < 4; ++i) gt[i] = 1.0;
  const Vec pred(10, 0.6);
  EXPECT_NEAR(m::aiou(s(pred), s(gt)), *oracle::aiou(pred, gt), 1e-12);
  EXPECT_NEAR(m::aiou(s(pred), s(gt)), 60 * 0.4 / 99, 1e-12);
}

TEST(Aiou, BothEmptyCountsAsOne) {
  const Vec zero(6, 0.0);
  EXPECT_DOUBLE_EQ(m::aiou(s(zero), s(zero)), 1.0);
}

TEST(Aiou, LengthMismatch) {
  const Vec a(3, 0.0), b(4, 0.0);
  try {
    m::aiou(s(a), s(b));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
}

TEST(Auc, ClosedForms) {
  const Vec gt{1, 1, 0, 0, 0};
  EXPECT_EQ(m::auc(s(Vec{0.9, 0.8, 0.1, 0.2, 0.3}), s(gt)), 1.0);
  EXPECT_NEAR(*m::auc(s(Vec(5, 0.42)), s(gt)), 0.5, 1e-12);
  EXPECT_FALSE(m::auc(s(Vec{0.1, 0.2}), s(Vec{1, 1})).has_value());
  EXPECT_FALSE(m::auc(s(Vec{0.1, 0.2}), s(Vec{0, 0})).has_value());
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vec pred = random_map(rng, 64), gt = random_map(rng, 64);
    Vec warped(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) warped[i] = std::exp(3 * pred[i]) - 7;
    expect_same(m::auc(s(warped), s(gt)), m::auc(s(pred), s(gt)), 1e-12);
  }
}

TEST(Sim, ClosedForms) {
  EXPECT_NEAR(*m::sim(s(Vec{0.5, 0.5}), s(Vec{1, 0})), 0.5, 1e-12);
  const Vec a{0.2, 0.7, 0.1};
  EXPECT_NEAR(*m::sim(s(a), s(a)), 1.0, 1e-12);
  EXPECT_EQ(*m::sim(s(Vec{1, 0, 0}), s(Vec{0, 0, 1})), 0.0);
  EXPECT_FALSE(m::sim(s(Vec{0, 0}), s(Vec{1, 0})).has_value());
}

TEST(Mae, ClosedForms) {
  const Vec a{0.1, 0.5, 0.2};
  EXPECT_EQ(m::mae(s(a), s(a)), 0.0);
  EXPECT_NEAR(m::mae(s(Vec{0.2, 0.6, 0.3}), s(a)), 0.1, 1e-12);
}

TEST(Kld, ClosedForms) {
  EXPECT_NEAR(*m::kld(s(Vec{0.5, 0.5}), s(Vec{1, 0})), std::log(2.0), 1e-12);
  const Vec a{0.3, 0.1, 0.6};
  EXPECT_NEAR(*m::kld(s(a), s(a)), 0.0, 1e-9);
  EXPECT_FALSE(m::kld(s(a), s(Vec{0, 0, 0})).has_value());
  EXPECT_TRUE(std::isfinite(*m::kld(s(Vec{0, 0, 0}), s(a))));
}

TEST(Nss, ConstantPredictionIsZero) {
  EXPECT_EQ(*m::nss(s(Vec(9, 0.3)), s(Vec{0, 0, 1, 0, 0, 0, 0, 0, 0})), 0.0);
  EXPECT_FALSE(m::nss(s(Vec(4, 0.3)), s(Vec(4, 0.0))).has_value());
}

TEST(Nss, DeltaMapClosedForm) {
  // Delta prediction equal to a single-fixation GT over M pixels:
  // mean = 1/M, population sigma = sqrt(1/M - 1/M^2), NSS = (1 - 1/M) / sigma.
  const int M = 16;
  Vec delta(M, 0.0);
  delta[5] = 1.0;
  const double sigma = std::sqrt(1.0 / M - 1.0 / (M * M));
  EXPECT_NEAR(*m::nss(s(delta), s(delta)), (1.0 - 1.0 / M) / sigma, 1e-12);
}

TEST(Nss, GaussianBlobsPositive) {
  Vec blob(32 * 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) blob[y * 32 + x] = std::exp(-((x - 12.0) * (x - 12.0) + (y - 20.0) * (y - 20.0)) / 18.0);
  const auto v = m::nss(s(blob), s(blob));
  ASSERT_TRUE(v.has_value());
  EXPECT_GT(*v, 0.0);
  EXPECT_NEAR(*v, *oracle::nss(blob, blob), 1e-9);
}

TEST(Coverage, Examples) {
  const Vec ones(5, 1.0), zeros(5, 0.0);
  EXPECT_EQ(*m::coverage<double>({s(ones)}), 1.0);
  EXPECT_EQ(*m::coverage<double>({s(zeros), s(zeros)}), 0.0);
  EXPECT_FALSE(m::coverage<double>({}).has_value());
  const Vec a{1, 0, 0, 0}, b{0, 0.6, 0, 0.4};
  EXPECT_EQ(*m::coverage<double>({s(a), s(b)}), 0.5);
}

TEST(Coverage, MonotoneWhenAnnotationAdded) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vec> anns;
    m::Annotations<double> spans;
    double prev = 0.0;
    for (int k = 0; k < 5; ++k) {
      anns.push_back(random_map(rng, 50));
    }
    for (int k = 0; k < 5; ++k) {
      spans.emplace_back(anns[k]);
      const double c = *m::coverage(spans);
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(Diversity, Examples) {
  const Vec a{0.2, 0.8};
  EXPECT_NEAR(*m::diversity<double>({s(a), s(a), s(a)}), 0.0, 1e-9);
  EXPECT_FALSE(m::diversity<double>({s(a)}).has_value());
  // Two annotations P = (0.25, 0.75), Q = (0.75, 0.25): KL(P||Q) = KL(Q||P) = 0.5 ln 3.
  const Vec p{0.25, 0.75}, q{0.75, 0.25};
  EXPECT_NEAR(*m::diversity<double>({s(p), s(q)}), 0.5 * std::log(3.0), 1e-9);
}

TEST(Metrics, SymmetryAndBounds) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 64;
    Vec a = random_map(rng, n), b = random_map(rng, n);
    auto sab = m::sim(s(a), s(b)), sba = m::sim(s(b), s(a));
    expect_same(sab, sba, 1e-12);
    if (sab) {
      EXPECT_GE(*sab, 0.0);
      EXPECT_LE(*sab, 1.0);
    }
    Vec ba(n), bb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ba[i] = a[i] >= 0.5 ? 1.0 : 0.0;
      bb[i] = b[i] >= 0.5 ? 1.0 : 0.0;
    }
    EXPECT_NEAR(m::aiou(s(ba), s(bb)), m::aiou(s(bb), s(ba)), 1e-12);
    if (auto k = m::kld(s(a), s(b))) {
      EXPECT_GE(*k, 0.0);
    }
  }
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 128;
    const Vec pred = random_map(rng, n), gt = random_map(rng, n);
    EXPECT_NEAR(m::aiou(s(pred), s(gt)), *oracle::aiou(pred, gt), 1e-9);
    expect_same(m::auc(s(pred), s(gt)), oracle::auc(pred, gt));
    expect_same(m::sim(s(pred), s(gt)), oracle::sim(pred, gt));
    EXPECT_NEAR(m::mae(s(pred), s(gt)), oracle::mae(pred, gt), 1e-9);
    expect_same(m::kld(s(pred), s(gt)), oracle::kld(pred, gt));
    expect_same(m::nss(s(pred), s(gt)), oracle::nss(pred, gt));
    std::vector<Vec> anns{pred, gt, random_map(rng, n)};
    m::Annotations<double> spans{s(anns[0]), s(anns[1]), s(anns[2])};
    expect_same(m::coverage(spans), oracle::coverage(anns));
    expect_same(m::diversity(spans), oracle::diversity(anns));
  }
}

TEST(MetricReport, AbsentValuesCarryNotes) {
  m::MetricReport r;
  const Vec pred{0.1, 0.2}, gt{1, 1};
  m::evaluate_3d(r, s(pred), s(gt));
  EXPECT_FALSE(r.auc.value.has_value());
  EXPECT_FALSE(r.auc.note.empty());
  const auto j = m::to_json(r);
  EXPECT_TRUE(j["AUC"]["value"].is_null());
  m::Aggregate agg;
  agg.add(r.auc);
  agg.add({0.5, {}});
  EXPECT_EQ(agg.to_json()["mean"], 0.5);
  EXPECT_EQ(agg.to_json()["absent"], 1);
}
