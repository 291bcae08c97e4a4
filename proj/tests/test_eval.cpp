#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ebm/eval.hpp"

namespace ebm::eval {
namespace {

TEST(Fpr, Examples) {
  ScoreSet s{{1, 2, 3, 4}, {0, 2.5}};
  EXPECT_EQ(fpr_at_tpr(s, 0.95), 0.5);
  EXPECT_EQ(fpr_at_tpr(s, 0.5), 0.0);
  EXPECT_EQ(fpr_at_tpr({{5, 6, 7}, {1, 2}}, 0.95), 0.0);
  EXPECT_EQ(fpr_at_tpr({{1, 2}, {5, 6, 7}}, 0.95), 1.0);
  EXPECT_EQ(fpr_at_tpr({{3, 2, 1, 0}, {2.5, -1}}, 0.95), 0.5);
  std::vector<double> same;
  for (int i = 0; i < 20; ++i) same.push_back(0.1 * i);
  EXPECT_EQ(fpr_at_tpr({same, same}, 0.95), 0.95);
  for (std::size_t n : {20u, 21u, 40u, 101u}) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    EXPECT_DOUBLE_EQ(fpr_at_tpr({v, v}, 0.95), std::ceil(0.95 * static_cast<double>(n)) / static_cast<double>(n));
    EXPECT_EQ(fpr_at_tpr({std::vector<double>(n, 0.3), std::vector<double>(n, 0.3)}, 0.95), 1.0);
  }
  EXPECT_THROW(fpr_at_tpr({{}, {1}}, 0.95), InvalidArgument);
  EXPECT_THROW(fpr_at_tpr(s, 0.0), InvalidArgument);
  EXPECT_THROW(fpr_at_tpr({{NAN}, {1}}, 0.95), InvalidArgument);
}

TEST(Aupr, Examples) {
  EXPECT_EQ(aupr({{5, 6, 7}, {1, 2}}), 1.0);
  EXPECT_EQ(aupr({{1}, {2}}), 0.5);
  EXPECT_EQ(aupr({{3}, {3}}), 0.5);
  // in {2, 0}, out {1}: recall 1/2 at precision 1, then 1/2 at 2/3.
  EXPECT_NEAR(aupr({{2, 0}, {1}}), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
}

TEST(Aupr, SameDistributionGivesPrevalence) {
  Rng rng(7);
  ScoreSet s;
  for (int i = 0; i < 10000; ++i) {
    s.in_scores.push_back(rng.normal());
    s.out_scores.push_back(rng.normal());
  }
  EXPECT_NEAR(aupr(s), 0.5, 0.02);
}

TEST(Fpr, MonotoneInTarget) {
  Rng rng(8);
  ScoreSet s;
  for (int i = 0; i < 200; ++i) {
    s.in_scores.push_back(rng.normal() + 1.0);
    s.out_scores.push_back(rng.normal());
  }
  double prev = 0.0;
  for (double t = 0.05; t <= 1.0; t += 0.05) {
    const double f = fpr_at_tpr(s, t);
    EXPECT_GE(f, prev);
    prev = f;
  }
}

double brute_fpr(const ScoreSet& s, double tpr) {
  std::set<double, std::greater<>> candidates(s.in_scores.begin(), s.in_scores.end());
  for (double tau : candidates) {
    double cov = 0;
    for (double v : s.in_scores) cov += v >= tau;
    if (cov / static_cast<double>(s.in_scores.size()) >= tpr) {
      double f = 0;
      for (double v : s.out_scores) f += v >= tau;
      return f / static_cast<double>(s.out_scores.size());
    }
  }
  return NAN;
}

double brute_aupr(const ScoreSet& s) {
  std::set<double, std::greater<>> thresholds(s.in_scores.begin(), s.in_scores.end());
  thresholds.insert(s.out_scores.begin(), s.out_scores.end());
  double area = 0, prev = 0;
  for (double tau : thresholds) {
    double tp = 0, fp = 0;
    for (double v : s.in_scores) tp += v >= tau;
    for (double v : s.out_scores) fp += v >= tau;
    const double recall = tp / static_cast<double>(s.in_scores.size());
    area += (recall - prev) * (tp / (tp + fp));
    prev = recall;
  }
  return area;
}

TEST(Metrics, MatchBruteForceOn1000Sets) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    ScoreSet s;
    const auto ni = 1 + rng.below(30), no = 1 + rng.below(30);
    for (uint64_t i = 0; i < ni; ++i) s.in_scores.push_back(static_cast<double>(rng.below(12)));
    for (uint64_t i = 0; i < no; ++i) s.out_scores.push_back(static_cast<double>(rng.below(12)) - 2.0);
    for (double tpr : {0.5, 0.95, 1.0}) EXPECT_DOUBLE_EQ(fpr_at_tpr(s, tpr), brute_fpr(s, tpr));
    EXPECT_NEAR(aupr(s), brute_aupr(s), 1e-12);
  }
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    ScoreSet s, u;
    for (int i = 0; i < 50; ++i) s.in_scores.push_back(rng.uniform(-1, 2));
    for (int i = 0; i < 40; ++i) s.out_scores.push_back(rng.uniform(-2, 1));
    auto f = [](double x) { return std::exp(x / 3.0) + 7.0; };
    for (double v : s.in_scores) u.in_scores.push_back(f(v));
    for (double v : s.out_scores) u.out_scores.push_back(f(v));
    EXPECT_EQ(fpr_at_tpr(s, 0.95), fpr_at_tpr(u, 0.95));
    EXPECT_EQ(aupr(s), aupr(u));
  }
}

TEST(Shell, Examples) {
  Rng rng(3);
  EXPECT_EQ(shell_concentration(3, 100, ComponentLaw::constant(1.0), 0.05, rng), 1.0);
  const double g = shell_concentration(1000, 2000, ComponentLaw::gaussian(0, 1), 0.05, rng);
  EXPECT_GT(g, 0.95);
  double prev = 0.0;
  for (std::size_t d : {2, 10, 100, 1000}) {
    const double f = shell_concentration(d, 5000, ComponentLaw::uniform(-1, 1), 0.05, rng);
    EXPECT_GE(f, prev - 0.01) << d;
    prev = f;
  }
  EXPECT_GE(prev, 0.99);
  EXPECT_THROW(shell_concentration(0, 10, ComponentLaw::uniform(-1, 1), 0.05, rng), InvalidArgument);
  EXPECT_THROW(shell_concentration(2, 10, ComponentLaw::uniform(-1, 1), 0.0, rng), InvalidArgument);
}

TEST(Shell, TwoDimensionalUniformMatchesAreaFraction) {
  // r = sqrt(2/3); the annulus sits inside the square, so the hit rate is
  // its area over 4.
  const double r = std::sqrt(2.0 / 3.0), eps = 0.05;
  const double area = M_PI * r * r * ((1 + eps) * (1 + eps) - (1 - eps) * (1 - eps));
  Rng rng(4);
  const double f = shell_concentration(2, 200000, ComponentLaw::uniform(-1, 1), eps, rng);
  EXPECT_NEAR(f, area / 4.0, 0.003);
}

TEST(ModeMass, UniformHalves) {
  const auto box = dist::BoxDomain::cube(1, -1, 1);
  const auto grid = dist::tabulate(box, {1000}, Vector::Zero(1000));
  const std::vector<Region> halves{Interval{-INFINITY, 0.0}, Interval{0.0, INFINITY}};
  const auto rep = mode_mass(grid, halves);
  ASSERT_EQ(rep.modes.size(), 2u);
  EXPECT_NEAR(rep.modes[0].learned_mass, 0.5, 1e-12);
  EXPECT_NEAR(rep.modes[1].learned_mass, 0.5, 1e-12);
  EXPECT_NEAR(rep.max_min_ratio(), 1.0, 1e-10);
  const std::vector<Region> overlap{Interval{-1, 0.5}, Interval{0, 1}};
  EXPECT_THROW(mode_mass(grid, overlap), InvalidArgument);
}

TEST(ModeMass, RingBasinsHoldOneSixthEach) {
  const auto ring = dist::GaussianMixture::six_mode_ring();
  const auto box = dist::BoxDomain::cube(2, -1.5, 1.5);
  const auto grid = dist::mixture_grid(ring, box, {400, 400});
  const auto rep = mode_mass(grid, voronoi_basins(ring), &grid);
  for (const auto& m : rep.modes) {
    EXPECT_NEAR(m.learned_mass, 1.0 / 6.0, 1e-3);
    EXPECT_NEAR(*m.ratio, 1.0, 1e-12);
  }
}

TEST(Basins, WatershedSplitsAtZero) {
  const auto b = watershed_basins_1d(dist::GaussianMixture::two_gaussians_1d(), dist::BoxDomain::cube(1, -1, 1));
  ASSERT_EQ(b.size(), 2u);
  EXPECT_NEAR(std::get<Interval>(b[0]).hi, 0.0, 1e-12);
  EXPECT_EQ(assign_region(b, Vector::Constant(1, -0.7)), 0u);
  EXPECT_EQ(assign_region(b, Vector::Constant(1, 0.7)), 1u);
  const auto v = voronoi_basins(dist::GaussianMixture::six_mode_ring());
  EXPECT_EQ(assign_region(v, (Vector(2) << -0.9, 0.05).finished()), 3u);
}

TEST(Histogram, MassesAndBins) {
  const auto box = dist::BoxDomain::cube(1, 0, 1);
  const Points s = (Points(1, 5) << 0.05, 0.15, 0.16, 0.99, 3.0).finished();
  const auto h = histogram(s, box, {10});
  EXPECT_EQ(h.dropped, 1u);
  EXPECT_DOUBLE_EQ(h.mass.sum(), 1.0);
  EXPECT_DOUBLE_EQ(h.mass(1), 0.5);
  EXPECT_EQ(histogram_bin(box, {10}, Vector::Constant(1, 1.0)), 9u);
  EXPECT_EQ(histogram_bin(box, {10}, Vector::Constant(1, -0.1)), 10u);

  const Vector w = (Vector(5) << 3, 1, 0, 0, 100).finished();
  const auto hw = histogram(s, box, {10}, &w);
  EXPECT_DOUBLE_EQ(hw.mass(0), 0.75);
  EXPECT_EQ(histogram_tv(h, h), 0.0);

  const auto left = histogram((Points(1, 1) << 0.01).finished(), box, {10});
  const auto right = histogram((Points(1, 1) << 0.99).finished(), box, {10});
  EXPECT_EQ(histogram_tv(left, right), 1.0);

  Rng rng(5);
  const auto sq = dist::BoxDomain::cube(2, -1, 1);
  const auto h2 = histogram(sq.sample(10000, rng), sq, {32, 32});
  EXPECT_NEAR(h2.mass.sum(), 1.0, 1e-12);
  EXPECT_EQ(h2.mass.size(), 1024);
}

TEST(Ood, RegionAndSampler) {
  const auto ring = dist::GaussianMixture::six_mode_ring();
  EXPECT_FALSE(in_ood_region(ring, (Vector(2) << 1.0, 0.2).finished(), 3.0));
  EXPECT_TRUE(in_ood_region(ring, (Vector(2) << 0.0, 0.0).finished(), 3.0));
  Rng rng(6);
  const auto box = dist::BoxDomain::cube(2, -1.5, 1.5);
  const Points p = sample_ood(ring, box, 3.0, 2000, rng);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    EXPECT_TRUE(in_ood_region(ring, p.col(j), 3.0));
    EXPECT_TRUE(box.contains(p.col(j)));
  }
  EXPECT_THROW(sample_ood(ring, box, 100.0, 10, rng), InvalidArgument);
}

}  // namespace
}  // namespace ebm::eval
