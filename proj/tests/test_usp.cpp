#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "ebm/usp.hpp"

namespace ebm::usp {
namespace {

using model::QuadraticEnergy;

constexpr double kEps = 0.05;

ParticleSet line(std::initializer_list<double> xs) {
  Points p(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index j = 0;
  for (double x : xs) p(0, j++) = x;
  return ParticleSet(p, kEps, dist::BoxDomain::cube(1, -1.0, 1.0));
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

TEST(Maximization, StepExamples) {
  QuadraticEnergy q(Vector::Zero(1), 1.0);
  auto ps = line({0.5, -0.2, 0.0});
  const std::vector<std::size_t> sel{0, 1};
  maximization_step(q, ps, sel, 0.1, 1);
  EXPECT_DOUBLE_EQ(ps.points(0, 0), 0.45);
  EXPECT_DOUBLE_EQ(ps.points(0, 1), -0.18);
  EXPECT_EQ(ps.points(0, 2), 0.0);
}

TEST(Maximization, ProjectsOntoDomain) {
  QuadraticEnergy q(Vector::Constant(1, 5.0), 1.0);
  auto ps = line({0.5});
  const std::vector<std::size_t> sel{0};
  maximization_step(q, ps, sel, 0.5, 20);
  EXPECT_EQ(ps.points(0, 0), 1.0);
  EXPECT_TRUE(ps.inside_domain());
}

TEST(Maximization, EnergyDecreasesForSmallSteps) {
  QuadraticEnergy q((Vector(2) << 0.3, 0.1).finished(), 0.4);
  Rng rng(1);
  const auto box = dist::BoxDomain::cube(2, -1, 1);
  ParticleSet ps(box.sample(100, rng), kEps, box);
  const auto idx = all_indices(100);
  for (int it = 0; it < 10; ++it) {
    const Vector before = q.energy_batch(ps.points);
    maximization_step(q, ps, idx, 1e-3, 1);
    const Vector after = q.energy_batch(ps.points);
    for (Eigen::Index j = 0; j < 100; ++j) EXPECT_LE(after(j), before(j));
  }
}

TEST(Repulsion, GradientExamples) {
  auto pair = line({0.0, kEps / 2});
  const auto both = all_indices(2);
  EXPECT_EQ(repulsion_gradient(pair, 0, both, 1)(0), -1.0);
  EXPECT_EQ(repulsion_gradient(pair, 1, both, 1)(0), 1.0);

  auto three = line({-kEps / 3, 0.0, kEps / 3});
  EXPECT_NEAR(repulsion_gradient(three, 1, all_indices(3), 1)(0), 0.0, 1e-15);

  auto far = line({0.0, 2 * kEps});
  EXPECT_EQ(repulsion_gradient(far, 0, all_indices(2), 1)(0), 0.0);
}

TEST(Repulsion, PairStepMovesApart) {
  auto ps = line({0.0, kEps / 2});
  const std::vector<std::size_t> lambda{0, 1};
  Rng rng(2);
  repulsion_step(ps, lambda, {}, 0.005, 1, rng);
  EXPECT_DOUBLE_EQ(ps.points(0, 0), -0.005);
  EXPECT_DOUBLE_EQ(ps.points(0, 1), kEps / 2 + 0.005);
}

TEST(Repulsion, GammaAnchorsStayPut) {
  auto ps = line({0.0, 0.01, 0.02, 0.5});
  const std::vector<std::size_t> lambda{1};
  const std::vector<std::size_t> gamma{0, 2, 3};
  const Points before = ps.points;
  Rng rng(3);
  repulsion_step(ps, lambda, gamma, 0.001, 5, rng);
  EXPECT_EQ(ps.points(0, 0), before(0, 0));
  EXPECT_EQ(ps.points(0, 2), before(0, 2));
  EXPECT_EQ(ps.points(0, 3), before(0, 3));
  EXPECT_THROW(repulsion_step(ps, lambda, lambda, 0.001, 1, rng), InvalidArgument);
}

TEST(Repulsion, CoincidentPairsSeparateOppositely) {
  Points p = Points::Zero(2, 2);
  ParticleSet ps(p, kEps, dist::BoxDomain::cube(2, -1, 1));
  Rng rng(4);
  const auto st = repulsion_step(ps, all_indices(2), {}, 0.01, 1, rng);
  EXPECT_EQ(st.coincident, 2u);
  EXPECT_NEAR((ps.points.col(0) + ps.points.col(1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((ps.points.col(0) - ps.points.col(1)).norm(), 0.02, 1e-12);
}

TEST(Repulsion, RecoversSeparation) {
  Rng rng(5);
  const auto box = dist::BoxDomain::cube(2, -1, 1);
  Points p(2, 64);
  for (Eigen::Index j = 0; j < 64; ++j) p.col(j) << rng.uniform(0, 0.02), rng.uniform(0, 0.02);
  ParticleSet ps(p, kEps, box);
  EXPECT_LT(min_pairwise_distance(ps.points), kEps);
  repulsion_step(ps, all_indices(64), {}, kEps / 10, 3000, rng);
  EXPECT_GE(min_pairwise_distance(ps.points), 0.9 * kEps);
  EXPECT_TRUE(ps.inside_domain());
}

TEST(Repulsion, BucketedNeighborsMatchBruteForce) {
  Rng rng(6);
  const auto box = dist::BoxDomain::cube(2, -1, 1);
  ParticleSet ps(box.sample(400, rng), 0.2, box);
  const auto lambda = sample_without_replacement(400, 150, rng);
  std::vector<std::size_t> gamma;
  std::vector<uint8_t> in(400, 0);
  for (auto i : lambda) in[i] = 1;
  for (std::size_t i = 0; i < 400; ++i)
    if (!in[i]) gamma.push_back(i);

  ParticleSet stepped = ps;
  Rng a(7), b(7);
  repulsion_step(stepped, lambda, gamma, 0.01, 1, a);

  const uint64_t tie = b.next_u64();
  const auto everyone = all_indices(400);
  Points expected = ps.points;
  for (auto i : lambda) {
    expected.col(static_cast<Eigen::Index>(i)) += 0.01 * repulsion_gradient(ps, i, everyone, tie);
  }
  box.project(expected);
  EXPECT_EQ(stepped.points, expected);
}

TEST(Combined, RepelsCrowdedAndClimbsIsolated) {
  QuadraticEnergy q(Vector::Zero(1), 1.0);
  auto ps = line({0.5, 0.51, -0.5});
  Rng rng(8);
  const std::vector<std::size_t> lambda{0, 2};
  const std::vector<std::size_t> gamma{1};
  combined_step(q, ps, lambda, gamma, 0.1, 0.005, rng);
  EXPECT_DOUBLE_EQ(ps.points(0, 0), 0.5 - 0.005);
  EXPECT_DOUBLE_EQ(ps.points(0, 2), -0.5 + 0.05);
  EXPECT_EQ(ps.points(0, 1), 0.51);
}

TEST(Psusp, ZeroRoundsIsIdentity) {
  QuadraticEnergy q(Vector::Zero(2), 1.0);
  Rng rng(9);
  const auto box = dist::BoxDomain::cube(2, -1, 1);
  ParticleSet ps(box.sample(50, rng), kEps, box);
  const Points before = ps.points;
  UspConfig cfg;
  cfg.rounds = 0;
  cfg.lambda_size = 10;
  cfg.estimation_size = 10;
  psusp_round(q, ps, cfg, rng);
  EXPECT_EQ(ps.points, before);
}

TEST(Psusp, DeterministicAndInsideDomain) {
  QuadraticEnergy q((Vector(2) << 2.0, 0.0).finished(), 0.5);
  const auto box = dist::BoxDomain::cube(2, -1, 1);
  UspConfig cfg;
  cfg.rounds = 10;
  cfg.lambda_size = 40;
  cfg.estimation_size = 50;
  for (bool combined : {false, true}) {
    cfg.combined = combined;
    Rng i1(10), i2(10);
    ParticleSet a(box.sample(200, i1), kEps, box), b(box.sample(200, i2), kEps, box);
    Rng r1(11), r2(11);
    psusp_round(q, a, cfg, r1);
    psusp_round(q, b, cfg, r2);
    EXPECT_EQ(a.points, b.points);
    EXPECT_TRUE(a.inside_domain());
  }
}

TEST(UspConfig, Validation) {
  UspConfig cfg;
  EXPECT_NO_THROW(cfg.validate(5000));
  EXPECT_THROW(cfg.validate(500), InvalidArgument);
  cfg.lambda_size = 100;
  cfg.estimation_size = 100;
  cfg.gamma_size = 450;
  EXPECT_THROW(cfg.validate(500), InvalidArgument);
  cfg.gamma_size.reset();
  EXPECT_EQ(cfg.resolved_gamma_size(150), 50u);
  cfg.max_steps = 2;
  cfg.combined = true;
  EXPECT_THROW(cfg.validate(500), InvalidArgument);
  cfg.combined = false;
  cfg.max_steps = 0;
  EXPECT_THROW(cfg.validate(500), InvalidArgument);
}

TEST(Selection, UniformFrequencies) {
  auto ps = line({0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  Rng rng(12);
  std::vector<double> hits(10, 0.0);
  const int draws = 30000;
  for (int t = 0; t < draws; ++t) {
    const auto s = select_estimation_points(ps, 3, rng);
    ASSERT_EQ(s.size(), 3u);
    ASSERT_TRUE(std::is_sorted(s.begin(), s.end()));
    ASSERT_TRUE(std::adjacent_find(s.begin(), s.end()) == s.end());
    for (auto i : s) hits[i] += 1.0;
  }
  for (double h : hits) EXPECT_NEAR(h / draws, 0.3, 0.01);
  EXPECT_THROW(select_estimation_points(ps, 11, rng), InvalidArgument);
}

TEST(Particles, CsvRoundTripAndDistance) {
  Rng rng(13);
  const auto box = dist::BoxDomain::cube(2, -1, 1);
  ParticleSet ps(box.sample(20, rng), kEps, box);
  const auto path = (std::filesystem::temp_directory_path() / "ebm_particles_test.csv").string();
  write_particles_csv(path, ps, QuadraticEnergy(Vector::Zero(2), 1.0));
  EXPECT_EQ(read_particles_csv(path), ps.points);
  std::filesystem::remove(path);
  EXPECT_DOUBLE_EQ(min_pairwise_distance((Points(1, 3) << 0.0, 0.3, 0.5).finished()), 0.2);
}

}  // namespace
}  // namespace ebm::usp
