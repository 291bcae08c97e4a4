#include <gtest/gtest.h>

#include <cmath>
#include <deque>

#include "ebm/sampler.hpp"

namespace ebm::sampler {
namespace {

using model::QuadraticEnergy;

// Gradient NaN for x > 0, zero otherwise.
class HalfNanEnergy final : public model::EnergyModel {
 public:
  HalfNanEnergy() : EnergyModel(QuadraticEnergy(Vector::Zero(1), 1.0).params()) {}
  std::string family() const override { return "half-nan"; }
  std::size_t input_dim() const override { return 1; }
  nlohmann::json hyperparams() const override { return nlohmann::json::object(); }
  std::unique_ptr<EnergyModel> clone() const override { return std::make_unique<HalfNanEnergy>(*this); }
  Vector energy_batch(const Points& x) const override { return Vector::Zero(x.cols()); }
  Points grad_x_batch(const Points& x) const override {
    Points g = Points::Zero(1, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(0, j) > 0.0) g(0, j) = NAN;
    }
    return g;
  }
  Vector grad_theta_weighted(const Points&, const Vector&) const override { return Vector::Zero(1); }
};

Points random_points(Rng& rng, Eigen::Index d, Eigen::Index n, double lo, double hi) {
  Points p(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) p(i, j) = rng.uniform(lo, hi);
  return p;
}

TEST(Lmc, EqualCoefficientsMatchCanonicalLangevin) {
  const Vector c = (Vector(2) << 0.3, -0.2).finished();
  const double s = 0.7;
  QuadraticEnergy q(c, s);
  Rng init(1);
  const Points x0 = random_points(init, 2, 50, -1, 1);
  const double eps = 0.01;
  LmcConfig cfg;
  cfg.steps = 20;
  cfg.alpha = {eps};
  cfg.beta = {eps};
  Rng a(7);
  const auto out = run_srlmc(q, ChainBatch(x0), cfg, a);

  // x <- x - (eps / 2) (x - c) / s^2 + sqrt(eps) xi, written out by hand.
  Rng b(7);
  Points x = x0;
  for (int t = 0; t < 20; ++t) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index i = 0; i < 2; ++i) {
        const double g = (x(i, j) - c(i)) / (s * s);
        x(i, j) = x(i, j) - (eps / 2.0) * g + std::sqrt(eps) * b.normal();
      }
    }
  }
  EXPECT_EQ(out.chains.positions, x);
  EXPECT_EQ(out.diverged, 0u);
}

TEST(Lmc, ZeroNoiseIsGradientDescent) {
  QuadraticEnergy q(Vector::Zero(1), 1.0);
  Rng rng(2);
  ChainBatch batch((Points(1, 3) << -1.0, 0.0, 2.0).finished());
  const auto next = lmc_step(q, batch, 0.1, 0.0, rng);
  EXPECT_DOUBLE_EQ(next.positions(0, 0), -1.0 + 0.05);
  EXPECT_DOUBLE_EQ(next.positions(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(next.positions(0, 2), 2.0 - 0.1);
}

TEST(Lmc, ClampAndGradClip) {
  QuadraticEnergy q(Vector::Zero(1), 0.01);
  const auto box = dist::BoxDomain::cube(1, -0.5, 0.5);
  StepOptions opt;
  opt.clamp = &box;
  Rng rng(3);
  ChainBatch batch(random_points(rng, 1, 200, -0.5, 0.5));
  for (int t = 0; t < 30; ++t) {
    batch = lmc_step(q, std::move(batch), 0.5, 0.5, rng, opt);
    EXPECT_GE(batch.positions.minCoeff(), -0.5);
    EXPECT_LE(batch.positions.maxCoeff(), 0.5);
  }
  StepOptions clip;
  clip.grad_clip = 2.0;
  const Points x0 = random_points(rng, 1, 100, -1, 1);
  const auto moved = lmc_step(q, ChainBatch(x0), 0.1, 0.0, rng, clip);
  EXPECT_LE((moved.positions - x0).cwiseAbs().maxCoeff(), 0.05 * 2.0 + 1e-15);
}

TEST(Lmc, NonFiniteGradientFreezesChain) {
  HalfNanEnergy e;
  Rng rng(4);
  ChainBatch batch((Points(1, 2) << -0.5, 0.5).finished());
  LmcConfig cfg;
  cfg.steps = 5;
  cfg.alpha = {1e-3};
  cfg.beta = {0.0};
  const auto out = run_srlmc(e, batch, cfg, rng);
  EXPECT_EQ(out.diverged, 1u);
  EXPECT_EQ(out.chains.diverged[0], 0);
  EXPECT_EQ(out.chains.diverged[1], 1);
  EXPECT_EQ(out.chains.positions(0, 1), 0.5);
  EXPECT_EQ(out.chains.healthy_positions().cols(), 1);
}

TEST(Lmc, OverflowIsFlagged) {
  QuadraticEnergy q(Vector::Zero(1), 1e-5);
  Rng rng(5);
  LmcConfig cfg;
  cfg.steps = 60;
  cfg.alpha = {1.0};
  cfg.beta = {0.0};
  const auto out = run_srlmc(q, ChainBatch((Points(1, 2) << 1.0, 0.0).finished()), cfg, rng);
  EXPECT_EQ(out.chains.diverged[0], 1);
  EXPECT_EQ(out.chains.diverged[1], 0);
  EXPECT_TRUE(out.chains.positions.allFinite());
}

TEST(Lmc, DeterministicTrace) {
  QuadraticEnergy q(Vector::Zero(2), 0.5);
  LmcConfig cfg;
  Rng i1(6), i2(6), a(8), b(8);
  std::vector<Points> ta, tb;
  const auto ra = run_srlmc(q, ChainBatch(random_points(i1, 2, 30, -1, 1)), cfg, a, &ta);
  const auto rb = run_srlmc(q, ChainBatch(random_points(i2, 2, 30, -1, 1)), cfg, b, &tb);
  ASSERT_EQ(ta.size(), cfg.steps + 1);
  EXPECT_EQ(ta, tb);
  EXPECT_EQ(ra.displacement, rb.displacement);
}

TEST(LmcConfig, Validation) {
  LmcConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rho = 10.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rho = 9.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.rho.reset();
  cfg.alpha = {1e-3, 1e-3};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.alpha = {-1.0};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.alpha = {1e-3};
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Lmc, ScheduleEntriesPerStep) {
  QuadraticEnergy q(Vector::Zero(1), 1.0);
  LmcConfig cfg;
  cfg.steps = 2;
  cfg.alpha = {0.2, 0.4};
  cfg.beta = {0.0, 0.0};
  Rng rng(9);
  const auto out = run_srlmc(q, ChainBatch(Points::Constant(1, 1, 1.0)), cfg, rng);
  EXPECT_DOUBLE_EQ(out.chains.positions(0, 0), (1.0 - 0.1) * (1.0 - 0.2));
}

// Law of N(0, s^2) targeted with alpha / beta = rho: discrete OU chain
// x' = (1 - a) x + sqrt(beta) xi, a = alpha / (2 s^2), with stationary
// variance beta / (a (2 - a)), close to s^2 / rho.
TEST(Lmc, TemperedStationaryVariance) {
  const double s = 1.0, rho = 10.0, alpha = 0.01, beta = alpha / rho;
  QuadraticEnergy q(Vector::Zero(1), s);
  Rng rng(10);
  const auto m = long_run_moments(q, Points::Zero(1, 200), alpha, beta, 6000, 0.2, rng);
  const double a = alpha / (2 * s * s);
  const double exact = beta / (a * (2 - a));
  EXPECT_NEAR(m.variance(0) / exact, 1.0, 0.03);
  EXPECT_NEAR(m.variance(0) / (s * s / rho), 1.0, 0.05);
  EXPECT_NEAR(m.mean(0), 0.0, 0.02);
}

TEST(ReplayBuffer, FifoMatchesDequeOracle) {
  ReplayBuffer buf(7, 1, 0.0);
  std::deque<double> oracle;
  Rng rng(11);
  double next = 0.0;
  for (int round = 0; round < 50; ++round) {
    const auto n = static_cast<Eigen::Index>(rng.below(5));
    Points batch(1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      batch(0, j) = next;
      oracle.push_back(next);
      next += 1.0;
      if (oracle.size() > 7) oracle.pop_front();
    }
    buf.push(batch);
    ASSERT_EQ(buf.size(), oracle.size());
    const Points c = buf.contents();
    for (std::size_t k = 0; k < oracle.size(); ++k) EXPECT_EQ(c(0, static_cast<Eigen::Index>(k)), oracle[k]);
  }
}

TEST(ReplayBuffer, DivergedChainsAreNotStored) {
  ReplayBuffer buf(10, 1, 0.0);
  ChainBatch b((Points(1, 3) << 1.0, 2.0, 3.0).finished());
  b.diverged[1] = 1;
  buf.push(b);
  ASSERT_EQ(buf.size(), 2u);
  EXPECT_EQ(buf.contents()(0, 1), 3.0);
}

TEST(ReplayBuffer, ReinitFraction) {
  const auto prop = dist::Proposal::uniform_interval(-1.0, 1.0);
  Rng rng(12);
  ReplayBuffer empty(100, 1, 0.05);
  const auto all_prop = empty.draw_init(prop, 1000, rng);
  EXPECT_LE(all_prop.positions.cwiseAbs().maxCoeff(), 1.0);

  ReplayBuffer buf(100, 1, 0.05);
  buf.push(Points::Constant(1, 100, 50.0));
  const auto init = buf.draw_init(prop, 100000, rng);
  const double fresh = (init.positions.array().abs() <= 1.0).cast<double>().mean();
  EXPECT_NEAR(fresh, 0.05, 0.004);

  ReplayBuffer never(100, 1, 0.0);
  never.push(Points::Constant(1, 10, 50.0));
  EXPECT_EQ(never.draw_init(prop, 1000, rng).positions.minCoeff(), 50.0);
  EXPECT_THROW(ReplayBuffer(10, 1, 1.5), InvalidArgument);
}

}  // namespace
}  // namespace ebm::sampler
