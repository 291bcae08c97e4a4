#include <gtest/gtest.h>

#include <cmath>

#include "ebm/model.hpp"
#include "ebm/rng.hpp"
#include "test_util.hpp"

namespace ebm::model {
namespace {

using test::fd_grad_theta;
using test::fd_grad_x;
using test::oracle_mlp_energy;
using test::random_spec;
using test::random_vector;
using test::rel_error;


TEST(ParamVector, RejectsBadLayouts) {
  EXPECT_THROW(ParamVector({{"a", 0, 2}, {"b", 3, 1}}, Vector::Zero(4)), InvalidArgument);
  EXPECT_THROW(ParamVector({{"a", 0, 2}}, Vector::Zero(3)), InvalidArgument);
  Vector bad = Vector::Zero(2);
  bad(1) = NAN;
  EXPECT_FALSE(ParamVector({{"a", 0, 2}}, bad).all_finite());
  QuadraticEnergy q(Vector::Zero(2), 1.0);
  EXPECT_THROW(q.set_param_values(bad), InvalidArgument);
  ParamVector ok({{"a", 0, 2}, {"b", 2, 1}}, Vector::LinSpaced(3, 1, 3));
  EXPECT_EQ(ok.view("b")(0), 3.0);
  EXPECT_THROW(ok.segment("c"), InvalidArgument);
}

TEST(QuadraticEnergy, Examples) {
  QuadraticEnergy q(Vector::Zero(2), 1.0);
  EXPECT_EQ(q.energy(Vector::Zero(2)), 0.0);
  const Vector g = q.grad_x((Vector(2) << 2.0, -1.0).finished());
  EXPECT_EQ(g(0), 2.0);
  EXPECT_EQ(g(1), -1.0);
  QuadraticEnergy c((Vector(2) << 0.5, -0.25).finished(), 2.0);
  const Vector x = (Vector(2) << 1.0, 1.0).finished();
  const Vector gt = c.grad_theta(x).values();
  EXPECT_DOUBLE_EQ(gt(0), -(1.0 - 0.5) / 4.0);
  EXPECT_DOUBLE_EQ(gt(1), -(1.0 + 0.25) / 4.0);
  EXPECT_THROW(QuadraticEnergy(Vector::Zero(1), 0.0), InvalidArgument);
}

TEST(Model, DimensionMismatchIsRejectedWithDiagnostic) {
  QuadraticEnergy q(Vector::Zero(2), 1.0);
  try {
    q.energy(Vector::Zero(3));
    FAIL() << "expected a throw";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("quadratic"), std::string::npos);
  }
  Vector nan(2);
  nan << 0.0, NAN;
  EXPECT_THROW(q.energy(nan), InvalidArgument);
}

TEST(GridEnergy, KnotIdentityAndSlope) {
  const Vector v = (Vector(5) << 3.0, 1.0, 4.0, 1.0, 5.0).finished();
  GridEnergy g(-1.0, 1.0, v);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(g.energy(Vector::Constant(1, g.knot(k))), v(static_cast<Eigen::Index>(k)));
    const Vector gt = g.grad_theta(Vector::Constant(1, g.knot(k))).values();
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(gt(j), j == static_cast<Eigen::Index>(k) ? 1.0 : 0.0);
  }
  const double x = -0.3;  // between knots 1 (-0.5) and 2 (0)
  EXPECT_DOUBLE_EQ(g.grad_x(Vector::Constant(1, x))(0), (v(2) - v(1)) / g.spacing());
}

TEST(GridEnergy, ShiftDoesNotChangeGradX) {
  Rng rng(5);
  const Vector v = random_vector(rng, 9, -2, 2);
  GridEnergy a(-1.0, 1.0, v), b(-1.0, 1.0, (v.array() + 7.5).matrix());
  for (int i = 0; i < 200; ++i) {
    const Vector x = Vector::Constant(1, rng.uniform(-1.2, 1.2));
    EXPECT_NEAR(a.grad_x(x)(0), b.grad_x(x)(0), 1e-12 * std::max(1.0, std::abs(a.grad_x(x)(0))));
  }
}

TEST(GridEnergy, FiniteDifferences100Fixtures) {
  Rng rng(11);
  for (int f = 0; f < 100; ++f) {
    const std::size_t knots = 2 + rng.below(30);
    GridEnergy g(-1.0, 1.0, random_vector(rng, knots, -3, 3));
    double x;
    do {
      x = rng.uniform(-0.999, 0.999);
    } while (std::abs(std::remainder(x - g.lo(), g.spacing())) < 1e-4);
    const Vector xv = Vector::Constant(1, x);
    EXPECT_LT(rel_error(g.grad_x(xv), fd_grad_x(g, xv)), 1e-4) << "fixture " << f;
    EXPECT_LT(rel_error(g.grad_theta(xv).values(), fd_grad_theta(g, xv)), 1e-4) << "fixture " << f;
  }
}

TEST(QuadraticEnergy, FiniteDifferences100Fixtures) {
  Rng rng(12);
  for (int f = 0; f < 100; ++f) {
    const std::size_t d = 1 + rng.below(4);
    QuadraticEnergy q(random_vector(rng, d, -1, 1), rng.uniform(0.3, 2.0));
    const Vector x = random_vector(rng, d, -2, 2);
    EXPECT_LT(rel_error(q.grad_x(x), fd_grad_x(q, x)), 1e-4);
    EXPECT_LT(rel_error(q.grad_theta(x).values(), fd_grad_theta(q, x)), 1e-4);
  }
}

class MlpHeads : public ::testing::TestWithParam<MlpHead> {};

TEST_P(MlpHeads, ForwardMatchesStraightLineOracle) {
  Rng rng(21);
  for (int f = 0; f < 50; ++f) {
    const MlpSpec spec = random_spec(rng, GetParam());
    MlpEnergy m(spec, rng.next_u64());
    const Vector x = random_vector(rng, spec.widths.front(), -1.5, 1.5);
    const double oracle = oracle_mlp_energy(spec, m.params(), x, nullptr);
    EXPECT_NEAR(m.energy(x), oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_P(MlpHeads, FiniteDifferences100Fixtures) {
  Rng rng(GetParam() == MlpHead::scalar ? 31 : 32);
  int done = 0;
  while (done < 100) {
    const MlpSpec spec = random_spec(rng, GetParam());
    MlpEnergy m(spec, rng.next_u64());
    const Vector x = random_vector(rng, spec.widths.front(), -1.0, 1.0);
    double min_pre = 0.0;
    oracle_mlp_energy(spec, m.params(), x, &min_pre);
    if (min_pre < 1e-3) continue;  // too close to a kink for finite differences
    EXPECT_LT(rel_error(m.grad_x(x), fd_grad_x(m, x)), 1e-4) << "fixture " << done;
    EXPECT_LT(rel_error(m.grad_theta(x).values(), fd_grad_theta(m, x)), 1e-4) << "fixture " << done;
    ++done;
  }
}

TEST_P(MlpHeads, BatchedWeightedGradientMatchesPointwiseSum) {
  Rng rng(41);
  const MlpSpec spec = random_spec(rng, GetParam());
  MlpEnergy m(spec, 9);
  Points x(static_cast<Eigen::Index>(spec.widths.front()), 7);
  for (auto& v : x.reshaped()) v = rng.uniform(-1, 1);
  Vector w(7);
  for (auto& v : w) v = rng.uniform(0, 1);
  Vector expected = Vector::Zero(static_cast<Eigen::Index>(m.params().size()));
  for (Eigen::Index j = 0; j < 7; ++j) expected += w(j) * m.grad_theta(x.col(j)).values();
  EXPECT_LT(rel_error(m.grad_theta_weighted(x, w), expected), 1e-12);
}

TEST_P(MlpHeads, EvaluationIsDeterministic) {
  Rng rng(51);
  const MlpSpec spec = random_spec(rng, GetParam());
  MlpEnergy m(spec, 3);
  const Vector x = random_vector(rng, spec.widths.front(), -1, 1);
  const double e = m.energy(x);
  const Vector gx = m.grad_x(x);
  const Vector gt = m.grad_theta(x).values();
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(m.energy(x), e);
    EXPECT_EQ(m.grad_x(x), gx);
    EXPECT_EQ(m.grad_theta(x).values(), gt);
  }
}

INSTANTIATE_TEST_SUITE_P(Heads, MlpHeads, ::testing::Values(MlpHead::scalar, MlpHead::reconstruction),
                         [](const ::testing::TestParamInfo<MlpHead>& info) {
                           return info.param == MlpHead::scalar ? std::string("scalar") : std::string("reconstruction");
                         });

TEST(MlpEnergy, RejectsInvalidSpecs) {
  EXPECT_THROW(MlpEnergy(MlpSpec{{1}, 0.2, MlpHead::scalar}, 1), InvalidArgument);
  EXPECT_THROW(MlpEnergy(MlpSpec{{1, 4, 2}, 0.2, MlpHead::scalar}, 1), InvalidArgument);
  EXPECT_THROW(MlpEnergy(MlpSpec{{2, 4, 1}, 0.2, MlpHead::reconstruction}, 1), InvalidArgument);
  EXPECT_THROW(MlpEnergy(MlpSpec{{1, 4, 1}, 0.0, MlpHead::scalar}, 1), InvalidArgument);
}

TEST(MlpEnergy, InitializationIsBoundedAndSeeded) {
  const MlpSpec spec{{2, 16, 8, 1}, 0.2, MlpHead::scalar};
  MlpEnergy a(spec, 4), b(spec, 4), c(spec, 5);
  EXPECT_EQ(a.params().values(), b.params().values());
  EXPECT_NE(a.params().values(), c.params().values());
  const double bound0 = std::sqrt(6.0 / (2 + 16));
  EXPECT_LE(a.params().view("W0").cwiseAbs().maxCoeff(), bound0);
}

TEST(Checkpoint, RoundTripsEveryFamily) {
  Rng rng(61);
  std::vector<std::unique_ptr<EnergyModel>> models;
  models.push_back(std::make_unique<QuadraticEnergy>(random_vector(rng, 3, -1, 1), 0.7));
  models.push_back(std::make_unique<GridEnergy>(-1.0, 2.0, random_vector(rng, 11, -1, 1)));
  models.push_back(std::make_unique<MlpEnergy>(MlpSpec{{1, 5, 5, 1}, 0.2, MlpHead::reconstruction}, 8));
  for (const auto& m : models) {
    const auto text = to_checkpoint(*m).dump();
    const auto back = from_checkpoint(nlohmann::json::parse(text));
    EXPECT_EQ(back->family(), m->family());
    EXPECT_EQ(back->hyperparams(), m->hyperparams());
    EXPECT_EQ(back->params().values(), m->params().values());
  }
}

}  // namespace
}  // namespace ebm::model
