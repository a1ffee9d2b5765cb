#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "../support/oracles.hpp"
#include "microgrid/cbe.hpp"
#include "microgrid/errors.hpp"

using namespace microgrid;

TEST(Kl, Examples) {
  EXPECT_EQ(kl_gaussian({0.0, 1.0}, {0.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(kl_gaussian({1.0, 1.0}, {0.0, 1.0}), 0.5);
  EXPECT_NEAR(kl_gaussian({0.0, 2.0}, {0.0, 1.0}), 1.5 - std::log(2.0), 1e-15);
}

TEST(Kl, MatchesQuadrature) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> mean(-6.0, 6.0), sd(0.3, 4.0);
  for (int k = 0; k < 20; ++k) {
    const GaussianSpec p{mean(rng), sd(rng)};
    const GaussianSpec q{mean(rng), sd(rng)};
    EXPECT_NEAR(kl_gaussian(p, q), oracle::kl_quadrature(p.mean, p.std, q.mean, q.std), 1e-6);
  }
}

TEST(Kl, NonNegativeAndAsymmetric) {
  const GaussianSpec a{0.0, 0.5}, b{1.0, 2.0};
  EXPECT_GT(kl_gaussian(a, b), 0.0);
  EXPECT_GT(std::abs(kl_gaussian(a, b) - kl_gaussian(b, a)), 0.1);
}

TEST(Collective, PopulationVariance) {
  const CbeConfig cfg = CbeConfig::for_max_rate(6.0);
  const std::vector<double> acts{0.0, 2.0, 4.0};
  const auto col = estimate_collective_policy(acts, cfg);
  ASSERT_TRUE(col.has_value());
  EXPECT_DOUBLE_EQ(col->mean, 2.0);
  EXPECT_NEAR(col->std * col->std, 8.0 / 3.0, 1e-12);
}

TEST(Collective, SumVariance) {
  CbeConfig cfg = CbeConfig::for_max_rate(6.0);
  cfg.variance = CollectiveVariance::kUnnormalizedSum;
  const std::vector<double> acts{0.0, 2.0, 4.0};
  EXPECT_NEAR(std::pow(estimate_collective_policy(acts, cfg)->std, 2), 8.0, 1e-12);
}

TEST(Collective, EmptyAndIdenticalActions) {
  const CbeConfig cfg = CbeConfig::for_max_rate(6.0);
  EXPECT_FALSE(estimate_collective_policy(std::vector<double>{}, cfg).has_value());
  const std::vector<double> same(5, 3.0);
  EXPECT_EQ(estimate_collective_policy(same, cfg)->std, cfg.sigma_floor);
}

TEST(CbeValue, ProductOfFlooredDivergences) {
  const CbeConfig cfg = CbeConfig::for_max_rate(6.0);
  const GaussianSpec ind{1.0, 1.5}, col{2.0, 1.0};
  const double expected = kl_gaussian(col, ind) * kl_gaussian({6.0, 0.6}, ind);
  EXPECT_NEAR(cbe_value(ind, col, cfg), expected, 1e-15);
  // Individual identical to the crowd: the crowd term hits the floor.
  EXPECT_NEAR(cbe_value(col, col, cfg), 1e-3 * kl_gaussian({6.0, 0.6}, col), 1e-15);
}

TEST(Shaping, Examples) {
  CbeConfig cfg = CbeConfig::for_max_rate(6.0, 1.0);
  EXPECT_DOUBLE_EQ(shaped_reward(1.0, 2.0, cfg), 0.5);
  cfg.beta = 0.0;
  EXPECT_EQ(shaped_reward(-0.3, 1e-9, cfg), -0.3);
}

TEST(Shaping, PenaltyGrowsAsPolicyApproachesExtremeCrowd) {
  // Crowd near max rate; the individual slides from idle toward it.
  const CbeConfig cfg = CbeConfig::for_max_rate(6.0, 1.0);
  const GaussianSpec crowd{5.5, 0.8};
  double prev_penalty = 0.0;
  for (double mu = 0.0; mu <= 5.5; mu += 0.5) {
    const double penalty = -shaped_reward(0.0, cbe_value({mu, 1.0}, crowd, cfg), cfg);
    EXPECT_GT(penalty, prev_penalty) << "mu " << mu;
    prev_penalty = penalty;
  }
}

TEST(Shaping, DiverseCrowdPenalizedLessThanHerd) {
  const CbeConfig cfg = CbeConfig::for_max_rate(6.0, 1.0);
  const GaussianSpec ind{5.0, 1.0};
  const double herd = cbe_value(ind, {5.0, 0.5}, cfg);
  const double diverse = cbe_value(ind, {1.0, 3.0}, cfg);
  EXPECT_GT(diverse, herd);
}

TEST(Config, Validation) {
  CbeConfig cfg = CbeConfig::for_max_rate(6.0, 0.5);
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.ext_std, 0.6);
  cfg.beta = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
