#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "microgrid/errors.hpp"
#include "microgrid/market.hpp"

using namespace microgrid;

namespace {
const PriceSlot kPrices{0.04, 0.10, 0.25};
}

TEST(ClearMarket, BalancedCommunityClearsAtInternalPrice) {
  const MarketOutcome o = clear_totals(7.0, 7.0, kPrices);
  EXPECT_DOUBLE_EQ(o.sell_price, 0.10);
  EXPECT_DOUBLE_EQ(o.buy_price, 0.10);
}

TEST(ClearMarket, NoBuyersExportsEverything) {
  const MarketOutcome o = clear_totals(5.0, 0.0, kPrices);
  EXPECT_DOUBLE_EQ(o.sell_price, 0.04);
  EXPECT_DOUBLE_EQ(o.buy_price, 0.10);
}

TEST(ClearMarket, BlendedSellPrice) {
  const MarketOutcome o = clear_totals(10.0, 4.0, kPrices);
  EXPECT_NEAR(o.sell_price, 0.064, 1e-15);
  EXPECT_DOUBLE_EQ(o.buy_price, 0.10);
}

TEST(ClearMarket, BlendedBuyPrice) {
  // (0.10 * 2 + 0.25 * 6) / 8
  const MarketOutcome o = clear_totals(2.0, 8.0, kPrices);
  EXPECT_NEAR(o.buy_price, 0.2125, 1e-15);
  EXPECT_DOUBLE_EQ(o.sell_price, 0.10);
}

TEST(ClearMarket, DegenerateSlot) {
  const MarketOutcome o = clear_totals(0.0, 0.0, kPrices);
  EXPECT_EQ(o.sell_price, 0.10);
  EXPECT_EQ(o.buy_price, 0.10);
}

TEST(ClearMarket, TotalsFromActions) {
  const std::vector<Action> acts{{-3.0, 0.0}, {2.0, 1.0}, {0.5, 0.0}, {-1.0, 0.0}};
  const MarketOutcome o = clear_market(acts, kPrices);
  EXPECT_DOUBLE_EQ(o.total_sell, 4.0);
  EXPECT_DOUBLE_EQ(o.total_buy, 2.5);
}

TEST(ClearMarket, RejectsBadInput) {
  EXPECT_THROW(clear_totals(1.0, 1.0, PriceSlot{0.2, 0.1, 0.3}), ConfigError);
  EXPECT_THROW(clear_totals(-1.0, 1.0, kPrices), ConfigError);
}

TEST(Reward, Examples) {
  MarketOutcome o;
  o.buy_price = 0.2;
  o.sell_price = 0.1;
  EXPECT_EQ(compute_reward(0.0, o), 0.0);
  EXPECT_DOUBLE_EQ(compute_reward(5.0, o), -1.0);
  EXPECT_DOUBLE_EQ(compute_reward(-5.0, o), 0.5);
}

TEST(Behavior, NoEvsGivesZeroHistogram) {
  const std::vector<Action> acts{{1.0, 0.0}, {-2.0, 0.0}};
  const std::vector<int> mask{0, 0};
  const MarketBehavior b = aggregate_market_behavior(acts, mask, 10, 6.0);
  EXPECT_DOUBLE_EQ(b.buy_total, 1.0);
  EXPECT_DOUBLE_EQ(b.sell_total, 2.0);
  for (double h : b.ev_hist) EXPECT_EQ(h, 0.0);
}

TEST(Behavior, PointMassAtMaxRate) {
  const std::vector<Action> acts{{1.0, 6.0}, {1.0, 6.0}, {1.0, 6.0}};
  const std::vector<int> mask{1, 1, 1};
  const MarketBehavior b = aggregate_market_behavior(acts, mask, 10, 6.0);
  EXPECT_EQ(b.ev_hist.back(), 1.0);
}

TEST(Behavior, ExtremesSplitEvenly) {
  const std::vector<Action> acts{{0.0, -6.0}, {0.0, 6.0}, {0.0, 2.0}};
  const std::vector<int> mask{1, 1, 0};
  const MarketBehavior b = aggregate_market_behavior(acts, mask, 10, 6.0);
  EXPECT_EQ(b.ev_hist[0], 0.5);
  EXPECT_EQ(b.ev_hist[9], 0.5);
}

TEST(Behavior, BinEdgesGoUp) {
  // 10 bins over [-6, 6] are 1.2 kW wide; -4.8 sits on the edge of bins 0 and 1.
  EXPECT_EQ(ev_hist_bin(-4.8, 6.0, 10), 1);
  EXPECT_EQ(ev_hist_bin(0.0, 6.0, 10), 5);
  EXPECT_EQ(ev_hist_bin(-6.0, 6.0, 10), 0);
  EXPECT_EQ(ev_hist_bin(6.0, 6.0, 10), 9);
}

TEST(Property, PriceBoundsFuzzed) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100000; ++k) {
    double p[3] = {u(rng), u(rng), u(rng)};
    std::sort(p, p + 3);
    const PriceSlot prices{p[0], p[1], p[2]};
    const double s = u(rng) < 0.1 ? 0.0 : 100.0 * u(rng);
    const double b = u(rng) < 0.1 ? 0.0 : 100.0 * u(rng);
    const MarketOutcome o = clear_totals(s, b, prices);
    ASSERT_LE(prices.sell_ext, o.sell_price);
    ASSERT_LE(o.sell_price, prices.internal);
    ASSERT_LE(prices.internal, o.buy_price);
    ASSERT_LE(o.buy_price, prices.buy_ext);
  }
}

TEST(Property, MoneyConservation) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> trades(20);
    for (auto& t : trades) t = n(rng);
    const MarketOutcome o = clear_market(trades, kPrices);
    double paid = 0.0;
    for (double t : trades) paid -= compute_reward(t, o);
    ASSERT_NEAR(paid, external_settlement(o, kPrices), 1e-9);
  }
}

TEST(Property, ScaleCovariance) {
  const std::vector<double> trades{-3.0, 1.0, 2.5, -0.5};
  const MarketOutcome a = clear_market(trades, kPrices);
  std::vector<double> scaled = trades;
  for (auto& t : scaled) t *= 7.5;
  const MarketOutcome b = clear_market(scaled, kPrices);
  EXPECT_NEAR(a.sell_price, b.sell_price, 1e-15);
  EXPECT_NEAR(a.buy_price, b.buy_price, 1e-15);
}

TEST(Property, SellPriceMonotoneInDemand) {
  double prev = -1.0;
  for (double buy = 0.0; buy <= 20.0; buy += 0.25) {
    const double ps = clear_totals(10.0, buy, kPrices).sell_price;
    ASSERT_GE(ps, prev);
    prev = ps;
  }
}
