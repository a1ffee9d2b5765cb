#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "microgrid/errors.hpp"
#include "microgrid/predictor.hpp"

using namespace microgrid;

namespace {

PredictorConfig small_config() {
  PredictorConfig cfg;
  cfg.window = 4;
  cfg.hidden = 16;
  cfg.bins = 5;
  cfg.minibatch = 8;
  return cfg;
}

MarketBehavior behavior(double sell, double buy, std::vector<double> hist) {
  return MarketBehavior{sell, buy, std::move(hist)};
}

HistoryWindow full_window(const PredictorConfig& cfg) {
  HistoryWindow w(cfg.window);
  for (int i = 0; i < cfg.window; ++i) {
    w.push(Eigen::VectorXd::Constant(kCompactSummaryDim, 0.1 * i), cold_start_behavior(cfg.bins));
  }
  return w;
}

}  // namespace

TEST(Summary, LayoutAndMeans) {
  std::vector<HouseholdState> states(2);
  states[0].home_soc = 0.2;
  states[0].pv_gen = 4.0;
  states[0].base_load = 1.0;
  states[1].home_soc = 0.6;
  states[1].ev_available = 1;
  states[1].ev_soc = 0.5;
  states[1].base_load = 3.0;
  const MarketSummary s = summarize_slot(3, 24, PriceSlot{0.03, 0.06, 0.09}, states, SummaryScales{});
  ASSERT_EQ(s.current.size(), summary_dim(24));
  EXPECT_EQ(s.current(3), 1.0);
  EXPECT_EQ(s.current.head(24).sum(), 1.0);
  EXPECT_NEAR(s.current(24), 0.1, 1e-15);
  EXPECT_NEAR(s.current(26), 0.3, 1e-15);
  EXPECT_NEAR(s.current(27), 0.4, 1e-15);
  EXPECT_NEAR(s.current(28), 0.5, 1e-15);
  EXPECT_NEAR(s.current(29), 0.5, 1e-15);
  EXPECT_NEAR(s.current(30), 1.0, 1e-15);  // mean PV 2 kW / 2
  EXPECT_NEAR(s.current(31), 1.0, 1e-15);
  EXPECT_EQ(s.compact.size(), kCompactSummaryDim);
}

TEST(Window, KeepsMostRecent) {
  HistoryWindow w(3);
  EXPECT_FALSE(w.full());
  for (int i = 0; i < 5; ++i) w.push(Eigen::VectorXd::Constant(1, i), cold_start_behavior(2));
  EXPECT_TRUE(w.full());
  EXPECT_EQ(w.entries().front().summary(0), 2.0);
  EXPECT_EQ(w.entries().back().summary(0), 4.0);
  EXPECT_THROW(HistoryWindow(0), ConfigError);
}

TEST(Predictor, RequiresFullWindow) {
  const PredictorConfig cfg = small_config();
  MarketPredictor p(24, 10.0, cfg, 1);
  HistoryWindow w(cfg.window);
  w.push(Eigen::VectorXd::Zero(kCompactSummaryDim), cold_start_behavior(cfg.bins));
  EXPECT_THROW(p.predict(Eigen::VectorXd::Zero(summary_dim(24)), w), ConfigError);
  EXPECT_NO_THROW(p.predict(Eigen::VectorXd::Zero(summary_dim(24)), full_window(cfg)));
}

TEST(Predictor, ZeroWeightsGiveUniformHistogram) {
  const PredictorConfig cfg = small_config();
  MarketPredictor p(24, 10.0, cfg, 1);
  p.net().params().setZero();
  const MarketBehavior b = p.predict(Eigen::VectorXd::Zero(summary_dim(24)), full_window(cfg));
  for (double h : b.ev_hist) EXPECT_NEAR(h, 0.2, 1e-15);
  EXPECT_NEAR(b.sell_total, std::log(2.0) * 10.0, 1e-12);
  EXPECT_NEAR(b.buy_total, std::log(2.0) * 10.0, 1e-12);
}

TEST(Predictor, OutputsAreValid) {
  const PredictorConfig cfg = small_config();
  MarketPredictor p(24, 10.0, cfg, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd x(p.input_dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    const MarketBehavior b = p.predict_encoded(x);
    EXPECT_NEAR(std::accumulate(b.ev_hist.begin(), b.ev_hist.end(), 0.0), 1.0, 1e-12);
    EXPECT_GE(b.sell_total, 0.0);
    EXPECT_GE(b.buy_total, 0.0);
  }
}

TEST(Predictor, OverfitsConstantTarget) {
  const PredictorConfig cfg = small_config();
  MarketPredictor p(24, 10.0, cfg, 5);
  const MarketBehavior target = behavior(12.0, 4.0, {0.1, 0.2, 0.4, 0.2, 0.1});
  std::vector<PredictorSample> data;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int j = 0; j < 32; ++j) {
    Eigen::VectorXd x(p.input_dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    data.push_back({x, target});
  }
  const double before = p.loss(data);
  const std::vector<double> curve = p.train(data, 300, rng);
  EXPECT_LT(curve.back(), curve.front());
  EXPECT_LT(p.loss(data), before);
  const MarketBehavior b = p.predict_encoded(data[0].input);
  EXPECT_NEAR(b.sell_total, 12.0, 0.12);
  EXPECT_NEAR(b.buy_total, 4.0, 0.04);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(b.ev_hist[k], target.ev_hist[k], 0.01);
}

TEST(Predictor, WeightsRoundTripThroughNetConstructor) {
  const PredictorConfig cfg = small_config();
  MarketPredictor p(24, 10.0, cfg, 8);
  MarketPredictor q(p.net(), 24, 10.0, cfg);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(p.input_dim(), -1.0, 1.0);
  EXPECT_EQ(p.predict_encoded(x).sell_total, q.predict_encoded(x).sell_total);
  PredictorConfig other = cfg;
  other.window = 5;
  EXPECT_THROW(MarketPredictor(p.net(), 24, 10.0, other), ConfigError);
}

TEST(Lag, PeriodicSeriesIsExact) {
  const int spd = 4;
  std::vector<MarketBehavior> log;
  for (int t = 0; t < 3 * spd; ++t) log.push_back(behavior(t % spd, 2.0 * (t % spd), {0.5, 0.5}));
  for (std::size_t t = spd; t < log.size(); ++t) {
    EXPECT_EQ(behavior_mse(lag_baseline(log, t, spd, 2), log[t], 1.0), 0.0);
  }
}

TEST(Lag, UsesSameSlotOfPreviousDay) {
  std::vector<MarketBehavior> log;
  for (int t = 0; t < 48; ++t) log.push_back(behavior(t, 0.0, {1.0, 0.0}));
  EXPECT_EQ(lag_baseline(log, 29, 24, 2).sell_total, 5.0);
}

TEST(Lag, DriftErrorIsOneDayOfDrift) {
  // a_s grows by 0.5 per day; the lag error is exactly that step.
  std::vector<MarketBehavior> log;
  for (int t = 0; t < 72; ++t) log.push_back(behavior(10.0 + 0.5 * (t / 24), 3.0, {}));
  const MarketBehavior lag = lag_baseline(log, 50, 24, 0);
  EXPECT_NEAR(log[50].sell_total - lag.sell_total, 0.5, 1e-12);
  EXPECT_NEAR(behavior_mse(lag, log[50], 1.0), 0.125, 1e-12);  // (0.25 + 0) / 2
}

TEST(Lag, ColdStartBeforeFirstFullDay) {
  std::vector<MarketBehavior> log(10, behavior(1.0, 1.0, {1.0, 0.0, 0.0, 0.0}));
  const MarketBehavior b = lag_baseline(log, 5, 24, 4);
  EXPECT_EQ(b.sell_total, 0.0);
  EXPECT_EQ(b.buy_total, 0.0);
  for (double h : b.ev_hist) EXPECT_EQ(h, 0.25);
}

TEST(Mse, HistogramSkippedWithoutEvs) {
  const MarketBehavior pred = behavior(2.0, 0.0, {0.5, 0.5});
  EXPECT_NEAR(behavior_mse(pred, behavior(0.0, 0.0, {0.0, 0.0}), 2.0), 0.5, 1e-15);
  EXPECT_NEAR(behavior_mse(pred, behavior(0.0, 0.0, {1.0, 0.0}), 2.0), (1.0 + 0.25 + 0.25) / 4.0, 1e-15);
}
