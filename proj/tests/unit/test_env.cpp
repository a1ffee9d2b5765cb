#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "microgrid/env.hpp"
#include "microgrid/errors.hpp"

using namespace microgrid;

namespace {

HouseholdState ev_home(double ev_soc, double depart) {
  HouseholdState s;
  s.price = 0.2;
  s.base_load = 1.0;
  s.home_soc = 0.5;
  s.pv_gen = 0.0;
  s.ev_available = 1;
  s.ev_soc = ev_soc;
  s.ev_depart = depart;
  return s;
}

HouseholdState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HouseholdState s;
  s.price = 0.1 + 0.2 * u(rng);
  s.base_load = 3.0 * u(rng);
  s.pv_gen = u(rng) < 0.5 ? 0.0 : 5.0 * u(rng);
  s.home_soc = u(rng);
  s.ev_available = u(rng) < 0.6 ? 1 : 0;
  if (s.ev_available) {
    s.ev_soc = u(rng);
    s.ev_depart = 1 + static_cast<int>(13 * u(rng));
  }
  return s;
}

}  // namespace

TEST(ActionBounds, ZeroSeries) {
  const std::vector<double> z(24, 0.0);
  const ActionBounds b = compute_action_bounds(z, z);
  EXPECT_EQ(b.max_sell, 0.0);
  EXPECT_EQ(b.max_buy, 0.0);
}

TEST(ActionBounds, ConstantSeries) {
  const std::vector<double> gen(24, 2.0), cons(24, 3.0);
  const ActionBounds b = compute_action_bounds(gen, cons);
  EXPECT_DOUBLE_EQ(b.max_sell, 2.0);
  EXPECT_DOUBLE_EQ(b.max_buy, 3.0);
}

TEST(ActionBounds, RampMean) {
  std::vector<double> gen(24);
  for (int i = 0; i < 24; ++i) gen[static_cast<std::size_t>(i)] = i;
  const std::vector<double> cons(24, 1.0);
  EXPECT_DOUBLE_EQ(compute_action_bounds(gen, cons).max_sell, 11.5);
}

TEST(ActionBounds, EmptySeriesRejected) {
  const std::vector<double> empty, cons(24, 1.0);
  EXPECT_THROW(compute_action_bounds(empty, cons), ConfigError);
  EXPECT_THROW(compute_action_bounds(cons, empty), ConfigError);
}

TEST(Projection, EvAbsentZeroesRate) {
  SimConfig cfg;
  HouseholdState s = ev_home(0.0, 0.0);
  s.ev_available = 0;
  const Action a = project_action(s, {0.0, 3.0}, {5.0, 5.0}, cfg);
  EXPECT_EQ(a.ev_rate, 0.0);
}

TEST(Projection, FullBatteryCannotCharge) {
  SimConfig cfg;
  const Action a = project_action(ev_home(1.0, 10.0), {0.0, cfg.max_ev_rate}, {5.0, 5.0}, cfg);
  EXPECT_EQ(a.ev_rate, 0.0);
}

TEST(Projection, EvenSpreadForcedRate) {
  SimConfig cfg;
  cfg.forced_charge = ForcedChargeRule::kEvenSpread;
  // (0.9 - 0.5) * 24 / (0.9 * 2)
  const double expected = 5.333333333333333;
  EXPECT_NEAR(forced_ev_rate(ev_home(0.5, 2.0), cfg), expected, 1e-6);
  const Action a = project_action(ev_home(0.5, 2.0), {0.0, 0.0}, {10.0, 10.0}, cfg);
  EXPECT_GE(a.ev_rate, expected - 1e-6);
}

TEST(Projection, LatestFeasibleForcedRate) {
  SimConfig cfg;
  // After this slot the battery must hold 0.9 - 6 * 0.9 / 24 = 0.675.
  const double expected = (0.675 - 0.5) * 24.0 / 0.9;
  EXPECT_NEAR(forced_ev_rate(ev_home(0.5, 2.0), cfg), expected, 1e-6);
  // With plenty of time the rule allows discharging.
  EXPECT_LT(forced_ev_rate(ev_home(0.95, 12.0), cfg), 0.0);
}

TEST(Projection, Idempotent) {
  SimConfig cfg;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int k = 0; k < 2000; ++k) {
    const HouseholdState s = random_state(rng);
    const ActionBounds b{2.0, 2.5};
    const Action once = project_action(s, {n(rng), n(rng)}, b, cfg);
    const Action twice = project_action(s, once, b, cfg);
    ASSERT_NEAR(once.trade, twice.trade, 1e-12);
    ASSERT_NEAR(once.ev_rate, twice.ev_rate, 1e-12);
  }
}

TEST(Projection, NonFiniteRawActionIsTreatedAsZero) {
  SimConfig cfg;
  const Action a = project_action(ev_home(0.5, 10.0), {NAN, INFINITY}, {2.0, 2.0}, cfg);
  EXPECT_TRUE(std::isfinite(a.trade));
  EXPECT_TRUE(std::isfinite(a.ev_rate));
}

TEST(Step, IdentityWhenIdle) {
  SimConfig cfg;
  HouseholdState s = ev_home(0.4, 5.0);
  s.pv_gen = 1.0;
  // trade balances the load exactly: H_p + P_c = H_l
  const HouseholdState n = step_household(s, {0.0, 0.0}, cfg);
  EXPECT_EQ(n.home_soc, s.home_soc);
  EXPECT_EQ(n.ev_soc, s.ev_soc);
  EXPECT_EQ(n.ev_depart, 4.0);
}

TEST(Step, HomeBatteryChargeArithmetic) {
  SimConfig cfg;
  HouseholdState s;
  s.home_soc = 0.5;
  s.base_load = 0.0;
  // C_b = H_p + P_c - C_e - H_l = 2
  const HouseholdState n = step_household(s, {2.0, 0.0}, cfg);
  EXPECT_NEAR(n.home_soc, 0.78125, 1e-12);
}

TEST(Step, EvDischargeArithmetic) {
  SimConfig cfg;
  HouseholdState s = ev_home(1.0, 10.0);
  s.base_load = 0.0;
  s.home_soc = 0.0;
  // EV discharges 6 kW into the grid.
  const HouseholdState n = step_household(s, {-6.0, -6.0}, cfg);
  EXPECT_NEAR(n.ev_soc, 1.0 - (6.0 / 0.9) / 24.0, 1e-12);
  EXPECT_NEAR(n.ev_soc, 0.7222, 1e-4);
}

TEST(Step, InfeasibleActionIsInvariantFailure) {
  SimConfig cfg;
  HouseholdState s = ev_home(0.5, 5.0);
  s.ev_available = 0;
  s.ev_depart = 0.0;
  EXPECT_THROW(step_household(s, {1.0, 1.0}, cfg), InvariantError);
  // 20 kW into a 3 kW home battery.
  EXPECT_THROW(step_household(ev_home(0.5, 5.0), {21.0, 0.0}, cfg), InvariantError);
}

TEST(Step, DepartsWhenCountdownEnds) {
  SimConfig cfg;
  HouseholdState s = ev_home(0.95, 1.0);
  s.base_load = 0.0;
  const HouseholdState n = step_household(s, {0.0, 0.0}, cfg);
  EXPECT_EQ(n.ev_available, 0);
  EXPECT_EQ(n.ev_depart, 0.0);
  EXPECT_EQ(n.ev_soc, 0.95);
}

TEST(Battery, RoundTripLoss) {
  const double cap = 10.0, eff = 0.9;
  const double charged = next_soc(0.2, 3.0, cap, eff);  // stores 2.7 kWh
  // Draw back exactly what went in, measured at the terminals.
  const double stored = (charged - 0.2) * cap;
  const double rate_out = stored * eff;
  EXPECT_NEAR(next_soc(charged, -rate_out, cap, eff), 0.2, 1e-12);
  EXPECT_NEAR(rate_out / 3.0, 0.81, 1e-12);
}

TEST(Surplus, Examples) {
  SimConfig cfg;
  HouseholdState s;
  EXPECT_EQ(compute_surplus(s, {}, cfg), 0.0);
  s.pv_gen = 3.0;
  s.home_soc = 0.5;
  s.base_load = 1.0;
  EXPECT_NEAR(compute_surplus(s, {0.0, 2.0}, cfg), 3.2, 1e-12);
  HouseholdState t;
  t.base_load = 2.0;
  EXPECT_NEAR(compute_surplus(t, {0.0, 1.0}, cfg), -3.0, 1e-12);
}

TEST(EvArrival, SocFromDistance) {
  SimConfig cfg;
  EXPECT_EQ(arrival_soc(0.0, cfg), 1.0);
  EXPECT_EQ(arrival_soc(160.0, cfg), cfg.arrival_soc_floor);
  EXPECT_NEAR(arrival_soc(40.0, cfg), 1.0 - 40.0 * 0.15 / 24.0, 1e-12);
}

TEST(EvArrival, GammaMeanDistance) {
  SimConfig cfg;
  std::mt19937_64 rng(3);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_ev_arrival(rng, cfg).distance_km;
  EXPECT_NEAR(sum / n, 32.0, 0.05 * 32.0);
}

TEST(SimConfigTest, Validation) {
  SimConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.ev_home_hours(), 13);
  EXPECT_TRUE(cfg.ev_home_at(23));
  EXPECT_TRUE(cfg.ev_home_at(0));
  EXPECT_FALSE(cfg.ev_home_at(12));
  EXPECT_EQ(cfg.hours_to_departure(18), 13);
  EXPECT_EQ(cfg.hours_to_departure(6), 1);
  cfg.charge_efficiency = 1.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SimConfig{};
  cfg.ev_min_departure_soc = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Property, EnergyBalanceAndSocBounds) {
  SimConfig cfg;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 6.0);
  for (int k = 0; k < 10000; ++k) {
    const HouseholdState s = random_state(rng);
    const Projection p = project(s, {n(rng), n(rng)}, {1.5, 2.5}, cfg);
    const HouseholdState next = step_household(s, p.action, cfg);
    const double balance = s.pv_gen + p.action.trade - (p.action.ev_rate + p.home_rate + s.base_load);
    ASSERT_LE(std::abs(balance), 1e-9);
    ASSERT_GE(next.home_soc, 0.0);
    ASSERT_LE(next.home_soc, 1.0);
    ASSERT_GE(next.ev_soc, 0.0);
    ASSERT_LE(next.ev_soc, 1.0);
  }
}

TEST(Property, ForcedChargingMeetsDepartureTarget) {
  for (auto rule : {ForcedChargeRule::kEvenSpread, ForcedChargeRule::kLatestFeasible}) {
    SimConfig cfg;
    cfg.forced_charge = rule;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 6.0);
    for (int trial = 0; trial < 500; ++trial) {
      HouseholdState s;
      s.home_soc = 0.5;
      s.ev_available = 1;
      s.ev_soc = sample_ev_arrival(rng, cfg).soc;
      s.ev_depart = cfg.ev_home_hours();
      while (s.ev_available) {
        const Action a = project_action(s, {n(rng), n(rng)}, {2.0, 2.0}, cfg);
        s = step_household(s, a, cfg);
      }
      ASSERT_GE(s.ev_soc, cfg.ev_min_departure_soc - 1e-12);
    }
  }
}
