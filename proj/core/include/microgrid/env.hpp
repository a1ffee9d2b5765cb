#pragma once

// Per-household physics: base load, rooftop PV, a home battery and an EV
// battery, stepped in one-hour slots.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace microgrid {

// How the "EV must leave with at least ev_min_departure_soc" rule turns into a
// lower bound on the EV charging rate.
enum class ForcedChargeRule {
  // Minimum = remaining energy / (efficiency * hours left). Spreads the
  // remaining need evenly over the stay and forbids discharging below target.
  kEvenSpread,
  // Minimum = whatever keeps the target reachable when charging at the full
  // rate in every remaining slot. Allows deferring to cheap hours and V2H.
  kLatestFeasible,
};

struct SimConfig {
  int n_households = 20;
  int slots_per_day = 24;
  int horizon_days = 30;
  double charge_efficiency = 0.9;
  double home_batt_capacity = 6.4;  // kWh
  double ev_batt_capacity = 24.0;   // kWh
  double max_ev_rate = 6.0;         // kW
  double max_home_batt_rate = 3.0;  // kW
  double ev_min_departure_soc = 0.9;
  double ev_consumption = 0.15;  // kWh per km
  double gamma_shape = 1.6;
  double gamma_scale = 20.0;  // km
  double arrival_soc_floor = 0.1;
  int ev_arrival_slot = 18;
  int ev_departure_slot = 7;
  double initial_home_soc = 0.5;
  ForcedChargeRule forced_charge = ForcedChargeRule::kLatestFeasible;
  std::uint64_t rng_seed = 1;

  // Throws ConfigError.
  void validate() const;
  // Hours the EV stays plugged in, arrival to departure.
  int ev_home_hours() const;
  // True when the EV is plugged in during slot-of-day `slot`.
  bool ev_home_at(int slot) const;
  // Hours until departure at the start of slot-of-day `slot`; 0 when away.
  int hours_to_departure(int slot) const;
};

struct HouseholdState {
  double price = 0.0;      // $/kWh, retail TOU price of the slot
  double base_load = 0.0;  // kW
  double home_soc = 0.0;   // [0,1]
  double pv_gen = 0.0;     // kW
  int ev_available = 0;    // 0 or 1
  double ev_soc = 0.0;     // [0,1]
  double ev_depart = 0.0;  // hours until departure
};

// trade > 0 buys from the market, trade < 0 sells. ev_rate > 0 charges the EV.
struct Action {
  double trade = 0.0;
  double ev_rate = 0.0;
};

// trade is bounded to [-max_sell, max_buy].
struct ActionBounds {
  double max_sell = 0.0;  // mean gross generation per hour, previous day
  double max_buy = 0.0;   // mean gross consumption per hour, previous day
};

ActionBounds compute_action_bounds(std::span<const double> prev_day_gen,
                                   std::span<const double> prev_day_cons);

// SOC after running a battery at `rate` kW for one hour. Charging stores
// rate * efficiency, discharging drains rate / efficiency.
double next_soc(double soc, double rate, double capacity, double efficiency);

// Feasible EV rate window for the current slot (zero-width when the EV is away).
struct RateWindow {
  double lo = 0.0;
  double hi = 0.0;
};
RateWindow ev_rate_window(const HouseholdState& s, const SimConfig& cfg);
RateWindow home_rate_window(const HouseholdState& s, const SimConfig& cfg);

// Lower bound on the EV rate imposed by the departure target (may be negative,
// in which case it caps discharging).
double forced_ev_rate(const HouseholdState& s, const SimConfig& cfg);

// Home battery rate that balances H_p + P_c = C_e + C_b + H_l.
double home_battery_rate(const HouseholdState& s, const Action& a);

struct Projection {
  Action action;
  double home_rate = 0.0;
  // How far the realized trade lies outside [-max_sell, max_buy]; the grid
  // absorbs it.
  double bound_excess = 0.0;
  bool forced = false;  // the EV rate was raised by the departure target
};

Projection project(const HouseholdState& s, const Action& raw, const ActionBounds& bounds,
                   const SimConfig& cfg);

inline Action project_action(const HouseholdState& s, const Action& raw,
                             const ActionBounds& bounds, const SimConfig& cfg) {
  return project(s, raw, bounds, cfg).action;
}

// Applies a projected action: battery SOCs advance one hour and the departure
// countdown ticks. The EV leaves (ev_available = 0) when the countdown hits 0;
// ev_soc then holds the departure SOC until the next arrival.
// Throws InvariantError when the action is not feasible for `s`.
HouseholdState step_household(const HouseholdState& s, const Action& a, const SimConfig& cfg);

// C_t = H_p + H_b * B_h - H_l - C_e, taken literally with 1-hour slots.
double compute_surplus(const HouseholdState& s, const Action& a, const SimConfig& cfg);

struct EvArrival {
  double soc = 1.0;
  int depart_slot = 0;
  double distance_km = 0.0;
};

double arrival_soc(double distance_km, const SimConfig& cfg);
EvArrival sample_ev_arrival(std::mt19937_64& rng, const SimConfig& cfg);

}  // namespace microgrid
