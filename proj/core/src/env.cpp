#include "microgrid/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "microgrid/errors.hpp"

namespace microgrid {

namespace {

constexpr double kFeasTol = 1e-9;
// Aim a hair above the departure target so floating point never lands under it.
constexpr double kTargetMargin = 1e-9;

double mean_of(std::span<const double> xs, const char* what) {
  if (xs.empty()) throw ConfigError(std::string(what) + " series is empty");
  for (double x : xs) {
    if (!(x >= 0.0)) throw ConfigError(std::string(what) + " series has a negative or NaN entry");
  }
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

void SimConfig::validate() const {
  std::ostringstream err;
  if (n_households < 1) err << "n_households must be >= 1; ";
  if (slots_per_day < 2) err << "slots_per_day must be >= 2; ";
  if (horizon_days < 1) err << "horizon_days must be >= 1; ";
  if (!(charge_efficiency > 0.0 && charge_efficiency <= 1.0)) err << "charge_efficiency must be in (0,1]; ";
  if (!(home_batt_capacity > 0.0)) err << "home_batt_capacity must be > 0; ";
  if (!(ev_batt_capacity > 0.0)) err << "ev_batt_capacity must be > 0; ";
  if (!(max_ev_rate > 0.0)) err << "max_ev_rate must be > 0; ";
  if (!(max_home_batt_rate > 0.0)) err << "max_home_batt_rate must be > 0; ";
  if (!(ev_min_departure_soc > 0.0 && ev_min_departure_soc <= 1.0)) err << "ev_min_departure_soc must be in (0,1]; ";
  if (!(ev_consumption >= 0.0)) err << "ev_consumption must be >= 0; ";
  if (!(gamma_shape > 0.0 && gamma_scale > 0.0)) err << "gamma parameters must be > 0; ";
  if (!(arrival_soc_floor >= 0.0 && arrival_soc_floor <= 1.0)) err << "arrival_soc_floor must be in [0,1]; ";
  if (!(initial_home_soc >= 0.0 && initial_home_soc <= 1.0)) err << "initial_home_soc must be in [0,1]; ";
  if (ev_arrival_slot < 0 || ev_arrival_slot >= slots_per_day || ev_departure_slot < 0 ||
      ev_departure_slot >= slots_per_day || ev_arrival_slot == ev_departure_slot) {
    err << "EV arrival/departure slots must be distinct slots of the day; ";
  }
  const std::string msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid SimConfig: " + msg);
}

int SimConfig::ev_home_hours() const {
  return ((ev_departure_slot - ev_arrival_slot) % slots_per_day + slots_per_day) % slots_per_day;
}

bool SimConfig::ev_home_at(int slot) const {
  if (ev_arrival_slot > ev_departure_slot) return slot >= ev_arrival_slot || slot < ev_departure_slot;
  return slot >= ev_arrival_slot && slot < ev_departure_slot;
}

int SimConfig::hours_to_departure(int slot) const {
  if (!ev_home_at(slot)) return 0;
  return ((ev_departure_slot - slot) % slots_per_day + slots_per_day) % slots_per_day;
}

ActionBounds compute_action_bounds(std::span<const double> prev_day_gen,
                                   std::span<const double> prev_day_cons) {
  return ActionBounds{mean_of(prev_day_gen, "generation"), mean_of(prev_day_cons, "consumption")};
}

double next_soc(double soc, double rate, double capacity, double efficiency) {
  if (rate >= 0.0) return soc + rate * efficiency / capacity;
  return soc + rate / (efficiency * capacity);
}

double forced_ev_rate(const HouseholdState& s, const SimConfig& cfg) {
  const double eff = cfg.charge_efficiency;
  const double cap = cfg.ev_batt_capacity;
  const double hours = std::max(1.0, s.ev_depart);
  const double target = std::min(1.0, cfg.ev_min_departure_soc + kTargetMargin);

  // SOC the battery must hold after this slot.
  double floor_soc = target;
  if (cfg.forced_charge == ForcedChargeRule::kLatestFeasible) {
    floor_soc = target - (hours - 1.0) * cfg.max_ev_rate * eff / cap;
  } else if (target > s.ev_soc) {
    return (target - s.ev_soc) * cap / (eff * hours);
  }
  if (floor_soc > s.ev_soc) return (floor_soc - s.ev_soc) * cap / eff;
  return (floor_soc - s.ev_soc) * cap * eff;
}

RateWindow ev_rate_window(const HouseholdState& s, const SimConfig& cfg) {
  if (!s.ev_available) return {};
  const double eff = cfg.charge_efficiency;
  const double cap = cfg.ev_batt_capacity;
  double hi = std::min(cfg.max_ev_rate, (1.0 - s.ev_soc) * cap / eff);
  double lo = std::max(-cfg.max_ev_rate, -s.ev_soc * cap * eff);
  hi = std::max(hi, 0.0);
  lo = std::min(lo, 0.0);
  lo = std::min(std::max(lo, forced_ev_rate(s, cfg)), hi);
  return {lo, hi};
}

RateWindow home_rate_window(const HouseholdState& s, const SimConfig& cfg) {
  const double eff = cfg.charge_efficiency;
  const double cap = cfg.home_batt_capacity;
  const double hi = std::max(0.0, std::min(cfg.max_home_batt_rate, (1.0 - s.home_soc) * cap / eff));
  const double lo = std::min(0.0, std::max(-cfg.max_home_batt_rate, -s.home_soc * cap * eff));
  return {lo, hi};
}

double home_battery_rate(const HouseholdState& s, const Action& a) {
  return s.pv_gen + a.trade - a.ev_rate - s.base_load;
}

Projection project(const HouseholdState& s, const Action& raw, const ActionBounds& bounds,
                   const SimConfig& cfg) {
  const double raw_ev = std::isfinite(raw.ev_rate) ? raw.ev_rate : 0.0;
  const double raw_trade = std::isfinite(raw.trade) ? raw.trade : 0.0;

  Projection out;
  const RateWindow ev = ev_rate_window(s, cfg);
  out.action.ev_rate = std::clamp(raw_ev, ev.lo, ev.hi);
  out.forced = s.ev_available && raw_ev < ev.lo && ev.lo > 0.0;

  const double trade = std::clamp(raw_trade, -bounds.max_sell, bounds.max_buy);
  const RateWindow home = home_rate_window(s, cfg);
  out.home_rate = std::clamp(home_battery_rate(s, {trade, out.action.ev_rate}), home.lo, home.hi);

  // The grid covers whatever the home battery could not.
  out.action.trade = out.action.ev_rate + out.home_rate + s.base_load - s.pv_gen;
  out.bound_excess = std::max({0.0, out.action.trade - bounds.max_buy, -bounds.max_sell - out.action.trade});
  return out;
}

HouseholdState step_household(const HouseholdState& s, const Action& a, const SimConfig& cfg) {
  if (!s.ev_available && a.ev_rate != 0.0) {
    throw InvariantError("step_household: EV rate " + std::to_string(a.ev_rate) + " while EV is away");
  }
  const double home_rate = home_battery_rate(s, a);

  const auto check = [](double v, double lo, double hi, const char* what) {
    if (!(v >= lo - kFeasTol && v <= hi + kFeasTol)) {
      throw InvariantError(std::string("step_household: ") + what + " rate " + std::to_string(v) +
                           " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  };
  if (s.ev_available) {
    const double eff = cfg.charge_efficiency;
    const double cap = cfg.ev_batt_capacity;
    check(a.ev_rate, std::max(-cfg.max_ev_rate, -s.ev_soc * cap * eff),
          std::min(cfg.max_ev_rate, (1.0 - s.ev_soc) * cap / eff), "EV");
  }
  const RateWindow home = home_rate_window(s, cfg);
  check(home_rate, home.lo, home.hi, "home battery");

  HouseholdState next = s;
  next.home_soc = std::clamp(next_soc(s.home_soc, home_rate, cfg.home_batt_capacity, cfg.charge_efficiency), 0.0, 1.0);
  if (s.ev_available) {
    next.ev_soc = std::clamp(next_soc(s.ev_soc, a.ev_rate, cfg.ev_batt_capacity, cfg.charge_efficiency), 0.0, 1.0);
    next.ev_depart = s.ev_depart - 1.0;
    if (next.ev_depart <= 0.0) {
      next.ev_available = 0;
      next.ev_depart = 0.0;
    }
  }
  return next;
}

double compute_surplus(const HouseholdState& s, const Action& a, const SimConfig& cfg) {
  return s.pv_gen + s.home_soc * cfg.home_batt_capacity - s.base_load - a.ev_rate;
}

double arrival_soc(double distance_km, const SimConfig& cfg) {
  return std::max(cfg.arrival_soc_floor, 1.0 - distance_km * cfg.ev_consumption / cfg.ev_batt_capacity);
}

EvArrival sample_ev_arrival(std::mt19937_64& rng, const SimConfig& cfg) {
  std::gamma_distribution<double> distance(cfg.gamma_shape, cfg.gamma_scale);
  EvArrival out;
  out.distance_km = distance(rng);
  out.soc = arrival_soc(out.distance_km, cfg);
  out.depart_slot = cfg.ev_departure_slot;
  return out;
}

}  // namespace microgrid
