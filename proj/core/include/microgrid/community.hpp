#pragma once

// Steps all households of a scenario through time: exogenous load/PV/price
// data, day-boundary action bounds, and EV departures and arrivals.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "microgrid/data.hpp"
#include "microgrid/env.hpp"

namespace microgrid {

struct DepartureStats {
  int departures = 0;
  int satisfied = 0;
  double min_soc = 1.0;
};

class Community {
 public:
  Community(const Scenario& scenario, SimConfig cfg);

  // Starts at the first slot of `start_day`. Each household gets its own rng
  // stream derived from (seed, household index).
  void reset(int start_day, std::uint64_t seed);

  int slot() const { return slot_; }
  int slot_of_day() const { return slot_ % cfg_.slots_per_day; }
  int day() const { return slot_ / cfg_.slots_per_day; }
  int n_households() const { return cfg_.n_households; }
  const SimConfig& config() const { return cfg_; }
  const Scenario& scenario() const { return *scenario_; }
  const PriceSlot& prices() const;

  const std::vector<HouseholdState>& states() const { return states_; }
  const std::vector<ActionBounds>& bounds() const { return bounds_; }
  std::vector<int> ev_mask() const;

  std::vector<Projection> project(std::span<const Action> raw) const;

  // Applies feasible actions and moves to the next slot.
  DepartureStats advance(std::span<const Projection> feasible);

 private:
  void load_exogenous();
  void arrive_evs();
  void bounds_from_scenario(int day);

  const Scenario* scenario_;
  SimConfig cfg_;
  int slot_ = 0;
  std::vector<HouseholdState> states_;
  std::vector<ActionBounds> bounds_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<double> day_gen_;
  std::vector<double> day_cons_;
};

}  // namespace microgrid
