#include "microgrid/community.hpp"

#include <algorithm>

#include "microgrid/errors.hpp"

namespace microgrid {

namespace {
constexpr double kSocTol = 1e-9;
}

Community::Community(const Scenario& scenario, SimConfig cfg) : scenario_(&scenario), cfg_(cfg) {
  cfg_.validate();
  validate_scenario(scenario);
  if (scenario.n_households != cfg_.n_households) {
    throw ConfigError("Community: scenario has " + std::to_string(scenario.n_households) + " households, config " +
                      std::to_string(cfg_.n_households));
  }
  if (scenario.slots_per_day != cfg_.slots_per_day) throw ConfigError("Community: slots_per_day mismatch");
  const auto n = static_cast<std::size_t>(cfg_.n_households);
  states_.resize(n);
  bounds_.resize(n);
  day_gen_.assign(n, 0.0);
  day_cons_.assign(n, 0.0);
}

const PriceSlot& Community::prices() const {
  const int t = std::min(slot_, scenario_->total_slots() - 1);
  return scenario_->prices[static_cast<std::size_t>(t)];
}

void Community::reset(int start_day, std::uint64_t seed) {
  if (start_day < 0 || start_day >= scenario_->days) throw ConfigError("Community::reset: start_day out of range");
  slot_ = start_day * cfg_.slots_per_day;
  rngs_.clear();
  for (int i = 0; i < cfg_.n_households; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), 0x6d67u};
    rngs_.emplace_back(seq);
  }
  for (auto& s : states_) {
    s = HouseholdState{};
    s.home_soc = cfg_.initial_home_soc;
  }
  std::fill(day_gen_.begin(), day_gen_.end(), 0.0);
  std::fill(day_cons_.begin(), day_cons_.end(), 0.0);
  bounds_from_scenario(start_day > 0 ? start_day - 1 : start_day);
  load_exogenous();
  if (cfg_.ev_home_at(slot_of_day())) {
    for (int i = 0; i < cfg_.n_households; ++i) {
      auto& s = states_[static_cast<std::size_t>(i)];
      const EvArrival ev = sample_ev_arrival(rngs_[static_cast<std::size_t>(i)], cfg_);
      s.ev_available = 1;
      s.ev_soc = ev.soc;
      s.ev_depart = cfg_.hours_to_departure(slot_of_day());
    }
  }
}

void Community::bounds_from_scenario(int day) {
  const int spd = cfg_.slots_per_day;
  for (int i = 0; i < cfg_.n_households; ++i) {
    const auto& pv = scenario_->pv[static_cast<std::size_t>(i)];
    const auto& load = scenario_->base_load[static_cast<std::size_t>(i)];
    const auto b = static_cast<std::ptrdiff_t>(day * spd);
    bounds_[static_cast<std::size_t>(i)] =
        compute_action_bounds(std::span<const double>(pv.data() + b, static_cast<std::size_t>(spd)),
                              std::span<const double>(load.data() + b, static_cast<std::size_t>(spd)));
  }
}

void Community::load_exogenous() {
  const int t = std::min(slot_, scenario_->total_slots() - 1);
  const auto ts = static_cast<std::size_t>(t);
  for (int i = 0; i < cfg_.n_households; ++i) {
    auto& s = states_[static_cast<std::size_t>(i)];
    s.price = scenario_->prices[ts].buy_ext;
    s.base_load = scenario_->base_load[static_cast<std::size_t>(i)][ts];
    s.pv_gen = scenario_->pv[static_cast<std::size_t>(i)][ts];
  }
}

void Community::arrive_evs() {
  for (int i = 0; i < cfg_.n_households; ++i) {
    auto& s = states_[static_cast<std::size_t>(i)];
    const EvArrival ev = sample_ev_arrival(rngs_[static_cast<std::size_t>(i)], cfg_);
    s.ev_available = 1;
    s.ev_soc = ev.soc;
    s.ev_depart = cfg_.ev_home_hours();
  }
}

std::vector<int> Community::ev_mask() const {
  std::vector<int> mask(states_.size());
  for (std::size_t i = 0; i < states_.size(); ++i) mask[i] = states_[i].ev_available;
  return mask;
}

std::vector<Projection> Community::project(std::span<const Action> raw) const {
  if (raw.size() != states_.size()) throw ConfigError("Community::project: one action per household expected");
  std::vector<Projection> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back(microgrid::project(states_[i], raw[i], bounds_[i], cfg_));
  return out;
}

DepartureStats Community::advance(std::span<const Projection> feasible) {
  if (feasible.size() != states_.size()) throw ConfigError("Community::advance: one action per household expected");
  DepartureStats dep;
  for (std::size_t i = 0; i < states_.size(); ++i) {
    const auto& p = feasible[i];
    const HouseholdState next = step_household(states_[i], p.action, cfg_);
    const double home_rate = home_battery_rate(states_[i], p.action);
    day_gen_[i] += states_[i].pv_gen + std::max(0.0, -p.action.ev_rate) + std::max(0.0, -home_rate);
    day_cons_[i] += states_[i].base_load + std::max(0.0, p.action.ev_rate) + std::max(0.0, home_rate);
    if (states_[i].ev_available && !next.ev_available) {
      ++dep.departures;
      if (next.ev_soc >= cfg_.ev_min_departure_soc - kSocTol) ++dep.satisfied;
      dep.min_soc = std::min(dep.min_soc, next.ev_soc);
    }
    states_[i] = next;
  }
  ++slot_;
  if (slot_of_day() == 0) {
    const double spd = cfg_.slots_per_day;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      bounds_[i] = ActionBounds{day_gen_[i] / spd, day_cons_[i] / spd};
      day_gen_[i] = 0.0;
      day_cons_[i] = 0.0;
    }
  }
  load_exogenous();
  if (slot_of_day() == cfg_.ev_arrival_slot) arrive_evs();
  return dep;
}

}  // namespace microgrid
