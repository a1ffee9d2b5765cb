#pragma once

// Two-tier community market: households match internally at p_in, the
// residual settles externally at p_os (export) or p_ob (import).

#include <span>
#include <vector>

#include "microgrid/env.hpp"

namespace microgrid {

struct PriceSlot {
  double sell_ext = 0.0;  // p_os
  double internal = 0.0;  // p_in
  double buy_ext = 0.0;   // p_ob

  bool ordered() const { return sell_ext <= internal && internal <= buy_ext; }
};

// Default internal price when a source only provides external prices.
inline double midpoint_internal_price(double sell_ext, double buy_ext) { return 0.5 * (sell_ext + buy_ext); }

struct PriceSchedule {
  std::vector<PriceSlot> slots;

  std::size_t size() const { return slots.size(); }
  const PriceSlot& operator[](std::size_t t) const { return slots[t]; }
};

struct MarketOutcome {
  double total_sell = 0.0;  // Psi_s, kWh
  double total_buy = 0.0;   // Psi_b, kWh
  double sell_price = 0.0;  // p_s
  double buy_price = 0.0;   // p_b
};

// Clearing prices from community totals. Throws ConfigError on unordered or
// negative inputs.
MarketOutcome clear_totals(double total_sell, double total_buy, const PriceSlot& prices);

MarketOutcome clear_market(std::span<const Action> actions, const PriceSlot& prices);
MarketOutcome clear_market(std::span<const double> trades, const PriceSlot& prices);

// Per-slot reward of one household: minus what it pays.
double compute_reward(double trade, const MarketOutcome& outcome);

// What the community as a whole pays the external grid this slot (negative
// when it earns).
double external_settlement(const MarketOutcome& outcome, const PriceSlot& prices);

struct MarketBehavior {
  double sell_total = 0.0;  // a_s
  double buy_total = 0.0;   // a_b
  std::vector<double> ev_hist;  // K bins over [-eta, eta]
};

// Bin index for an EV rate on K uniform bins spanning [-eta, eta]; a value on
// a bin edge goes to the upper bin, +eta goes to the last bin.
int ev_hist_bin(double ev_rate, double eta, int bins);

MarketBehavior aggregate_market_behavior(std::span<const Action> actions, std::span<const int> ev_mask,
                                         int bins, double eta);

}  // namespace microgrid
