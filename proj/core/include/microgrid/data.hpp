#pragma once

// Scenario data: per-household base load and PV traces plus the TOU price
// schedule, loaded from CSV or generated synthetically.
//
// On-disk layout (a directory):
//   scenario.json   manifest: {"format": "microgrid.scenario", "version": 1,
//                    "households": N, "days": D, "slots_per_day": S,
//                    "files": {"base_load": "base_load.csv", "pv": "pv.csv",
//                              "prices": "prices.csv"},
//                    "config_hash": "fnv1a64:<16 hex digits>"}
//   base_load.csv   header "slot,household_id,kw"; one row per (slot, household)
//   pv.csv          header "slot,household_id,kw"
//   prices.csv      header "slot,p_os,p_in,p_ob"; one row per slot
// Slots are absolute (day * S + hour), household ids are 0..N-1. Numbers are
// written in shortest round-trip form, so save -> load is exact.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "microgrid/market.hpp"

namespace microgrid {

struct Scenario {
  int n_households = 0;
  int days = 0;
  int slots_per_day = 24;
  std::vector<std::vector<double>> base_load;  // [household][slot], kW
  std::vector<std::vector<double>> pv;         // [household][slot], kW
  PriceSchedule prices;                        // [slot]
  std::string config_hash;

  int total_slots() const { return days * slots_per_day; }
};

// Single source of truth for well-formedness. Throws LoadError naming the
// first offending series and slot.
void validate_scenario(const Scenario& s);

struct SyntheticConfig {
  int n_households = 20;
  int days = 30;
  int slots_per_day = 24;

  double mean_base_load = 1.2;  // kW, long-run mean per household
  double household_spread = 0.3;  // per-household scale ~ U[1-s, 1+s]
  double load_noise = 0.15;       // multiplicative, per slot
  double load_drift_per_day = 0.0;  // relative growth of base load per day

  double pv_penetration = 0.6;  // fraction of households with panels
  double pv_capacity_min = 2.0;  // kWp
  double pv_capacity_max = 5.0;
  int sunrise = 6;
  int sunset = 18;
  double cloud_mean = 0.65;
  double cloud_persistence = 0.3;  // AR(1) coefficient of the daily clear-sky factor
  double cloud_noise = 0.3;
  double pv_noise = 0.05;

  // Two-tier import tariff: off-peak for hours [0, offpeak_end), peak
  // otherwise. Export price is a fixed fraction of import.
  int offpeak_end = 8;
  double price_offpeak = 0.10;
  double price_peak = 0.25;
  double export_ratio = 0.3;

  void validate() const;
  // FNV-1a over the canonical JSON of this config plus the seed.
  std::string hash(std::uint64_t seed) const;
};

Scenario generate_synthetic(const SyntheticConfig& cfg, std::mt19937_64& rng);
Scenario generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// Mean-one double-hump daily load shape, one entry per slot of the day.
std::vector<double> diurnal_load_shape(int slots_per_day);

// `path` is the scenario directory or its scenario.json.
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& dir);

// Copies days [first_day, first_day + days) into a new scenario.
Scenario slice_days(const Scenario& s, int first_day, int days);

std::string fnv1a64_hex(const std::string& text);

}  // namespace microgrid
