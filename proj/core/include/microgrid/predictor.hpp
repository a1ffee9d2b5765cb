#pragma once

// Forecasts the current slot's market behavior (a_s, a_b, EV-rate histogram)
// from public pre-action information and the last n slots of history, plus the
// previous-day lag baseline it competes with.

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "microgrid/env.hpp"
#include "microgrid/market.hpp"
#include "microgrid/nn.hpp"

namespace microgrid {

// Public information available before anyone acts at a slot.
struct MarketSummary {
  Eigen::VectorXd current;  // full summary for the slot being predicted
  Eigen::VectorXd compact;  // short form stored in the history window
};

struct SummaryScales {
  double price = 0.3;
  double power = 2.0;
};

int summary_dim(int slots_per_day);
inline constexpr int kCompactSummaryDim = 3;

// Slot-of-day one-hot, (p_os, p_in, p_ob), mean home SOC, mean EV SOC among
// plugged-in EVs, plugged-in fraction, mean PV, mean base load.
MarketSummary summarize_slot(int slot_of_day, int slots_per_day, const PriceSlot& prices,
                             const std::vector<HouseholdState>& states, const SummaryScales& scales);

// Fixed-capacity, slot-ordered ring of (compact summary, realized behavior).
class HistoryWindow {
 public:
  explicit HistoryWindow(int capacity);

  void push(const Eigen::VectorXd& compact_summary, const MarketBehavior& behavior);
  void clear() { entries_.clear(); }
  bool full() const { return static_cast<int>(entries_.size()) == capacity_; }
  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }

  struct Entry {
    Eigen::VectorXd summary;
    MarketBehavior behavior;
  };
  const std::deque<Entry>& entries() const { return entries_; }

 private:
  int capacity_;
  std::deque<Entry> entries_;
};

struct PredictorConfig {
  int window = 24;
  int hidden = 64;
  int bins = 10;
  double lr = 1e-3;
  int minibatch = 64;
  int epochs_per_refit = 2;
  int replay_episodes = 3;  // most recent episodes kept for refitting
};

struct PredictorSample {
  Eigen::VectorXd input;
  MarketBehavior target;
};

// Totals are reported in kWh; internally they are divided by total_scale.
class MarketPredictor {
 public:
  MarketPredictor(int slots_per_day, double total_scale, const PredictorConfig& cfg, std::uint64_t seed);
  MarketPredictor(nn::DenseNet net, int slots_per_day, double total_scale, const PredictorConfig& cfg);

  int input_dim() const { return net_.input_size(); }
  const PredictorConfig& config() const { return cfg_; }
  double total_scale() const { return total_scale_; }

  Eigen::VectorXd encode(const Eigen::VectorXd& current_summary, const HistoryWindow& window) const;

  // Requires a full window (ConfigError otherwise). Totals go through softplus,
  // the histogram through softmax.
  MarketBehavior predict(const Eigen::VectorXd& current_summary, const HistoryWindow& window) const;
  MarketBehavior predict_encoded(const Eigen::VectorXd& input) const;

  // MSE on normalized totals + cross-entropy on the histogram (skipped for
  // slots with no plugged-in EV). Returns the mean loss of each epoch.
  std::vector<double> train(const std::vector<PredictorSample>& data, int epochs, std::mt19937_64& rng);
  double loss(const std::vector<PredictorSample>& data) const;

  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }

 private:
  MarketBehavior decode(const Eigen::VectorXd& raw) const;

  int slots_per_day_;
  double total_scale_;
  PredictorConfig cfg_;
  nn::DenseNet net_;
  nn::OptimState opt_;
};

// Zero totals with a uniform histogram: the cold-start behavior.
MarketBehavior cold_start_behavior(int bins);

// Realized behavior at slot t - slots_per_day of `log`, or the cold start when
// no full prior day exists.
MarketBehavior lag_baseline(const std::vector<MarketBehavior>& log, std::size_t t, int slots_per_day, int bins);

// Mean squared error on (a_s, a_b) / total_scale, plus the histogram entries
// when the realized histogram is non-empty.
double behavior_mse(const MarketBehavior& predicted, const MarketBehavior& realized, double total_scale);

}  // namespace microgrid
