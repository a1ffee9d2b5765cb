#pragma once

// Experiment orchestration: algorithm variants, rollouts, training and
// evaluation, and the metrics they report.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "microgrid/agent.hpp"
#include "microgrid/cbe.hpp"
#include "microgrid/community.hpp"
#include "microgrid/data.hpp"
#include "microgrid/env.hpp"
#include "microgrid/nn.hpp"
#include "microgrid/predictor.hpp"

namespace microgrid {

enum class Algorithm { kNaive, kPpoSingle, kMppo, kPreMppo, kPreMppoCbe };

// Where the market-behavior part of the policy input comes from.
enum class BehaviorSource {
  kNone,       // constant cold-start features
  kLag,        // same slot on the previous day
  kPredicted,  // MarketPredictor, lag while its window fills
};

struct Variant {
  bool learned = true;
  BehaviorSource source = BehaviorSource::kNone;
  bool cbe = false;
};

std::string_view to_string(Algorithm a);
std::string_view to_string(BehaviorSource s);
Algorithm parse_algorithm(std::string_view name);
Variant variant_of(Algorithm a);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kPreMppo;
  SimConfig sim;
  CbeConfig cbe;
  PpoConfig ppo;
  PredictorConfig predictor;
  FeatureScales features;
  int episodes = 125;
  int test_days = 7;
  int hidden = 64;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "runs";

  void validate() const;
  Variant variant() const { return variant_of(algorithm); }
  double total_scale() const { return features.per_household_total * sim.n_households; }
};

// 20 households, 30 days; the default profile.
ExperimentConfig desk_profile();
// 200 households, 35 days (28 train / 7 test).
ExperimentConfig paper_profile();

struct EpisodeMetrics {
  int episode = -1;
  int days = 0;
  double total_cost = 0.0;       // $ = -sum of unshaped rewards
  double mean_daily_cost = 0.0;  // $
  double settlement_cost = 0.0;  // $ paid to the external grid, accumulated separately
  double peak_mean = 0.0;        // kW, mean over days of the daily peak
  double peak_std = 0.0;
  double peak_max = 0.0;
  std::vector<double> daily_peaks;
  std::array<double, 24> hourly_profile{};  // kW, mean community load per hour of day
  double satisfaction = 1.0;  // share of EV departures at or above the SOC target
  int departures = 0;
  double min_departure_soc = 1.0;
  double prediction_mse = -1.0;  // -1 when no prediction was made
  double lag_mse = -1.0;
  double cbe_penalty = 0.0;  // mean shaping penalty per EV-slot
  double bound_excess = 0.0;  // mean |trade outside [-delta, alpha]|, kW
  double forced_share = 0.0;  // share of EV-slots raised by the departure rule
  UpdateStats update;
  double lr = 0.0;
};

struct TrainedModels {
  nn::DenseNet policy;
  nn::DenseNet value;
  std::optional<MarketPredictor> predictor;
};

enum class ActionMode { kSample, kMean, kNaive };

struct RolloutOptions {
  int first_day = 0;    // first day counted in metrics
  int end_day = 0;      // one past the last simulated day
  int warmup_days = 0;  // simulated before first_day, not counted
  ActionMode mode = ActionMode::kMean;
  std::uint64_t env_seed = 0;
  std::uint64_t action_seed = 0;
  bool record = false;  // fill a TrajectoryBatch (with CBE shaping if enabled)
  bool collect_predictor_samples = false;
};

struct RolloutResult {
  EpisodeMetrics metrics;
  TrajectoryBatch batch;
  std::vector<PredictorSample> predictor_samples;
  std::vector<MarketBehavior> behavior_log;
};

// Naive rule: EV charges at the maximum feasible rate whenever plugged in, the
// home battery is idle, and the net residual is traded with the market.
Projection naive_projection(const HouseholdState& s, const SimConfig& cfg);

RolloutResult rollout(const Scenario& scenario, const ExperimentConfig& cfg, const Variant& variant,
                      const TrainedModels* models, const RolloutOptions& opts);

int train_end_day(const Scenario& scenario, const ExperimentConfig& cfg);

using EpisodeCallback = std::function<void(const EpisodeMetrics&)>;

// Trains one seed. When run_dir is non-empty, writes metrics.csv, the
// checkpoints and config.json there. Throws InvariantError (after dumping the
// last batch) if a PPO update produces a non-finite loss.
TrainedModels run_training(const Scenario& scenario, const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& run_dir = {}, const EpisodeCallback& on_episode = {});

// Greedy (mean-action) evaluation on the test split, one warm-up day first.
EpisodeMetrics evaluate(const Scenario& scenario, const ExperimentConfig& cfg, const TrainedModels& models,
                        std::uint64_t seed);

// Rule-based baseline on days [first_day, end_day); defaults to the test split.
EpisodeMetrics run_naive(const Scenario& scenario, const ExperimentConfig& cfg, std::uint64_t seed,
                         std::optional<int> first_day = {}, std::optional<int> end_day = {});

// Environment seed used for evaluating seed `seed`; shared by every algorithm.
std::uint64_t evaluation_env_seed(std::uint64_t seed);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---- persistence ----------------------------------------------------------

std::string config_to_json(const ExperimentConfig& cfg);
// Fields missing from the JSON keep the values of `base`.
ExperimentConfig config_from_json(std::string_view text, const ExperimentConfig& base = desk_profile());
ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base = desk_profile());

void save_models(const TrainedModels& models, const std::string& run_dir);
TrainedModels load_models(const std::string& run_dir, const ExperimentConfig& cfg);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpisodeMetrics& m);

// ---- multi-seed summaries --------------------------------------------------

struct SeedResult {
  std::string algorithm;
  std::uint64_t seed = 0;
  EpisodeMetrics metrics;
};

struct SummaryRow {
  std::string algorithm;
  double operating_cost = 0.0;  // mean over seeds of total test cost
  double cost_std = 0.0;        // across seeds
  double peak_mean = 0.0;       // over all (seed, day) daily peaks
  double peak_std = 0.0;
  double satisfaction = 1.0;    // worst seed
  std::array<double, 24> hourly_mean{};
  std::array<double, 24> hourly_std{};
};

SummaryRow summarize(const std::string& algorithm, const std::vector<SeedResult>& results);

// summary.csv: algorithm,operating_cost,peak_mean,peak_std
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path);
// seeds.csv: algorithm,seed,operating_cost,peak_mean,peak_std,satisfaction,prediction_mse,lag_mse
void write_seeds_csv(const std::vector<SeedResult>& results, const std::string& path);
// hourly_profile.csv: algorithm,hour,load_mean,load_std,low_price_window
void write_hourly_csv(const std::vector<SummaryRow>& rows, int low_price_end, const std::string& path);
std::string format_summary_table(const std::vector<SummaryRow>& rows);

using ProgressCallback = std::function<void(const std::string& algorithm, std::uint64_t seed, const EpisodeMetrics&)>;

// Trains (where needed) and evaluates every algorithm on every seed of `cfg`.
// With a non-empty out_dir, each run writes to out_dir/<algorithm>/seed_<s>/
// and the combined summary.csv, seeds.csv and hourly_profile.csv go to out_dir.
std::vector<SeedResult> run_comparison(const Scenario& scenario, const ExperimentConfig& cfg,
                                       const std::vector<Algorithm>& algorithms, const std::string& out_dir = {},
                                       const ProgressCallback& progress = {});

struct SweepRow {
  double beta = 0.0;
  SummaryRow summary;
};

// pre-mppo-cbe at each beta; sweep.csv: beta,operating_cost,cost_std,peak_mean,peak_std,satisfaction
std::vector<SweepRow> run_beta_sweep(const Scenario& scenario, const ExperimentConfig& cfg,
                                     const std::vector<double>& betas, const std::string& out_dir = {},
                                     const ProgressCallback& progress = {});
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace microgrid
