#include "microgrid/runner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>

#include "microgrid/errors.hpp"

namespace microgrid {

namespace {

constexpr double kSettlementTol = 1e-6;

struct DayAccumulator {
  std::vector<double> peaks;
  double current_peak = -1e300;
  int slots_in_day = 0;

  void add(double load, int slots_per_day) {
    current_peak = std::max(current_peak, load);
    if (++slots_in_day == slots_per_day) {
      peaks.push_back(current_peak);
      current_peak = -1e300;
      slots_in_day = 0;
    }
  }
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

void dump_batch(const TrajectoryBatch& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) return;
  out << "stream,slot,reward,value,advantage,return,log_prob,raw_trade,raw_ev_rate";
  for (Eigen::Index r = 0; r < b.inputs.rows(); ++r) out << ",x" << r;
  out << '\n';
  out.precision(17);
  for (int t = 0; t < b.length; ++t) {
    for (int i = 0; i < b.n_streams; ++i) {
      const Eigen::Index k = b.index(t, i);
      out << i << ',' << t << ',' << b.rewards(k) << ',' << b.values(k) << ','
          << (b.advantages.size() > k ? b.advantages(k) : 0.0) << ',' << (b.returns.size() > k ? b.returns(k) : 0.0)
          << ',' << b.log_probs(k) << ',' << b.raw_actions(0, k) << ',' << b.raw_actions(1, k);
      for (Eigen::Index r = 0; r < b.inputs.rows(); ++r) out << ',' << b.inputs(r, k);
      out << '\n';
    }
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t evaluation_env_seed(std::uint64_t seed) { return derive_seed(seed, 0xe7a1); }

Projection naive_projection(const HouseholdState& s, const SimConfig& cfg) {
  Projection p;
  if (s.ev_available) p.action.ev_rate = std::max(0.0, ev_rate_window(s, cfg).hi);
  p.home_rate = 0.0;
  p.action.trade = p.action.ev_rate + s.base_load - s.pv_gen;
  return p;
}

int train_end_day(const Scenario& scenario, const ExperimentConfig& cfg) {
  const int end = scenario.days - cfg.test_days;
  if (end < 1) throw ConfigError("scenario has " + std::to_string(scenario.days) + " days, too few for " +
                                 std::to_string(cfg.test_days) + " test days");
  return end;
}

RolloutResult rollout(const Scenario& scenario, const ExperimentConfig& cfg, const Variant& variant,
                      const TrainedModels* models, const RolloutOptions& opts) {
  const SimConfig& sim = cfg.sim;
  const int spd = sim.slots_per_day;
  const int n = sim.n_households;
  const int bins = cfg.predictor.bins;
  const int start_day = opts.first_day - opts.warmup_days;
  if (start_day < 0 || opts.end_day > scenario.days || opts.end_day <= opts.first_day) {
    throw ConfigError("rollout: day range [" + std::to_string(start_day) + ", " + std::to_string(opts.end_day) +
                      ") does not fit the scenario");
  }
  const bool learned = opts.mode != ActionMode::kNaive;
  if (learned && models == nullptr) throw ConfigError("rollout: a learned policy needs models");
  const MarketPredictor* predictor = (models && models->predictor) ? &*models->predictor : nullptr;
  if (learned && variant.source == BehaviorSource::kPredicted && predictor == nullptr) {
    throw ConfigError("rollout: predicted market features need a predictor");
  }
  if (opts.record && !learned) throw ConfigError("rollout: only learned policies can be recorded");

  Community env(scenario, sim);
  env.reset(start_day, opts.env_seed);
  std::mt19937_64 action_rng(opts.action_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int total_slots = (opts.end_day - start_day) * spd;
  const int warmup_slots = opts.warmup_days * spd;
  const int dim = policy_input_dim(bins);
  const double total_scale = cfg.total_scale();
  const SummaryScales summary_scales{cfg.features.price, cfg.features.power};

  RolloutResult res;
  if (opts.record) res.batch = TrajectoryBatch(n, total_slots, dim, kActionDim);
  res.behavior_log.reserve(static_cast<std::size_t>(total_slots));

  HistoryWindow window(cfg.predictor.window);
  Eigen::MatrixXd x(dim, n);
  std::vector<Action> raw(static_cast<std::size_t>(n));
  std::vector<Projection> proj;
  std::vector<double> trades(static_cast<std::size_t>(n));
  std::vector<double> ev_rates;
  std::vector<Action> executed(static_cast<std::size_t>(n));

  EpisodeMetrics& m = res.metrics;
  DayAccumulator days;
  std::array<double, 24> hourly_sum{};
  std::array<int, 24> hourly_count{};
  double pred_se = 0.0, lag_se = 0.0;
  int compared = 0;
  double penalty_sum = 0.0, excess_sum = 0.0;
  int ev_slots = 0, forced = 0;
  long excess_count = 0;
  int satisfied = 0;

  auto market_features = [&](const MarketSummary& summary, std::size_t k, MarketBehavior* pred_out,
                             Eigen::VectorXd* enc_out) {
    const MarketBehavior lag = lag_baseline(res.behavior_log, k, spd, bins);
    bool have_pred = false;
    if (predictor && window.full()) {
      *enc_out = predictor->encode(summary.current, window);
      *pred_out = predictor->predict_encoded(*enc_out);
      have_pred = true;
    }
    switch (variant.source) {
      case BehaviorSource::kNone:
        return std::pair{cold_start_behavior(bins), have_pred};
      case BehaviorSource::kLag:
        return std::pair{lag, have_pred};
      case BehaviorSource::kPredicted:
        return std::pair{have_pred ? *pred_out : lag, have_pred};
    }
    return std::pair{lag, have_pred};
  };

  for (int k = 0; k < total_slots; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& states = env.states();
    const PriceSlot prices = env.prices();
    const MarketSummary summary = summarize_slot(env.slot_of_day(), spd, prices, states, summary_scales);
    MarketBehavior predicted;
    Eigen::VectorXd encoded;
    const auto [features, have_pred] = market_features(summary, ku, &predicted, &encoded);

    Eigen::MatrixXd out;
    if (learned) {
      for (int i = 0; i < n; ++i) {
        write_policy_input(states[static_cast<std::size_t>(i)], features, n, cfg.features, x.col(i));
      }
      out = models->policy.forward(x);
      for (int i = 0; i < n; ++i) {
        Eigen::Vector2d a = out.col(i).head<2>();
        if (opts.mode == ActionMode::kSample) {
          const Eigen::Vector2d xi(normal(action_rng), normal(action_rng));
          const GaussianSample s = sample_from(out.col(i).head<2>(), out.col(i).tail<2>(), xi);
          a = s.action;
          if (opts.record) {
            const Eigen::Index col = res.batch.index(k, i);
            res.batch.log_probs(col) = s.log_prob;
          }
        }
        raw[static_cast<std::size_t>(i)] = to_action(a);
        if (opts.record) {
          const Eigen::Index col = res.batch.index(k, i);
          res.batch.inputs.col(col) = x.col(i);
          res.batch.raw_actions.col(col) = a;
          if (opts.mode != ActionMode::kSample) {
            res.batch.log_probs(col) = gaussian_log_prob(a, out.col(i).head<2>(), out.col(i).tail<2>());
          }
        }
      }
      proj = env.project(raw);
    } else {
      proj.clear();
      for (const auto& s : states) proj.push_back(naive_projection(s, sim));
    }

    for (int i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      trades[iu] = proj[iu].action.trade;
      executed[iu] = proj[iu].action;
    }
    const MarketOutcome outcome = clear_market(trades, prices);
    double slot_cost = 0.0;
    double load = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      slot_cost -= compute_reward(trades[iu], outcome);
      load += trades[iu];
    }
    const double settlement = external_settlement(outcome, prices);
    if (std::abs(slot_cost - settlement) > kSettlementTol * (1.0 + std::abs(settlement))) {
      throw InvariantError("money conservation violated at slot " + std::to_string(env.slot()) +
                           ": households pay " + std::to_string(slot_cost) + ", grid settles " +
                           std::to_string(settlement));
    }

    const std::vector<int> mask = env.ev_mask();
    if (opts.record) {
      std::optional<GaussianSpec> collective;
      if (variant.cbe) {
        ev_rates.clear();
        for (int i = 0; i < n; ++i) {
          if (mask[static_cast<std::size_t>(i)]) ev_rates.push_back(proj[static_cast<std::size_t>(i)].action.ev_rate);
        }
        collective = estimate_collective_policy(ev_rates, cfg.cbe);
      }
      for (int i = 0; i < n; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const Eigen::Index col = res.batch.index(k, i);
        double r = compute_reward(trades[iu], outcome);
        if (collective && mask[iu]) {
          const double sigma = std::max(out(3, i), cfg.cbe.sigma_floor);
          double centre = out(1, i);
          if (cfg.cbe.individual == IndividualPolicy::kRealized) {
            centre = proj[iu].action.ev_rate;
          } else if (cfg.cbe.individual == IndividualPolicy::kClippedMean) {
            const RateWindow w = ev_rate_window(states[iu], sim);
            centre = std::clamp(centre, w.lo, w.hi);
          }
          const double shaped = shaped_reward(r, cbe_value(GaussianSpec{centre, sigma}, *collective, cfg.cbe), cfg.cbe);
          if (k >= warmup_slots) penalty_sum += r - shaped;
          r = shaped;
        }
        res.batch.rewards(col) = r * cfg.ppo.reward_scale;
        res.batch.projected_actions(0, col) = proj[iu].action.trade;
        res.batch.projected_actions(1, col) = proj[iu].action.ev_rate;
      }
    }

    const MarketBehavior realized = aggregate_market_behavior(executed, mask, bins, sim.max_ev_rate);

    if (k >= warmup_slots) {
      m.total_cost += slot_cost;
      m.settlement_cost += settlement;
      days.add(load, spd);
      const int hour = env.slot_of_day() * 24 / spd;
      hourly_sum[static_cast<std::size_t>(hour)] += load;
      ++hourly_count[static_cast<std::size_t>(hour)];
      // Both forecasts are scored on the same slots: a full lag day exists and,
      // when a predictor is present, its window is full.
      if (k >= spd && (predictor == nullptr || have_pred)) {
        if (have_pred) pred_se += behavior_mse(predicted, realized, total_scale);
        lag_se += behavior_mse(lag_baseline(res.behavior_log, ku, spd, bins), realized, total_scale);
        ++compared;
      }
      for (int i = 0; i < n; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (mask[iu]) {
          ++ev_slots;
          if (proj[iu].forced) ++forced;
        }
        excess_sum += std::abs(proj[iu].bound_excess);
        ++excess_count;
      }
    }

    if (opts.collect_predictor_samples && predictor && window.full()) {
      res.predictor_samples.push_back(PredictorSample{encoded, realized});
    }
    window.push(summary.compact, realized);
    res.behavior_log.push_back(realized);

    const DepartureStats dep = env.advance(proj);
    if (k >= warmup_slots) {
      m.departures += dep.departures;
      satisfied += dep.satisfied;
      if (dep.departures > 0) m.min_departure_soc = std::min(m.min_departure_soc, dep.min_soc);
    }
  }

  if (opts.record) {
    // Time-limit truncation: bootstrap every stream from V(s_T).
    const auto& states = env.states();
    const MarketSummary summary = summarize_slot(env.slot_of_day(), spd, env.prices(), states, summary_scales);
    MarketBehavior predicted;
    Eigen::VectorXd encoded;
    const auto [features, have_pred] = market_features(summary, static_cast<std::size_t>(total_slots), &predicted, &encoded);
    (void)have_pred;
    for (int i = 0; i < n; ++i) {
      write_policy_input(states[static_cast<std::size_t>(i)], features, n, cfg.features, x.col(i));
    }
    res.batch.bootstrap_values = models->value.forward(x).row(0).transpose();
    res.batch.values = models->value.forward(res.batch.inputs).row(0).transpose();
  }

  m.days = opts.end_day - opts.first_day;
  m.daily_peaks = days.peaks;
  m.peak_mean = mean_of(days.peaks);
  m.peak_std = std_of(days.peaks);
  m.peak_max = days.peaks.empty() ? 0.0 : *std::max_element(days.peaks.begin(), days.peaks.end());
  m.mean_daily_cost = m.total_cost / std::max(1, m.days);
  for (std::size_t h = 0; h < 24; ++h) m.hourly_profile[h] = hourly_count[h] ? hourly_sum[h] / hourly_count[h] : 0.0;
  m.satisfaction = m.departures > 0 ? static_cast<double>(satisfied) / m.departures : 1.0;
  if (compared > 0) {
    if (predictor) m.prediction_mse = pred_se / compared;
    m.lag_mse = lag_se / compared;
  }
  m.cbe_penalty = ev_slots > 0 ? penalty_sum / ev_slots : 0.0;
  m.bound_excess = excess_count > 0 ? excess_sum / static_cast<double>(excess_count) : 0.0;
  m.forced_share = ev_slots > 0 ? static_cast<double>(forced) / ev_slots : 0.0;
  return res;
}

TrainedModels run_training(const Scenario& scenario, const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& run_dir, const EpisodeCallback& on_episode) {
  cfg.validate();
  const Variant variant = cfg.variant();
  if (!variant.learned) throw ConfigError("the naive baseline has nothing to train");
  const int end = train_end_day(scenario, cfg);
  const int dim = policy_input_dim(cfg.predictor.bins);

  TrainedModels models{make_policy_net(dim, cfg.hidden, cfg.sim.max_ev_rate, cfg.ppo.init_sigma, derive_seed(seed, 1)),
                       make_value_net(dim, cfg.hidden, derive_seed(seed, 2)), std::nullopt};
  if (variant.source == BehaviorSource::kPredicted) {
    models.predictor.emplace(cfg.sim.slots_per_day, cfg.total_scale(), cfg.predictor, derive_seed(seed, 3));
  }
  nn::OptimState popt(models.policy, nn::AdamConfig{cfg.ppo.lr}, cfg.episodes);
  nn::OptimState vopt(models.value, nn::AdamConfig{cfg.ppo.lr}, cfg.episodes);
  std::mt19937_64 shuffle_rng(derive_seed(seed, 5));
  std::mt19937_64 predictor_rng(derive_seed(seed, 6));
  std::deque<std::vector<PredictorSample>> replay;

  std::ofstream metrics_out;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    metrics_out.open(std::filesystem::path(run_dir) / "metrics.csv");
    if (!metrics_out) throw LoadError("cannot write " + run_dir + "/metrics.csv");
    metrics_out << metrics_csv_header() << '\n';
    std::ofstream(std::filesystem::path(run_dir) / "config.json") << config_to_json(cfg) << '\n';
  }

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    popt.set_episode(ep);
    vopt.set_episode(ep);
    RolloutOptions opts;
    opts.first_day = 0;
    opts.end_day = end;
    opts.mode = ActionMode::kSample;
    opts.env_seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(ep));
    opts.action_seed = derive_seed(seed, 1000000 + static_cast<std::uint64_t>(ep));
    opts.record = true;
    opts.collect_predictor_samples = models.predictor.has_value();
    RolloutResult res = rollout(scenario, cfg, variant, &models, opts);

    compute_gae(res.batch, cfg.ppo.gamma, cfg.ppo.lambda);
    const UpdateStats stats = ppo_update(models.policy, popt, models.value, vopt, res.batch, cfg.ppo, shuffle_rng);
    if (stats.aborted) {
      std::string where = "(no run directory)";
      if (!run_dir.empty()) {
        where = (std::filesystem::path(run_dir) / "diagnostic_batch.csv").string();
        dump_batch(res.batch, where);
      }
      throw InvariantError("non-finite PPO loss in episode " + std::to_string(ep) + " of seed " +
                           std::to_string(seed) + "; last batch dumped to " + where);
    }

    if (models.predictor) {
      replay.push_back(std::move(res.predictor_samples));
      while (static_cast<int>(replay.size()) > std::max(1, cfg.predictor.replay_episodes)) replay.pop_front();
      std::vector<PredictorSample> data;
      for (const auto& r : replay) data.insert(data.end(), r.begin(), r.end());
      models.predictor->train(data, cfg.predictor.epochs_per_refit, predictor_rng);
    }

    EpisodeMetrics& m = res.metrics;
    m.episode = ep;
    m.update = stats;
    m.lr = popt.lr;
    if (metrics_out.is_open()) {
      metrics_out << metrics_csv_row(m) << '\n';
      metrics_out.flush();
    }
    if (on_episode) on_episode(m);
  }
  if (!run_dir.empty()) save_models(models, run_dir);
  return models;
}

EpisodeMetrics evaluate(const Scenario& scenario, const ExperimentConfig& cfg, const TrainedModels& models,
                        std::uint64_t seed) {
  cfg.validate();
  const int first = train_end_day(scenario, cfg);
  RolloutOptions opts;
  opts.first_day = first;
  opts.end_day = scenario.days;
  opts.warmup_days = first >= 1 ? 1 : 0;
  opts.mode = ActionMode::kMean;
  opts.env_seed = evaluation_env_seed(seed);
  opts.action_seed = derive_seed(seed, 7);
  return rollout(scenario, cfg, cfg.variant(), &models, opts).metrics;
}

EpisodeMetrics run_naive(const Scenario& scenario, const ExperimentConfig& cfg, std::uint64_t seed,
                         std::optional<int> first_day, std::optional<int> end_day) {
  cfg.validate();
  RolloutOptions opts;
  opts.first_day = first_day.value_or(train_end_day(scenario, cfg));
  opts.end_day = end_day.value_or(scenario.days);
  opts.warmup_days = opts.first_day >= 1 ? 1 : 0;
  opts.mode = ActionMode::kNaive;
  opts.env_seed = evaluation_env_seed(seed);
  return rollout(scenario, cfg, Variant{false, BehaviorSource::kNone, false}, nullptr, opts).metrics;
}

}  // namespace microgrid
