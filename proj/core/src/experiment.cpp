#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "microgrid/errors.hpp"
#include "microgrid/runner.hpp"

namespace microgrid {

namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string_view to_string(ForcedChargeRule r) {
  return r == ForcedChargeRule::kEvenSpread ? "even-spread" : "latest-feasible";
}

ForcedChargeRule parse_forced(const std::string& s) {
  if (s == "even-spread") return ForcedChargeRule::kEvenSpread;
  if (s == "latest-feasible") return ForcedChargeRule::kLatestFeasible;
  throw ConfigError("sim.forced_charge must be \"even-spread\" or \"latest-feasible\", got \"" + s + "\"");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field \"") + key + "\": " + e.what());
  }
}

json sim_json(const SimConfig& s) {
  return json{{"n_households", s.n_households},
              {"slots_per_day", s.slots_per_day},
              {"horizon_days", s.horizon_days},
              {"charge_efficiency", s.charge_efficiency},
              {"home_batt_capacity", s.home_batt_capacity},
              {"ev_batt_capacity", s.ev_batt_capacity},
              {"max_ev_rate", s.max_ev_rate},
              {"max_home_batt_rate", s.max_home_batt_rate},
              {"ev_min_departure_soc", s.ev_min_departure_soc},
              {"ev_consumption", s.ev_consumption},
              {"gamma_shape", s.gamma_shape},
              {"gamma_scale", s.gamma_scale},
              {"arrival_soc_floor", s.arrival_soc_floor},
              {"ev_arrival_slot", s.ev_arrival_slot},
              {"ev_departure_slot", s.ev_departure_slot},
              {"initial_home_soc", s.initial_home_soc},
              {"forced_charge", std::string(to_string(s.forced_charge))},
              {"rng_seed", s.rng_seed}};
}

void sim_from(const json& j, SimConfig& s) {
  read(j, "n_households", s.n_households);
  read(j, "slots_per_day", s.slots_per_day);
  read(j, "horizon_days", s.horizon_days);
  read(j, "charge_efficiency", s.charge_efficiency);
  read(j, "home_batt_capacity", s.home_batt_capacity);
  read(j, "ev_batt_capacity", s.ev_batt_capacity);
  read(j, "max_ev_rate", s.max_ev_rate);
  read(j, "max_home_batt_rate", s.max_home_batt_rate);
  read(j, "ev_min_departure_soc", s.ev_min_departure_soc);
  read(j, "ev_consumption", s.ev_consumption);
  read(j, "gamma_shape", s.gamma_shape);
  read(j, "gamma_scale", s.gamma_scale);
  read(j, "arrival_soc_floor", s.arrival_soc_floor);
  read(j, "ev_arrival_slot", s.ev_arrival_slot);
  read(j, "ev_departure_slot", s.ev_departure_slot);
  read(j, "initial_home_soc", s.initial_home_soc);
  read(j, "rng_seed", s.rng_seed);
  if (j.contains("forced_charge")) {
    std::string f;
    read(j, "forced_charge", f);
    s.forced_charge = parse_forced(f);
  }
}

const char* individual_name(IndividualPolicy p) {
  switch (p) {
    case IndividualPolicy::kEmitted: return "emitted";
    case IndividualPolicy::kRealized: return "realized";
    case IndividualPolicy::kClippedMean: return "clipped-mean";
  }
  return "?";
}

json cbe_json(const CbeConfig& c) {
  return json{{"beta", c.beta},
              {"ext_mean", c.ext_mean},
              {"ext_std", c.ext_std},
              {"kl_floor", c.kl_floor},
              {"sigma_floor", c.sigma_floor},
              {"variance", c.variance == CollectiveVariance::kPopulation ? "population" : "sum"},
              {"individual", individual_name(c.individual)}};
}

void cbe_from(const json& j, CbeConfig& c) {
  read(j, "beta", c.beta);
  read(j, "ext_mean", c.ext_mean);
  read(j, "ext_std", c.ext_std);
  read(j, "kl_floor", c.kl_floor);
  read(j, "sigma_floor", c.sigma_floor);
  if (j.contains("variance")) {
    std::string v;
    read(j, "variance", v);
    if (v == "population") c.variance = CollectiveVariance::kPopulation;
    else if (v == "sum") c.variance = CollectiveVariance::kUnnormalizedSum;
    else throw ConfigError("cbe.variance must be \"population\" or \"sum\", got \"" + v + "\"");
  }
  if (j.contains("individual")) {
    std::string v;
    read(j, "individual", v);
    if (v == "realized") c.individual = IndividualPolicy::kRealized;
    else if (v == "emitted") c.individual = IndividualPolicy::kEmitted;
    else if (v == "clipped-mean") c.individual = IndividualPolicy::kClippedMean;
    else throw ConfigError("cbe.individual must be \"realized\", \"emitted\" or \"clipped-mean\", got \"" + v + "\"");
  }
}

json ppo_json(const PpoConfig& p) {
  return json{{"gamma", p.gamma},
              {"lambda", p.lambda},
              {"clip", p.clip},
              {"epochs", p.epochs},
              {"minibatch", p.minibatch},
              {"value_coef", p.value_coef},
              {"max_grad_norm", p.max_grad_norm},
              {"lr", p.lr},
              {"normalize_advantages", p.normalize_advantages},
              {"reward_scale", p.reward_scale},
              {"init_sigma", p.init_sigma}};
}

void ppo_from(const json& j, PpoConfig& p) {
  read(j, "gamma", p.gamma);
  read(j, "lambda", p.lambda);
  read(j, "clip", p.clip);
  read(j, "epochs", p.epochs);
  read(j, "minibatch", p.minibatch);
  read(j, "value_coef", p.value_coef);
  read(j, "max_grad_norm", p.max_grad_norm);
  read(j, "lr", p.lr);
  read(j, "normalize_advantages", p.normalize_advantages);
  read(j, "reward_scale", p.reward_scale);
  read(j, "init_sigma", p.init_sigma);
}

json predictor_json(const PredictorConfig& p) {
  return json{{"window", p.window},         {"hidden", p.hidden},
              {"bins", p.bins},             {"lr", p.lr},
              {"minibatch", p.minibatch},   {"epochs_per_refit", p.epochs_per_refit},
              {"replay_episodes", p.replay_episodes}};
}

void predictor_from(const json& j, PredictorConfig& p) {
  read(j, "window", p.window);
  read(j, "hidden", p.hidden);
  read(j, "bins", p.bins);
  read(j, "lr", p.lr);
  read(j, "minibatch", p.minibatch);
  read(j, "epochs_per_refit", p.epochs_per_refit);
  read(j, "replay_episodes", p.replay_episodes);
}

json features_json(const FeatureScales& f) {
  return json{{"price", f.price}, {"power", f.power}, {"hours", f.hours}, {"per_household_total", f.per_household_total}};
}

void features_from(const json& j, FeatureScales& f) {
  read(j, "price", f.price);
  read(j, "power", f.power);
  read(j, "hours", f.hours);
  read(j, "per_household_total", f.per_household_total);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kNaive: return "naive";
    case Algorithm::kPpoSingle: return "ppo-single";
    case Algorithm::kMppo: return "mppo";
    case Algorithm::kPreMppo: return "pre-mppo";
    case Algorithm::kPreMppoCbe: return "pre-mppo-cbe";
  }
  return "unknown";
}

std::string_view to_string(BehaviorSource s) {
  switch (s) {
    case BehaviorSource::kNone: return "none";
    case BehaviorSource::kLag: return "lag";
    case BehaviorSource::kPredicted: return "predicted";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::kNaive, Algorithm::kPpoSingle, Algorithm::kMppo, Algorithm::kPreMppo,
                      Algorithm::kPreMppoCbe}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm \"" + std::string(name) +
                    "\" (expected naive, ppo-single, mppo, pre-mppo or pre-mppo-cbe)");
}

Variant variant_of(Algorithm a) {
  switch (a) {
    case Algorithm::kNaive: return {false, BehaviorSource::kNone, false};
    case Algorithm::kPpoSingle: return {true, BehaviorSource::kNone, false};
    case Algorithm::kMppo: return {true, BehaviorSource::kLag, false};
    case Algorithm::kPreMppo: return {true, BehaviorSource::kPredicted, false};
    case Algorithm::kPreMppoCbe: return {true, BehaviorSource::kPredicted, true};
  }
  return {};
}

void ExperimentConfig::validate() const {
  sim.validate();
  cbe.validate();
  ppo.validate();
  if (predictor.bins < 2) throw ConfigError("predictor.bins must be >= 2");
  if (predictor.window < 1 || predictor.hidden < 1) throw ConfigError("predictor.window and hidden must be >= 1");
  if (!(predictor.lr > 0.0)) throw ConfigError("predictor.lr must be > 0");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (test_days < 1) throw ConfigError("test_days must be >= 1");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!(features.price > 0.0 && features.power > 0.0 && features.hours > 0.0 && features.per_household_total > 0.0)) {
    throw ConfigError("feature scales must be > 0");
  }
}

ExperimentConfig desk_profile() {
  ExperimentConfig cfg;
  cfg.sim.n_households = 20;
  cfg.sim.horizon_days = 30;
  cfg.episodes = 125;
  cfg.test_days = 7;
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.cbe = CbeConfig::for_max_rate(cfg.sim.max_ev_rate, cfg.cbe.beta);
  return cfg;
}

ExperimentConfig paper_profile() {
  ExperimentConfig cfg = desk_profile();
  cfg.sim.n_households = 200;
  cfg.sim.horizon_days = 35;
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  const json j{{"algorithm", std::string(to_string(cfg.algorithm))},
               {"episodes", cfg.episodes},
               {"test_days", cfg.test_days},
               {"hidden", cfg.hidden},
               {"seeds", cfg.seeds},
               {"output_dir", cfg.output_dir},
               {"sim", sim_json(cfg.sim)},
               {"cbe", cbe_json(cfg.cbe)},
               {"ppo", ppo_json(cfg.ppo)},
               {"predictor", predictor_json(cfg.predictor)},
               {"features", features_json(cfg.features)}};
  return j.dump(2);
}

ExperimentConfig config_from_json(std::string_view text, const ExperimentConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg = base;
  if (j.contains("algorithm")) {
    std::string a;
    read(j, "algorithm", a);
    cfg.algorithm = parse_algorithm(a);
  }
  read(j, "episodes", cfg.episodes);
  read(j, "test_days", cfg.test_days);
  read(j, "hidden", cfg.hidden);
  read(j, "seeds", cfg.seeds);
  read(j, "output_dir", cfg.output_dir);
  if (j.contains("sim")) sim_from(j.at("sim"), cfg.sim);
  if (j.contains("cbe")) cbe_from(j.at("cbe"), cfg.cbe);
  if (j.contains("ppo")) ppo_from(j.at("ppo"), cfg.ppo);
  if (j.contains("predictor")) predictor_from(j.at("predictor"), cfg.predictor);
  if (j.contains("features")) features_from(j.at("features"), cfg.features);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  return config_from_json(read_file(path), base);
}

void save_models(const TrainedModels& models, const std::string& run_dir) {
  const std::filesystem::path dir(run_dir);
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(models.policy, (dir / "policy.json").string());
  nn::save_checkpoint(models.value, (dir / "value.json").string());
  if (models.predictor) nn::save_checkpoint(models.predictor->net(), (dir / "predictor.json").string());
}

TrainedModels load_models(const std::string& run_dir, const ExperimentConfig& cfg) {
  const std::filesystem::path dir(run_dir);
  TrainedModels models{nn::load_checkpoint((dir / "policy.json").string()),
                       nn::load_checkpoint((dir / "value.json").string()), std::nullopt};
  const int dim = policy_input_dim(cfg.predictor.bins);
  if (models.policy.input_size() != dim || models.policy.head() != nn::HeadKind::kGaussian ||
      models.policy.action_dim() != kActionDim) {
    throw LoadError(run_dir + "/policy.json does not match the configured policy shape");
  }
  if (cfg.variant().source == BehaviorSource::kPredicted) {
    models.predictor.emplace(nn::load_checkpoint((dir / "predictor.json").string()), cfg.sim.slots_per_day,
                             cfg.total_scale(), cfg.predictor);
  }
  return models;
}

std::string metrics_csv_header() {
  std::string h =
      "episode,days,total_cost,mean_daily_cost,settlement_cost,peak_mean,peak_std,peak_max,satisfaction,"
      "departures,min_departure_soc,prediction_mse,lag_mse,cbe_penalty,bound_excess,forced_share,"
      "policy_loss,value_loss,mean_ratio,clip_fraction,lr";
  for (int h24 = 0; h24 < 24; ++h24) {
    char buf[8];
    std::snprintf(buf, sizeof buf, ",h%02d", h24);
    h += buf;
  }
  return h;
}

std::string metrics_csv_row(const EpisodeMetrics& m) {
  std::string r = std::to_string(m.episode) + ',' + std::to_string(m.days);
  for (double v : {m.total_cost, m.mean_daily_cost, m.settlement_cost, m.peak_mean, m.peak_std, m.peak_max,
                   m.satisfaction}) {
    r += ',' + num(v);
  }
  r += ',' + std::to_string(m.departures);
  for (double v : {m.min_departure_soc, m.prediction_mse, m.lag_mse, m.cbe_penalty, m.bound_excess, m.forced_share,
                   m.update.policy_loss, m.update.value_loss, m.update.mean_ratio, m.update.clip_fraction, m.lr}) {
    r += ',' + num(v);
  }
  for (double v : m.hourly_profile) r += ',' + num(v);
  return r;
}

SummaryRow summarize(const std::string& algorithm, const std::vector<SeedResult>& results) {
  SummaryRow row;
  row.algorithm = algorithm;
  std::vector<double> costs, peaks;
  std::array<std::vector<double>, 24> hourly;
  for (const auto& r : results) {
    if (r.algorithm != algorithm) continue;
    costs.push_back(r.metrics.total_cost);
    peaks.insert(peaks.end(), r.metrics.daily_peaks.begin(), r.metrics.daily_peaks.end());
    row.satisfaction = std::min(row.satisfaction, r.metrics.satisfaction);
    for (std::size_t h = 0; h < 24; ++h) hourly[h].push_back(r.metrics.hourly_profile[h]);
  }
  auto mean_std = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair{0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / static_cast<double>(v.size()))};
  };
  std::tie(row.operating_cost, row.cost_std) = mean_std(costs);
  std::tie(row.peak_mean, row.peak_std) = mean_std(peaks);
  for (std::size_t h = 0; h < 24; ++h) std::tie(row.hourly_mean[h], row.hourly_std[h]) = mean_std(hourly[h]);
  return row;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  out << "algorithm,operating_cost,peak_mean,peak_std\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',' << num(r.operating_cost) << ',' << num(r.peak_mean) << ',' << num(r.peak_std) << '\n';
  }
}

void write_seeds_csv(const std::vector<SeedResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  out << "algorithm,seed,operating_cost,peak_mean,peak_std,satisfaction,prediction_mse,lag_mse\n";
  for (const auto& r : results) {
    const auto& m = r.metrics;
    out << r.algorithm << ',' << r.seed << ',' << num(m.total_cost) << ',' << num(m.peak_mean) << ','
        << num(m.peak_std) << ',' << num(m.satisfaction) << ',' << num(m.prediction_mse) << ',' << num(m.lag_mse)
        << '\n';
  }
}

void write_hourly_csv(const std::vector<SummaryRow>& rows, int low_price_end, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  out << "algorithm,hour,load_mean,load_std,low_price_window\n";
  for (const auto& r : rows) {
    for (int h = 0; h < 24; ++h) {
      const auto hu = static_cast<std::size_t>(h);
      out << r.algorithm << ',' << h << ',' << num(r.hourly_mean[hu]) << ',' << num(r.hourly_std[hu]) << ','
          << (h < low_price_end ? 1 : 0) << '\n';
    }
  }
}

std::string format_summary_table(const std::vector<SummaryRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %14s %10s %12s %10s %12s\n", "algorithm", "cost ($)", "cost std",
                "peak (kW)", "peak std", "satisfaction");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %14.2f %10.2f %12.2f %10.2f %12.3f\n", r.algorithm.c_str(),
                  r.operating_cost, r.cost_std, r.peak_mean, r.peak_std, r.satisfaction);
    out += buf;
  }
  return out;
}

std::vector<SeedResult> run_comparison(const Scenario& scenario, const ExperimentConfig& cfg,
                                       const std::vector<Algorithm>& algorithms, const std::string& out_dir,
                                       const ProgressCallback& progress) {
  cfg.validate();
  std::vector<SeedResult> results;
  std::vector<SummaryRow> rows;
  for (Algorithm a : algorithms) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.algorithm = a;
    const std::string name(to_string(a));
    for (std::uint64_t seed : cfg.seeds) {
      EpisodeMetrics m;
      if (a == Algorithm::kNaive) {
        m = run_naive(scenario, run_cfg, seed);
      } else {
        std::string run_dir;
        if (!out_dir.empty()) {
          run_dir = (std::filesystem::path(out_dir) / name / ("seed_" + std::to_string(seed))).string();
        }
        EpisodeCallback cb;
        if (progress) cb = [&](const EpisodeMetrics& e) { progress(name, seed, e); };
        const TrainedModels models = run_training(scenario, run_cfg, seed, run_dir, cb);
        m = evaluate(scenario, run_cfg, models, seed);
      }
      results.push_back(SeedResult{name, seed, m});
    }
    rows.push_back(summarize(name, results));
  }
  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_summary_csv(rows, (dir / "summary.csv").string());
    write_seeds_csv(results, (dir / "seeds.csv").string());
    write_hourly_csv(rows, 8, (dir / "hourly_profile.csv").string());
  }
  return results;
}

std::vector<SweepRow> run_beta_sweep(const Scenario& scenario, const ExperimentConfig& cfg,
                                     const std::vector<double>& betas, const std::string& out_dir,
                                     const ProgressCallback& progress) {
  std::vector<SweepRow> rows;
  for (double beta : betas) {
    ExperimentConfig c = cfg;
    c.cbe.beta = beta;
    std::string sub;
    if (!out_dir.empty()) sub = (std::filesystem::path(out_dir) / ("beta_" + num(beta))).string();
    const auto results = run_comparison(scenario, c, {Algorithm::kPreMppoCbe}, sub, progress);
    rows.push_back(SweepRow{beta, summarize(std::string(to_string(Algorithm::kPreMppoCbe)), results)});
  }
  if (!out_dir.empty()) write_sweep_csv(rows, (std::filesystem::path(out_dir) / "sweep.csv").string());
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  out << "beta,operating_cost,cost_std,peak_mean,peak_std,satisfaction\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    out << num(r.beta) << ',' << num(s.operating_cost) << ',' << num(s.cost_std) << ',' << num(s.peak_mean) << ','
        << num(s.peak_std) << ',' << num(s.satisfaction) << '\n';
  }
}

}  // namespace microgrid
