// mgsim: generate scenarios, train and evaluate the community EV-charging
// agents, and run the comparison and beta sweep.
//
// Exit codes: 0 success, 1 unexpected error, 2 bad config or input data,
// 3 a simulation invariant failed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "microgrid/data.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/runner.hpp"

namespace mg = microgrid;

namespace {

struct Common {
  std::string config_path;
  std::string scenario_path;
  std::uint64_t scenario_seed = 7;
  std::string profile = "desk";
  int episodes = 0;
  std::vector<std::uint64_t> seeds;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Experiment config JSON (fields override the profile)");
  app->add_option("--scenario", c.scenario_path, "Scenario directory; synthetic data is generated when omitted");
  app->add_option("--scenario-seed", c.scenario_seed, "Seed for the synthetic scenario");
  app->add_option("--profile", c.profile, "Base profile: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--episodes", c.episodes, "Override the number of training episodes");
  app->add_option("--seeds", c.seeds, "Override the seed list");
  app->add_option("--out", c.out, "Output directory");
  app->add_flag("--quiet", c.quiet, "No per-episode progress");
}

mg::ExperimentConfig resolve_config(const Common& c) {
  mg::ExperimentConfig cfg = c.profile == "paper" ? mg::paper_profile() : mg::desk_profile();
  if (!c.config_path.empty()) cfg = mg::load_config(c.config_path, cfg);
  if (c.episodes > 0) cfg.episodes = c.episodes;
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

mg::Scenario resolve_scenario(const Common& c, const mg::ExperimentConfig& cfg) {
  if (!c.scenario_path.empty()) return mg::load_scenario(c.scenario_path);
  mg::SyntheticConfig syn;
  syn.n_households = cfg.sim.n_households;
  syn.days = cfg.sim.horizon_days;
  syn.slots_per_day = cfg.sim.slots_per_day;
  return mg::generate_synthetic(syn, c.scenario_seed);
}

mg::ProgressCallback progress(bool quiet) {
  if (quiet) return {};
  return [](const std::string& algo, std::uint64_t seed, const mg::EpisodeMetrics& m) {
    std::fprintf(stderr, "%s seed %llu ep %3d  daily cost %8.3f  peak %7.2f  sat %.3f\n", algo.c_str(),
                 static_cast<unsigned long long>(seed), m.episode, m.mean_daily_cost, m.peak_mean, m.satisfaction);
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Community EV-charging market simulator"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic scenario directory");
  mg::SyntheticConfig syn;
  std::uint64_t gen_seed = 7;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Scenario directory")->required();
  gen->add_option("--households", syn.n_households);
  gen->add_option("--days", syn.days);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--drift", syn.load_drift_per_day, "Relative base-load growth per day");
  gen->add_option("--pv-penetration", syn.pv_penetration);

  // train
  auto* train = app.add_subcommand("train", "Train one algorithm for one seed");
  Common train_c;
  std::string train_algo;
  std::uint64_t train_seed = 1;
  add_common(train, train_c);
  train->add_option("--algorithm", train_algo, "ppo-single, mppo, pre-mppo or pre-mppo-cbe");
  train->add_option("--seed", train_seed);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Evaluate a trained run directory on the test split");
  Common eval_c;
  std::string eval_run;
  std::uint64_t eval_seed = 1;
  add_common(eval, eval_c);
  eval->add_option("--run", eval_run, "Run directory holding config.json and checkpoints")->required();
  eval->add_option("--seed", eval_seed);

  // compare
  auto* cmp = app.add_subcommand("compare", "Train and evaluate several algorithms over all seeds");
  Common cmp_c;
  std::vector<std::string> cmp_algos{"naive", "ppo-single", "mppo", "pre-mppo", "pre-mppo-cbe"};
  add_common(cmp, cmp_c);
  cmp->add_option("--algorithms", cmp_algos);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "pre-mppo-cbe at several beta values");
  Common sweep_c;
  std::vector<double> betas{0.5, 1.0, 3.0, 10.0, 30.0};
  add_common(sweep, sweep_c);
  sweep->add_option("--betas", betas);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const mg::Scenario s = mg::generate_synthetic(syn, gen_seed);
      mg::save_scenario(s, gen_out);
      std::printf("wrote %s (%d households, %d days, %s)\n", gen_out.c_str(), s.n_households, s.days,
                  s.config_hash.c_str());
    } else if (train->parsed()) {
      mg::ExperimentConfig cfg = resolve_config(train_c);
      if (!train_algo.empty()) cfg.algorithm = mg::parse_algorithm(train_algo);
      const mg::Scenario s = resolve_scenario(train_c, cfg);
      const std::string name(mg::to_string(cfg.algorithm));
      const std::string dir =
          (std::filesystem::path(cfg.output_dir) / name / ("seed_" + std::to_string(train_seed))).string();
      const auto cb = progress(train_c.quiet);
      const auto models = mg::run_training(s, cfg, train_seed, dir, [&](const mg::EpisodeMetrics& m) {
        if (cb) cb(name, train_seed, m);
      });
      const mg::EpisodeMetrics m = mg::evaluate(s, cfg, models, train_seed);
      std::printf("%s seed %llu: test cost %.3f, peak %.3f kW (std %.3f), satisfaction %.3f\nrun dir: %s\n",
                  name.c_str(), static_cast<unsigned long long>(train_seed), m.total_cost, m.peak_mean, m.peak_std,
                  m.satisfaction, dir.c_str());
    } else if (eval->parsed()) {
      Common c = eval_c;
      if (c.config_path.empty()) c.config_path = (std::filesystem::path(eval_run) / "config.json").string();
      const mg::ExperimentConfig cfg = resolve_config(c);
      const mg::Scenario s = resolve_scenario(c, cfg);
      const auto models = mg::load_models(eval_run, cfg);
      const mg::EpisodeMetrics m = mg::evaluate(s, cfg, models, eval_seed);
      std::printf("test cost %.3f, peak %.3f kW (std %.3f), satisfaction %.3f\n", m.total_cost, m.peak_mean,
                  m.peak_std, m.satisfaction);
    } else if (cmp->parsed()) {
      const mg::ExperimentConfig cfg = resolve_config(cmp_c);
      const mg::Scenario s = resolve_scenario(cmp_c, cfg);
      std::vector<mg::Algorithm> algos;
      for (const auto& a : cmp_algos) algos.push_back(mg::parse_algorithm(a));
      const auto results = mg::run_comparison(s, cfg, algos, cfg.output_dir, progress(cmp_c.quiet));
      std::vector<mg::SummaryRow> rows;
      for (const auto& a : cmp_algos) rows.push_back(mg::summarize(a, results));
      std::cout << mg::format_summary_table(rows);
    } else if (sweep->parsed()) {
      const mg::ExperimentConfig cfg = resolve_config(sweep_c);
      const mg::Scenario s = resolve_scenario(sweep_c, cfg);
      const auto rows = mg::run_beta_sweep(s, cfg, betas, cfg.output_dir, progress(sweep_c.quiet));
      std::printf("%8s %12s %10s %10s\n", "beta", "cost ($)", "peak (kW)", "satisf.");
      for (const auto& r : rows) {
        std::printf("%8.2f %12.2f %10.2f %10.3f\n", r.beta, r.summary.operating_cost, r.summary.peak_mean,
                    r.summary.satisfaction);
      }
    }
  } catch (const mg::InvariantError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return 3;
  } catch (const mg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const mg::LoadError& e) {
    std::fprintf(stderr, "load error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
