#include "microgrid/cbe.hpp"

#include <algorithm>
#include <cmath>

#include "microgrid/errors.hpp"

namespace microgrid {

CbeConfig CbeConfig::for_max_rate(double eta, double beta) {
  CbeConfig cfg;
  cfg.beta = beta;
  cfg.ext_mean = eta;
  cfg.ext_std = 0.1 * eta;
  cfg.sigma_floor = 1e-3 * eta;
  return cfg;
}

void CbeConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("CBE beta must be >= 0");
  if (!(kl_floor > 0.0)) throw ConfigError("CBE kl_floor must be > 0");
  if (!(sigma_floor > 0.0)) throw ConfigError("CBE sigma_floor must be > 0");
  if (!(ext_std >= sigma_floor)) throw ConfigError("CBE ext_std must be >= sigma_floor");
}

double kl_gaussian(const GaussianSpec& p, const GaussianSpec& q) {
  const double dm = p.mean - q.mean;
  return std::log(q.std / p.std) + (p.std * p.std + dm * dm) / (2.0 * q.std * q.std) - 0.5;
}

std::optional<GaussianSpec> estimate_collective_policy(std::span<const double> ev_actions, const CbeConfig& cfg) {
  if (ev_actions.empty()) return std::nullopt;
  double mean = 0.0;
  for (double a : ev_actions) mean += a;
  mean /= static_cast<double>(ev_actions.size());
  double ss = 0.0;
  for (double a : ev_actions) ss += (a - mean) * (a - mean);
  const double var = cfg.variance == CollectiveVariance::kPopulation ? ss / static_cast<double>(ev_actions.size()) : ss;
  return GaussianSpec{mean, std::max(std::sqrt(var), cfg.sigma_floor)};
}

double cbe_value(const GaussianSpec& individual, const GaussianSpec& collective, const CbeConfig& cfg) {
  const GaussianSpec ext{cfg.ext_mean, cfg.ext_std};
  const double to_crowd = std::max(kl_gaussian(collective, individual), cfg.kl_floor);
  const double to_extreme = std::max(kl_gaussian(ext, individual), cfg.kl_floor);
  return to_crowd * to_extreme;
}

double shaped_reward(double base_reward, double e_cbe, const CbeConfig& cfg) {
  if (cfg.beta == 0.0) return base_reward;
  return base_reward - cfg.beta / std::max(e_cbe, cfg.kl_floor * cfg.kl_floor);
}

}  // namespace microgrid
