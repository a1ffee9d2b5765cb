#pragma once

// Collective behavior entropy: a reward-shaping term that penalizes an
// individual EV-charging policy only when it is simultaneously close to what
// the crowd is doing and close to an extreme (max-rate) charging policy.

#include <optional>
#include <span>

namespace microgrid {

struct GaussianSpec {
  double mean = 0.0;
  double std = 1.0;
};

enum class CollectiveVariance {
  kPopulation,       // sum (a - mean)^2 / N
  kUnnormalizedSum,  // sum (a - mean)^2, grows with N
};

// Which Gaussian stands in for household i's policy at a slot.
enum class IndividualPolicy {
  kEmitted,    // the policy head's (mu, sigma) for the EV dimension
  kRealized,   // centred on the executed EV rate, with the head's sigma
  kClippedMean,  // head's mu clipped to the feasible EV window, head's sigma
};

struct CbeConfig {
  double beta = 1.0;
  double ext_mean = 6.0;  // kW, defaults to the max EV rate
  double ext_std = 0.6;   // kW, 0.1 * max EV rate
  double kl_floor = 1e-3;
  double sigma_floor = 6e-3;  // 1e-3 * max EV rate
  CollectiveVariance variance = CollectiveVariance::kPopulation;
  IndividualPolicy individual = IndividualPolicy::kClippedMean;

  // Defaults scaled to a max EV rate of `eta`.
  static CbeConfig for_max_rate(double eta, double beta = 1.0);
  void validate() const;
};

// KL(p || q) for univariate Gaussians.
double kl_gaussian(const GaussianSpec& p, const GaussianSpec& q);

// Mean and spread of the executed EV rates; nullopt when no EV is plugged in.
std::optional<GaussianSpec> estimate_collective_policy(std::span<const double> ev_actions, const CbeConfig& cfg);

// E = max(KL(col || i), floor) * max(KL(ext || i), floor).
double cbe_value(const GaussianSpec& individual, const GaussianSpec& collective, const CbeConfig& cfg);

// base - beta / E. Returns `base` untouched when beta == 0.
double shaped_reward(double base_reward, double e_cbe, const CbeConfig& cfg);

}  // namespace microgrid
