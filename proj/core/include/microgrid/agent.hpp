#pragma once

// Shared Gaussian PPO agent: every household samples from one policy network
// and one value network.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "microgrid/env.hpp"
#include "microgrid/market.hpp"
#include "microgrid/nn.hpp"

namespace microgrid {

inline constexpr int kObservationDim = 7;
inline constexpr int kActionDim = 2;  // trade, EV rate

// Fixed scales that bring every policy input to O(1).
struct FeatureScales {
  double price = 0.3;    // $/kWh
  double power = 2.0;    // kW, base load and PV
  double hours = 12.0;   // departure countdown
  double per_household_total = 2.0;  // kWh per household for a_s, a_b
};

inline int policy_input_dim(int hist_bins) { return kObservationDim + 2 + hist_bins; }

// Own observation followed by market-behavior features (a_s, a_b, C_e histogram).
void write_policy_input(const HouseholdState& s, const MarketBehavior& market, int n_households,
                        const FeatureScales& scales, Eigen::Ref<Eigen::VectorXd> out);
Eigen::VectorXd make_policy_input(const HouseholdState& s, const MarketBehavior& market, int n_households,
                                  const FeatureScales& scales);

// Diagonal-Gaussian log density.
double gaussian_log_prob(const Eigen::VectorXd& a, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma);

struct LogProbGrad {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

// d log N(a; mu, sigma) / d mu = (a - mu) / sigma^2
// d log N(a; mu, sigma) / d sigma = (a - mu)^2 / sigma^3 - 1 / sigma
LogProbGrad log_prob_grad(double mu, double sigma, double a);

struct GaussianSample {
  Eigen::VectorXd action;
  double log_prob = 0.0;
};

// a = mu + xi * sigma, xi ~ N(0, 1) per dimension.
GaussianSample sample_action(const nn::DenseNet& policy, const Eigen::VectorXd& input, std::mt19937_64& rng);
GaussianSample sample_from(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, const Eigen::VectorXd& xi);

inline Action to_action(const Eigen::VectorXd& a) { return Action{a(0), a(1)}; }

// Slot-major storage: column / entry k = t * n_streams + i for household i at
// slot t. Each household is an independent stream for advantage estimation.
struct TrajectoryBatch {
  int n_streams = 0;
  int length = 0;
  Eigen::MatrixXd inputs;       // input_dim x (length * n_streams)
  Eigen::MatrixXd raw_actions;  // action_dim x ...
  Eigen::MatrixXd projected_actions;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  std::vector<std::uint8_t> dones;  // episode ended after this transition
  Eigen::VectorXd bootstrap_values;  // V(s_T) per stream, used when not done
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  TrajectoryBatch() = default;
  TrajectoryBatch(int streams, int slots, int input_dim, int action_dim);
  Eigen::Index size() const { return static_cast<Eigen::Index>(n_streams) * length; }
  Eigen::Index index(int slot, int stream) const { return static_cast<Eigen::Index>(slot) * n_streams + stream; }
};

// GAE(gamma, lambda) per stream; a done flag cuts the recursion.
void compute_gae(TrajectoryBatch& batch, double gamma, double lambda);

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 256;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double lr = 3e-4;
  bool normalize_advantages = true;
  double reward_scale = 1.0;  // rewards are multiplied by this before GAE
  double init_sigma = 1.0;    // kW, initial policy std

  void validate() const;
};

struct SurrogateResult {
  double objective = 0.0;  // mean of min(r A, clip(r) A)
  Eigen::VectorXd grad;    // d objective / d policy params
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;  // samples whose clipped branch is active
};

// Clipped PPO surrogate and its exact parameter gradient over the given
// columns. Gradients reach mu and sigma through log_prob_grad.
SurrogateResult clipped_surrogate(const nn::DenseNet& policy, const Eigen::MatrixXd& inputs,
                                  const Eigen::MatrixXd& actions, const Eigen::VectorXd& old_log_probs,
                                  const Eigen::VectorXd& advantages, double clip);

struct UpdateStats {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  int minibatches = 0;
  bool aborted = false;
};

// Clipped-surrogate ascent on the policy, MSE regression of the value net on
// returns. On a non-finite loss both networks and optimizers are restored and
// `aborted` is set.
UpdateStats ppo_update(nn::DenseNet& policy, nn::OptimState& policy_opt, nn::DenseNet& value,
                       nn::OptimState& value_opt, TrajectoryBatch& batch, const PpoConfig& cfg, std::mt19937_64& rng);

// Policy: input -> 64 -> 64 -> (mu, log sigma) for both action dims; sigma
// clamped to [1e-3, 2 * max_ev_rate]. Output layer scaled by 0.01.
nn::DenseNet make_policy_net(int input_dim, int hidden, double max_ev_rate, double init_sigma, std::uint64_t seed);
nn::DenseNet make_value_net(int input_dim, int hidden, std::uint64_t seed);

}  // namespace microgrid
