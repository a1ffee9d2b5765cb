#include "microgrid/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "microgrid/errors.hpp"

namespace microgrid {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

void write_policy_input(const HouseholdState& s, const MarketBehavior& market, int n_households,
                        const FeatureScales& scales, Eigen::Ref<Eigen::VectorXd> out) {
  const auto bins = static_cast<Eigen::Index>(market.ev_hist.size());
  if (out.size() != kObservationDim + 2 + bins) throw ConfigError("policy input has the wrong dimension");
  out(0) = s.price / scales.price;
  out(1) = s.base_load / scales.power;
  out(2) = s.home_soc;
  out(3) = s.pv_gen / scales.power;
  out(4) = s.ev_available;
  out(5) = s.ev_soc;
  out(6) = s.ev_depart / scales.hours;
  const double total_scale = scales.per_household_total * n_households;
  out(7) = market.sell_total / total_scale;
  out(8) = market.buy_total / total_scale;
  for (Eigen::Index k = 0; k < bins; ++k) out(9 + k) = market.ev_hist[static_cast<std::size_t>(k)];
}

Eigen::VectorXd make_policy_input(const HouseholdState& s, const MarketBehavior& market, int n_households,
                                  const FeatureScales& scales) {
  Eigen::VectorXd v(policy_input_dim(static_cast<int>(market.ev_hist.size())));
  write_policy_input(s, market, n_households, scales, v);
  return v;
}

double gaussian_log_prob(const Eigen::VectorXd& a, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double z = (a(k) - mu(k)) / sigma(k);
    lp += -0.5 * z * z - std::log(sigma(k)) - kHalfLog2Pi;
  }
  return lp;
}

LogProbGrad log_prob_grad(double mu, double sigma, double a) {
  const double d = a - mu;
  return {d / (sigma * sigma), d * d / (sigma * sigma * sigma) - 1.0 / sigma};
}

GaussianSample sample_from(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, const Eigen::VectorXd& xi) {
  GaussianSample out;
  out.action = mu + xi.cwiseProduct(sigma);
  out.log_prob = gaussian_log_prob(out.action, mu, sigma);
  return out;
}

GaussianSample sample_action(const nn::DenseNet& policy, const Eigen::VectorXd& input, std::mt19937_64& rng) {
  if (policy.head() != nn::HeadKind::kGaussian) throw ConfigError("sample_action needs a gaussian-head policy");
  const Eigen::VectorXd out = policy.forward_one(input);
  const int d = policy.action_dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(d);
  for (int k = 0; k < d; ++k) xi(k) = normal(rng);
  return sample_from(out.head(d), out.tail(d), xi);
}

TrajectoryBatch::TrajectoryBatch(int streams, int slots, int input_dim, int action_dim)
    : n_streams(streams), length(slots) {
  const Eigen::Index n = static_cast<Eigen::Index>(streams) * slots;
  inputs.resize(input_dim, n);
  raw_actions.resize(action_dim, n);
  projected_actions.resize(action_dim, n);
  log_probs.resize(n);
  rewards.resize(n);
  values.resize(n);
  dones.assign(static_cast<std::size_t>(n), 0);
  bootstrap_values = Eigen::VectorXd::Zero(streams);
}

void compute_gae(TrajectoryBatch& b, double gamma, double lambda) {
  const Eigen::Index n = b.size();
  if (b.rewards.size() != n || b.values.size() != n || static_cast<Eigen::Index>(b.dones.size()) != n ||
      b.bootstrap_values.size() != b.n_streams) {
    throw ConfigError("compute_gae: batch arrays have inconsistent sizes");
  }
  b.advantages.resize(n);
  b.returns.resize(n);
  for (int i = 0; i < b.n_streams; ++i) {
    double gae = 0.0;
    for (int t = b.length - 1; t >= 0; --t) {
      const Eigen::Index k = b.index(t, i);
      const double next_value = (t == b.length - 1) ? b.bootstrap_values(i) : b.values(b.index(t + 1, i));
      const double live = b.dones[static_cast<std::size_t>(k)] ? 0.0 : 1.0;
      const double delta = b.rewards(k) + gamma * next_value * live - b.values(k);
      gae = delta + gamma * lambda * live * gae;
      b.advantages(k) = gae;
    }
  }
  b.returns = b.advantages + b.values;
}

void PpoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must be in [0,1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo.lambda must be in [0,1]");
  if (!(clip > 0.0)) throw ConfigError("ppo.clip must be > 0");
  if (epochs < 1 || minibatch < 1) throw ConfigError("ppo.epochs and ppo.minibatch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("ppo.lr must be > 0");
  if (!(init_sigma > 0.0)) throw ConfigError("ppo.init_sigma must be > 0");
}

SurrogateResult clipped_surrogate(const nn::DenseNet& policy, const Eigen::MatrixXd& inputs,
                                  const Eigen::MatrixXd& actions, const Eigen::VectorXd& old_log_probs,
                                  const Eigen::VectorXd& advantages, double clip) {
  nn::ForwardCache cache;
  const Eigen::MatrixXd out = policy.forward(inputs, &cache);
  const int d = policy.action_dim();
  const Eigen::Index n = inputs.cols();
  Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(out.rows(), n);

  SurrogateResult res;
  int clipped = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd mu = out.col(j).head(d);
    const Eigen::VectorXd sigma = out.col(j).tail(d);
    const double lp = gaussian_log_prob(actions.col(j), mu, sigma);
    const double ratio = std::exp(lp - old_log_probs(j));
    const double adv = advantages(j);
    const double unclipped = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    res.mean_ratio += ratio;
    if (unclipped <= bounded) {
      res.objective += unclipped;
      // d(r A)/d theta = A r d log pi / d theta
      const double coef = adv * ratio / static_cast<double>(n);
      for (int k = 0; k < d; ++k) {
        const LogProbGrad g = log_prob_grad(mu(k), sigma(k), actions(k, j));
        out_grad(k, j) = coef * g.d_mu;
        out_grad(d + k, j) = coef * g.d_sigma;
      }
    } else {
      res.objective += bounded;
      ++clipped;
    }
  }
  res.objective /= static_cast<double>(n);
  res.mean_ratio /= static_cast<double>(n);
  res.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  res.grad = policy.backward(cache, out_grad);
  return res;
}

UpdateStats ppo_update(nn::DenseNet& policy, nn::OptimState& policy_opt, nn::DenseNet& value,
                       nn::OptimState& value_opt, TrajectoryBatch& batch, const PpoConfig& cfg, std::mt19937_64& rng) {
  const Eigen::Index n = batch.size();
  UpdateStats stats;
  if (n == 0) return stats;
  if (batch.advantages.size() != n) throw ConfigError("ppo_update: compute_gae must run first");

  const nn::DenseNet policy_backup = policy;
  const nn::DenseNet value_backup = value;
  const nn::OptimState popt_backup = policy_opt;
  const nn::OptimState vopt_backup = value_opt;

  Eigen::VectorXd adv = batch.advantages;
  if (cfg.normalize_advantages && n > 1) {
    const double mean = adv.mean();
    const double var = (adv.array() - mean).square().sum() / static_cast<double>(n);
    adv = (adv.array() - mean) / (std::sqrt(var) + 1e-8);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index mb = std::min<Eigen::Index>(cfg.minibatch, n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += mb) {
      const Eigen::Index len = std::min(mb, n - start);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const Eigen::MatrixXd x = batch.inputs(Eigen::all, idx);
      const Eigen::MatrixXd a = batch.raw_actions(Eigen::all, idx);
      const Eigen::VectorXd old_lp = batch.log_probs(idx);
      const Eigen::VectorXd mb_adv = adv(idx);
      const Eigen::VectorXd ret = batch.returns(idx);

      SurrogateResult s = clipped_surrogate(policy, x, a, old_lp, mb_adv, cfg.clip);

      nn::ForwardCache vcache;
      const Eigen::VectorXd v = value.forward(x, &vcache).row(0).transpose();
      const Eigen::VectorXd diff = v - ret;
      const double vloss = cfg.value_coef * diff.squaredNorm() / static_cast<double>(len);

      if (!std::isfinite(s.objective) || !std::isfinite(vloss) || !s.grad.allFinite()) {
        policy = policy_backup;
        value = value_backup;
        policy_opt = popt_backup;
        value_opt = vopt_backup;
        stats.aborted = true;
        return stats;
      }

      Eigen::VectorXd pgrad = -s.grad;
      nn::clip_grad_norm(pgrad, cfg.max_grad_norm);
      nn::update(policy, pgrad, policy_opt);

      const Eigen::MatrixXd vout_grad = (cfg.value_coef * 2.0 / static_cast<double>(len)) * diff.transpose();
      Eigen::VectorXd vgrad = value.backward(vcache, vout_grad);
      nn::clip_grad_norm(vgrad, cfg.max_grad_norm);
      nn::update(value, vgrad, value_opt);

      stats.mean_ratio += s.mean_ratio;
      stats.clip_fraction += s.clip_fraction;
      stats.policy_loss += -s.objective;
      stats.value_loss += vloss;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double m = stats.minibatches;
    stats.mean_ratio /= m;
    stats.clip_fraction /= m;
    stats.policy_loss /= m;
    stats.value_loss /= m;
  }
  return stats;
}

nn::DenseNet make_policy_net(int input_dim, int hidden, double max_ev_rate, double init_sigma, std::uint64_t seed) {
  nn::DenseNet net({input_dim, hidden, hidden, 2 * kActionDim}, nn::HeadKind::kGaussian,
                   nn::SigmaBounds{1e-3, 2.0 * max_ev_rate});
  net.init_orthogonal(seed, std::sqrt(2.0), 0.01);
  const int last = net.num_layers() - 1;
  for (int k = 0; k < kActionDim; ++k) net.bias(last)(kActionDim + k) = std::log(init_sigma);
  return net;
}

nn::DenseNet make_value_net(int input_dim, int hidden, std::uint64_t seed) {
  nn::DenseNet net({input_dim, hidden, hidden, 1}, nn::HeadKind::kLinear);
  net.init_orthogonal(seed, std::sqrt(2.0), 1.0);
  return net;
}

}  // namespace microgrid
