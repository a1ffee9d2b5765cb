#pragma once

// Small dense networks with hand-written backprop. Samples are columns:
// forward takes an (inputs x batch) matrix and returns (outputs x batch).
//
// All weights and biases live in one flat parameter vector so the optimizer,
// gradient clipping and checkpointing can treat a network as a single array.
// Layer l owns a column-major (out x in) weight block followed by its bias.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace microgrid::nn {

enum class HeadKind {
  kLinear,
  // Raw outputs are [mu (d rows); log sigma (d rows)]; the head emits
  // [mu; sigma] with sigma = exp(log sigma) clamped to [sigma_min, sigma_max].
  kGaussian,
};

struct SigmaBounds {
  double min = 1e-3;
  double max = 12.0;
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // input, then each hidden layer (post-tanh)
  Eigen::MatrixXd raw_output;
};

class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::vector<int> layer_sizes, HeadKind head, SigmaBounds bounds = {});

  // Orthogonal init with per-layer gain; biases zeroed.
  void init_orthogonal(std::uint64_t seed, double hidden_gain, double output_gain);
  void set_zero() { params_.setZero(); }

  int input_size() const { return sizes_.front(); }
  int raw_output_size() const { return sizes_.back(); }
  // Rows emitted by forward(); same as raw_output_size for both heads.
  int output_size() const { return sizes_.back(); }
  // Gaussian head: number of action dimensions (half the outputs).
  int action_dim() const { return head_ == HeadKind::kGaussian ? sizes_.back() / 2 : sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  HeadKind head() const { return head_; }
  const SigmaBounds& sigma_bounds() const { return bounds_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache* cache = nullptr) const;
  Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const;

  // Gradient of sum_j <output_grad(:, j), output(:, j)> with respect to every
  // parameter, for the batch cached by forward().
  Eigen::VectorXd backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }
  bool params_finite() const { return params_.allFinite(); }

  Eigen::Map<Eigen::MatrixXd> weights(int layer);
  Eigen::Map<const Eigen::MatrixXd> weights(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

 private:
  std::vector<int> sizes_;
  HeadKind head_ = HeadKind::kLinear;
  SigmaBounds bounds_;
  Eigen::VectorXd params_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's weight block
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// lr(e) = initial * (1 - e / total_episodes), floored at zero.
struct LinearDecay {
  double initial = 3e-4;
  int total_episodes = 1;

  double at(int episode) const;
};

struct OptimState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double lr = 3e-4;
  AdamConfig config;
  LinearDecay schedule;
  long skipped = 0;  // updates dropped for non-finite gradients

  OptimState() = default;
  OptimState(const DenseNet& net, AdamConfig cfg, int total_episodes);

  void set_episode(int episode) { lr = schedule.at(episode); }
};

// One Adam step. Returns false (and leaves everything untouched except
// `skipped`) when the gradient has a NaN/Inf.
bool update(DenseNet& net, const Eigen::VectorXd& grads, OptimState& opt);

// Rescales `grads` in place so its L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(Eigen::VectorXd& grads, double max_norm);

// Checkpoint JSON: {"format": "microgrid.densenet", "version": 1,
//  "layer_sizes": [...], "head": "linear"|"gaussian", "sigma_bounds": [min, max],
//  "num_params": P, "params": [P doubles]}. Doubles round-trip exactly.
std::string to_checkpoint_json(const DenseNet& net);
DenseNet from_checkpoint_json(std::string_view text);
void save_checkpoint(const DenseNet& net, const std::string& path);
DenseNet load_checkpoint(const std::string& path);

}  // namespace microgrid::nn
