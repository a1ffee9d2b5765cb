#include "microgrid/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "microgrid/errors.hpp"

namespace microgrid::nn {

DenseNet::DenseNet(std::vector<int> layer_sizes, HeadKind head, SigmaBounds bounds)
    : sizes_(std::move(layer_sizes)), head_(head), bounds_(bounds) {
  if (sizes_.size() < 2) throw ConfigError("DenseNet needs at least an input and an output size");
  for (int s : sizes_) {
    if (s < 1) throw ConfigError("DenseNet layer sizes must be positive");
  }
  if (head_ == HeadKind::kGaussian && sizes_.back() % 2 != 0) {
    throw ConfigError("gaussian head needs an even output size (mu and log sigma per dimension)");
  }
  if (!(bounds_.min > 0.0 && bounds_.max > bounds_.min)) throw ConfigError("bad sigma bounds");
  Eigen::Index total = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<Eigen::MatrixXd> DenseNet::weights(int layer) {
  return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<const Eigen::MatrixXd> DenseNet::weights(int layer) const {
  return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<Eigen::VectorXd> DenseNet::bias(int layer) {
  return {params_.data() + offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1],
          sizes_[layer + 1]};
}
Eigen::Map<const Eigen::VectorXd> DenseNet::bias(int layer) const {
  return {params_.data() + offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1],
          sizes_[layer + 1]};
}

void DenseNet::init_orthogonal(std::uint64_t seed, double hidden_gain, double output_gain) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  params_.setZero();
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = sizes_[l + 1];
    const int cols = sizes_[l];
    const int big = std::max(rows, cols);
    const int small = std::min(rows, cols);
    Eigen::MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    // Sign fix so the draw is uniform over orthogonal matrices.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (int j = 0; j < small; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    const double gain = (l + 1 == num_layers()) ? output_gain : hidden_gain;
    if (rows >= cols) weights(l) = gain * q;
    else weights(l) = gain * q.transpose();
  }
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& input, ForwardCache* cache) const {
  if (input.rows() != sizes_.front()) {
    throw ConfigError("DenseNet::forward: input has " + std::to_string(input.rows()) + " rows, expected " +
                      std::to_string(sizes_.front()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  Eigen::MatrixXd a = input;
  const int last = num_layers() - 1;
  for (int l = 0; l < last; ++l) {
    Eigen::MatrixXd z = weights(l) * a;
    z.colwise() += bias(l);
    a = z.array().tanh().matrix();
    if (cache) cache->activations.push_back(a);
  }
  Eigen::MatrixXd raw = weights(last) * a;
  raw.colwise() += bias(last);
  if (cache) cache->raw_output = raw;
  if (head_ == HeadKind::kLinear) return raw;

  const int d = action_dim();
  const double lo = std::log(bounds_.min);
  const double hi = std::log(bounds_.max);
  Eigen::MatrixXd out = raw;
  out.bottomRows(d) = raw.bottomRows(d).unaryExpr([lo, hi](double x) { return std::exp(std::clamp(x, lo, hi)); });
  return out;
}

Eigen::VectorXd DenseNet::forward_one(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::VectorXd DenseNet::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const {
  const int last = num_layers() - 1;
  if (static_cast<int>(cache.activations.size()) != num_layers() || output_grad.rows() != sizes_.back() ||
      output_grad.cols() != cache.raw_output.cols()) {
    throw ConfigError("DenseNet::backward: cache/gradient shape does not match the network");
  }
  Eigen::MatrixXd g = output_grad;
  if (head_ == HeadKind::kGaussian) {
    const int d = action_dim();
    const double lo = std::log(bounds_.min);
    const double hi = std::log(bounds_.max);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (int k = 0; k < d; ++k) {
        const double ls = cache.raw_output(d + k, j);
        // d sigma / d log sigma = sigma inside the clamp window, 0 outside.
        g(d + k, j) = (ls > lo && ls < hi) ? g(d + k, j) * std::exp(ls) : 0.0;
      }
    }
  }

  Eigen::VectorXd grads = Eigen::VectorXd::Zero(params_.size());
  for (int l = last; l >= 0; --l) {
    const Eigen::MatrixXd& a_prev = cache.activations[static_cast<std::size_t>(l)];
    const Eigen::Index w_size = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    Eigen::Map<Eigen::MatrixXd>(grads.data() + offsets_[l], sizes_[l + 1], sizes_[l]).noalias() =
        g * a_prev.transpose();
    grads.segment(offsets_[l] + w_size, sizes_[l + 1]) = g.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = weights(l).transpose() * g;
      g = back.array() * (1.0 - a_prev.array().square());
    }
  }
  return grads;
}

double LinearDecay::at(int episode) const {
  if (total_episodes <= 0) return initial;
  const double frac = 1.0 - static_cast<double>(episode) / static_cast<double>(total_episodes);
  return initial * std::max(0.0, frac);
}

OptimState::OptimState(const DenseNet& net, AdamConfig cfg, int total_episodes)
    : m(Eigen::VectorXd::Zero(net.num_params())),
      v(Eigen::VectorXd::Zero(net.num_params())),
      lr(cfg.lr),
      config(cfg),
      schedule{cfg.lr, total_episodes} {}

bool update(DenseNet& net, const Eigen::VectorXd& grads, OptimState& opt) {
  if (grads.size() != net.num_params() || opt.m.size() != net.num_params()) {
    throw ConfigError("update: gradient/optimizer size does not match the network");
  }
  if (!grads.allFinite()) {
    ++opt.skipped;
    return false;
  }
  const auto& c = opt.config;
  ++opt.step;
  opt.m = c.beta1 * opt.m + (1.0 - c.beta1) * grads;
  opt.v = c.beta2 * opt.v + (1.0 - c.beta2) * grads.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  const double step = opt.lr / bc1;
  net.params().array() -= step * opt.m.array() / ((opt.v.array() / bc2).sqrt() + c.eps);
  if (!net.params_finite()) throw InvariantError("update: parameters became non-finite");
  return true;
}

double clip_grad_norm(Eigen::VectorXd& grads, double max_norm) {
  const double norm = grads.norm();
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

namespace {

const char* head_name(HeadKind h) { return h == HeadKind::kGaussian ? "gaussian" : "linear"; }

}  // namespace

std::string to_checkpoint_json(const DenseNet& net) {
  nlohmann::json j;
  j["format"] = "microgrid.densenet";
  j["version"] = 1;
  j["layer_sizes"] = net.layer_sizes();
  j["head"] = head_name(net.head());
  j["sigma_bounds"] = {net.sigma_bounds().min, net.sigma_bounds().max};
  j["num_params"] = net.num_params();
  j["params"] = std::vector<double>(net.params().data(), net.params().data() + net.num_params());
  return j.dump();
}

DenseNet from_checkpoint_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "microgrid.densenet" || j.value("version", 0) != 1) {
    throw ConfigError("checkpoint: unknown format or version");
  }
  const auto head_str = j.at("head").get<std::string>();
  HeadKind head;
  if (head_str == "gaussian") head = HeadKind::kGaussian;
  else if (head_str == "linear") head = HeadKind::kLinear;
  else throw ConfigError("checkpoint: unknown head '" + head_str + "'");
  const auto sb = j.at("sigma_bounds").get<std::vector<double>>();
  if (sb.size() != 2) throw ConfigError("checkpoint: sigma_bounds must have two entries");
  DenseNet net(j.at("layer_sizes").get<std::vector<int>>(), head, SigmaBounds{sb[0], sb[1]});
  const auto params = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(params.size()) != net.num_params() ||
      j.at("num_params").get<Eigen::Index>() != net.num_params()) {
    throw ConfigError("checkpoint: parameter count does not match layer sizes");
  }
  net.params() = Eigen::Map<const Eigen::VectorXd>(params.data(), net.num_params());
  if (!net.params_finite()) throw ConfigError("checkpoint: non-finite parameters");
  return net;
}

void save_checkpoint(const DenseNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out << to_checkpoint_json(net) << '\n';
}

DenseNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_checkpoint_json(ss.str());
}

}  // namespace microgrid::nn
