#include "microgrid/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "microgrid/errors.hpp"

namespace microgrid {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double hist_mass(const MarketBehavior& b) { return std::accumulate(b.ev_hist.begin(), b.ev_hist.end(), 0.0); }

}  // namespace

int summary_dim(int slots_per_day) { return slots_per_day + 3 + 5; }

MarketSummary summarize_slot(int slot_of_day, int slots_per_day, const PriceSlot& prices,
                             const std::vector<HouseholdState>& states, const SummaryScales& scales) {
  MarketSummary out;
  out.current = Eigen::VectorXd::Zero(summary_dim(slots_per_day));
  out.current(slot_of_day) = 1.0;
  double home = 0.0, ev = 0.0, plugged = 0.0, pv = 0.0, load = 0.0;
  for (const auto& s : states) {
    home += s.home_soc;
    pv += s.pv_gen;
    load += s.base_load;
    if (s.ev_available) {
      ev += s.ev_soc;
      plugged += 1.0;
    }
  }
  const double n = std::max<double>(1.0, static_cast<double>(states.size()));
  Eigen::Index k = slots_per_day;
  out.current(k++) = prices.sell_ext / scales.price;
  out.current(k++) = prices.internal / scales.price;
  out.current(k++) = prices.buy_ext / scales.price;
  out.current(k++) = home / n;
  out.current(k++) = plugged > 0.0 ? ev / plugged : 0.0;
  out.current(k++) = plugged / n;
  out.current(k++) = pv / n / scales.power;
  out.current(k++) = load / n / scales.power;
  out.compact.resize(kCompactSummaryDim);
  out.compact << prices.buy_ext / scales.price, pv / n / scales.power, load / n / scales.power;
  return out;
}

HistoryWindow::HistoryWindow(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("HistoryWindow capacity must be >= 1");
}

void HistoryWindow::push(const Eigen::VectorXd& compact_summary, const MarketBehavior& behavior) {
  entries_.push_back(Entry{compact_summary, behavior});
  if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

MarketPredictor::MarketPredictor(int slots_per_day, double total_scale, const PredictorConfig& cfg, std::uint64_t seed)
    : slots_per_day_(slots_per_day), total_scale_(total_scale), cfg_(cfg) {
  if (cfg.bins < 2 || cfg.window < 1 || cfg.hidden < 1) throw ConfigError("invalid predictor config");
  if (!(total_scale > 0.0)) throw ConfigError("predictor total_scale must be > 0");
  const int in = summary_dim(slots_per_day) + cfg.window * (kCompactSummaryDim + 2 + cfg.bins);
  net_ = nn::DenseNet({in, cfg.hidden, cfg.hidden, 2 + cfg.bins}, nn::HeadKind::kLinear);
  net_.init_orthogonal(seed, std::sqrt(2.0), 0.1);
  opt_ = nn::OptimState(net_, nn::AdamConfig{cfg.lr}, 0);
}

MarketPredictor::MarketPredictor(nn::DenseNet net, int slots_per_day, double total_scale, const PredictorConfig& cfg)
    : slots_per_day_(slots_per_day), total_scale_(total_scale), cfg_(cfg), net_(std::move(net)) {
  const int in = summary_dim(slots_per_day) + cfg.window * (kCompactSummaryDim + 2 + cfg.bins);
  if (net_.input_size() != in || net_.output_size() != 2 + cfg.bins || net_.head() != nn::HeadKind::kLinear) {
    throw ConfigError("predictor network shape does not match its config");
  }
  opt_ = nn::OptimState(net_, nn::AdamConfig{cfg.lr}, 0);
}

Eigen::VectorXd MarketPredictor::encode(const Eigen::VectorXd& current_summary, const HistoryWindow& window) const {
  if (!window.full() || window.capacity() != cfg_.window) {
    throw ConfigError("MarketPredictor: history window is not full");
  }
  const Eigen::Index sd = summary_dim(slots_per_day_);
  if (current_summary.size() != sd) throw ConfigError("MarketPredictor: summary has the wrong size");
  Eigen::VectorXd x(input_dim());
  x.head(sd) = current_summary;
  Eigen::Index k = sd;
  for (const auto& e : window.entries()) {
    x.segment(k, kCompactSummaryDim) = e.summary;
    k += kCompactSummaryDim;
    x(k++) = e.behavior.sell_total / total_scale_;
    x(k++) = e.behavior.buy_total / total_scale_;
    for (double h : e.behavior.ev_hist) x(k++) = h;
  }
  return x;
}

MarketBehavior MarketPredictor::decode(const Eigen::VectorXd& raw) const {
  MarketBehavior out;
  out.sell_total = softplus(raw(0)) * total_scale_;
  out.buy_total = softplus(raw(1)) * total_scale_;
  const Eigen::VectorXd logits = raw.tail(cfg_.bins);
  const double mx = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - mx).exp();
  const double z = e.sum();
  out.ev_hist.resize(static_cast<std::size_t>(cfg_.bins));
  for (int k = 0; k < cfg_.bins; ++k) out.ev_hist[static_cast<std::size_t>(k)] = e(k) / z;
  return out;
}

MarketBehavior MarketPredictor::predict_encoded(const Eigen::VectorXd& input) const {
  return decode(net_.forward_one(input));
}

MarketBehavior MarketPredictor::predict(const Eigen::VectorXd& current_summary, const HistoryWindow& window) const {
  return predict_encoded(encode(current_summary, window));
}

double MarketPredictor::loss(const std::vector<PredictorSample>& data) const {
  if (data.empty()) return 0.0;
  Eigen::MatrixXd x(input_dim(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t j = 0; j < data.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = data[j].input;
  const Eigen::MatrixXd raw = net_.forward(x);
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& tgt = data[j].target;
    const auto col = raw.col(static_cast<Eigen::Index>(j));
    const double es = softplus(col(0)) - tgt.sell_total / total_scale_;
    const double eb = softplus(col(1)) - tgt.buy_total / total_scale_;
    double l = 0.5 * (es * es + eb * eb);
    if (hist_mass(tgt) > 0.0) {
      const Eigen::VectorXd logits = col.tail(cfg_.bins);
      const double mx = logits.maxCoeff();
      const double lse = mx + std::log((logits.array() - mx).exp().sum());
      for (int k = 0; k < cfg_.bins; ++k) l -= tgt.ev_hist[static_cast<std::size_t>(k)] * (logits(k) - lse);
    }
    total += l;
  }
  return total / static_cast<double>(data.size());
}

std::vector<double> MarketPredictor::train(const std::vector<PredictorSample>& data, int epochs, std::mt19937_64& rng) {
  std::vector<double> curve;
  if (data.empty()) return curve;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = static_cast<std::size_t>(std::max(1, cfg_.minibatch));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t len = std::min(mb, order.size() - start);
      Eigen::MatrixXd x(input_dim(), static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) x.col(static_cast<Eigen::Index>(j)) = data[order[start + j]].input;
      nn::ForwardCache cache;
      const Eigen::MatrixXd raw = net_.forward(x, &cache);
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(raw.rows(), raw.cols());
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t j = 0; j < len; ++j) {
        const auto& tgt = data[order[start + j]].target;
        const auto jj = static_cast<Eigen::Index>(j);
        const double es = softplus(raw(0, jj)) - tgt.sell_total / total_scale_;
        const double eb = softplus(raw(1, jj)) - tgt.buy_total / total_scale_;
        double l = 0.5 * (es * es + eb * eb);
        g(0, jj) = es * sigmoid(raw(0, jj)) * inv;
        g(1, jj) = eb * sigmoid(raw(1, jj)) * inv;
        const double mass = hist_mass(tgt);
        if (mass > 0.0) {
          const Eigen::VectorXd logits = raw.col(jj).tail(cfg_.bins);
          const double mx = logits.maxCoeff();
          const Eigen::VectorXd e = (logits.array() - mx).exp();
          const double z = e.sum();
          for (int k = 0; k < cfg_.bins; ++k) {
            const double p = e(k) / z;
            const double t = tgt.ev_hist[static_cast<std::size_t>(k)];
            l -= t * (logits(k) - mx - std::log(z));
            g(2 + k, jj) = (mass * p - t) * inv;
          }
        }
        epoch_loss += l;
      }
      const Eigen::VectorXd grads = net_.backward(cache, g);
      nn::update(net_, grads, opt_);
    }
    curve.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return curve;
}

MarketBehavior cold_start_behavior(int bins) {
  MarketBehavior b;
  b.ev_hist.assign(static_cast<std::size_t>(bins), 1.0 / bins);
  return b;
}

MarketBehavior lag_baseline(const std::vector<MarketBehavior>& log, std::size_t t, int slots_per_day, int bins) {
  const auto spd = static_cast<std::size_t>(slots_per_day);
  if (t < spd || t - spd >= log.size()) return cold_start_behavior(bins);
  return log[t - spd];
}

double behavior_mse(const MarketBehavior& predicted, const MarketBehavior& realized, double total_scale) {
  const double es = (predicted.sell_total - realized.sell_total) / total_scale;
  const double eb = (predicted.buy_total - realized.buy_total) / total_scale;
  double sum = es * es + eb * eb;
  int count = 2;
  if (hist_mass(realized) > 0.0) {
    const std::size_t k = std::min(predicted.ev_hist.size(), realized.ev_hist.size());
    for (std::size_t i = 0; i < k; ++i) {
      const double e = predicted.ev_hist[i] - realized.ev_hist[i];
      sum += e * e;
    }
    count += static_cast<int>(k);
  }
  return sum / count;
}

}  // namespace microgrid
