#include "microgrid/market.hpp"

#include <algorithm>
#include <cmath>

#include "microgrid/errors.hpp"

namespace microgrid {

MarketOutcome clear_totals(double total_sell, double total_buy, const PriceSlot& prices) {
  if (!prices.ordered()) throw ConfigError("clear_market: prices must satisfy p_os <= p_in <= p_ob");
  if (!(total_sell >= 0.0) || !(total_buy >= 0.0)) throw ConfigError("clear_market: totals must be >= 0");

  MarketOutcome out{total_sell, total_buy, prices.internal, prices.internal};
  if (total_sell == 0.0 && total_buy == 0.0) return out;
  if (total_sell >= total_buy) {
    out.sell_price = (prices.internal * total_buy + prices.sell_ext * (total_sell - total_buy)) / total_sell;
  } else {
    out.buy_price = (prices.internal * total_sell + prices.buy_ext * (total_buy - total_sell)) / total_buy;
  }
  // Blends can round a ulp past the endpoints.
  out.sell_price = std::clamp(out.sell_price, prices.sell_ext, prices.internal);
  out.buy_price = std::clamp(out.buy_price, prices.internal, prices.buy_ext);
  return out;
}

MarketOutcome clear_market(std::span<const double> trades, const PriceSlot& prices) {
  double sell = 0.0;
  double buy = 0.0;
  for (double p : trades) {
    if (p > 0.0) buy += p;
    else sell -= p;
  }
  return clear_totals(sell, buy, prices);
}

MarketOutcome clear_market(std::span<const Action> actions, const PriceSlot& prices) {
  double sell = 0.0;
  double buy = 0.0;
  for (const auto& a : actions) {
    if (a.trade > 0.0) buy += a.trade;
    else sell -= a.trade;
  }
  return clear_totals(sell, buy, prices);
}

double compute_reward(double trade, const MarketOutcome& outcome) {
  return trade >= 0.0 ? -trade * outcome.buy_price : -trade * outcome.sell_price;
}

double external_settlement(const MarketOutcome& outcome, const PriceSlot& prices) {
  const double net = outcome.total_buy - outcome.total_sell;
  return net >= 0.0 ? net * prices.buy_ext : net * prices.sell_ext;
}

int ev_hist_bin(double ev_rate, double eta, int bins) {
  const double u = (ev_rate + eta) / (2.0 * eta) * bins;
  const int idx = static_cast<int>(std::floor(u));
  return std::clamp(idx, 0, bins - 1);
}

MarketBehavior aggregate_market_behavior(std::span<const Action> actions, std::span<const int> ev_mask,
                                         int bins, double eta) {
  if (bins < 2) throw ConfigError("aggregate_market_behavior: need at least 2 histogram bins");
  if (ev_mask.size() != actions.size()) throw ConfigError("aggregate_market_behavior: mask/action size mismatch");
  MarketBehavior out;
  out.ev_hist.assign(static_cast<std::size_t>(bins), 0.0);
  int n_ev = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const double p = actions[i].trade;
    if (p > 0.0) out.buy_total += p;
    else out.sell_total -= p;
    if (ev_mask[i]) {
      ++out.ev_hist[static_cast<std::size_t>(ev_hist_bin(actions[i].ev_rate, eta, bins))];
      ++n_ev;
    }
  }
  if (n_ev > 0) {
    for (double& h : out.ev_hist) h /= n_ev;
  }
  return out;
}

}  // namespace microgrid
