#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "microgrid/nn.hpp"

namespace oracle {

// Central differences of f over every entry of `params` (restored afterwards).
inline Eigen::VectorXd finite_difference(Eigen::VectorXd& params, const std::function<double()>& f,
                                         double h = 1e-5) {
  Eigen::VectorXd g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params(i);
    params(i) = keep + h;
    const double up = f();
    params(i) = keep - h;
    const double down = f();
    params(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

// Sum over the batch of <weights, net output>, the scalar whose gradient
// DenseNet::backward returns for output_grad = weights.
inline double weighted_output(const microgrid::nn::DenseNet& net, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& weights) {
  return (net.forward(x).array() * weights.array()).sum();
}

inline double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// KL(p || q) for univariate Gaussians by composite Simpson quadrature over
// mu_p +- 10 sigma_p.
inline double kl_quadrature(double mu_p, double sd_p, double mu_q, double sd_q, int intervals = 20000) {
  const double a = mu_p - 10.0 * sd_p;
  const double b = mu_p + 10.0 * sd_p;
  const double h = (b - a) / intervals;
  auto f = [&](double x) {
    const double p = normal_pdf(x, mu_p, sd_p);
    if (p == 0.0) return 0.0;
    // log p - log q written out so tails do not underflow to log(0).
    const double zp = (x - mu_p) / sd_p;
    const double zq = (x - mu_q) / sd_q;
    return p * (-0.5 * zp * zp - std::log(sd_p) + 0.5 * zq * zq + std::log(sd_q));
  };
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Advantages by the explicit telescoped sum sum_l (gamma lambda)^l delta_{t+l}
// for one stream without terminations.
inline std::vector<double> gae_brute_force(const std::vector<double>& r, const std::vector<double>& v,
                                           double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * next - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      adv[t] += w * delta[l];
      w *= gamma * lambda;
    }
  }
  return adv;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

}  // namespace oracle
