// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_MATH_HPP
#define DAPP_MATH_HPP

#include <cmath>
#include <limits>
#include <span>

#include <Eigen/Dense>

namespace dapp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.8378770664093454836;

// Standard normal CDF via the complementary error function.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Numerically stable logistic function.
inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double log_sum_exp(std::span<const double> logs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logs) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s);
}

inline double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// log N(x | mean, var)
inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

// log Ga(x | shape, rate)
inline double log_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

// log Be(x | a, b) on (0,1)
inline double log_beta_pdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lbeta(a, b);
}

// log IG(x | shape, rate), the inverse-gamma density.
inline double log_inv_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - rate / x;
}

// log Poi(k | mu)
inline double log_poisson_pmf(long k, double mu) {
  return -mu + static_cast<double>(k) * std::log(mu) -
         std::lgamma(static_cast<double>(k) + 1.0);
}

// Clamp to the open unit interval; used before logs and ratios of
// probabilities that are analytically inside (0,1).
inline double clamp_unit(double x, double eps = 1e-12) {
  return std::min(std::max(x, eps), 1.0 - eps);
}

}  // namespace dapp

#endif
