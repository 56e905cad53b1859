// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_POLYA_GAMMA_HPP
#define DAPP_POLYA_GAMMA_HPP

#include <cmath>
#include <cstdint>

#include "dapp/errors.hpp"
#include "dapp/math.hpp"
#include "dapp/rng.hpp"

namespace dapp {
namespace pg {

// Counters for the outer rejection loop of the PG(1, c) kernel.
struct PgStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepts = 0;
  double acceptance_rate() const {
    return proposals == 0 ? 1.0 : static_cast<double>(accepts) / proposals;
  }
};

namespace detail {

inline constexpr double kTrunc = 0.64;       // piecewise split point
inline constexpr int kMaxIterations = 10000; // rejection-loop cap

// Alternating-series coefficients of the Jacobi-type density.
inline double series_coef(int n, double x) {
  const double h = n + 0.5;
  if (x <= kTrunc) {
    return kPi * h * std::pow(2.0 / (kPi * x), 1.5) * std::exp(-2.0 * h * h / x);
  }
  return kPi * h * std::exp(-h * h * kPi * kPi * x / 2.0);
}

// CDF at t of the inverse-Gaussian with mean 1/z and shape 1, written in
// terms of z so that z = 0 (infinite mean) is handled smoothly.
inline double tilted_ig_cdf(double t, double z) {
  const double rt = std::sqrt(t);
  const double first = normal_cdf((t * z - 1.0) / rt);
  const double x = (t * z + 1.0) / rt;
  double second;
  if (x < 25.0) {
    second = std::exp(2.0 * z) * normal_cdf(-x);
  } else {
    // log Phi(-x) ~ -x^2/2 - log(x sqrt(2 pi)) for large x
    const double log_tail = -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * kPi);
    second = std::exp(2.0 * z + log_tail);
  }
  return first + second;
}

// Inverse-Gaussian(1/z, 1) truncated to (0, t].
inline double truncated_inverse_gaussian(double z, double t, Rng& rng) {
  if (z < 1.0 / t) {
    // mean above the truncation point: sample the x <= t tail directly
    for (int it = 0; it < kMaxIterations; ++it) {
      double e1, e2;
      do {
        e1 = rng.exponential();
        e2 = rng.exponential();
      } while (e1 * e1 > 2.0 * e2 / t);
      const double x = t / ((1.0 + t * e1) * (1.0 + t * e1));
      if (z == 0.0 || rng.uniform() <= std::exp(-0.5 * z * z * x)) return x;
    }
  } else {
    const double mu = 1.0 / z;
    for (int it = 0; it < kMaxIterations; ++it) {
      const double x = rng.inverse_gaussian(mu, 1.0);
      if (x <= t) return x;
    }
  }
  throw numerical_error("polya-gamma: truncated inverse-Gaussian loop cap exceeded");
}

}  // namespace detail

// Exact draw from PG(1, c) by the alternating-series rejection sampler.
inline double sample_pg1(double c, Rng& rng, PgStats* stats = nullptr) {
  using namespace detail;
  const double z = std::abs(c) / 2.0;
  const double k = kPi * kPi / 8.0 + z * z / 2.0;
  const double p = kPi / (2.0 * k) * std::exp(-k * kTrunc);
  const double q = 2.0 * std::exp(-z) * tilted_ig_cdf(kTrunc, z);
  const double p_exp = p / (p + q);

  for (int it = 0; it < kMaxIterations; ++it) {
    if (stats != nullptr) ++stats->proposals;
    double x;
    if (rng.uniform() < p_exp) {
      x = kTrunc + rng.exponential() / k;
    } else {
      x = truncated_inverse_gaussian(z, kTrunc, rng);
    }
    double s = series_coef(0, x);
    const double y = rng.uniform() * s;
    int n = 0;
    while (true) {
      ++n;
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) {
          if (stats != nullptr) ++stats->accepts;
          return x / 4.0;
        }
      } else {
        s += series_coef(n, x);
        if (y > s) break;
      }
    }
  }
  throw numerical_error("polya-gamma: rejection loop cap exceeded");
}

// E[PG(b, c)] = (b / (2c)) tanh(c / 2), with the c -> 0 limit b/4.
inline double pg_mean(double b, double c) {
  const double z = std::abs(c);
  if (z < 1e-8) return b / 4.0 * (1.0 - z * z / 12.0);
  return b / (2.0 * z) * std::tanh(z / 2.0);
}

// Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2)), limit b/24 at c = 0.
inline double pg_variance(double b, double c) {
  const double z = std::abs(c);
  if (z < 1e-4) return b / 24.0;
  const double ch = std::cosh(z / 2.0);
  return b * (std::sinh(z) - z) / (4.0 * z * z * z * ch * ch);
}

namespace detail {

inline constexpr int kGammaSeriesTerms = 200;
inline constexpr long kShapeCutoff = 170;  // above this, use the series form

// Sum-of-gammas representation truncated at kGammaSeriesTerms, plus the
// analytic mean of the dropped tail.
inline double sample_pg_large_shape(long b, double c, Rng& rng) {
  const double a = std::abs(c) / (2.0 * kPi);
  const double bf = static_cast<double>(b);
  double value = 0.0;
  double partial = 0.0;  // sum of 1/((k-1/2)^2 + a^2) over kept terms
  for (int k = 1; k <= kGammaSeriesTerms; ++k) {
    const double h = k - 0.5;
    const double denom = h * h + a * a;
    partial += 1.0 / denom;
    value += rng.gamma(bf, 1.0) / denom;
  }
  const double total = (a < 1e-8) ? kPi * kPi / 2.0
                                  : kPi * std::tanh(kPi * a) / (2.0 * a);
  const double tail_mean = bf * (total - partial);
  return (value + tail_mean) / (2.0 * kPi * kPi);
}

}  // namespace detail

// Draw from PG(b, c) for integer shape b >= 0. PG(0, c) is the point mass
// at zero. Shapes up to 170 are sampled exactly as sums of PG(1, c); larger
// shapes fall back to a truncated sum-of-gammas series.
inline double sample_pg(long b, double c, Rng& rng, PgStats* stats = nullptr) {
  if (b < 0) throw std::domain_error("sample_pg: shape must be >= 0");
  if (b == 0) return 0.0;
  if (b > detail::kShapeCutoff) return detail::sample_pg_large_shape(b, c, rng);
  double total = 0.0;
  for (long i = 0; i < b; ++i) total += sample_pg1(c, rng, stats);
  return total;
}

}  // namespace pg
}  // namespace dapp

#endif
