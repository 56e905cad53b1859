// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_RNG_HPP
#define DAPP_RNG_HPP

#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "dapp/math.hpp"

namespace dapp {

// splitmix64 step; used to derive well-separated seeds for independent
// streams (one per chain, one per simulated trial batch, ...).
inline std::uint64_t mix_seed(std::uint64_t x, std::uint64_t salt = 0) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Thin wrapper over mt19937_64 with the distribution draws the model
// needs. One Rng per logical stream; draws are sequential and
// reproducible for a fixed seed and build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  // Independent stream derived from this Rng's seed; unaffected by how many
  // draws have been consumed here.
  Rng stream(std::uint64_t salt) const { return Rng(mix_seed(seed_, salt)); }

  double uniform() { return unit_(engine_); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }

  double normal(double mean = 0.0, double sd = 1.0) {
    return mean + sd * normal_(engine_);
  }

  double exponential(double rate = 1.0) {
    return -std::log1p(-unit_(engine_)) / rate;
  }

  double gamma(double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(engine_);
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return clamp_unit(x / (x + y));
  }

  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<long> d(mean);
    return d(engine_);
  }

  long binomial(long n, double p) {
    if (n <= 0) return 0;
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<long> d(n, p);
    return d(engine_);
  }

  // log of a Ga(shape, 1) draw; exact in log space for tiny shapes, where
  // the plain draw would underflow.
  double log_gamma_draw(double shape) {
    if (shape >= 1.0) return std::log(gamma(shape, 1.0));
    const double boost = gamma(shape + 1.0, 1.0);
    const double u = std::max(uniform(), 1e-300);
    return std::log(boost) + std::log(u) / shape;
  }

  // log of a Be(a, b) draw with an exact left tail.
  double log_beta_draw(double a, double b) {
    const double lx = log_gamma_draw(a);
    const double y = gamma(b, 1.0);
    return lx - std::log(y + std::exp(lx));
  }

  Eigen::VectorXd dirichlet(const Eigen::VectorXd& shapes) {
    Eigen::VectorXd out(shapes.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < shapes.size(); ++i) {
      double g = gamma(shapes[i], 1.0);
      if (g < 1e-300) g = 1e-300;
      out[i] = g;
      total += g;
    }
    return out / total;
  }

  // Index draw from normalized probabilities.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
  }

  // Index draw from unnormalized log weights via log-sum-exp.
  int categorical_from_log(const Eigen::VectorXd& log_weights) {
    const double lse =
        log_sum_exp(std::span<const double>(log_weights.data(),
                                            static_cast<size_t>(log_weights.size())));
    if (!std::isfinite(lse)) {
      throw std::domain_error("categorical_from_log: all weights are zero");
    }
    const double u = uniform();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < log_weights.size(); ++i) {
      acc += std::exp(log_weights[i] - lse);
      if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(log_weights.size() - 1);
  }

  // Michael/Schucany/Haas inverse-Gaussian sampler.
  double inverse_gaussian(double mu, double lambda) {
    const double nu = normal_(engine_);
    const double y = nu * nu;
    double x = mu + 0.5 * mu * mu * y / lambda -
               0.5 * (mu / lambda) *
                   std::sqrt(4.0 * mu * lambda * y + mu * mu * y * y);
    if (x <= 0.0) x = std::numeric_limits<double>::min();
    if (uniform() > mu / (mu + x)) x = mu * mu / x;
    return x;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dapp

#endif
