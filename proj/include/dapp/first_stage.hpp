// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_FIRST_STAGE_HPP
#define DAPP_FIRST_STAGE_HPP

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "dapp/core.hpp"
#include "dapp/errors.hpp"

namespace dapp {

// Per-bin gamma priors on the Poisson bin means mu^e_m = w lambda_e(t*_m),
// fitted from the single-stimulus trials. Conjugate with the Poisson counts,
// so the sampler can refresh the rate curves in closed form.
struct GammaPriorTable {
  Eigen::VectorXd shape_a, rate_a;
  Eigen::VectorXd shape_b, rate_b;

  int bins() const { return static_cast<int>(shape_a.size()); }

  void validate() const {
    const auto check = [](const Eigen::VectorXd& v) {
      return v.size() > 0 && v.allFinite() && (v.array() > 0.0).all();
    };
    if (!check(shape_a) || !check(rate_a) || !check(shape_b) || !check(rate_b) ||
        shape_a.size() != rate_a.size() || shape_b.size() != rate_b.size() ||
        shape_a.size() != shape_b.size()) {
      throw config_error("GammaPriorTable: entries must be positive, finite and aligned");
    }
  }

  // Prior mean rate in spikes/ms.
  Eigen::VectorXd mean_rate(Condition cond, const TimeGrid& grid) const {
    const Eigen::VectorXd& a = (cond == Condition::A) ? shape_a : shape_b;
    const Eigen::VectorXd& b = (cond == Condition::A) ? rate_a : rate_b;
    return (a.array() / b.array() / grid.bin_width()).matrix();
  }
};

struct StageOneConfig {
  double bandwidth_bins = 2.0;   // Gaussian kernel sd, in bins
  double rate_floor = 1e-4;      // spikes/ms
  double shape_cap = 50.0;       // implied cap via the variance floor
};

// Gaussian-kernel local mean of the per-bin empirical rates counts / w.
// Reproduces constants exactly and is symmetric under time reversal.
inline Eigen::VectorXd smooth_trial(const Eigen::VectorXi& counts, const TimeGrid& grid,
                                    const StageOneConfig& cfg = {}) {
  if (counts.size() != grid.bins()) {
    throw std::invalid_argument("smooth_trial: counts length does not match grid");
  }
  const int m = grid.bins();
  const double w = grid.bin_width();
  const double bw = cfg.bandwidth_bins;
  Eigen::VectorXd out(m);
  for (int i = 0; i < m; ++i) {
    double num = 0.0, den = 0.0;
    for (int k = 0; k < m; ++k) {
      const double d = i - k;
      const double weight = std::exp(-d * d / (2.0 * bw * bw));
      num += weight * counts[k] / w;
      den += weight;
    }
    out[i] = std::max(num / den, cfg.rate_floor);
  }
  return out;
}

// Invert the gamma mean/variance relations: a = mean^2/var, b = mean/var.
inline std::pair<double, double> gamma_moment_match(double mean, double variance) {
  if (!(mean > 0.0) || !(variance > 0.0)) {
    throw std::domain_error("gamma_moment_match: mean and variance must be > 0");
  }
  return {mean * mean / variance, mean / variance};
}

// Smooth every trial of one condition, take per-bin cross-trial mean and
// variance of the smoothed curves, and moment-match a gamma prior per bin
// on the bin-mean scale.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_stage_one(
    const Eigen::MatrixXi& counts, const TimeGrid& grid, const StageOneConfig& cfg = {}) {
  const int n = static_cast<int>(counts.rows());
  if (n < 2) {
    throw data_error(
        "stage one needs at least 2 trials per single-stimulus condition; "
        "supply a prior table instead");
  }
  const int m = grid.bins();
  const double w = grid.bin_width();
  Eigen::MatrixXd smoothed(n, m);
  for (int j = 0; j < n; ++j) {
    smoothed.row(j) = smooth_trial(counts.row(j).transpose(), grid, cfg).transpose();
  }
  Eigen::VectorXd shape(m), rate(m);
  for (int i = 0; i < m; ++i) {
    const double mean_rate = smoothed.col(i).mean();
    const double var_rate =
        (smoothed.col(i).array() - mean_rate).square().sum() / (n - 1);
    const double mean_mu = w * mean_rate;
    double var_mu = w * w * var_rate;
    var_mu = std::max(var_mu, mean_mu * mean_mu / cfg.shape_cap);
    auto [a, b] = gamma_moment_match(mean_mu, var_mu);
    shape[i] = a;
    rate[i] = b;
  }
  return {shape, rate};
}

inline GammaPriorTable estimate_prior_table(const BinnedDataset& data,
                                            const StageOneConfig& cfg = {}) {
  GammaPriorTable table;
  std::tie(table.shape_a, table.rate_a) = estimate_stage_one(data.xa, data.grid, cfg);
  std::tie(table.shape_b, table.rate_b) = estimate_stage_one(data.xb, data.grid, cfg);
  table.validate();
  return table;
}

}  // namespace dapp

#endif
