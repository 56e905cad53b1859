// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_GP_HPP
#define DAPP_GP_HPP

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "dapp/core.hpp"
#include "dapp/errors.hpp"
#include "dapp/math.hpp"
#include "dapp/rng.hpp"

namespace dapp {

// Squared-exponential kernel sigma0^2 exp(-(s-t)^2 / (2 l^2)).
struct SEKernel {
  double sigma0_sq = 1.87 * 1.87;
  double length_scale = 1.0;  // ms

  SEKernel() = default;
  SEKernel(double s0sq, double ell) : sigma0_sq(s0sq), length_scale(ell) {
    if (!(sigma0_sq > 0.0)) throw std::domain_error("SEKernel: sigma0^2 must be > 0");
    if (!(length_scale > 0.0)) throw std::domain_error("SEKernel: length-scale must be > 0");
  }
};

// Ordered set of admissible length-scales.
struct LengthScaleGrid {
  std::vector<double> values;  // strictly increasing, all > 0

  LengthScaleGrid() = default;
  explicit LengthScaleGrid(std::vector<double> v) : values(std::move(v)) {
    if (values.empty()) throw config_error("LengthScaleGrid: empty grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0)) throw config_error("LengthScaleGrid: entries must be > 0");
      if (i > 0 && !(values[i] > values[i - 1])) {
        throw config_error("LengthScaleGrid: entries must be strictly increasing");
      }
    }
  }

  int size() const { return static_cast<int>(values.size()); }

  int index_of(double ell) const {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == ell) return static_cast<int>(i);
    }
    throw std::domain_error("LengthScaleGrid: length-scale not on the grid");
  }
};

// Grid covering expected level up-crossing counts {0.1, 0.5, 1, 2, 3, 4}
// over a horizon T: ell = 0.16 T / N, sorted ascending.
inline LengthScaleGrid default_lengthscale_grid(double horizon_ms) {
  if (!(horizon_ms > 0.0)) throw std::domain_error("default_lengthscale_grid: T must be > 0");
  const double targets[] = {4.0, 3.0, 2.0, 1.0, 0.5, 0.1};
  std::vector<double> ells;
  for (double n : targets) ells.push_back(0.16 * horizon_ms / n);
  return LengthScaleGrid(std::move(ells));
}

// Expected number of up-crossings of the mean level by a stationary
// squared-exponential path over [0, T]: T / (2 pi ell).
inline double expected_upcrossings(double horizon_ms, double ell) {
  if (!(horizon_ms > 0.0) || !(ell > 0.0)) {
    throw std::domain_error("expected_upcrossings: arguments must be > 0");
  }
  return horizon_ms / (2.0 * kPi * ell);
}

// Expected within-window variance of a path around its own window average,
// psi sigma0^2 {1 - f(ell/T)} with
// f(r) = 2 [ sqrt(2 pi) r {Phi(1/r) - 1/2} - r^2 {1 - exp(-1/(2 r^2))} ].
inline double within_trial_deviation(double psi, double sigma0_sq, double ell,
                                     double horizon_ms) {
  if (!(psi > 0.0) || !(sigma0_sq > 0.0) || !(ell > 0.0) || !(horizon_ms > 0.0)) {
    throw std::domain_error("within_trial_deviation: arguments must be > 0");
  }
  const double r = ell / horizon_ms;
  const double f = 2.0 * (std::sqrt(2.0 * kPi) * r * (normal_cdf(1.0 / r) - 0.5) -
                          r * r * (1.0 - std::exp(-0.5 / (r * r))));
  return psi * sigma0_sq * (1.0 - f);
}

// Correlation matrix exp(-(t_m - t_m')^2 / (2 ell^2)) on the grid midpoints.
inline Eigen::MatrixXd se_correlation_matrix(double ell, const TimeGrid& grid) {
  const Eigen::VectorXd t = grid.midpoints();
  const int m = grid.bins();
  Eigen::MatrixXd r(m, m);
  for (int i = 0; i < m; ++i) {
    r(i, i) = 1.0;
    for (int j = 0; j < i; ++j) {
      const double d = t[i] - t[j];
      r(i, j) = r(j, i) = std::exp(-d * d / (2.0 * ell * ell));
    }
  }
  return r;
}

struct CholeskyResult {
  Eigen::MatrixXd matrix;  // the (jittered) matrix that was factored
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute diagonal jitter applied
};

// Cholesky with escalating diagonal jitter. `scale` is the matrix's natural
// diagonal magnitude; jitter runs from 1e-8*scale to 1e-4*scale in factors
// of 10 before giving up.
inline CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& a, double scale) {
  CholeskyResult res;
  res.matrix = a;
  res.llt.compute(res.matrix);
  if (res.llt.info() == Eigen::Success) return res;
  for (double rel = 1e-8; rel <= 1e-4 * (1.0 + 1e-12); rel *= 10.0) {
    res.jitter = rel * scale;
    res.matrix = a + res.jitter * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    res.llt.compute(res.matrix);
    if (res.llt.info() == Eigen::Success) return res;
  }
  std::ostringstream msg;
  msg << "cholesky_with_jitter: factorization failed after jitter escalation "
      << "(dim " << a.rows() << ", scale " << scale
      << ", max |a_ij| " << a.cwiseAbs().maxCoeff()
      << ", min diag " << a.diagonal().minCoeff() << ")";
  throw numerical_error(msg.str());
}

// psi sigma0^2 correlation + jitter; guaranteed to admit a Cholesky
// factorization or to throw numerical_error.
inline Eigen::MatrixXd se_covariance_matrix(const SEKernel& kernel, const TimeGrid& grid,
                                            double psi) {
  if (!(psi > 0.0)) throw std::domain_error("se_covariance_matrix: psi must be > 0");
  const double scale = psi * kernel.sigma0_sq;
  Eigen::MatrixXd cov = scale * se_correlation_matrix(kernel.length_scale, grid);
  return cholesky_with_jitter(cov, scale).matrix;
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Multivariate normal draw with constant mean; `covariance` must be
// symmetric positive definite (jitter already applied).
inline Eigen::VectorXd sample_gp(double mean, const Eigen::MatrixXd& covariance,
                                 Rng& rng) {
  const double scale = covariance.diagonal().maxCoeff();
  const CholeskyResult chol = cholesky_with_jitter(covariance, scale);
  Eigen::VectorXd z(covariance.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return Eigen::VectorXd::Constant(covariance.rows(), mean) +
         chol.llt.matrixL() * z;
}

// Elementwise logistic map from the latent scale to (0, 1).
inline Eigen::VectorXd logistic_transform(const Eigen::VectorXd& eta) {
  Eigen::VectorXd a(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) a[i] = logistic(eta[i]);
  return a;
}

// Grid count of passages from below `level` to at-or-above it.
inline int count_upcrossings(const Eigen::VectorXd& path, double level) {
  int n = 0;
  for (Eigen::Index i = 0; i + 1 < path.size(); ++i) {
    if (path[i] < level && path[i + 1] >= level) ++n;
  }
  return n;
}

// Per-length-scale factorizations reused across sweeps: correlation R,
// its Cholesky, inverse, R^-1 1, 1' R^-1 1 and log det R.
struct LengthScaleCache {
  LengthScaleGrid grid;
  std::vector<Eigen::MatrixXd> corr;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt;
  std::vector<Eigen::MatrixXd> inv;
  std::vector<Eigen::VectorXd> inv_one;
  std::vector<double> one_inv_one;
  std::vector<double> log_det;

  LengthScaleCache(const LengthScaleGrid& ells, const TimeGrid& time_grid)
      : grid(ells) {
    const int m = time_grid.bins();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
    for (double ell : ells.values) {
      Eigen::MatrixXd r = se_correlation_matrix(ell, time_grid);
      CholeskyResult chol = cholesky_with_jitter(r, 1.0);
      corr.push_back(chol.matrix);
      llt.push_back(chol.llt);
      inv.push_back(chol.llt.solve(Eigen::MatrixXd::Identity(m, m)));
      inv_one.push_back(inv.back() * ones);
      one_inv_one.push_back(ones.dot(inv_one.back()));
      log_det.push_back(log_det_from_llt(chol.llt));
    }
  }

  int size() const { return grid.size(); }
};

}  // namespace dapp

#endif
