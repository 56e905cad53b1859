// Apache License, Version 2.0, refer to LICENSE.txt
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dapp/dp.hpp"
#include "dapp/gp.hpp"
#include "dapp/rng.hpp"
#include "oracles.hpp"

using namespace dapp;
using Catch::Approx;

namespace {

DPHyper test_hyper() { return default_dp_hyper(6); }

// brute-force log N(eta | phi 1, psi sigma0^2 R) through a dense solve,
// bypassing the cached-statistics path
double dense_log_mvn(const Eigen::VectorXd& eta, double phi, double psi,
                     double sigma0_sq, const Eigen::MatrixXd& corr) {
  const Eigen::MatrixXd cov = psi * sigma0_sq * corr;
  const Eigen::VectorXd diff = eta - Eigen::VectorXd::Constant(eta.size(), phi);
  const Eigen::MatrixXd inv = cov.inverse();
  const double quad = diff.dot(inv * diff);
  const double logdet = std::log(cov.determinant());
  return -0.5 * (eta.size() * kLogTwoPi + logdet + quad);
}

}  // namespace

TEST_CASE("default Dirichlet shapes are index-proportional with mass 2", "[dp]") {
  auto a = default_dirichlet_shapes(6);
  REQUIRE(a.sum() == Approx(2.0));
  for (int i = 1; i < 6; ++i) {
    REQUIRE(a[i] / a[0] == Approx(static_cast<double>(i + 1)));
  }
}

TEST_CASE("base measure marginals", "[dp]") {
  DPHyper hyper = test_hyper();
  SECTION("Dirichlet mean is a / sum(a)") {
    Rng rng(201);
    const int n = 100000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
    for (int i = 0; i < n; ++i) {
      mean += sample_base_measure(1.0, hyper, rng).pi;
    }
    mean /= n;
    const Eigen::VectorXd expected = hyper.normalized_shapes();
    for (int i = 0; i < 6; ++i) {
      REQUIRE(mean[i] == Approx(expected[i]).margin(0.004));
    }
  }
  SECTION("small kappa pushes psi to one and phi to zero") {
    Rng rng(202);
    const int n = 20000;
    int psi_near_one = 0, phi_near_zero = 0;
    for (int i = 0; i < n; ++i) {
      Atom a = sample_base_measure(1e-3, hyper, rng);
      if (a.psi > 0.99) ++psi_near_one;
      if (std::abs(a.phi) < 0.01) ++phi_near_zero;
    }
    REQUIRE(static_cast<double>(psi_near_one) / n > 0.97);
    REQUIRE(static_cast<double>(phi_near_zero) / n > 0.95);
  }
  SECTION("level-plus-scaled-noise has marginal variance sigma0^2") {
    Rng rng(203);
    const int n = 200000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
      Atom a = sample_base_measure(0.8, hyper, rng);
      xs[i] = a.phi + std::sqrt(a.psi) * hyper.sigma0 * rng.normal();
    }
    auto v = oracles::variance_with_se(xs);
    REQUIRE(std::abs(v.var - hyper.sigma0_sq()) < 4.0 * v.se);
  }
  SECTION("hard-coupled variant draws the length-scale index directly") {
    Rng rng(204);
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(6);
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      Atom a = sample_base_measure(1.0, hyper, rng, true);
      REQUIRE(a.hard_coupled());
      freq[a.ell_index] += 1.0;
    }
    freq /= n;
    const Eigen::VectorXd expected = hyper.normalized_shapes();
    for (int i = 0; i < 6; ++i) REQUIRE(freq[i] == Approx(expected[i]).margin(0.01));
  }
}

TEST_CASE("stick-breaking prefix", "[dp]") {
  DPHyper hyper = test_hyper();
  Rng rng(211);
  SECTION("weights are nonnegative with partial sums at most one") {
    auto sb = stick_breaking_prefix(2.0, hyper, 50, rng);
    double acc = 0.0;
    for (double w : sb.weights) {
      REQUIRE(w >= 0.0);
      acc += w;
      REQUIRE(acc <= 1.0 + 1e-12);
    }
    REQUIRE(sb.residual == Approx(1.0 - acc).margin(1e-12));
  }
  SECTION("first weight has mean 1/(1+kappa)") {
    const double kappa = 3.0;
    const int n = 50000;
    std::vector<double> w1(n);
    for (int i = 0; i < n; ++i) {
      w1[i] = stick_breaking_prefix(kappa, hyper, 1, rng).weights[0];
    }
    auto m = oracles::mean_with_se(w1);
    REQUIRE(std::abs(m.mean - 1.0 / (1.0 + kappa)) < 4.0 * m.se);
  }
  SECTION("log residual mass at kappa = 1, H = 100 averages to -100") {
    const int n = 10000;
    std::vector<double> logres(n);
    for (int i = 0; i < n; ++i) {
      logres[i] = std::log(stick_breaking_prefix(1.0, hyper, 100, rng).residual);
    }
    auto m = oracles::mean_with_se(logres);
    REQUIRE(std::abs(m.mean + 100.0) < 4.0 * m.se);
    // closed-form expected residual mass (kappa/(1+kappa))^H
    REQUIRE(std::pow(0.5, 100) == Approx(8e-31).epsilon(0.02));
  }
}

TEST_CASE("reassignment weights match a dense direct evaluation", "[dp]") {
  TimeGrid grid(1000.0, 5);
  DPHyper hyper = test_hyper();
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(221);

  Eigen::VectorXd eta(5);
  eta << 0.3, -0.2, 0.8, 1.1, -0.5;
  const int ell_index = 2;

  std::vector<TrialGaussStats> stats;
  for (int i = 0; i < cache.size(); ++i) {
    stats.push_back(trial_gauss_stats(eta, cache, i));
  }

  std::vector<Atom> atoms(3);
  for (auto& a : atoms) a = sample_base_measure(1.3, hyper, rng);
  std::vector<const Atom*> cand = {&atoms[0], &atoms[1], &atoms[2]};
  std::vector<double> sizes = {2.0, 1.0, 1.3 / 5.0};

  const Eigen::VectorXd lw =
      reassignment_log_weights(cand, sizes, stats, ell_index, hyper.sigma0_sq());

  for (int c = 0; c < 3; ++c) {
    const double direct = std::log(sizes[c]) +
                          std::log(atoms[c].pi[ell_index]) +
                          dense_log_mvn(eta, atoms[c].phi, atoms[c].psi,
                                        hyper.sigma0_sq(), cache.corr[ell_index]);
    REQUIRE(lw[c] == Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("neal8 single-trial table can only move to an auxiliary", "[dp]") {
  TimeGrid grid(1000.0, 5);
  DPHyper hyper = test_hyper();
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(222);
  Atom start = sample_base_measure(1.0, hyper, rng);
  ClusterTable table = ClusterTable::singleton_clusters({start});
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(5);
  std::vector<TrialGaussStats> stats;
  for (int i = 0; i < cache.size(); ++i) stats.push_back(trial_gauss_stats(eta, cache, i));
  for (int rep = 0; rep < 50; ++rep) {
    neal8_reassign(0, table, stats, 1, 1.0, hyper, rng);
    table.validate();
    REQUIRE(table.n_clusters() == 1);
    REQUIRE(table.count(0) == 1);
  }
}

TEST_CASE("neal8 with tiny kappa never separates twins", "[dp]") {
  TimeGrid grid(1000.0, 5);
  DPHyper hyper = test_hyper();
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(223);
  Atom shared = sample_base_measure(1.0, hyper, rng);
  ClusterTable table = ClusterTable::from_labels({0, 0}, {shared});
  Eigen::VectorXd eta(5);
  eta << 0.1, 0.2, 0.0, -0.1, 0.3;
  std::vector<TrialGaussStats> stats;
  for (int i = 0; i < cache.size(); ++i) stats.push_back(trial_gauss_stats(eta, cache, i));
  for (int rep = 0; rep < 500; ++rep) {
    for (int j = 0; j < 2; ++j) {
      neal8_reassign(j, table, stats, 3, 1e-9, hyper, rng);
      table.validate();
    }
    REQUIRE(table.n_clusters() == 1);
  }
}

TEST_CASE("kappa update plug-in case: K = 1, psi = 1 - 1/e", "[dp]") {
  // b = 1 - log(1 - psi) = 2; with the mixing draw pinned near one (huge
  // current kappa), the refresh reduces to Ga(3, 2) with mean 1.5
  Rng rng(230);
  const std::vector<double> psis = {1.0 - std::exp(-1.0)};
  const int n = 200000;
  std::vector<double> draws(n);
  for (int i = 0; i < n; ++i) {
    draws[i] = update_kappa(1, psis, 1, 1e9, rng);
  }
  auto m = oracles::mean_with_se(draws);
  REQUIRE(std::abs(m.mean - 1.5) < 4.0 * m.se);
  auto v = oracles::variance_with_se(draws);
  REQUIRE(std::abs(v.var - 0.75) < 4.0 * v.se);
}

TEST_CASE("kappa update leaves its stationary density invariant", "[dp]") {
  // For fixed K, psi* and n, the two-step update is a Gibbs kernel whose
  // stationary density is proportional to B(kappa, n) kappa^{2K} e^{-b kappa}.
  const int k_clusters = 2;
  const std::vector<double> psis = {0.3, 1.0 - std::exp(-1.0)};
  const int n_trials = 10;
  double b = 1.0;
  for (double p : psis) b -= std::log1p(-p);

  Rng rng(231);
  double kappa = 1.0;
  const int burn = 2000, keep = 100000;
  std::vector<double> samples;
  samples.reserve(keep);
  for (int i = 0; i < burn + keep; ++i) {
    kappa = update_kappa(k_clusters, psis, n_trials, kappa, rng);
    if (i >= burn) samples.push_back(kappa);
  }

  auto log_density = [&](double x) {
    return std::lgamma(x) + std::lgamma(double(n_trials)) -
           std::lgamma(x + n_trials) + 2.0 * k_clusters * std::log(x) - b * x;
  };
  // numeric CDF on a fine grid
  const double hi = 30.0;
  const int cells = 60000;
  std::vector<double> cdf(cells + 1, 0.0);
  double acc = 0.0;
  const double dx = hi / cells;
  for (int i = 1; i <= cells; ++i) {
    const double x0 = (i - 1) * dx + 1e-12, x1 = i * dx;
    acc += 0.5 * (std::exp(log_density(x0)) + std::exp(log_density(x1))) * dx;
    cdf[i] = acc;
  }
  for (auto& v : cdf) v /= acc;
  auto cdf_fn = [&](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= hi) return 1.0;
    const double pos = x / dx;
    const int i = static_cast<int>(pos);
    const double frac = pos - i;
    return cdf[i] * (1.0 - frac) + cdf[i + 1] * frac;
  };

  // chi-square over 40 equal-probability cells of the target
  const int cells_chi = 40;
  std::vector<double> observed(cells_chi, 0.0), expected(cells_chi, 0.0);
  for (double s : samples) {
    int c = static_cast<int>(cdf_fn(s) * cells_chi);
    c = std::clamp(c, 0, cells_chi - 1);
    observed[c] += 1.0;
  }
  for (auto& e : expected) e = static_cast<double>(samples.size()) / cells_chi;
  const double stat = oracles::chi_square_statistic(observed, expected);
  // 0.999 quantile of chi-square with 39 dof is about 72.05
  REQUIRE(stat < 72.05);
}

TEST_CASE("cluster summary statistics reduce correctly for identity correlation",
          "[dp]") {
  TimeGrid grid(1000.0, 5);
  // a length-scale far below the bin width makes R the identity
  LengthScaleCache cache(LengthScaleGrid({1e-6, 80.0}), grid);
  Eigen::VectorXd eta(5);
  eta << 0.4, -1.0, 0.2, 0.9, 0.1;
  auto stats = trial_gauss_stats(eta, cache, 0);
  ClusterSummary s = cluster_summary_stats({stats}, 1.0);
  REQUIRE(s.u == Approx(5.0).epsilon(1e-9));
  REQUIRE(s.v == Approx(eta.sum()).epsilon(1e-9));
  REQUIRE(s.z == Approx(eta.mean()).epsilon(1e-9));
  REQUIRE(s.w - s.z * s.z * s.u >= -1e-9);
}

TEST_CASE("rate term is nonnegative on random fixtures", "[dp]") {
  TimeGrid grid(1000.0, 8);
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(241);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<TrialGaussStats> stats;
    const int members = 1 + rep % 4;
    for (int j = 0; j < members; ++j) {
      Eigen::VectorXd eta(8);
      for (int m = 0; m < 8; ++m) eta[m] = rng.normal(0.0, 2.0);
      stats.push_back(trial_gauss_stats(eta, cache, rep % cache.size()));
    }
    ClusterSummary s = cluster_summary_stats(stats, 1.87);
    REQUIRE(s.w - s.z * s.z * s.u >= -1e-9);
  }
}

TEST_CASE("level conditional matches completion of squares on a two-member fixture",
          "[dp]") {
  TimeGrid grid(1000.0, 6);
  DPHyper hyper = test_hyper();
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(242);
  Eigen::VectorXd eta1(6), eta2(6);
  for (int m = 0; m < 6; ++m) {
    eta1[m] = rng.normal(0.5, 1.0);
    eta2[m] = rng.normal(0.2, 1.0);
  }
  const int l1 = 1, l2 = 4;
  const double psi = 0.42;
  std::vector<TrialGaussStats> stats = {trial_gauss_stats(eta1, cache, l1),
                                        trial_gauss_stats(eta2, cache, l2)};
  ClusterSummary s = cluster_summary_stats(stats, hyper.sigma0);

  const double denom = psi + (1.0 - psi) * s.u;
  const double mean_impl = (1.0 - psi) * s.v / denom;
  const double var_impl = psi * (1.0 - psi) / denom;

  // independent completion of squares on the whitened scale: precision is
  // prior 1/(1-psi) plus sum_j 1'(psi R_j)^-1 1
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(6);
  double prec = 1.0 / (1.0 - psi);
  double lin = 0.0;
  for (int j = 0; j < 2; ++j) {
    const Eigen::MatrixXd r = cache.corr[j == 0 ? l1 : l2];
    const Eigen::VectorXd whitened = (j == 0 ? eta1 : eta2) / hyper.sigma0;
    const Eigen::MatrixXd inv = r.inverse() / psi;
    prec += ones.dot(inv * ones);
    lin += ones.dot(inv * whitened);
  }
  REQUIRE(var_impl == Approx(1.0 / prec).epsilon(1e-9));
  REQUIRE(mean_impl == Approx(lin / prec).epsilon(1e-9));
}

TEST_CASE("scale update kernel leaves its target invariant", "[dp]") {
  // frozen fixture: the Metropolis-Hastings samples of psi must match the
  // grid-normalized density Be(psi|2,kappa) N(z|0, psi/u + 1 - psi)
  //                         IG(psi | (M s - 1)/2, (w - z^2 u)/2) on (0,1)
  TimeGrid grid(1000.0, 5);
  DPHyper hyper = test_hyper();
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(243);
  const double kappa = 1.7;
  Eigen::VectorXd eta1(5), eta2(5);
  eta1 << 0.9, 0.4, -0.3, 0.6, 1.2;
  eta2 << 0.5, 0.8, 0.1, -0.2, 0.7;
  std::vector<TrialGaussStats> stats = {trial_gauss_stats(eta1, cache, 2),
                                        trial_gauss_stats(eta2, cache, 3)};
  ClusterSummary s = cluster_summary_stats(stats, hyper.sigma0);
  const double shape = (5.0 * 2.0 - 1.0) / 2.0;
  const double rate = 0.5 * (s.w - s.z * s.z * s.u);

  Eigen::VectorXi no_ell_counts = Eigen::VectorXi::Zero(6);
  Atom atom;
  atom.pi = hyper.normalized_shapes();
  atom.set_psi(0.5);
  const int burn = 2000, keep = 100000;
  std::vector<double> samples;
  samples.reserve(keep);
  for (int i = 0; i < burn + keep; ++i) {
    auto res = update_cluster_params(stats, no_ell_counts, atom, kappa, hyper, rng);
    atom = res.atom;
    if (i >= burn) samples.push_back(atom.psi);
  }

  auto log_target = [&](double p) {
    return log_beta_pdf(p, 2.0, kappa) +
           log_normal_pdf(s.z, 0.0, p / s.u + 1.0 - p) +
           log_inv_gamma_pdf(p, shape, rate);
  };
  const int cells = 20000;
  std::vector<double> cdf(cells + 1, 0.0);
  double acc = 0.0;
  for (int i = 1; i <= cells; ++i) {
    const double x0 = (i - 1.0) / cells + 1e-9, x1 = static_cast<double>(i) / cells;
    acc += 0.5 * (std::exp(log_target(x0)) + std::exp(log_target(x1))) / cells;
    cdf[i] = acc;
  }
  for (auto& v : cdf) v /= acc;
  auto cdf_fn = [&](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double pos = x * cells;
    const int i = static_cast<int>(pos);
    const double frac = pos - i;
    return cdf[i] * (1.0 - frac) + cdf[std::min(i + 1, cells)] * frac;
  };
  REQUIRE(oracles::ks_statistic(samples, cdf_fn) < 0.02);
}

TEST_CASE("hard-coupled length-scale conditional matches dense evaluation", "[dp]") {
  TimeGrid grid(1000.0, 5);
  DPHyper hyper = test_hyper();
  LengthScaleCache cache(default_lengthscale_grid(1000.0), grid);
  Rng rng(244);
  Eigen::VectorXd eta1(5), eta2(5);
  eta1 << 0.2, 0.5, 0.4, 0.3, 0.6;
  eta2 << 0.1, 0.3, 0.5, 0.4, 0.2;
  std::vector<std::vector<TrialGaussStats>> member_stats(2);
  for (int i = 0; i < cache.size(); ++i) {
    member_stats[0].push_back(trial_gauss_stats(eta1, cache, i));
    member_stats[1].push_back(trial_gauss_stats(eta2, cache, i));
  }
  Atom atom;
  atom.phi = 0.3;
  atom.set_psi(0.4);
  atom.ell_index = 0;

  // direct evaluation of abar_i prod_j N(eta_j | phi 1, psi s0^2 R_i)
  const Eigen::VectorXd abar = hyper.normalized_shapes();
  Eigen::VectorXd lw(cache.size());
  for (int i = 0; i < cache.size(); ++i) {
    lw[i] = std::log(abar[i]) +
            dense_log_mvn(eta1, atom.phi, atom.psi, hyper.sigma0_sq(), cache.corr[i]) +
            dense_log_mvn(eta2, atom.phi, atom.psi, hyper.sigma0_sq(), cache.corr[i]);
  }
  Eigen::VectorXd probs = (lw.array() - lw.maxCoeff()).exp();
  probs /= probs.sum();

  Eigen::VectorXd freq = Eigen::VectorXd::Zero(cache.size());
  const int reps = 200000;
  for (int r = 0; r < reps; ++r) {
    freq[update_cluster_ell_index(member_stats, atom, hyper, rng)] += 1.0;
  }
  freq /= reps;
  for (int i = 0; i < cache.size(); ++i) {
    REQUIRE(freq[i] == Approx(probs[i]).margin(0.005));
  }
}

TEST_CASE("cluster table bookkeeping", "[dp]") {
  Rng rng(251);
  DPHyper hyper = test_hyper();
  std::vector<Atom> atoms;
  for (int i = 0; i < 2; ++i) atoms.push_back(sample_base_measure(1.0, hyper, rng));
  ClusterTable table = ClusterTable::from_labels({0, 0, 1}, atoms);
  table.validate();
  REQUIRE(table.n_clusters() == 2);

  auto [atom, singleton] = table.detach(2);
  REQUIRE(singleton);
  REQUIRE(table.n_clusters() == 1);
  table.attach(2, 0);
  table.validate();
  REQUIRE(table.count(0) == 3);

  auto [atom2, singleton2] = table.detach(1);
  REQUIRE_FALSE(singleton2);
  table.attach_new(1, atom2);
  table.validate();
  REQUIRE(table.n_clusters() == 2);
  REQUIRE(table.members(1) == std::vector<int>{1});
}
