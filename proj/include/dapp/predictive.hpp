// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_PREDICTIVE_HPP
#define DAPP_PREDICTIVE_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dapp/dp.hpp"
#include "dapp/gp.hpp"
#include "dapp/math.hpp"
#include "dapp/rng.hpp"
#include "dapp/sampler.hpp"

namespace dapp {

// Urn weighting over the fitted atoms. The occupancy scheme weights each
// atom by its cluster size n_c against kappa for a fresh atom; the
// equal-atom scheme gives every distinct atom the same unit weight.
enum class UrnWeighting { occupancy, equal_atom };

struct PredictiveDraw {
  Eigen::VectorXd alpha;  // length M, values in (0,1)
  GPFeature feature;
  bool new_atom = false;
};

// One posterior-predictive weight curve from a saved chain state: pick an
// atom from the urn, realize a length-scale, draw the latent curve from its
// process and squash through the logistic map.
inline PredictiveDraw draw_alpha_star(const SavedDraw& saved, const DPHyper& hyper,
                                      const LengthScaleCache& cache, Rng& rng,
                                      UrnWeighting urn = UrnWeighting::occupancy,
                                      bool hard_coupled = false) {
  const int k = static_cast<int>(saved.atoms.size());
  const int n_ab = static_cast<int>(saved.label.size());
  Eigen::VectorXd weights(k + 1);
  weights[0] = saved.kappa;
  for (int c = 0; c < k; ++c) {
    weights[c + 1] = (urn == UrnWeighting::occupancy)
                         ? static_cast<double>(saved.atom_counts[c])
                         : 1.0;
  }
  if (urn == UrnWeighting::occupancy && n_ab > 0) {
    // occupancies sum to n_ab, so the normalization is kappa + n_ab
    double total = 0.0;
    for (int c = 0; c < k; ++c) total += saved.atom_counts[c];
    if (static_cast<int>(total) != n_ab) {
      throw std::invalid_argument("draw_alpha_star: occupancy counts are inconsistent");
    }
  }
  weights /= weights.sum();

  PredictiveDraw out;
  Atom atom;
  const int pick = rng.categorical(weights);
  if (pick == 0) {
    atom = sample_base_measure(saved.kappa, hyper, rng, hard_coupled);
    out.new_atom = true;
  } else {
    atom = saved.atoms[pick - 1];
  }

  int ell_index;
  if (atom.hard_coupled()) {
    ell_index = atom.ell_index;
    out.feature.pi = Eigen::VectorXd::Zero(cache.size());
    out.feature.pi[ell_index] = 1.0;
  } else {
    ell_index = rng.categorical(atom.pi);
    out.feature.pi = atom.pi;
  }
  out.feature.phi = atom.phi;
  out.feature.psi = atom.psi;
  out.feature.ell = cache.grid.values[ell_index];

  const int m = static_cast<int>(cache.corr[ell_index].rows());
  const double sd = std::sqrt(clamp_unit(atom.psi)) * hyper.sigma0;
  Eigen::VectorXd z(m);
  for (int i = 0; i < m; ++i) z[i] = rng.normal();
  const Eigen::VectorXd noise = cache.llt[ell_index].matrixL() * z;
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(m, atom.phi) + sd * noise;
  out.alpha = logistic_transform(eta);
  return out;
}

// The three weight-curve features summarized over predictive draws: the
// range max - min, the long-term average, and the expected up-crossing
// count 0.16 T / ell implied by the draw's length-scale.
struct PredictiveSummary {
  std::vector<double> range_samples;
  std::vector<double> avg_samples;
  std::vector<double> upcross_samples;
  Eigen::VectorXd range_hist;         // 25 equal-width cells on [0,1]
  Eigen::VectorXd avg_hist;
  std::vector<double> upcross_support;  // 0.16 T / ell over the grid
  Eigen::VectorXd upcross_pmf;
  int hist_cells = 25;
};

inline PredictiveSummary summarize_predictive(const std::vector<PredictiveDraw>& draws,
                                              double horizon,
                                              const LengthScaleGrid& ells) {
  if (draws.empty()) throw std::invalid_argument("summarize_predictive: no draws");
  PredictiveSummary s;
  s.range_hist = Eigen::VectorXd::Zero(s.hist_cells);
  s.avg_hist = Eigen::VectorXd::Zero(s.hist_cells);
  s.upcross_pmf = Eigen::VectorXd::Zero(ells.size());
  for (double ell : ells.values) s.upcross_support.push_back(0.16 * horizon / ell);

  for (const PredictiveDraw& d : draws) {
    const double range = d.alpha.maxCoeff() - d.alpha.minCoeff();
    const double avg = d.alpha.mean();
    const int ell_index = ells.index_of(d.feature.ell);
    s.range_samples.push_back(range);
    s.avg_samples.push_back(avg);
    s.upcross_samples.push_back(s.upcross_support[ell_index]);
    const auto cell = [&](double x) {
      int c = static_cast<int>(x * s.hist_cells);
      return std::min(std::max(c, 0), s.hist_cells - 1);
    };
    s.range_hist[cell(range)] += 1.0;
    s.avg_hist[cell(avg)] += 1.0;
    s.upcross_pmf[ell_index] += 1.0;
  }
  s.upcross_pmf /= static_cast<double>(draws.size());
  return s;
}

// Fraction of predictive mass in [lo, hi] for one summary's samples.
inline double mass_in(const std::vector<double>& samples, double lo, double hi) {
  double n = 0.0;
  for (double x : samples) {
    if (x >= lo && x <= hi) n += 1.0;
  }
  return samples.empty() ? 0.0 : n / static_cast<double>(samples.size());
}

struct CriterionResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

namespace detail {

inline double pmf_at(const PredictiveSummary& s, double upcross) {
  for (std::size_t i = 0; i < s.upcross_support.size(); ++i) {
    if (std::abs(s.upcross_support[i] - upcross) < 1e-9) {
      return s.upcross_pmf[static_cast<Eigen::Index>(i)];
    }
  }
  return 0.0;
}

inline double pmf_mode(const PredictiveSummary& s) {
  Eigen::Index best = 0;
  s.upcross_pmf.maxCoeff(&best);
  return s.upcross_support[static_cast<std::size_t>(best)];
}

}  // namespace detail

// Recovery checks for the three synthetic experiments, evaluated on a
// posterior-predictive summary.
inline std::vector<CriterionResult> evaluate_experiment_criteria(
    const PredictiveSummary& s, int experiment) {
  std::vector<CriterionResult> out;
  auto at_least = [&](const std::string& name, double value, double threshold) {
    out.push_back({name, value, threshold, value >= threshold});
  };
  switch (experiment) {
    case 1:
      at_least("range_mass_below_0.2", mass_in(s.range_samples, 0.0, 0.2), 0.55);
      at_least("avg_mass_in_[0,0.3]", mass_in(s.avg_samples, 0.0, 0.3), 0.2);
      at_least("avg_mass_in_[0.7,1]", mass_in(s.avg_samples, 0.7, 1.0), 0.2);
      out.push_back({"upcross_mode_at_0.1", detail::pmf_mode(s), 0.1,
                     std::abs(detail::pmf_mode(s) - 0.1) < 1e-9});
      break;
    case 2:
      at_least("range_mass_above_0.6", mass_in(s.range_samples, 0.6, 1.0), 0.5);
      at_least("upcross_mass_on_{1,2}", detail::pmf_at(s, 1.0) + detail::pmf_at(s, 2.0),
               0.5);
      break;
    case 3:
      at_least("range_mass_below_0.25", mass_in(s.range_samples, 0.0, 0.25), 0.2);
      at_least("range_mass_above_0.6", mass_in(s.range_samples, 0.6, 1.0), 0.2);
      at_least("upcross_mass_at_0.1", detail::pmf_at(s, 0.1), 0.15);
      at_least("upcross_mass_at_3", detail::pmf_at(s, 3.0), 0.15);
      break;
    default:
      break;
  }
  return out;
}

// Across-chain Monte Carlo discrepancy: max_c || p_c - pbar ||_1.
inline double mc_error(const std::vector<Eigen::VectorXd>& chain_pmfs) {
  if (chain_pmfs.empty()) throw std::invalid_argument("mc_error: no chains");
  const Eigen::Index dim = chain_pmfs.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& p : chain_pmfs) {
    if (p.size() != dim) throw std::domain_error("mc_error: length mismatch");
    mean += p;
  }
  mean /= static_cast<double>(chain_pmfs.size());
  double worst = 0.0;
  for (const auto& p : chain_pmfs) {
    worst = std::max(worst, (p - mean).cwiseAbs().sum());
  }
  return worst;
}

}  // namespace dapp

#endif
