// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_DP_HPP
#define DAPP_DP_HPP

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "dapp/errors.hpp"
#include "dapp/gp.hpp"
#include "dapp/math.hpp"
#include "dapp/rng.hpp"

namespace dapp {

// Hyperparameters of the Dirichlet-process prior and its base measure.
struct DPHyper {
  double sigma0 = 1.87;
  Eigen::VectorXd dirichlet_shapes;  // a_1..a_L over the length-scale grid
  double kappa_prior_shape = 1.0;
  double kappa_prior_rate = 1.0;
  int aux_size = 5;  // auxiliary atoms per reassignment step

  double sigma0_sq() const { return sigma0 * sigma0; }

  Eigen::VectorXd normalized_shapes() const {
    return dirichlet_shapes / dirichlet_shapes.sum();
  }

  void validate() const {
    if (!(sigma0 > 0.0)) throw config_error("DPHyper: sigma0 must be > 0");
    if (dirichlet_shapes.size() == 0 || (dirichlet_shapes.array() <= 0.0).any()) {
      throw config_error("DPHyper: Dirichlet shapes must be positive");
    }
    if (aux_size < 1) throw config_error("DPHyper: auxiliary sample size must be >= 1");
  }
};

// Shapes proportional to the grid index (favoring larger length-scales),
// scaled to total mass 2.
inline Eigen::VectorXd default_dirichlet_shapes(int grid_size) {
  Eigen::VectorXd a(grid_size);
  for (int i = 0; i < grid_size; ++i) a[i] = static_cast<double>(i + 1);
  return 2.0 * a / a.sum();
}

inline DPHyper default_dp_hyper(int grid_size) {
  DPHyper h;
  h.dirichlet_shapes = default_dirichlet_shapes(grid_size);
  return h;
}

// A cluster atom. The hierarchical model carries a probability vector over
// length-scales; the direct-assignment variant hard-couples one grid
// length-scale to the atom instead (ell_index >= 0, pi unused).
//
// psi is kept inside [1e-12, 1 - 1e-12] for safe use in ratios, while
// log1m_psi records log(1 - psi) exactly; Be(1, kappa) mass concentrates
// within one ulp of 1 when kappa is small, and the concentration update
// needs the uncompressed tail.
struct Atom {
  double phi = 0.0;
  double psi = 0.5;
  double log1m_psi = -0.6931471805599453;
  Eigen::VectorXd pi;
  int ell_index = -1;

  bool hard_coupled() const { return ell_index >= 0; }

  void set_psi(double value) {
    psi = clamp_unit(value);
    log1m_psi = std::log1p(-psi);
  }

  void set_psi_from_log1m(double log1m) {
    log1m_psi = log1m;
    psi = clamp_unit(-std::expm1(log1m));
  }
};

// Per-trial realized feature: atom parameters plus the trial's length-scale.
struct GPFeature {
  double phi = 0.0;
  double psi = 0.5;
  Eigen::VectorXd pi;
  double ell = 0.0;

  void validate(const LengthScaleGrid& grid) const {
    if (!(psi > 0.0 && psi < 1.0)) throw std::domain_error("GPFeature: psi not in (0,1)");
    if (pi.size() > 0) {
      if ((pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-12) {
        throw std::domain_error("GPFeature: pi is not a probability vector");
      }
    }
    grid.index_of(ell);
  }
};

// Draw an atom from the base measure: pi ~ Dir(a), psi ~ Be(1, kappa),
// phi | psi ~ N(0, sigma0^2 (1 - psi)). The direct-assignment variant
// replaces the Dirichlet part by a categorical length-scale draw with
// probabilities proportional to a.
inline Atom sample_base_measure(double kappa, const DPHyper& hyper, Rng& rng,
                                bool hard_coupled = false) {
  if (!(kappa > 0.0)) throw std::domain_error("sample_base_measure: kappa must be > 0");
  Atom atom;
  if (hard_coupled) {
    atom.ell_index = rng.categorical(hyper.normalized_shapes());
  } else {
    atom.pi = rng.dirichlet(hyper.dirichlet_shapes);
  }
  // 1 - psi ~ Be(kappa, 1), so -log(1 - psi) is exactly Exp(kappa)
  atom.set_psi_from_log1m(-rng.exponential(kappa));
  atom.phi = rng.normal(0.0, hyper.sigma0 * std::exp(0.5 * atom.log1m_psi));
  return atom;
}

struct StickBreakingPrefix {
  std::vector<double> weights;
  std::vector<Atom> atoms;
  double residual = 0.0;  // mass beyond the truncation
};

// First H weights and atoms of the stick-breaking representation
// w_h = beta_h prod_{j<h} (1 - beta_j), beta_h ~ Be(1, kappa).
inline StickBreakingPrefix stick_breaking_prefix(double kappa, const DPHyper& hyper,
                                                 int truncation, Rng& rng,
                                                 bool hard_coupled = false) {
  if (truncation < 1) throw std::invalid_argument("stick_breaking_prefix: H must be >= 1");
  StickBreakingPrefix out;
  double remaining = 1.0;
  for (int h = 0; h < truncation; ++h) {
    const double beta = rng.beta(1.0, kappa);
    out.weights.push_back(beta * remaining);
    out.atoms.push_back(sample_base_measure(kappa, hyper, rng, hard_coupled));
    remaining *= (1.0 - beta);
  }
  out.residual = remaining;
  return out;
}

// Gaussian summary of one trial's latent curve against one correlation
// matrix R: q = eta' R^-1 eta, g = 1' R^-1 eta, h = 1' R^-1 1.
struct TrialGaussStats {
  double q = 0.0;
  double g = 0.0;
  double h = 0.0;
  double log_det = 0.0;  // log det R
  int bins = 0;
};

inline TrialGaussStats trial_gauss_stats(const Eigen::VectorXd& eta,
                                         const LengthScaleCache& cache, int ell_index) {
  TrialGaussStats s;
  const Eigen::VectorXd r_inv_eta = cache.inv[ell_index] * eta;
  s.q = eta.dot(r_inv_eta);
  s.g = cache.inv_one[ell_index].dot(eta);
  s.h = cache.one_inv_one[ell_index];
  s.log_det = cache.log_det[ell_index];
  s.bins = static_cast<int>(eta.size());
  return s;
}

// log N(eta | phi 1, psi sigma0^2 R) evaluated from the cached summaries.
inline double log_mvn_from_stats(const TrialGaussStats& s, double phi, double psi,
                                 double sigma0_sq) {
  const double scale = clamp_unit(psi) * sigma0_sq;
  const double quad = s.q - 2.0 * phi * s.g + phi * phi * s.h;
  return -0.5 * (s.bins * (kLogTwoPi + std::log(scale)) + s.log_det + quad / scale);
}

// Trial-to-cluster assignments plus the atom of each cluster. Labels are
// compact indices in order of first appearance.
class ClusterTable {
 public:
  ClusterTable() = default;

  static ClusterTable singleton_clusters(std::vector<Atom> atoms) {
    ClusterTable t;
    t.atoms_ = std::move(atoms);
    t.labels_.resize(t.atoms_.size());
    std::iota(t.labels_.begin(), t.labels_.end(), 0);
    t.counts_.assign(t.atoms_.size(), 1);
    return t;
  }

  static ClusterTable from_labels(std::vector<int> labels, std::vector<Atom> atoms) {
    ClusterTable t;
    t.labels_ = std::move(labels);
    t.atoms_ = std::move(atoms);
    t.counts_.assign(t.atoms_.size(), 0);
    for (int lab : t.labels_) {
      if (lab < 0 || lab >= static_cast<int>(t.atoms_.size())) {
        throw std::invalid_argument("ClusterTable: label out of range");
      }
      ++t.counts_[lab];
    }
    t.validate();
    return t;
  }

  int n_trials() const { return static_cast<int>(labels_.size()); }
  int n_clusters() const { return static_cast<int>(atoms_.size()); }
  int label(int trial) const { return labels_[trial]; }
  int count(int cluster) const { return counts_[cluster]; }
  const Atom& atom(int cluster) const { return atoms_[cluster]; }
  Atom& atom(int cluster) { return atoms_[cluster]; }

  std::vector<int> members(int cluster) const {
    std::vector<int> out;
    for (int j = 0; j < n_trials(); ++j) {
      if (labels_[j] == cluster) out.push_back(j);
    }
    return out;
  }

  // Detach a trial; drops its cluster if that empties it (labels renumber
  // compactly). Returns the trial's atom and whether it was a singleton.
  std::pair<Atom, bool> detach(int trial) {
    const int c = labels_[trial];
    Atom atom = atoms_[c];
    const bool singleton = (counts_[c] == 1);
    labels_[trial] = -1;
    if (singleton) {
      atoms_.erase(atoms_.begin() + c);
      counts_.erase(counts_.begin() + c);
      for (int& lab : labels_) {
        if (lab > c) --lab;
      }
    } else {
      --counts_[c];
    }
    return {std::move(atom), singleton};
  }

  void attach(int trial, int cluster) {
    labels_[trial] = cluster;
    ++counts_[cluster];
  }

  int attach_new(int trial, Atom atom) {
    atoms_.push_back(std::move(atom));
    counts_.push_back(1);
    labels_[trial] = n_clusters() - 1;
    return labels_[trial];
  }

  void validate() const {
    int total = 0;
    for (int c : counts_) {
      if (c <= 0) throw std::logic_error("ClusterTable: empty cluster retained");
      total += c;
    }
    if (total != n_trials()) throw std::logic_error("ClusterTable: counts do not sum to n");
    for (int lab : labels_) {
      if (lab < 0 || lab >= n_clusters()) throw std::logic_error("ClusterTable: bad label");
    }
  }

 private:
  std::vector<Atom> atoms_;
  std::vector<int> labels_;
  std::vector<int> counts_;
};

// Unnormalized log reassignment weights for a trial against a candidate
// atom set: log s_c + log P(ell_i | pi_c) + log N(eta_i | phi_c, psi_c R).
// For hard-coupled atoms the candidate's own length-scale drives the
// Gaussian term and the categorical factor disappears.
inline Eigen::VectorXd reassignment_log_weights(
    const std::vector<const Atom*>& candidates, const std::vector<double>& sizes,
    const std::vector<TrialGaussStats>& stats_by_ell, int trial_ell_index,
    double sigma0_sq) {
  Eigen::VectorXd lw(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Atom& atom = *candidates[c];
    double v = std::log(sizes[c]);
    if (atom.hard_coupled()) {
      v += log_mvn_from_stats(stats_by_ell[atom.ell_index], atom.phi, atom.psi,
                              sigma0_sq);
    } else {
      v += std::log(std::max(atom.pi[trial_ell_index], 1e-300));
      v += log_mvn_from_stats(stats_by_ell[trial_ell_index], atom.phi, atom.psi,
                              sigma0_sq);
    }
    lw[static_cast<Eigen::Index>(c)] = v;
  }
  return lw;
}

// One auxiliary-atom reassignment sweep step for a single trial. When the
// trial sat in a singleton cluster, its current atom takes the first
// auxiliary slot; auxiliaries carry prior weight kappa / r.
inline void neal8_reassign(int trial, ClusterTable& table,
                           const std::vector<TrialGaussStats>& stats_by_ell,
                           int trial_ell_index, double kappa, const DPHyper& hyper,
                           Rng& rng, bool hard_coupled = false) {
  auto [own_atom, was_singleton] = table.detach(trial);

  const int k_minus = table.n_clusters();
  const int r = hyper.aux_size;
  std::vector<Atom> aux;
  aux.reserve(r);
  for (int h = 0; h < r; ++h) {
    if (h == 0 && was_singleton) {
      aux.push_back(own_atom);
    } else {
      aux.push_back(sample_base_measure(kappa, hyper, rng, hard_coupled));
    }
  }

  std::vector<const Atom*> candidates;
  std::vector<double> sizes;
  for (int c = 0; c < k_minus; ++c) {
    candidates.push_back(&table.atom(c));
    sizes.push_back(static_cast<double>(table.count(c)));
  }
  for (const Atom& a : aux) {
    candidates.push_back(&a);
    sizes.push_back(kappa / r);
  }

  const Eigen::VectorXd lw = reassignment_log_weights(
      candidates, sizes, stats_by_ell, trial_ell_index, hyper.sigma0_sq());
  const int pick = rng.categorical_from_log(lw);

  if (pick < k_minus) {
    table.attach(trial, pick);
  } else {
    table.attach_new(trial, aux[pick - k_minus]);
  }
}

// Two-step conjugate refresh of the concentration parameter:
// omega ~ Be(kappa, n), kappa ~ Ga(2K + 1, b - log omega) with
// b = 1 - sum_c log(1 - psi_c). Both the log(1 - psi) terms and log omega
// are handled in log space so nothing saturates when the chain visits the
// small-kappa regime.
inline double update_kappa_from_log1m(int n_clusters,
                                      const std::vector<double>& cluster_log1m_psis,
                                      int n_trials, double kappa_current, Rng& rng) {
  if (n_clusters < 1 || static_cast<int>(cluster_log1m_psis.size()) != n_clusters) {
    throw std::invalid_argument("update_kappa: inconsistent cluster count");
  }
  double b = 1.0;
  for (double log1m : cluster_log1m_psis) b -= log1m;
  const double log_omega =
      rng.log_beta_draw(kappa_current, static_cast<double>(n_trials));
  return rng.gamma(2.0 * n_clusters + 1.0, b - log_omega);
}

inline double update_kappa(int n_clusters, const std::vector<double>& cluster_psis,
                           int n_trials, double kappa_current, Rng& rng) {
  std::vector<double> log1m;
  log1m.reserve(cluster_psis.size());
  for (double psi : cluster_psis) log1m.push_back(std::log1p(-clamp_unit(psi)));
  return update_kappa_from_log1m(n_clusters, log1m, n_trials, kappa_current, rng);
}

// Whitened-scale cluster summaries u = sum 1'R^-1 1, v = sum 1'R^-1 eta / s0,
// w = sum eta'R^-1 eta / s0^2 and z = v/u. The rate w - z^2 u is nonnegative
// by Cauchy-Schwarz.
struct ClusterSummary {
  double u = 0.0;
  double v = 0.0;
  double w = 0.0;
  double z = 0.0;
};

inline ClusterSummary cluster_summary_stats(
    const std::vector<TrialGaussStats>& member_stats, double sigma0) {
  ClusterSummary s;
  for (const TrialGaussStats& t : member_stats) {
    s.u += t.h;
    s.v += t.g / sigma0;
    s.w += t.q / (sigma0 * sigma0);
  }
  s.z = s.v / s.u;
  return s;
}

struct ClusterParamResult {
  Atom atom;
  bool psi_accepted = false;
};

// Refresh one cluster's shared parameters given its members' curves.
// pi gets a conjugate Dirichlet draw; psi a Metropolis-Hastings step with
// an inverse-gamma proposal; phi a conjugate normal draw. The Gaussian
// algebra runs on the sigma0-whitened scale, where the prior on the
// whitened level is N(0, 1 - psi) and the member curves have unit marginal
// prior variance; phi is mapped back afterwards.
inline ClusterParamResult update_cluster_params(
    const std::vector<TrialGaussStats>& member_stats, const Eigen::VectorXi& ell_counts,
    const Atom& current, double kappa, const DPHyper& hyper, Rng& rng) {
  if (member_stats.empty()) {
    throw std::invalid_argument("update_cluster_params: empty cluster");
  }
  ClusterParamResult out;
  out.atom = current;

  if (!current.hard_coupled()) {
    Eigen::VectorXd shapes = hyper.dirichlet_shapes;
    for (Eigen::Index i = 0; i < shapes.size(); ++i) {
      shapes[i] += static_cast<double>(ell_counts[static_cast<int>(i)]);
    }
    out.atom.pi = rng.dirichlet(shapes);
  }

  const double sigma0 = hyper.sigma0;
  const int bins = member_stats.front().bins;
  const ClusterSummary cs = cluster_summary_stats(member_stats, sigma0);
  const double u = cs.u, v = cs.v, z = cs.z;

  const double ig_shape = (static_cast<double>(bins) * member_stats.size() - 1.0) / 2.0;
  const double ig_rate = std::max(0.5 * (cs.w - z * z * u), 1e-12);

  // Be(psi | 2, kappa) N(z | 0, psi/u + 1 - psi), with log(1 - psi) exact
  auto log_target_factor = [&](double psi, double log1m) {
    const double one_minus = std::exp(log1m);
    return std::log(psi) + (kappa - 1.0) * log1m - lbeta(2.0, kappa) +
           log_normal_pdf(z, 0.0, psi / u + one_minus);
  };

  const double proposal = 1.0 / rng.gamma(ig_shape, ig_rate);
  if (proposal > 0.0 && proposal < 1.0) {
    const double log_ratio =
        log_target_factor(proposal, std::log1p(-proposal)) -
        log_target_factor(current.psi, current.log1m_psi);
    if (std::log(std::max(rng.uniform(), 1e-300)) < log_ratio) {
      out.atom.set_psi_from_log1m(std::log1p(-proposal));
      out.psi_accepted = true;
    }
  }

  const double psi = out.atom.psi;
  const double one_minus = std::exp(out.atom.log1m_psi);
  const double denom = psi + one_minus * u;
  const double mean = one_minus * v / denom;
  const double sd = std::sqrt(psi * one_minus / denom);
  out.atom.phi = sigma0 * rng.normal(mean, sd);
  return out;
}

// Gibbs draw of a hard-coupled cluster's length-scale index given its
// (phi, psi): p(i) proportional to abar_i prod_j N(eta_j | phi, psi R_i).
inline int update_cluster_ell_index(
    const std::vector<std::vector<TrialGaussStats>>& member_stats_by_ell,
    const Atom& atom, const DPHyper& hyper, Rng& rng) {
  const Eigen::VectorXd abar = hyper.normalized_shapes();
  Eigen::VectorXd lw(abar.size());
  for (Eigen::Index i = 0; i < abar.size(); ++i) {
    double v = std::log(abar[i]);
    for (const auto& stats : member_stats_by_ell) {
      v += log_mvn_from_stats(stats[static_cast<int>(i)], atom.phi, atom.psi,
                              hyper.sigma0_sq());
    }
    lw[i] = v;
  }
  return rng.categorical_from_log(lw);
}

}  // namespace dapp

#endif
