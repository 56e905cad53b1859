// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_CORE_HPP
#define DAPP_CORE_HPP

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dapp/errors.hpp"
#include "dapp/math.hpp"

namespace dapp {

enum class Condition { A, B, AB };

inline std::string to_string(Condition c) {
  switch (c) {
    case Condition::A: return "A";
    case Condition::B: return "B";
    default: return "AB";
  }
}

inline Condition condition_from_string(const std::string& s) {
  if (s == "A") return Condition::A;
  if (s == "B") return Condition::B;
  if (s == "AB") return Condition::AB;
  throw data_error("unknown condition tag '" + s + "' (expected A, B or AB)");
}

// Uniform partition of the response window [0, T] into M bins of width
// w = T/M, with midpoints t*_m = (m - 0.5) w. Times are in milliseconds.
class TimeGrid {
 public:
  TimeGrid(double horizon_ms, int bins) : horizon_(horizon_ms), bins_(bins) {
    if (!(horizon_ms > 0.0)) throw config_error("TimeGrid: horizon must be > 0");
    if (bins < 1) throw config_error("TimeGrid: bin count must be >= 1");
  }

  static TimeGrid from_bin_width(double horizon_ms, double bin_width_ms) {
    if (!(bin_width_ms > 0.0)) throw config_error("TimeGrid: bin width must be > 0");
    const double ratio = horizon_ms / bin_width_ms;
    const auto bins = static_cast<long>(std::llround(ratio));
    if (bins < 1 || std::abs(ratio - static_cast<double>(bins)) > 1e-9 * ratio) {
      std::ostringstream msg;
      msg << "TimeGrid: bin width " << bin_width_ms
          << " ms does not divide the horizon " << horizon_ms << " ms";
      throw config_error(msg.str());
    }
    return TimeGrid(horizon_ms, static_cast<int>(bins));
  }

  double horizon() const { return horizon_; }
  int bins() const { return bins_; }
  double bin_width() const { return horizon_ / bins_; }
  double midpoint(int m) const { return (m + 0.5) * bin_width(); }

  Eigen::VectorXd midpoints() const {
    Eigen::VectorXd t(bins_);
    for (int m = 0; m < bins_; ++m) t[m] = midpoint(m);
    return t;
  }

  bool operator==(const TimeGrid& o) const {
    return horizon_ == o.horizon_ && bins_ == o.bins_;
  }

 private:
  double horizon_;
  int bins_;
};

// One trial's event times on [0, T], tagged with its condition.
struct SpikeTrain {
  std::vector<double> times;  // nondecreasing
  int trial_id = 0;
  Condition condition = Condition::AB;

  SpikeTrain() = default;
  SpikeTrain(std::vector<double> t, int id, Condition cond)
      : times(std::move(t)), trial_id(id), condition(cond) {
    if (!std::is_sorted(times.begin(), times.end())) {
      throw data_error("SpikeTrain: event times must be nondecreasing");
    }
  }

  std::size_t count() const { return times.size(); }
};

enum class RateUnits { per_ms, per_s };

// Intensity evaluated at grid midpoints, in spikes per millisecond so that
// bin_width * value is a unitless bin mean.
struct RateCurve {
  Eigen::VectorXd values;
  RateUnits units = RateUnits::per_ms;

  RateCurve() = default;
  explicit RateCurve(Eigen::VectorXd v, RateUnits u = RateUnits::per_ms)
      : values(std::move(v)), units(u) {
    if ((values.array() <= 0.0).any()) {
      throw std::domain_error("RateCurve: all values must be > 0");
    }
  }

  RateCurve to_per_ms() const {
    if (units == RateUnits::per_ms) return *this;
    return RateCurve(values / 1000.0, RateUnits::per_ms);
  }
};

inline double hz_to_per_ms(double hz) { return hz / 1000.0; }

// Count events per bin. Bins are left-open, right-closed intervals
// ((m-1)w, mw]; an event at exactly time zero counts toward bin 1, and an
// event at exactly T toward bin M.
inline Eigen::VectorXi bin_spike_train(const SpikeTrain& train, const TimeGrid& grid) {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(grid.bins());
  const double w = grid.bin_width();
  for (double t : train.times) {
    if (t < 0.0 || t > grid.horizon()) {
      std::ostringstream msg;
      msg << "spike train " << train.trial_id << ": event at " << t
          << " ms lies outside the response window [0, " << grid.horizon() << "]";
      throw data_error(msg.str());
    }
    int idx = 0;
    if (t > 0.0) {
      idx = static_cast<int>(std::ceil(t / w)) - 1;
      idx = std::clamp(idx, 0, grid.bins() - 1);
      // guard against t/w landing infinitesimally below an integer
      if (idx + 1 < grid.bins() && t > (idx + 1) * w) ++idx;
    }
    counts[idx] += 1;
  }
  return counts;
}

// Product-Poisson log density of bin counts under the discretized
// intensity: sum_m [ -w lambda(t*_m) + X_m log(w lambda(t*_m)) - log X_m! ].
inline double riemann_log_likelihood(const Eigen::VectorXi& counts,
                                     const RateCurve& rate, const TimeGrid& grid) {
  if (counts.size() != grid.bins() || rate.values.size() != grid.bins()) {
    throw std::invalid_argument("riemann_log_likelihood: length mismatch");
  }
  if (rate.units != RateUnits::per_ms) {
    throw std::domain_error("riemann_log_likelihood: rate must be in spikes/ms");
  }
  const double w = grid.bin_width();
  double ll = 0.0;
  for (int m = 0; m < grid.bins(); ++m) {
    const double mean = w * rate.values[m];
    if (!(mean > 0.0)) {
      throw std::domain_error("riemann_log_likelihood: nonpositive rate value");
    }
    ll += log_poisson_pmf(counts[m], mean);
  }
  return ll;
}

// Convex combination alpha * lamA + (1 - alpha) * lamB, elementwise.
inline RateCurve mixture_intensity(const Eigen::VectorXd& alpha,
                                   const RateCurve& lam_a, const RateCurve& lam_b) {
  if (alpha.size() != lam_a.values.size() || alpha.size() != lam_b.values.size()) {
    throw std::invalid_argument("mixture_intensity: length mismatch");
  }
  if ((alpha.array() < 0.0).any() || (alpha.array() > 1.0).any()) {
    throw std::domain_error("mixture_intensity: weights must lie in [0, 1]");
  }
  Eigen::VectorXd v = alpha.array() * lam_a.values.array() +
                      (1.0 - alpha.array()) * lam_b.values.array();
  return RateCurve(std::move(v));
}

// Per-condition matrices of bin counts on a shared grid.
struct BinnedDataset {
  TimeGrid grid;
  Eigen::MatrixXi xa;   // n_A x M
  Eigen::MatrixXi xb;   // n_B x M
  Eigen::MatrixXi xab;  // n_AB x M

  BinnedDataset(TimeGrid g, Eigen::MatrixXi a, Eigen::MatrixXi b, Eigen::MatrixXi ab)
      : grid(g), xa(std::move(a)), xb(std::move(b)), xab(std::move(ab)) {
    for (const auto* m : {&xa, &xb, &xab}) {
      if ((m->array() < 0).any()) {
        throw data_error("BinnedDataset: negative bin count");
      }
      if (m->rows() > 0 && m->cols() != grid.bins()) {
        throw data_error("BinnedDataset: column count does not match the grid");
      }
    }
  }

  int n_a() const { return static_cast<int>(xa.rows()); }
  int n_b() const { return static_cast<int>(xb.rows()); }
  int n_ab() const { return static_cast<int>(xab.rows()); }
};

// Bin a full set of trains into the per-condition count matrices.
inline BinnedDataset bin_dataset(const std::vector<SpikeTrain>& trains,
                                 const TimeGrid& grid) {
  std::vector<const SpikeTrain*> per_cond[3];
  for (const auto& tr : trains) {
    per_cond[static_cast<int>(tr.condition)].push_back(&tr);
  }
  auto fill = [&](const std::vector<const SpikeTrain*>& list) {
    Eigen::MatrixXi x(static_cast<Eigen::Index>(list.size()), grid.bins());
    for (std::size_t j = 0; j < list.size(); ++j) {
      x.row(static_cast<Eigen::Index>(j)) = bin_spike_train(*list[j], grid).transpose();
    }
    return x;
  };
  return BinnedDataset(grid, fill(per_cond[0]), fill(per_cond[1]), fill(per_cond[2]));
}

}  // namespace dapp

#endif
