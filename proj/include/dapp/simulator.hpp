// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_SIMULATOR_HPP
#define DAPP_SIMULATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <vector>

#include "dapp/core.hpp"
#include "dapp/errors.hpp"
#include "dapp/math.hpp"
#include "dapp/rng.hpp"

namespace dapp {

// Weight-curve families used by the synthetic experiments.
struct WeightCurve {
  enum class Kind { flat, sinusoid };
  Kind kind = Kind::flat;
  double value = 0.5;   // flat level
  double period = 0.0;  // ms
  double shift = 0.0;   // ms

  double operator()(double t) const {
    if (kind == Kind::flat) return value;
    return 0.01 + 0.49 * (1.0 + std::sin(2.0 * kPi * (shift + t) / period));
  }

  Eigen::VectorXd at(const Eigen::VectorXd& times) const {
    Eigen::VectorXd out(times.size());
    for (Eigen::Index i = 0; i < times.size(); ++i) out[i] = (*this)(times[i]);
    return out;
  }
};

struct ExperimentSpec {
  int experiment = 1;      // 1, 2 or 3
  double lambda_a = 0.4;   // spikes/ms
  double lambda_b = 0.1;   // spikes/ms
  int n_a = 20;
  int n_b = 20;
  int n_ab = 20;
  double horizon = 1000.0;  // ms
  std::uint64_t seed = 0;
  // Optional exact flat/sinusoid split for experiment 3 (negative = random).
  int exact_flat = -1;
  int exact_sinusoid = -1;

  void validate() const {
    if (experiment < 1 || experiment > 3) {
      throw config_error("ExperimentSpec: experiment must be 1, 2 or 3");
    }
    if (n_a < 1 || n_b < 1 || n_ab < 1) {
      throw config_error("ExperimentSpec: trial counts must be >= 1");
    }
    if (!(lambda_a > 0.0) || !(lambda_b > 0.0)) {
      throw config_error("ExperimentSpec: rates must be > 0");
    }
    if (!(horizon > 0.0)) throw config_error("ExperimentSpec: horizon must be > 0");
    if ((exact_flat >= 0) != (exact_sinusoid >= 0)) {
      throw config_error("ExperimentSpec: set both exact counts or neither");
    }
    if (exact_flat >= 0 && exact_flat + exact_sinusoid != n_ab) {
      throw config_error("ExperimentSpec: exact counts must sum to n_ab");
    }
  }
};

// Largest value of the curve over a dense scan, with 1% headroom.
inline double rate_envelope(const std::function<double(double)>& rate, double horizon) {
  double peak = 0.0;
  const int scan = 4000;
  for (int i = 0; i <= scan; ++i) {
    peak = std::max(peak, rate(horizon * i / scan));
  }
  return peak * 1.01;
}

// Thinning: homogeneous Poi(envelope * T) candidates kept with probability
// rate(t) / envelope.
inline SpikeTrain simulate_inhomogeneous_poisson(
    const std::function<double(double)>& rate, double horizon, Rng& rng, int trial_id,
    Condition cond, double envelope = -1.0) {
  if (envelope <= 0.0) envelope = rate_envelope(rate, horizon);
  std::vector<double> times;
  if (envelope > 0.0) {
    const long candidates = rng.poisson(envelope * horizon);
    times.reserve(candidates);
    for (long i = 0; i < candidates; ++i) {
      const double t = rng.uniform(0.0, horizon);
      const double r = rate(t);
      if (r > envelope) {
        std::ostringstream msg;
        msg << "simulate_inhomogeneous_poisson: rate " << r << " at t = " << t
            << " exceeds the envelope " << envelope;
        throw numerical_error(msg.str());
      }
      if (rng.uniform() * envelope < r) times.push_back(t);
    }
    std::sort(times.begin(), times.end());
  }
  return SpikeTrain(std::move(times), trial_id, cond);
}

// Weight-curve draw for one AB trial of the given experiment.
inline WeightCurve experiment_weight_curve(const ExperimentSpec& spec, Rng& rng) {
  WeightCurve curve;
  switch (spec.experiment) {
    case 1:
      curve.kind = WeightCurve::Kind::flat;
      curve.value = (rng.uniform() < 0.6) ? rng.uniform(0.05, 0.25)
                                          : rng.uniform(0.85, 0.95);
      break;
    case 2:
      curve.kind = WeightCurve::Kind::sinusoid;
      curve.period = rng.uniform(400.0, 1000.0);
      curve.shift = rng.uniform(0.0, curve.period);
      break;
    case 3:
      if (rng.uniform() < 0.5) {
        curve.kind = WeightCurve::Kind::flat;
        curve.value = rng.uniform(0.4, 0.7);
      } else {
        curve.kind = WeightCurve::Kind::sinusoid;
        curve.period = rng.uniform(320.0, 340.0);
        curve.shift = rng.uniform(0.0, curve.period);
      }
      break;
    default:
      throw config_error("experiment_weight_curve: unknown experiment");
  }
  return curve;
}

struct SimulatedDataset {
  std::vector<SpikeTrain> trains;
  std::vector<WeightCurve> truth;  // one per AB trial, aligned with trial ids
  ExperimentSpec spec;
};

// Full synthetic dataset: n_a + n_b single-stimulus trains plus n_ab
// admixture trains with per-trial weight curves; ground truth retained.
inline SimulatedDataset simulate_dataset(const ExperimentSpec& spec) {
  spec.validate();
  SimulatedDataset out;
  out.spec = spec;
  Rng rng(spec.seed == 0 ? 0x9d2c5680u : spec.seed);

  auto const_a = [&](double) { return spec.lambda_a; };
  auto const_b = [&](double) { return spec.lambda_b; };
  for (int j = 0; j < spec.n_a; ++j) {
    out.trains.push_back(
        simulate_inhomogeneous_poisson(const_a, spec.horizon, rng, j, Condition::A));
  }
  for (int j = 0; j < spec.n_b; ++j) {
    out.trains.push_back(
        simulate_inhomogeneous_poisson(const_b, spec.horizon, rng, j, Condition::B));
  }

  std::vector<WeightCurve> curves;
  if (spec.experiment == 3 && spec.exact_flat >= 0) {
    // reproduce a fixed flat/sinusoid split, randomly interleaved
    for (int j = 0; j < spec.n_ab; ++j) {
      WeightCurve c;
      if (j < spec.exact_flat) {
        c.kind = WeightCurve::Kind::flat;
        c.value = rng.uniform(0.4, 0.7);
      } else {
        c.kind = WeightCurve::Kind::sinusoid;
        c.period = rng.uniform(320.0, 340.0);
        c.shift = rng.uniform(0.0, c.period);
      }
      curves.push_back(c);
    }
    std::shuffle(curves.begin(), curves.end(), rng.engine());
  } else {
    for (int j = 0; j < spec.n_ab; ++j) curves.push_back(experiment_weight_curve(spec, rng));
  }

  for (int j = 0; j < spec.n_ab; ++j) {
    const WeightCurve& alpha = curves[j];
    auto mix = [&](double t) {
      const double a = alpha(t);
      return a * spec.lambda_a + (1.0 - a) * spec.lambda_b;
    };
    out.trains.push_back(simulate_inhomogeneous_poisson(
        mix, spec.horizon, rng, j, Condition::AB,
        std::max(spec.lambda_a, spec.lambda_b) * 1.01));
  }
  out.truth = std::move(curves);
  return out;
}

}  // namespace dapp

#endif
