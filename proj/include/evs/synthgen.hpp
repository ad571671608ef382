#pragma once

#include "evs/data.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace evs {

/// Univariate Hawkes process with exponential kernel on [0, horizon].
struct HawkesParams {
  double mu = 10.0;
  double alpha = 0.2;
  double beta = 1.0;
  double horizon = 7.0;

  /// Throws DataError unless mu > 0, alpha >= 0, beta > 0, alpha / beta < 1.
  void validate() const;
  double branching_ratio() const { return alpha / beta; }
};

/// lambda(t) = mu + sum over history t_i < t of alpha * exp(-beta (t - t_i)).
double hawkes_intensity(const HawkesParams& p, std::span<const double> history, double t);

/// Ogata thinning. Returns strictly ascending times in [0, horizon].
std::vector<double> sample_hawkes(const HawkesParams& p, Rng& rng);

struct PendulumParams {
  double damping = 0.5;  // b
  double mass = 1.0;
  double gravity = 9.81;
  double length = 1.0;
  double theta0 = 0.0;
  double omega0 = 0.0;

  void validate() const;
};

struct PendulumState {
  double theta;
  double omega;
};

/// One classical RK4 step of theta'' = -(b/m) theta' - (g/L) sin(theta).
PendulumState rk4_step(const PendulumParams& p, PendulumState s, double h);

/// Angle and angular velocity at each requested time, integrated on a fixed grid of step
/// `step` and interpolated between grid nodes with cubic Hermite segments.
std::vector<PendulumState> integrate_pendulum(const PendulumParams& p, std::span<const double> times,
                                              double step = 1e-3);

/// Bob position scaled by the length: x = sin(theta), y = -cos(theta).
std::vector<std::pair<double, double>> simulate_pendulum(const PendulumParams& p,
                                                         std::span<const double> times,
                                                         double step = 1e-3);

double pendulum_energy(const PendulumParams& p, PendulumState s);

struct PendulumDatasetConfig {
  HawkesParams hawkes{};
  double min_length = 0.5;
  double max_length = 5.0;
  double min_initial = 1.0;
  double max_initial = 9.0;
  double damping = 0.5;
  double mass = 1.0;
  double gravity = 9.81;
  double step = 1e-3;
};

FeatureSchema pendulum_schema();

/// Sequence i uses its own stream derived from (seed, i); output does not depend on order.
Dataset generate_pendulum_dataset(std::size_t n_sequences, std::uint64_t seed,
                                  const PendulumDatasetConfig& config = {});

}  // namespace evs
