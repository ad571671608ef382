#include "evs/synthgen.hpp"

#include <cassert>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace evs {

void HawkesParams::validate() const {
  if (!(mu > 0.0)) throw DataError("hawkes: mu must be positive");
  if (!(alpha >= 0.0)) throw DataError("hawkes: alpha must be non-negative");
  if (!(beta > 0.0)) throw DataError("hawkes: beta must be positive");
  if (!(alpha / beta < 1.0)) throw DataError("hawkes: alpha / beta >= 1 is supercritical");
  if (!(horizon >= 0.0)) throw DataError("hawkes: horizon must be non-negative");
}

double hawkes_intensity(const HawkesParams& p, std::span<const double> history, double t) {
  double lambda = p.mu;
  for (double ti : history) {
    if (ti < t) lambda += p.alpha * std::exp(-p.beta * (t - ti));
  }
  return lambda;
}

std::vector<double> sample_hawkes(const HawkesParams& p, Rng& rng) {
  p.validate();
  std::vector<double> times;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // excitation = sum alpha exp(-beta (t - t_i)), tracked at the current time t.
  double t = 0.0;
  double excitation = 0.0;
  while (true) {
    const double upper = p.mu + excitation;  // intensity is non-increasing until the next event
    std::exponential_distribution<double> wait(upper);
    const double candidate = t + wait(rng);
    if (candidate > p.horizon) break;
    excitation *= std::exp(-p.beta * (candidate - t));
    t = candidate;
    const double lambda = p.mu + excitation;
    const double u = unif(rng);
    if (u * upper <= lambda) {
      assert(u * upper <= lambda);
      if (times.empty() || t > times.back()) times.push_back(t);
      excitation += p.alpha;
    }
  }
  return times;
}

void PendulumParams::validate() const {
  if (!(mass > 0.0) || !(length > 0.0) || !(gravity > 0.0) || !(damping >= 0.0))
    throw DataError("pendulum: need m > 0, L > 0, g > 0, b >= 0");
}

namespace {

PendulumState derivative(const PendulumParams& p, PendulumState s) {
  return {s.omega, -(p.damping / p.mass) * s.omega - (p.gravity / p.length) * std::sin(s.theta)};
}

}  // namespace

PendulumState rk4_step(const PendulumParams& p, PendulumState s, double h) {
  const auto k1 = derivative(p, s);
  const auto k2 = derivative(p, {s.theta + 0.5 * h * k1.theta, s.omega + 0.5 * h * k1.omega});
  const auto k3 = derivative(p, {s.theta + 0.5 * h * k2.theta, s.omega + 0.5 * h * k2.omega});
  const auto k4 = derivative(p, {s.theta + h * k3.theta, s.omega + h * k3.omega});
  return {s.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
          s.omega + h / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega)};
}

std::vector<PendulumState> integrate_pendulum(const PendulumParams& p, std::span<const double> times,
                                              double step) {
  p.validate();
  if (!(step > 0.0)) throw DataError("pendulum: step must be positive");
  std::vector<PendulumState> out;
  out.reserve(times.size());
  PendulumState node{p.theta0, p.omega0};
  double node_t = 0.0;
  PendulumState next = rk4_step(p, node, step);
  long long k = 0;
  for (double t : times) {
    if (t < 0.0) throw DataError("pendulum: times must be non-negative");
    while (static_cast<double>(k + 1) * step < t) {
      node = next;
      ++k;
      node_t = static_cast<double>(k) * step;
      next = rk4_step(p, node, step);
    }
    if (t < node_t) throw DataError("pendulum: times must be ascending");
    // Cubic Hermite on theta with omega as slope; omega from the derivative of the same cubic.
    const double s = (t - node_t) / step;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const double theta = h00 * node.theta + h10 * step * node.omega + h01 * next.theta +
                         h11 * step * next.omega;
    const double omega = ((6 * s2 - 6 * s) * node.theta + (3 * s2 - 4 * s + 1) * step * node.omega +
                          (-6 * s2 + 6 * s) * next.theta + (3 * s2 - 2 * s) * step * next.omega) /
                         step;
    out.push_back({theta, omega});
  }
  return out;
}

std::vector<std::pair<double, double>> simulate_pendulum(const PendulumParams& p,
                                                         std::span<const double> times,
                                                         double step) {
  std::vector<std::pair<double, double>> xy;
  xy.reserve(times.size());
  for (const auto& s : integrate_pendulum(p, times, step))
    xy.emplace_back(std::sin(s.theta), -std::cos(s.theta));
  return xy;
}

double pendulum_energy(const PendulumParams& p, PendulumState s) {
  return 0.5 * p.mass * p.length * p.length * s.omega * s.omega +
         p.mass * p.gravity * p.length * (1.0 - std::cos(s.theta));
}

FeatureSchema pendulum_schema() {
  FeatureSchema s;
  s.numeric = {{"x"}, {"y"}};
  s.time_unit = "s";
  s.target_kind = TargetKind::kRegression;
  return s;
}

Dataset generate_pendulum_dataset(std::size_t n_sequences, std::uint64_t seed,
                                  const PendulumDatasetConfig& cfg) {
  if (n_sequences < 1) throw DataError("generate_pendulum_dataset: n must be >= 1");
  cfg.hawkes.validate();
  Dataset ds;
  ds.schema = pendulum_schema();
  ds.sequences.resize(n_sequences);
  const int width = static_cast<int>(std::to_string(n_sequences - 1).size());
  for (std::size_t i = 0; i < n_sequences; ++i) {
    Rng rng = make_stream(seed, i);
    std::uniform_real_distribution<double> len(cfg.min_length, cfg.max_length);
    std::uniform_real_distribution<double> init(cfg.min_initial, cfg.max_initial);
    PendulumParams p;
    p.damping = cfg.damping;
    p.mass = cfg.mass;
    p.gravity = cfg.gravity;
    p.length = len(rng);
    p.theta0 = init(rng);
    p.omega0 = init(rng);
    std::vector<double> times;
    do {
      times = sample_hawkes(cfg.hawkes, rng);
    } while (times.empty());
    const auto xy = simulate_pendulum(p, times, cfg.step);

    EventSequence& seq = ds.sequences[i];
    std::ostringstream id;
    id << "pend-" << std::setw(width) << std::setfill('0') << i;
    seq.id = id.str();
    seq.times = std::move(times);
    seq.num.assign(2, {});
    for (const auto& [x, y] : xy) {
      seq.num[0].push_back(x);
      seq.num[1].push_back(y);
    }
    seq.target = p.length;
  }
  return ds;
}

}  // namespace evs
