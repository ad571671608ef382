#include "evs/synthgen.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace evs;

namespace {

struct CountStats {
  double mean = 0, var = 0;
};

CountStats count_stats(const HawkesParams& p, int runs, std::uint64_t seed) {
  std::vector<double> counts;
  for (int r = 0; r < runs; ++r) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(r));
    counts.push_back(static_cast<double>(sample_hawkes(p, rng).size()));
  }
  CountStats s;
  s.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / runs;
  for (double c : counts) s.var += (c - s.mean) * (c - s.mean);
  s.var /= runs - 1;
  return s;
}

}  // namespace

TEST_CASE("Hawkes intensity sums decayed excitations") {
  HawkesParams p;
  CHECK(hawkes_intensity(p, {}, 3.0) == 10.0);
  const std::vector<double> h{2.0};
  CHECK(hawkes_intensity(p, h, 3.0) == doctest::Approx(10.0 + 0.2 * std::exp(-1.0)).epsilon(1e-12));
  p.alpha = 0.0;
  const std::vector<double> many{0.1, 0.5, 2.9};
  CHECK(hawkes_intensity(p, many, 3.0) == 10.0);
}

TEST_CASE("supercritical or invalid Hawkes parameters are rejected") {
  Rng rng(1);
  HawkesParams p;
  p.alpha = 1.0;
  CHECK_THROWS_AS(sample_hawkes(p, rng), DataError);
  p = {};
  p.mu = 0.0;
  CHECK_THROWS_AS(sample_hawkes(p, rng), DataError);
  p = {};
  p.beta = 0.0;
  CHECK_THROWS_AS(sample_hawkes(p, rng), DataError);
}

TEST_CASE("Hawkes samples are strictly ascending inside the horizon and reproducible") {
  HawkesParams p;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    const auto t = sample_hawkes(p, a);
    CHECK(t == sample_hawkes(p, b));
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t[i] >= 0.0);
      CHECK(t[i] <= p.horizon);
      if (i > 0) CHECK(t[i] > t[i - 1]);
    }
  }
}

TEST_CASE("without excitation the count is Poisson") {
  HawkesParams p;
  p.alpha = 0.0;
  p.horizon = 1.0;
  const CountStats s = count_stats(p, 2000, 17);
  CHECK(std::abs(s.mean - 10.0) / 10.0 < 0.05);
  CHECK(std::abs(s.var - 10.0) / 10.0 < 0.1);
}

TEST_CASE("long-run count matches the stationary rate") {
  HawkesParams p;
  p.horizon = 100.0;
  const double expected = p.mu * p.horizon / (1.0 - p.branching_ratio());
  const CountStats s = count_stats(p, 200, 23);
  CHECK(std::abs(s.mean - expected) / expected < 0.05);
}

TEST_CASE("self-excitation makes counts over-dispersed") {
  for (double alpha : {0.2, 0.5}) {
    HawkesParams p;
    p.alpha = alpha;
    p.horizon = 1.0;
    const CountStats s = count_stats(p, 4000, 31);
    INFO("alpha " << alpha << " mean " << s.mean << " var " << s.var);
    CHECK(s.var > s.mean);
  }
}

TEST_CASE("pendulum at rest stays at the bottom") {
  PendulumParams p;
  const std::vector<double> t{0.0, 0.3, 1.7, 4.2};
  for (auto [x, y] : simulate_pendulum(p, t)) {
    CHECK(x == 0.0);
    CHECK(y == -1.0);
  }
}

TEST_CASE("bob position lies on the unit circle") {
  PendulumParams p;
  p.length = 2.3;
  p.theta0 = 4.0;
  p.omega0 = 7.5;
  std::vector<double> t;
  for (int i = 0; i < 200; ++i) t.push_back(0.0371 * i);
  for (auto [x, y] : simulate_pendulum(p, t)) CHECK(std::abs(x * x + y * y - 1.0) < 1e-12);
}

TEST_CASE("small-angle period matches the analytic value") {
  PendulumParams p;
  p.damping = 0.0;
  p.length = 9.81;
  p.theta0 = 0.01;
  std::vector<double> t;
  for (int i = 0; i <= 20000; ++i) t.push_back(1e-3 * i);
  const auto xy = simulate_pendulum(p, t);
  std::vector<double> crossings;
  for (std::size_t i = 1; i < xy.size(); ++i) {
    const double a = xy[i - 1].first, b = xy[i].first;
    if ((a > 0) != (b > 0)) crossings.push_back(t[i - 1] + (t[i] - t[i - 1]) * a / (a - b));
  }
  REQUIRE(crossings.size() >= 4);
  for (std::size_t i = 1; i < crossings.size(); ++i)
    CHECK(std::abs(crossings[i] - crossings[i - 1] - std::numbers::pi) / std::numbers::pi < 0.01);
}

TEST_CASE("damped energy never increases and undamped energy is conserved") {
  PendulumParams p;
  p.theta0 = 2.0;
  p.omega0 = 3.0;
  std::vector<double> t;
  for (int i = 0; i <= 5000; ++i) t.push_back(1e-3 * i);
  const auto damped = integrate_pendulum(p, t);
  for (std::size_t i = 1; i < damped.size(); ++i)
    CHECK(pendulum_energy(p, damped[i]) <= pendulum_energy(p, damped[i - 1]) + 1e-12);

  p.damping = 0.0;
  const auto free = integrate_pendulum(p, t);
  const double e0 = pendulum_energy(p, free.front());
  const double e1 = pendulum_energy(p, free.back());
  CHECK(std::abs(e1 - e0) / e0 / t.back() < 1e-6);
}

TEST_CASE("halving the step changes coordinates by less than 1e-6") {
  for (double theta0 : {1.0, 5.0, 9.0}) {
    PendulumParams p;
    p.length = 0.5;
    p.theta0 = theta0;
    p.omega0 = 10.0 - theta0;
    Rng rng(3);
    const auto times = sample_hawkes(HawkesParams{}, rng);
    const auto coarse = simulate_pendulum(p, times, 1e-3);
    const auto fine = simulate_pendulum(p, times, 5e-4);
    for (std::size_t i = 0; i < times.size(); ++i) {
      CHECK(std::abs(coarse[i].first - fine[i].first) < 1e-6);
      CHECK(std::abs(coarse[i].second - fine[i].second) < 1e-6);
    }
  }
}

TEST_CASE("RK4 has fourth-order global error") {
  PendulumParams p;
  p.theta0 = 1.5;
  p.omega0 = 0.5;
  auto run = [&](double h) {
    PendulumState s{p.theta0, p.omega0};
    const int steps = static_cast<int>(std::lround(1.0 / h));
    for (int i = 0; i < steps; ++i) s = rk4_step(p, s, h);
    return s.theta;
  };
  const double reference = run(1e-4);
  const double order = std::log2(std::abs(run(0.01) - reference) / std::abs(run(0.005) - reference));
  CHECK(order > 3.7);
  CHECK(order < 4.3);
}

TEST_CASE("pendulum dataset follows the generative recipe") {
  const Dataset d = generate_pendulum_dataset(10000, 5);
  CHECK(d.schema.categorical.empty());
  CHECK(d.schema.numeric.size() == 2);
  CHECK(d.schema.target_kind == TargetKind::kRegression);
  CHECK(d.mean_length() >= 75.0);
  CHECK(d.mean_length() <= 105.0);
  for (const auto& s : d.sequences) {
    REQUIRE(s.target.has_value());
    CHECK(*s.target >= 0.5);
    CHECK(*s.target <= 5.0);
    CHECK(s.size() >= 1);
    validate_sequence(s, d.schema);
  }
}

TEST_CASE("dataset generation is deterministic and order independent") {
  const Dataset a = generate_pendulum_dataset(12, 77);
  const Dataset b = generate_pendulum_dataset(12, 77);
  const Dataset prefix = generate_pendulum_dataset(5, 77);
  const Dataset other = generate_pendulum_dataset(12, 78);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(a.sequences[i].times == b.sequences[i].times);
    CHECK(a.sequences[i].num == b.sequences[i].num);
    CHECK(a.sequences[i].target == b.sequences[i].target);
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(prefix.sequences[i].num == a.sequences[i].num);
  CHECK(other.sequences[0].times != a.sequences[0].times);
}
