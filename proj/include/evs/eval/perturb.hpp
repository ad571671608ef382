#pragma once

#include "evs/eval/probes.hpp"

namespace evs::eval {

/// Events move with their timestamps, so neighbouring time deltas may become negative.
EventSequence shuffle_events(const EventSequence& seq, Rng& rng);

/// Drops each event with probability p, redrawing until at least one event survives.
EventSequence dropout_events(const EventSequence& seq, double p, Rng& rng);

Dataset perturb_shuffle(const Dataset& dataset, Rng& rng);
Dataset perturb_dropout(const Dataset& dataset, double p, Rng& rng);

inline const std::vector<double> kDropoutGrid{0.1, 0.3, 0.5, 0.7};

struct Perturbation {
  enum class Kind { kNone, kShuffle, kDropout };
  Kind kind = Kind::kNone;
  double p = 0.0;

  std::string name() const;  // "none", "shuffle", "dropout"
};

Dataset apply_perturbation(const Dataset& dataset, const Perturbation& perturbation, Rng& rng);

/// Signed relative change in percent; negative means the metric got worse.
double percent_change(double baseline, double perturbed, Metric metric);

/// Linear probe after perturbing both splits with a stream derived from `seed`; the probe is
/// refit on the perturbed training embeddings.
ProbeResult perturbed_linear_probe(const Checkpoint& ckpt, const Dataset& train, const Dataset& test,
                                   const Perturbation& perturbation, std::uint64_t seed);

struct RobustnessRow {
  std::string method;
  std::string perturbation;
  double p = 0.0;
  Metric metric = Metric::kMse;
  std::vector<double> baseline;   // per seed
  std::vector<double> perturbed;  // per seed
  double mean_change = 0.0;       // percent
  double std_change = 0.0;        // sample standard deviation over seeds
};

RobustnessRow summarize_robustness(const std::string& method, const Perturbation& perturbation, Metric metric,
                                   std::vector<double> baseline, std::vector<double> perturbed);

/// One row per (method, perturbation): the unperturbed baseline, shuffling, and every dropout
/// level of `grid`. `ckpts[m][s]` is the checkpoint of method m for seed s.
std::vector<RobustnessRow> robustness_report(const std::vector<std::vector<Checkpoint>>& ckpts,
                                             const Dataset& train, const Dataset& test,
                                             const std::vector<double>& grid = kDropoutGrid);

}  // namespace evs::eval
