#include "evs/eval/perturb.hpp"

#include <numeric>

namespace evs::eval {

namespace {

EventSequence select_events(const EventSequence& seq, const std::vector<std::size_t>& idx) {
  EventSequence out;
  out.id = seq.id;
  out.target = seq.target;
  out.times.reserve(idx.size());
  for (auto i : idx) out.times.push_back(seq.times[i]);
  for (const auto& c : seq.cat) {
    auto& dst = out.cat.emplace_back();
    for (auto i : idx) dst.push_back(c[i]);
  }
  for (const auto& x : seq.num) {
    auto& dst = out.num.emplace_back();
    for (auto i : idx) dst.push_back(x[i]);
  }
  return out;
}

}  // namespace

EventSequence shuffle_events(const EventSequence& seq, Rng& rng) {
  std::vector<std::size_t> idx(seq.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return select_events(seq, idx);
}

EventSequence dropout_events(const EventSequence& seq, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw DataError("dropout probability must lie in [0, 1)");
  if (seq.size() == 0 || p == 0.0) return seq;
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<std::size_t> idx;
  do {
    idx.clear();
    for (std::size_t i = 0; i < seq.size(); ++i)
      if (keep(rng)) idx.push_back(i);
  } while (idx.empty());
  return select_events(seq, idx);
}

Dataset perturb_shuffle(const Dataset& dataset, Rng& rng) {
  Dataset out = dataset;
  for (auto& s : out.sequences) s = shuffle_events(s, rng);
  return out;
}

Dataset perturb_dropout(const Dataset& dataset, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw DataError("dropout probability must lie in [0, 1)");
  Dataset out = dataset;
  for (auto& s : out.sequences) s = dropout_events(s, p, rng);
  return out;
}

std::string Perturbation::name() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kShuffle: return "shuffle";
    case Kind::kDropout: return "dropout";
  }
  return "none";
}

Dataset apply_perturbation(const Dataset& dataset, const Perturbation& perturbation, Rng& rng) {
  switch (perturbation.kind) {
    case Perturbation::Kind::kNone: return dataset;
    case Perturbation::Kind::kShuffle: return perturb_shuffle(dataset, rng);
    case Perturbation::Kind::kDropout: return perturb_dropout(dataset, perturbation.p, rng);
  }
  return dataset;
}

double percent_change(double baseline, double perturbed, Metric metric) {
  if (baseline == 0.0) throw DataError("percent change against a zero baseline");
  const double rel = (perturbed - baseline) / std::abs(baseline) * 100.0;
  return lower_is_better(metric) ? -rel : rel;
}

ProbeResult perturbed_linear_probe(const Checkpoint& ckpt, const Dataset& train, const Dataset& test,
                                   const Perturbation& perturbation, std::uint64_t seed) {
  Rng rng_train = make_stream(seed, 0x7e57'0001), rng_test = make_stream(seed, 0x7e57'0002);
  const Dataset tr = apply_perturbation(train, perturbation, rng_train);
  const Dataset te = apply_perturbation(test, perturbation, rng_test);
  return linear_probe(extract_embeddings(ckpt, tr), extract_embeddings(ckpt, te), train.schema.target_kind,
                      train.schema.num_classes);
}

RobustnessRow summarize_robustness(const std::string& method, const Perturbation& perturbation, Metric metric,
                                   std::vector<double> baseline, std::vector<double> perturbed) {
  if (baseline.size() != perturbed.size() || baseline.empty())
    throw DataError("robustness: baseline and perturbed runs must pair up");
  RobustnessRow r;
  r.method = method;
  r.perturbation = perturbation.name();
  r.p = perturbation.p;
  r.metric = metric;
  std::vector<double> change;
  for (std::size_t i = 0; i < baseline.size(); ++i) change.push_back(percent_change(baseline[i], perturbed[i], metric));
  const double n = static_cast<double>(change.size());
  r.mean_change = std::accumulate(change.begin(), change.end(), 0.0) / n;
  double ss = 0.0;
  for (double c : change) ss += (c - r.mean_change) * (c - r.mean_change);
  r.std_change = change.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  r.baseline = std::move(baseline);
  r.perturbed = std::move(perturbed);
  return r;
}

std::vector<RobustnessRow> robustness_report(const std::vector<std::vector<Checkpoint>>& ckpts, const Dataset& train,
                                             const Dataset& test, const std::vector<double>& grid) {
  std::vector<Perturbation> perturbations{{Perturbation::Kind::kNone, 0.0}, {Perturbation::Kind::kShuffle, 0.0}};
  for (double p : grid) perturbations.push_back({Perturbation::Kind::kDropout, p});
  std::vector<RobustnessRow> rows;
  for (const auto& method_ckpts : ckpts) {
    if (method_ckpts.empty()) continue;
    std::vector<double> base;
    Metric metric = Metric::kMse;
    for (const auto& c : method_ckpts) {
      const ProbeResult r = perturbed_linear_probe(c, train, test, perturbations[0], c.seed);
      base.push_back(r.value);
      metric = r.metric;
    }
    const std::string method = to_string(method_ckpts.front().method);
    rows.push_back(summarize_robustness(method, perturbations[0], metric, base, base));
    for (std::size_t k = 1; k < perturbations.size(); ++k) {
      std::vector<double> pert;
      for (const auto& c : method_ckpts) pert.push_back(perturbed_linear_probe(c, train, test, perturbations[k], c.seed).value);
      rows.push_back(summarize_robustness(method, perturbations[k], metric, base, pert));
    }
  }
  return rows;
}

}  // namespace evs::eval
