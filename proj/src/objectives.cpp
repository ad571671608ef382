#include "evs/objectives.hpp"

namespace evs {

std::vector<EventSequence> sample_subsequences(const EventSequence& seq, const ViewSampling& cfg, Rng& rng) {
  if (cfg.views < 1) throw std::invalid_argument("views: need at least one view");
  if (!(cfg.min_fraction > 0.0 && cfg.min_fraction <= cfg.max_fraction && cfg.max_fraction <= 1.0))
    throw std::invalid_argument("views: fractions must satisfy 0 < min <= max <= 1");
  const auto n = static_cast<long long>(seq.times.size());
  auto lo = static_cast<long long>(std::ceil(cfg.min_fraction * static_cast<double>(n) - 1e-9));
  auto hi = static_cast<long long>(std::floor(cfg.max_fraction * static_cast<double>(n) + 1e-9));
  lo = std::max(lo, 1LL);
  std::vector<EventSequence> views;
  views.reserve(static_cast<std::size_t>(cfg.views));
  for (int k = 0; k < cfg.views; ++k) {
    if (lo > hi || n == 0) {
      views.push_back(seq);
      continue;
    }
    const long long len = std::uniform_int_distribution<long long>(lo, hi)(rng);
    const long long start = std::uniform_int_distribution<long long>(0, n - len)(rng);
    const auto s = static_cast<std::size_t>(start), e = static_cast<std::size_t>(start + len);
    EventSequence v;
    v.id = seq.id;
    v.target = seq.target;
    v.times.assign(seq.times.begin() + s, seq.times.begin() + e);
    for (const auto& c : seq.cat) v.cat.emplace_back(c.begin() + s, c.begin() + e);
    for (const auto& x : seq.num) v.num.emplace_back(x.begin() + s, x.begin() + e);
    views.push_back(std::move(v));
  }
  return views;
}

Eigen::MatrixXi pair_labels(std::span<const int> row_sources, std::span<const int> col_sources, int positive,
                            int negative) {
  Eigen::MatrixXi out(static_cast<Eigen::Index>(row_sources.size()), static_cast<Eigen::Index>(col_sources.size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = row_sources[i] == col_sources[j] ? positive : negative;
  return out;
}

}  // namespace evs
