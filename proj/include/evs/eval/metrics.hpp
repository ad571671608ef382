#pragma once

#include "evs/types.hpp"

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>

namespace evs::eval {

inline double mean_squared_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) throw std::invalid_argument("mse: size mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size() || pred.empty()) throw std::invalid_argument("accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Mann-Whitney estimate: P(score of a positive > score of a negative), ties counted one half
/// through mid-ranks. Throws if either class is absent.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  double pos_rank = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == 1) {
      pos_rank += rank[i];
      ++npos;
    }
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) throw std::invalid_argument("roc_auc: needs both classes");
  const double np = static_cast<double>(npos);
  return (pos_rank - np * (np + 1.0) / 2.0) / (np * static_cast<double>(nneg));
}

}  // namespace evs::eval
