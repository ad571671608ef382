#include "evs/eval/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evs::eval {

namespace {

using Binned = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

std::vector<std::vector<double>> quantile_edges(const MatXd& X, int bins) {
  std::vector<std::vector<double>> edges(static_cast<std::size_t>(X.cols()));
  std::vector<double> col;
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    col.assign(X.col(f).data(), X.col(f).data() + X.rows());
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    auto& e = edges[f];
    if (col.size() <= static_cast<std::size_t>(bins)) {
      for (std::size_t i = 0; i + 1 < col.size(); ++i) e.push_back(0.5 * (col[i] + col[i + 1]));
    } else {
      for (int b = 1; b < bins; ++b) {
        const std::size_t i = col.size() * static_cast<std::size_t>(b) / static_cast<std::size_t>(bins);
        e.push_back(0.5 * (col[i - 1] + col[i]));
      }
      e.erase(std::unique(e.begin(), e.end()), e.end());
    }
  }
  return edges;
}

Binned bin_matrix(const MatXd& X, const std::vector<std::vector<double>>& edges) {
  Binned out(X.rows(), X.cols());
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    const auto& e = edges[f];
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i, f) = static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), X(i, f)) - e.begin());
  }
  return out;
}

void check_inputs(const MatXd& X, Eigen::Index n, const GbdtConfig& cfg) {
  if (X.rows() == 0 || X.rows() != n) throw std::invalid_argument("gbdt: empty input or size mismatch");
  if (cfg.max_depth < 1 || cfg.max_depth > 6) throw std::invalid_argument("gbdt: depth must be in [1, 6]");
  if (cfg.trees < 1 || cfg.trees > 200) throw std::invalid_argument("gbdt: trees must be in [1, 200]");
  if (cfg.bins < 2 || cfg.bins > 255) throw std::invalid_argument("gbdt: bins must be in [2, 255]");
  if (!X.allFinite()) throw std::invalid_argument("gbdt: non-finite features");
}

}  // namespace

Gbdt::Tree Gbdt::grow(const std::vector<std::vector<double>>& edges, const Binned& binned, const VecXd& g,
                      const VecXd& h, const GbdtConfig& cfg) {
  Tree tree;
  std::vector<double> hg, hh;
  std::vector<int> hc;
  struct Work {
    std::vector<Eigen::Index> rows;
    int depth;
    int node;
  };
  std::vector<Work> stack;
  std::vector<Eigen::Index> all(static_cast<std::size_t>(g.size()));
  for (Eigen::Index i = 0; i < g.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  tree.push_back({});
  stack.push_back({std::move(all), 0, 0});
  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    double G = 0.0, H = 0.0;
    for (auto i : w.rows) {
      G += g(i);
      H += h(i);
    }
    tree[w.node].value = -G / (H + cfg.l2);
    const auto n = static_cast<int>(w.rows.size());
    if (w.depth >= cfg.max_depth || n < 2 * cfg.min_samples_leaf) continue;
    const double parent = G * G / (H + cfg.l2);
    double best_gain = 1e-12;
    int best_f = -1, best_bin = -1;
    for (Eigen::Index f = 0; f < binned.cols(); ++f) {
      const auto nb = edges[f].size() + 1;
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      for (auto i : w.rows) {
        const auto b = binned(i, f);
        hg[b] += g(i);
        hh[b] += h(i);
        ++hc[b];
      }
      double gl = 0.0, hl = 0.0;
      int cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b];
        hl += hh[b];
        cl += hc[b];
        if (cl < cfg.min_samples_leaf) continue;
        if (n - cl < cfg.min_samples_leaf) break;
        const double gr = G - gl, hr = H - hl;
        const double gain = gl * gl / (hl + cfg.l2) + gr * gr / (hr + cfg.l2) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_bin = static_cast<int>(b);
        }
      }
    }
    if (best_f < 0) continue;
    std::vector<Eigen::Index> left, right;
    for (auto i : w.rows) (binned(i, best_f) <= best_bin ? left : right).push_back(i);
    const int l = static_cast<int>(tree.size());
    tree.push_back({});
    tree.push_back({});
    Node& node = tree[w.node];
    node.feature = best_f;
    node.threshold = edges[best_f][static_cast<std::size_t>(best_bin)];
    node.left = l;
    node.right = l + 1;
    stack.push_back({std::move(right), w.depth + 1, l + 1});
    stack.push_back({std::move(left), w.depth + 1, l});
  }
  return tree;
}

double Gbdt::eval_tree(const Tree& t, const double* row, Eigen::Index stride) {
  int k = 0;
  while (t[k].feature >= 0) k = row[t[k].feature * stride] <= t[k].threshold ? t[k].left : t[k].right;
  return t[k].value;
}

Gbdt Gbdt::fit_regression(const MatXd& X, const VecXd& y, const GbdtConfig& cfg) {
  check_inputs(X, y.size(), cfg);
  Gbdt m;
  m.outputs_ = 1;
  m.learning_rate_ = cfg.learning_rate;
  m.base_ = VecXd::Constant(1, y.mean());
  const auto edges = quantile_edges(X, cfg.bins);
  const Binned binned = bin_matrix(X, edges);
  VecXd F = VecXd::Constant(y.size(), m.base_(0));
  const VecXd h = VecXd::Ones(y.size());
  for (int r = 0; r < cfg.trees; ++r) {
    const VecXd g = F - y;
    Tree t = grow(edges, binned, g, h, cfg);
    for (Eigen::Index i = 0; i < X.rows(); ++i) F(i) += cfg.learning_rate * eval_tree(t, &X(i, 0), X.rows());
    m.trees_.push_back(std::move(t));
  }
  return m;
}

Gbdt Gbdt::fit_classification(const MatXd& X, std::span<const int> labels, int K, const GbdtConfig& cfg) {
  check_inputs(X, static_cast<Eigen::Index>(labels.size()), cfg);
  if (K < 2) throw std::invalid_argument("gbdt: need at least two classes");
  const Eigen::Index N = X.rows();
  Gbdt m;
  m.outputs_ = K;
  m.learning_rate_ = cfg.learning_rate;
  VecXd counts = VecXd::Zero(K);
  for (int y : labels) {
    if (y < 0 || y >= K) throw std::invalid_argument("gbdt: label out of range");
    counts(y) += 1.0;
  }
  m.base_ = ((counts.array() + 1.0) / (static_cast<double>(N) + K)).log();
  const auto edges = quantile_edges(X, cfg.bins);
  const Binned binned = bin_matrix(X, edges);
  MatXd F = m.base_.transpose().replicate(N, 1);
  MatXd P(N, K);
  VecXd g(N), h(N);
  for (int r = 0; r < cfg.trees; ++r) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const double mx = F.row(i).maxCoeff();
      P.row(i) = (F.row(i).array() - mx).exp();
      P.row(i) /= P.row(i).sum();
    }
    for (int k = 0; k < K; ++k) {
      for (Eigen::Index i = 0; i < N; ++i) {
        g(i) = P(i, k) - (labels[i] == k ? 1.0 : 0.0);
        h(i) = std::max(P(i, k) * (1.0 - P(i, k)), 1e-6);
      }
      Tree t = grow(edges, binned, g, h, cfg);
      for (Eigen::Index i = 0; i < N; ++i) F(i, k) += cfg.learning_rate * eval_tree(t, &X(i, 0), N);
      m.trees_.push_back(std::move(t));
    }
  }
  return m;
}

MatXd Gbdt::decision(const MatXd& X) const {
  MatXd out = base_.transpose().replicate(X.rows(), 1);
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const auto k = static_cast<Eigen::Index>(t % static_cast<std::size_t>(outputs_));
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i, k) += learning_rate_ * eval_tree(trees_[t], &X(i, 0), X.rows());
  }
  return out;
}

}  // namespace evs::eval
