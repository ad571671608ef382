#pragma once

#include "evs/nn/layers.hpp"

#include <algorithm>
#include <numeric>
#include <span>

namespace evs::nn {

/// Single-layer gated recurrent unit over time-major inputs (column t * B + b).
///
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
///
/// A sequence stops updating after its last valid event, so the returned state is the hidden
/// state at each row's last event. Internally rows are processed longest-first so each step
/// only touches the sequences that are still active.
template <typename Scalar>
class Gru {
 public:
  struct Cache {
    Eigen::Index batch = 0;
    std::vector<Eigen::Index> order;   // sorted position -> batch row
    std::vector<Eigen::Index> active;  // active count per step
    Mat<Scalar> input;
    Mat<Scalar> gates_in;  // 3H x TB
    std::vector<Mat<Scalar>> h_prev, r, z, n, hn;
  };

  Gru() = default;
  Gru(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index input_dim,
      Eigen::Index hidden, Rng& rng)
      : hidden_(hidden),
        w_ih_(&store.add(name + ".w_ih", 3 * hidden, input_dim)),
        w_hh_(&store.add(name + ".w_hh", 3 * hidden, hidden)),
        b_ih_(&store.add(name + ".b_ih", 3 * hidden, 1)),
        b_hh_(&store.add(name + ".b_hh", 3 * hidden, 1)) {
    init_uniform(*w_ih_, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
    init_orthogonal_blocks(*w_hh_, rng);
    init_uniform(*b_ih_, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    init_uniform(*b_hh_, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  }

  Eigen::Index hidden_size() const { return hidden_; }

  /// Returns H x B final states. `cache` may be null for inference.
  Mat<Scalar> forward(const Mat<Scalar>& x, std::span<const Eigen::Index> lengths,
                      Cache* cache = nullptr) const {
    const auto B = static_cast<Eigen::Index>(lengths.size());
    const Eigen::Index H = hidden_;
    for (auto len : lengths)
      if (len < 1) throw std::invalid_argument("gru: sequence with no valid events");
    const Eigen::Index T = x.cols() / B;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(B));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return lengths[a] > lengths[b]; });

    Mat<Scalar> gi = b_ih_->value.col(0).replicate(1, x.cols());
    gi.noalias() += w_ih_->value * x;

    Mat<Scalar> h = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> gx(3 * H, B), gh(3 * H, B);
    if (cache) {
      cache->batch = B;
      cache->order = order;
      cache->active.clear();
      cache->input = x;
      cache->h_prev.clear();
      cache->r.clear();
      cache->z.clear();
      cache->n.clear();
      cache->hn.clear();
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      Eigen::Index A = 0;
      while (A < B && lengths[order[A]] > t) ++A;
      if (A == 0) break;
      for (Eigen::Index k = 0; k < A; ++k) gx.col(k) = gi.col(t * B + order[k]);
      auto hp = h.leftCols(A);
      gh.leftCols(A) = b_hh_->value.col(0).replicate(1, A);
      gh.leftCols(A).noalias() += w_hh_->value * hp;
      Mat<Scalar> r = sigmoid((gx.topRows(H).leftCols(A) + gh.topRows(H).leftCols(A)).array());
      Mat<Scalar> z = sigmoid(
          (gx.middleRows(H, H).leftCols(A) + gh.middleRows(H, H).leftCols(A)).array());
      Mat<Scalar> hn = gh.bottomRows(H).leftCols(A);
      Mat<Scalar> n = (gx.bottomRows(H).leftCols(A).array() + r.array() * hn.array()).tanh();
      if (cache) {
        cache->active.push_back(A);
        cache->h_prev.push_back(hp);
      }
      hp = (n.array() + z.array() * (hp.array() - n.array())).matrix();
      if (cache) {
        cache->r.push_back(std::move(r));
        cache->z.push_back(std::move(z));
        cache->n.push_back(std::move(n));
        cache->hn.push_back(std::move(hn));
      }
    }
    Mat<Scalar> out(H, B);
    for (Eigen::Index k = 0; k < B; ++k) out.col(order[k]) = h.col(k);
    return out;
  }

  /// Accumulates parameter gradients; returns dL/dx (same layout as the forward input).
  Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& d_out) const {
    const Eigen::Index B = c.batch;
    const Eigen::Index H = hidden_;
    Mat<Scalar> dh(H, B);
    for (Eigen::Index k = 0; k < B; ++k) dh.col(k) = d_out.col(c.order[k]);
    Mat<Scalar> dgi = Mat<Scalar>::Zero(3 * H, c.input.cols());
    Mat<Scalar> dgh(3 * H, B);
    for (auto t = static_cast<Eigen::Index>(c.active.size()) - 1; t >= 0; --t) {
      const Eigen::Index A = c.active[t];
      const auto& r = c.r[t].array();
      const auto& z = c.z[t].array();
      const auto& n = c.n[t].array();
      const auto& hp = c.h_prev[t].array();
      const auto dha = dh.leftCols(A).array();
      const Mat<Scalar> dn_pre = (dha * (Scalar(1) - z) * (Scalar(1) - n.square())).matrix();
      const Mat<Scalar> dz_pre = (dha * (hp - n) * z * (Scalar(1) - z)).matrix();
      const Mat<Scalar> dr_pre =
          (dn_pre.array() * c.hn[t].array() * r * (Scalar(1) - r)).matrix();
      auto g = dgh.leftCols(A);
      g.topRows(H) = dr_pre;
      g.middleRows(H, H) = dz_pre;
      g.bottomRows(H) = (dn_pre.array() * r).matrix();
      for (Eigen::Index k = 0; k < A; ++k) {
        auto col = dgi.col(t * B + c.order[k]);
        col.topRows(H) = dr_pre.col(k);
        col.middleRows(H, H) = dz_pre.col(k);
        col.bottomRows(H) = dn_pre.col(k);
      }
      w_hh_->grad.noalias() += g * c.h_prev[t].transpose();
      b_hh_->grad += g.rowwise().sum();
      Mat<Scalar> dh_prev = (dha * z).matrix();
      dh_prev.noalias() += w_hh_->value.transpose() * g;
      dh.leftCols(A) = dh_prev;
    }
    w_ih_->grad.noalias() += dgi * c.input.transpose();
    b_ih_->grad += dgi.rowwise().sum();
    return w_ih_->value.transpose() * dgi;
  }

 private:
  Eigen::Index hidden_ = 0;
  Parameter<Scalar>* w_ih_ = nullptr;
  Parameter<Scalar>* w_hh_ = nullptr;
  Parameter<Scalar>* b_ih_ = nullptr;
  Parameter<Scalar>* b_hh_ = nullptr;
};

}  // namespace evs::nn
