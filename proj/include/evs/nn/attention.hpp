#pragma once

#include "evs/nn/layers.hpp"

#include <limits>
#include <span>

namespace evs::nn {

/// Column-wise softmax attention for one head of one sequence.
/// Scores are keys x queries; with `causal`, key i is visible to query j only when i <= j.
template <typename Scalar>
void attend_forward(const Eigen::Ref<const Mat<Scalar>>& q, const Eigen::Ref<const Mat<Scalar>>& k,
                    const Eigen::Ref<const Mat<Scalar>>& v, bool causal, Scalar scale,
                    Mat<Scalar>& probs, Eigen::Ref<Mat<Scalar>> out) {
  probs.noalias() = k.transpose() * q;
  probs *= scale;
  const Eigen::Index nk = probs.rows();
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const Eigen::Index visible = causal ? std::min(j + 1, nk) : nk;
    auto col = probs.col(j);
    const Scalar mx = col.head(visible).maxCoeff();
    col.head(visible) = (col.head(visible).array() - mx).exp();
    col.head(visible) /= col.head(visible).sum();
    col.tail(nk - visible).setZero();
  }
  out.noalias() = v * probs;
}

/// Accumulates into dq, dk, dv.
template <typename Scalar>
void attend_backward(const Eigen::Ref<const Mat<Scalar>>& q, const Eigen::Ref<const Mat<Scalar>>& k,
                     const Eigen::Ref<const Mat<Scalar>>& v, const Mat<Scalar>& probs,
                     const Eigen::Ref<const Mat<Scalar>>& d_out, Scalar scale,
                     Eigen::Ref<Mat<Scalar>> dq, Eigen::Ref<Mat<Scalar>> dk,
                     Eigen::Ref<Mat<Scalar>> dv) {
  dv.noalias() += d_out * probs.transpose();
  Mat<Scalar> ds = v.transpose() * d_out;
  const RowVec<Scalar> inner = (ds.array() * probs.array()).colwise().sum();
  ds = (probs.array() * (ds.array().rowwise() - inner.array())).matrix() * scale;
  dq.noalias() += k * ds;
  dk.noalias() += q * ds.transpose();
}

/// Token layout shared by the decoder: sequences stored back to back, sequence b occupying
/// columns [offset[b], offset[b] + length[b]).
struct TokenLayout {
  std::vector<Eigen::Index> lengths;
  std::vector<Eigen::Index> offsets;
  Eigen::Index total = 0;

  explicit TokenLayout(std::span<const Eigen::Index> lens = {}) {
    for (auto n : lens) {
      offsets.push_back(total);
      lengths.push_back(n);
      total += n;
    }
  }
  Eigen::Index batch() const { return static_cast<Eigen::Index>(lengths.size()); }
};

/// Multi-head causal self-attention within each sequence of a TokenLayout.
template <typename Scalar>
class SelfAttention {
 public:
  struct Cache {
    Mat<Scalar> input, qkv, context;
    std::vector<Mat<Scalar>> probs;  // [b * heads + h]
  };

  SelfAttention() = default;
  SelfAttention(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index dim,
                Eigen::Index heads, Rng& rng)
      : dim_(dim), heads_(heads), in_(store, name + ".in", dim, 3 * dim, rng),
        out_(store, name + ".out", dim, dim, rng) {
    if (dim % heads != 0) throw std::invalid_argument("attention: dim not divisible by heads");
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, const TokenLayout& layout, Cache& c) const {
    const Eigen::Index hd = dim_ / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    c.input = x;
    c.qkv = in_.forward(x);
    c.context.resize(dim_, x.cols());
    c.probs.assign(static_cast<std::size_t>(layout.batch() * heads_), Mat<Scalar>());
    for (Eigen::Index b = 0; b < layout.batch(); ++b) {
      const auto block = c.qkv.middleCols(layout.offsets[b], layout.lengths[b]);
      for (Eigen::Index h = 0; h < heads_; ++h) {
        attend_forward<Scalar>(block.middleRows(h * hd, hd), block.middleRows(dim_ + h * hd, hd),
                               block.middleRows(2 * dim_ + h * hd, hd), true, scale,
                               c.probs[b * heads_ + h],
                               c.context.block(h * hd, layout.offsets[b], hd, layout.lengths[b]));
      }
    }
    return out_.forward(c.context);
  }

  Mat<Scalar> backward(const Cache& c, const TokenLayout& layout, const Mat<Scalar>& dy) const {
    const Eigen::Index hd = dim_ / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    const Mat<Scalar> dctx = out_.backward(c.context, dy);
    Mat<Scalar> dqkv = Mat<Scalar>::Zero(3 * dim_, dy.cols());
    for (Eigen::Index b = 0; b < layout.batch(); ++b) {
      const Eigen::Index off = layout.offsets[b], n = layout.lengths[b];
      const auto block = c.qkv.middleCols(off, n);
      auto dblock = dqkv.middleCols(off, n);
      for (Eigen::Index h = 0; h < heads_; ++h) {
        attend_backward<Scalar>(block.middleRows(h * hd, hd), block.middleRows(dim_ + h * hd, hd),
                                block.middleRows(2 * dim_ + h * hd, hd), c.probs[b * heads_ + h],
                                dctx.block(h * hd, off, hd, n), scale,
                                dblock.middleRows(h * hd, hd), dblock.middleRows(dim_ + h * hd, hd),
                                dblock.middleRows(2 * dim_ + h * hd, hd));
      }
    }
    return in_.backward(c.input, dqkv);
  }

 private:
  Eigen::Index dim_ = 0, heads_ = 1;
  Linear<Scalar> in_, out_;
};

/// Multi-head attention from tokens to a per-sequence memory. Memory columns
/// [b * slots, (b + 1) * slots) belong to sequence b.
template <typename Scalar>
class CrossAttention {
 public:
  struct Cache {
    Mat<Scalar> input, memory, q, kv, context;
    std::vector<Mat<Scalar>> probs;
  };

  CrossAttention() = default;
  CrossAttention(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index dim,
                 Eigen::Index memory_dim, Eigen::Index heads, Rng& rng)
      : dim_(dim), heads_(heads), q_(store, name + ".q", dim, dim, rng),
        kv_(store, name + ".kv", memory_dim, 2 * dim, rng), out_(store, name + ".out", dim, dim, rng) {
    if (dim % heads != 0) throw std::invalid_argument("attention: dim not divisible by heads");
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, const Mat<Scalar>& memory, Eigen::Index slots,
                      const TokenLayout& layout, Cache& c) const {
    const Eigen::Index hd = dim_ / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    c.input = x;
    c.memory = memory;
    c.q = q_.forward(x);
    c.kv = kv_.forward(memory);
    c.context.resize(dim_, x.cols());
    c.probs.assign(static_cast<std::size_t>(layout.batch() * heads_), Mat<Scalar>());
    for (Eigen::Index b = 0; b < layout.batch(); ++b) {
      const auto qb = c.q.middleCols(layout.offsets[b], layout.lengths[b]);
      const auto mb = c.kv.middleCols(b * slots, slots);
      for (Eigen::Index h = 0; h < heads_; ++h) {
        attend_forward<Scalar>(qb.middleRows(h * hd, hd), mb.middleRows(h * hd, hd),
                               mb.middleRows(dim_ + h * hd, hd), false, scale,
                               c.probs[b * heads_ + h],
                               c.context.block(h * hd, layout.offsets[b], hd, layout.lengths[b]));
      }
    }
    return out_.forward(c.context);
  }

  /// Returns dL/dx; dL/dmemory is written to `d_memory`.
  Mat<Scalar> backward(const Cache& c, Eigen::Index slots, const TokenLayout& layout,
                       const Mat<Scalar>& dy, Mat<Scalar>& d_memory) const {
    const Eigen::Index hd = dim_ / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    const Mat<Scalar> dctx = out_.backward(c.context, dy);
    Mat<Scalar> dq = Mat<Scalar>::Zero(dim_, dy.cols());
    Mat<Scalar> dkv = Mat<Scalar>::Zero(2 * dim_, c.kv.cols());
    for (Eigen::Index b = 0; b < layout.batch(); ++b) {
      const Eigen::Index off = layout.offsets[b], n = layout.lengths[b];
      const auto qb = c.q.middleCols(off, n);
      const auto mb = c.kv.middleCols(b * slots, slots);
      auto dmb = dkv.middleCols(b * slots, slots);
      for (Eigen::Index h = 0; h < heads_; ++h) {
        attend_backward<Scalar>(qb.middleRows(h * hd, hd), mb.middleRows(h * hd, hd),
                                mb.middleRows(dim_ + h * hd, hd), c.probs[b * heads_ + h],
                                dctx.block(h * hd, off, hd, n), scale,
                                dq.block(h * hd, off, hd, n), dmb.middleRows(h * hd, hd),
                                dmb.middleRows(dim_ + h * hd, hd));
      }
    }
    d_memory = kv_.backward(c.memory, dkv);
    return q_.backward(c.input, dq);
  }

 private:
  Eigen::Index dim_ = 0, heads_ = 1;
  Linear<Scalar> q_, kv_, out_;
};

}  // namespace evs::nn
