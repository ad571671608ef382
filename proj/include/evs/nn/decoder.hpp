#pragma once

#include "evs/data.hpp"
#include "evs/nn/attention.hpp"

namespace evs::nn {

struct DecoderConfig {
  int layers = 3;
  int heads = 2;
  int model_dim = 128;
  int ff_dim = 256;
  bool layer_norm = true;
  bool positional_encoding = true;
};

/// Per-token predictions for the next event. Columns follow the TokenLayout of the batch.
template <typename Scalar>
struct DecoderOutput {
  TokenLayout layout;
  std::vector<Mat<Scalar>> logits;  // one vocab x N matrix per categorical feature
  Mat<Scalar> values;               // (numeric features + 1) x N; last row is the time delta
};

template <typename Scalar>
Mat<Scalar> sinusoidal_positions(Eigen::Index dim, Eigen::Index length) {
  Mat<Scalar> pe(dim, length);
  for (Eigen::Index t = 0; t < length; ++t) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(i, t) = static_cast<Scalar>(i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq));
    }
  }
  return pe;
}

/// Post-norm transformer decoder conditioned on one memory vector per sequence.
///
/// Position 0 of each sequence receives a learned start token; position j > 0 receives the
/// projected embedding of event j - 1, so the prediction at position j sees only events
/// before j and the normalized sequence embedding.
template <typename Scalar>
class Decoder {
 public:
  struct LayerCache {
    typename SelfAttention<Scalar>::Cache sa;
    typename LayerNorm<Scalar>::Cache ln1, ln2, ln3;
    typename CrossAttention<Scalar>::Cache ca;
    typename FeedForward<Scalar>::Cache ff;
  };
  struct Cache {
    TokenLayout layout;
    Eigen::Index time_major_cols = 0;
    Mat<Scalar> prev_events;  // embedding input, D x N
    typename LayerNorm<Scalar>::Cache memory_norm;
    Mat<Scalar> memory;
    std::vector<LayerCache> layers;
    Mat<Scalar> final_hidden;
  };

  Decoder() = default;
  Decoder(ParameterStore<Scalar>& store, const std::string& name, const FeatureSchema& schema,
          Eigen::Index event_dim, Eigen::Index memory_dim, const DecoderConfig& cfg, Rng& rng)
      : cfg_(cfg),
        token_(store, name + ".token", event_dim, cfg.model_dim, rng),
        start_(&store.add(name + ".start", cfg.model_dim, 1)),
        memory_norm_(store, name + ".memory_norm", memory_dim) {
    if (cfg.layers < 1 || cfg.model_dim % cfg.heads != 0)
      throw std::invalid_argument("decoder: invalid configuration");
    init_normal(*start_, 1.0, rng);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      Layer layer;
      layer.sa = SelfAttention<Scalar>(store, p + ".self", cfg.model_dim, cfg.heads, rng);
      layer.ca = CrossAttention<Scalar>(store, p + ".cross", cfg.model_dim, memory_dim, cfg.heads, rng);
      layer.ff = FeedForward<Scalar>(store, p + ".ff", cfg.model_dim, cfg.ff_dim, cfg.model_dim, rng);
      layer.ln1 = LayerNorm<Scalar>(store, p + ".ln1", cfg.model_dim);
      layer.ln2 = LayerNorm<Scalar>(store, p + ".ln2", cfg.model_dim);
      layer.ln3 = LayerNorm<Scalar>(store, p + ".ln3", cfg.model_dim);
      layers_.push_back(std::move(layer));
    }
    for (const auto& c : schema.categorical)
      cat_heads_.emplace_back(store, name + ".head." + c.name, cfg.model_dim, c.vocab_size, rng);
    value_head_ = Linear<Scalar>(store, name + ".head.values", cfg.model_dim,
                                 static_cast<Eigen::Index>(schema.numeric.size()) + 1, rng);
  }

  const DecoderConfig& config() const { return cfg_; }

  /// `events` is the time-major embedder output for `lengths`; `memory` is H x B.
  DecoderOutput<Scalar> forward(const Mat<Scalar>& memory, const Mat<Scalar>& events,
                                std::span<const Eigen::Index> lengths, Cache& c) const {
    const auto B = static_cast<Eigen::Index>(lengths.size());
    c.layout = TokenLayout(lengths);
    c.time_major_cols = events.cols();
    const TokenLayout& lay = c.layout;

    c.prev_events = Mat<Scalar>::Zero(events.rows(), lay.total);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 1; t < lay.lengths[b]; ++t)
        c.prev_events.col(lay.offsets[b] + t) = events.col((t - 1) * B + b);
    Mat<Scalar> x = token_.forward(c.prev_events);
    Eigen::Index max_len = 0;
    for (auto n : lay.lengths) max_len = std::max(max_len, n);
    const Mat<Scalar> pe = cfg_.positional_encoding ? sinusoidal_positions<Scalar>(cfg_.model_dim, max_len)
                                                    : Mat<Scalar>::Zero(cfg_.model_dim, max_len);
    for (Eigen::Index b = 0; b < B; ++b) {
      x.col(lay.offsets[b]) = start_->value.col(0);
      x.middleCols(lay.offsets[b], lay.lengths[b]) += pe.leftCols(lay.lengths[b]);
    }

    c.memory = memory_norm_.forward(memory, c.memory_norm);
    c.layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& L = layers_[l];
      LayerCache& lc = c.layers[l];
      x = post_norm(L.ln1, x + L.sa.forward(x, lay, lc.sa), lc.ln1);
      x = post_norm(L.ln2, x + L.ca.forward(x, c.memory, 1, lay, lc.ca), lc.ln2);
      x = post_norm(L.ln3, x + L.ff.forward(x, lc.ff), lc.ln3);
    }
    c.final_hidden = x;

    DecoderOutput<Scalar> out;
    out.layout = lay;
    for (const auto& head : cat_heads_) out.logits.push_back(head.forward(x));
    out.values = value_head_.forward(x);
    return out;
  }

  struct Gradients {
    Mat<Scalar> memory;  // H x B
    Mat<Scalar> events;  // D x TB, time-major
  };

  Gradients backward(const Cache& c, const DecoderOutput<Scalar>& d_out) const {
    const TokenLayout& lay = c.layout;
    const Eigen::Index B = lay.batch();
    Mat<Scalar> dx = value_head_.backward(c.final_hidden, d_out.values);
    for (std::size_t f = 0; f < cat_heads_.size(); ++f)
      dx += cat_heads_[f].backward(c.final_hidden, d_out.logits[f]);

    Mat<Scalar> d_mem = Mat<Scalar>::Zero(c.memory.rows(), c.memory.cols());
    for (auto l = static_cast<std::ptrdiff_t>(layers_.size()) - 1; l >= 0; --l) {
      const Layer& L = layers_[static_cast<std::size_t>(l)];
      const LayerCache& lc = c.layers[static_cast<std::size_t>(l)];
      dx = post_norm_backward(L.ln3, lc.ln3, dx);
      dx += L.ff.backward(lc.ff, dx);
      dx = post_norm_backward(L.ln2, lc.ln2, dx);
      Mat<Scalar> dm;
      dx += L.ca.backward(lc.ca, 1, lay, dx, dm);
      d_mem += dm;
      dx = post_norm_backward(L.ln1, lc.ln1, dx);
      dx += L.sa.backward(lc.sa, lay, dx);
    }

    for (Eigen::Index b = 0; b < B; ++b) {
      start_->grad.col(0) += dx.col(lay.offsets[b]);
      dx.col(lay.offsets[b]).setZero();
    }
    const Mat<Scalar> d_prev = token_.backward(c.prev_events, dx);
    Gradients g;
    g.events = Mat<Scalar>::Zero(d_prev.rows(), c.time_major_cols);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 1; t < lay.lengths[b]; ++t)
        g.events.col((t - 1) * B + b) = d_prev.col(lay.offsets[b] + t);
    g.memory = memory_norm_.backward(c.memory_norm, d_mem);
    return g;
  }

 private:
  struct Layer {
    SelfAttention<Scalar> sa;
    CrossAttention<Scalar> ca;
    FeedForward<Scalar> ff;
    LayerNorm<Scalar> ln1, ln2, ln3;
  };

  Mat<Scalar> post_norm(const LayerNorm<Scalar>& ln, const Mat<Scalar>& x,
                        typename LayerNorm<Scalar>::Cache& cache) const {
    if (!cfg_.layer_norm) return x;
    return ln.forward(x, cache);
  }
  Mat<Scalar> post_norm_backward(const LayerNorm<Scalar>& ln,
                                 const typename LayerNorm<Scalar>::Cache& cache,
                                 const Mat<Scalar>& dy) const {
    if (!cfg_.layer_norm) return dy;
    return ln.backward(cache, dy);
  }

  DecoderConfig cfg_;
  Linear<Scalar> token_;
  Parameter<Scalar>* start_ = nullptr;
  LayerNorm<Scalar> memory_norm_;
  std::vector<Layer> layers_;
  std::vector<Linear<Scalar>> cat_heads_;
  Linear<Scalar> value_head_;
};

}  // namespace evs::nn
