#pragma once

#include "evs/data.hpp"
#include "evs/nn/decoder.hpp"

#include <cmath>
#include <span>

namespace evs {

struct ViewSampling {
  int views = 2;
  double min_fraction = 0.4;
  double max_fraction = 0.8;
};

/// K contiguous slices of `seq`. Lengths are uniform in [ceil(lo n), floor(hi n)], starts uniform;
/// when that range is empty every view is the whole sequence.
std::vector<EventSequence> sample_subsequences(const EventSequence& seq, const ViewSampling& cfg,
                                               Rng& rng);

/// Same-origin pair matrix. `positive`/`negative` are the label values (1/0 or 1/-1).
Eigen::MatrixXi pair_labels(std::span<const int> row_sources, std::span<const int> col_sources,
                            int positive, int negative);

/// One cell of the margin contrastive loss for embeddings at distance `dist`.
inline double contrastive_pair_term(bool same, double dist, double margin) {
  if (same) return 0.5 * dist * dist;
  const double gap = std::max(0.0, margin - dist);
  return 0.5 * gap * gap;
}

/// One cell of the sigmoid alignment loss: -log sigmoid(z (t s + b)).
inline double alignment_pair_term(int z, double temperature, double bias, double similarity) {
  const double x = z * (temperature * similarity + bias);
  // softplus(-x), stable for large |x|
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

/// Margin contrastive loss over all ordered pairs of the columns of `emb`,
/// divided by the number of distinct sources. Writes dL/demb when `grad` is non-null.
template <typename Scalar>
Scalar contrastive_loss(const Mat<Scalar>& emb, std::span<const int> sources, Scalar margin,
                        Mat<Scalar>* grad = nullptr) {
  const Eigen::Index n = emb.cols();
  std::vector<int> distinct(sources.begin(), sources.end());
  std::sort(distinct.begin(), distinct.end());
  const auto n_sources = static_cast<Scalar>(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
  if (grad) *grad = Mat<Scalar>::Zero(emb.rows(), n);
  if (n == 0) return Scalar(0);
  Scalar total = 0;
  Vec<Scalar> diff(emb.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      diff = emb.col(i) - emb.col(j);
      if (sources[i] == sources[j]) {
        total += diff.squaredNorm();  // both orders, 1/2 each
        if (grad) {
          grad->col(i) += Scalar(2) * diff;
          grad->col(j) -= Scalar(2) * diff;
        }
      } else {
        const Scalar dist = diff.norm();
        const Scalar gap = margin - dist;
        if (gap > 0) {
          total += gap * gap;
          if (grad && dist > Scalar(0)) {
            const Vec<Scalar> g = (Scalar(-2) * gap / dist) * diff;
            grad->col(i) += g;
            grad->col(j) -= g;
          }
        }
      }
    }
  }
  // Each unordered pair was counted twice with weight 1/2.
  if (grad) *grad /= n_sources;
  return total / n_sources;
}

template <typename Scalar>
struct AlignmentGrad {
  Mat<Scalar> generative;
  Scalar log_temperature = 0;
  Scalar bias = 0;
};

/// Sigmoid alignment of L2-normalized generative embeddings (columns of `gen`) against
/// frozen contrastive embeddings `con`. z = +1 when sources match, -1 otherwise; the sum over
/// the grid is divided by the number of generative columns. No gradient reaches `con`.
template <typename Scalar>
Scalar alignment_loss(const Mat<Scalar>& gen, const Mat<Scalar>& con, std::span<const int> gen_sources,
                      std::span<const int> con_sources, Scalar log_temperature, Scalar bias,
                      AlignmentGrad<Scalar>* grad = nullptr) {
  const Eigen::Index n = gen.cols(), m = con.cols();
  const RowVec<Scalar> gnorm = gen.colwise().norm().cwiseMax(Scalar(1e-12));
  const RowVec<Scalar> cnorm = con.colwise().norm().cwiseMax(Scalar(1e-12));
  const Mat<Scalar> ghat = gen.array().rowwise() / gnorm.array();
  const Mat<Scalar> chat = con.array().rowwise() / cnorm.array();
  const Mat<Scalar> sim = ghat.transpose() * chat;  // n x m
  const Scalar t = std::exp(log_temperature);
  Mat<Scalar> dlogit(n, m);
  Scalar total = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const int z = gen_sources[i] == con_sources[j] ? 1 : -1;
      const Scalar x = z * (t * sim(i, j) + bias);
      total += x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
      // d softplus(-x) / dx = -sigmoid(-x)
      const Scalar sig_neg = x > 0 ? std::exp(-x) / (Scalar(1) + std::exp(-x)) : Scalar(1) / (Scalar(1) + std::exp(x));
      dlogit(i, j) = -z * sig_neg;
    }
  }
  const auto norm = static_cast<Scalar>(n);
  if (grad) {
    dlogit /= norm;
    grad->bias = dlogit.sum();
    grad->log_temperature = t * (dlogit.array() * sim.array()).sum();
    const Mat<Scalar> dghat = chat * (t * dlogit).transpose();  // dim x n
    const RowVec<Scalar> proj = (dghat.array() * ghat.array()).colwise().sum();
    grad->generative = (dghat.array() - ghat.array().rowwise() * proj.array()).rowwise() / gnorm.array();
  }
  return total / norm;
}

struct LmLossTerms {
  double total = 0.0;
  std::vector<double> categorical;  // cross-entropy per categorical feature
  std::vector<double> numeric;      // MSE per numeric feature
  double time = 0.0;                // MSE of the time delta
};

/// Next-event objective: per-feature cross-entropy and MSE plus MSE on the time delta, each
/// averaged over valid positions (missing numeric values excluded) and then summed.
/// Token (b, t) predicts event t of sequence b.
template <typename Scalar>
LmLossTerms lm_loss(const nn::DecoderOutput<Scalar>& pred, const PaddedBatch& batch,
                    nn::DecoderOutput<Scalar>* grad = nullptr) {
  const auto& lay = pred.layout;
  const auto N = static_cast<Scalar>(lay.total);
  LmLossTerms terms;
  if (grad) {
    grad->layout = lay;
    grad->logits.clear();
    grad->values = Mat<Scalar>::Zero(pred.values.rows(), pred.values.cols());
  }
  for (std::size_t f = 0; f < pred.logits.size(); ++f) {
    const Mat<Scalar>& logits = pred.logits[f];
    Mat<Scalar> probs(logits.rows(), logits.cols());
    double ce = 0.0;
    for (Eigen::Index b = 0; b < lay.batch(); ++b) {
      for (Eigen::Index t = 0; t < lay.lengths[b]; ++t) {
        const Eigen::Index col = lay.offsets[b] + t;
        const Scalar mx = logits.col(col).maxCoeff();
        probs.col(col) = (logits.col(col).array() - mx).exp();
        const Scalar z = probs.col(col).sum();
        probs.col(col) /= z;
        const int target = batch.cat[f](b, t);
        ce += static_cast<double>(std::log(z) + mx - logits(target, col));
        if (grad) probs(target, col) -= Scalar(1);
      }
    }
    ce /= static_cast<double>(N);
    terms.categorical.push_back(ce);
    terms.total += ce;
    if (grad) grad->logits.push_back(probs / N);
  }
  const auto n_num = static_cast<Eigen::Index>(batch.num.size());
  std::vector<double> sq(static_cast<std::size_t>(n_num + 1), 0.0);
  std::vector<Eigen::Index> count(static_cast<std::size_t>(n_num + 1), 0);
  for (Eigen::Index b = 0; b < lay.batch(); ++b)
    for (Eigen::Index t = 0; t < lay.lengths[b]; ++t)
      for (Eigen::Index f = 0; f <= n_num; ++f)
        count[f] += f == n_num || !std::isnan(batch.num[f](b, t));
  for (Eigen::Index b = 0; b < lay.batch(); ++b) {
    for (Eigen::Index t = 0; t < lay.lengths[b]; ++t) {
      const Eigen::Index col = lay.offsets[b] + t;
      for (Eigen::Index f = 0; f <= n_num; ++f) {
        const double target = f < n_num ? batch.num[f](b, t) : batch.dt(b, t);
        if (std::isnan(target)) continue;  // missing measurement
        const double err = static_cast<double>(pred.values(f, col)) - target;
        sq[f] += err * err;
        if (grad) grad->values(f, col) = static_cast<Scalar>(2.0 * err / static_cast<double>(count[f]));
      }
    }
  }
  for (Eigen::Index f = 0; f <= n_num; ++f) {
    const double mse = count[f] > 0 ? sq[f] / static_cast<double>(count[f]) : 0.0;
    if (f < n_num)
      terms.numeric.push_back(mse);
    else
      terms.time = mse;
    terms.total += mse;
  }
  return terms;
}

inline double naive_hybrid_loss(double lm, double con, double alpha = 1.0, double beta = 10.0) {
  return alpha * lm + beta * con;
}

inline double mlem_loss(double lm, double align, double alpha = 1.0, double beta = 10.0) {
  return alpha * lm + beta * align;
}

}  // namespace evs
