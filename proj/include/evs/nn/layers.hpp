#pragma once

#include "evs/nn/parameters.hpp"

namespace evs::nn {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return (S(1) + (-x).exp()).inverse();
}

/// Affine map y = W x + b over the columns of x.
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         Rng& rng)
      : weight_(&store.add(name + ".weight", out, in)), bias_(&store.add(name + ".bias", out, 1)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(*weight_, bound, rng);
    init_uniform(*bias_, bound, rng);
  }

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    Mat<Scalar> y = bias_->value.col(0).replicate(1, x.cols());
    y.noalias() += weight_->value * x;
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) const {
    accumulate(x, dy);
    return weight_->value.transpose() * dy;
  }

  /// Parameter gradients only, for inputs that need no gradient.
  void accumulate(const Mat<Scalar>& x, const Mat<Scalar>& dy) const {
    weight_->grad.noalias() += dy * x.transpose();
    bias_->grad += dy.rowwise().sum();
  }

  Eigen::Index in_dim() const { return weight_->value.cols(); }
  Eigen::Index out_dim() const { return weight_->value.rows(); }
  Parameter<Scalar>& weight() const { return *weight_; }
  Parameter<Scalar>& bias() const { return *bias_; }

 private:
  Parameter<Scalar>* weight_ = nullptr;
  Parameter<Scalar>* bias_ = nullptr;
};

/// Normalizes every column to zero mean and unit variance, then applies a per-row gain and shift.
template <typename Scalar>
class LayerNorm {
 public:
  struct Cache {
    Mat<Scalar> xhat;
    RowVec<Scalar> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index dim)
      : gain_(&store.add(name + ".gain", dim, 1)), shift_(&store.add(name + ".shift", dim, 1)) {
    gain_->value.setOnes();
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, Cache& cache) const {
    const auto d = static_cast<Scalar>(x.rows());
    const RowVec<Scalar> mean = x.colwise().sum() / d;
    cache.xhat = x.rowwise() - mean;
    const RowVec<Scalar> var = cache.xhat.array().square().colwise().sum() / d;
    cache.inv_std = (var.array() + Scalar(kEps)).rsqrt();
    cache.xhat.array().rowwise() *= cache.inv_std.array();
    Mat<Scalar> y = cache.xhat.array().colwise() * gain_->value.col(0).array();
    y.colwise() += shift_->value.col(0);
    return y;
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy) const {
    gain_->grad += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
    shift_->grad += dy.rowwise().sum();
    const Mat<Scalar> dxhat = dy.array().colwise() * gain_->value.col(0).array();
    const auto d = static_cast<Scalar>(dy.rows());
    const RowVec<Scalar> sum_d = dxhat.colwise().sum();
    const RowVec<Scalar> sum_dx = (dxhat.array() * cache.xhat.array()).colwise().sum();
    Mat<Scalar> dx = (d * dxhat.array()).rowwise() - sum_d.array();
    dx.array() -= cache.xhat.array().rowwise() * sum_dx.array();
    dx.array().rowwise() *= (cache.inv_std.array() / d);
    return dx;
  }

  Parameter<Scalar>& gain() const { return *gain_; }

  static constexpr double kEps = 1e-5;

 private:
  Parameter<Scalar>* gain_ = nullptr;
  Parameter<Scalar>* shift_ = nullptr;
};

/// Two affine maps with a ReLU between them.
template <typename Scalar>
class FeedForward {
 public:
  struct Cache {
    Mat<Scalar> input;
    Mat<Scalar> hidden;  // post-activation
  };

  FeedForward() = default;
  FeedForward(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index in,
              Eigen::Index hidden, Eigen::Index out, Rng& rng)
      : first_(store, name + ".0", in, hidden, rng), second_(store, name + ".1", hidden, out, rng) {}

  Mat<Scalar> forward(const Mat<Scalar>& x, Cache& cache) const {
    cache.input = x;
    cache.hidden = first_.forward(x).cwiseMax(Scalar(0));
    return second_.forward(cache.hidden);
  }

  Mat<Scalar> backward(const Cache& cache, const Mat<Scalar>& dy) const {
    Mat<Scalar> dh = second_.backward(cache.hidden, dy);
    dh = (cache.hidden.array() > Scalar(0)).select(dh, Scalar(0));
    return first_.backward(cache.input, dh);
  }

  const Linear<Scalar>& first() const { return first_; }
  const Linear<Scalar>& second() const { return second_; }

 private:
  Linear<Scalar> first_;
  Linear<Scalar> second_;
};

}  // namespace evs::nn
