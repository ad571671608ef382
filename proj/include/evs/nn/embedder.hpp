#pragma once

#include "evs/data.hpp"
#include "evs/nn/layers.hpp"

#include <cmath>

namespace evs::nn {

/// Per-event feature vectors. Categorical features go through lookup tables; every numeric
/// feature and the time delta get their own scalar-to-vector affine map. Blocks are
/// concatenated in schema order with the time delta last.
///
/// Output layout is time-major: column t * B + b holds event t of sequence b.
template <typename Scalar>
class Embedder {
 public:
  Embedder() = default;
  Embedder(ParameterStore<Scalar>& store, const std::string& name, const FeatureSchema& schema,
           Eigen::Index feature_dim, Rng& rng)
      : feature_dim_(feature_dim) {
    if (schema.num_features() == 0) throw std::invalid_argument("embedder: schema has no features");
    if (feature_dim <= 0) throw std::invalid_argument("embedder: feature width must be positive");
    for (const auto& c : schema.categorical) {
      const Eigen::Index width = c.embed_dim > 0 ? c.embed_dim : feature_dim;
      auto& table = store.add(name + ".cat." + c.name, width, c.vocab_size);
      init_normal(table, 1.0, rng);
      table.value.col(kPaddingCode).setZero();
      tables_.push_back(&table);
      dim_ += width;
    }
    for (const auto& n : schema.numeric) add_scalar_map(store, name + ".num." + n.name, rng);
    add_scalar_map(store, name + ".dt", rng);
  }

  Eigen::Index output_dim() const { return dim_; }

  Mat<Scalar> forward(const PaddedBatch& batch) const {
    const Eigen::Index cols = batch.batch_size * batch.max_len;
    Mat<Scalar> out(dim_, cols);
    Eigen::Index row = 0;
    for (std::size_t f = 0; f < tables_.size(); ++f) {
      const auto& table = tables_[f]->value;
      const int* codes = batch.cat[f].data();
      for (Eigen::Index c = 0; c < cols; ++c) out.block(row, c, table.rows(), 1) = table.col(codes[c]);
      row += table.rows();
    }
    for (std::size_t f = 0; f <= batch.num.size(); ++f) {
      const MatXd& values = f < batch.num.size() ? batch.num[f] : batch.dt;
      const RowVec<Scalar> v = Eigen::Map<const RowVec<double>>(values.data(), cols).unaryExpr(&missing_as_zero);
      out.middleRows(row, feature_dim_).noalias() = scalar_w_[f]->value * v;
      out.middleRows(row, feature_dim_).colwise() += scalar_b_[f]->value.col(0);
      row += feature_dim_;
    }
    return out;
  }

  void backward(const PaddedBatch& batch, const Mat<Scalar>& d_out) const {
    const Eigen::Index cols = batch.batch_size * batch.max_len;
    Eigen::Index row = 0;
    for (std::size_t f = 0; f < tables_.size(); ++f) {
      auto& grad = tables_[f]->grad;
      const int* codes = batch.cat[f].data();
      for (Eigen::Index c = 0; c < cols; ++c) grad.col(codes[c]) += d_out.block(row, c, grad.rows(), 1);
      row += grad.rows();
    }
    for (std::size_t f = 0; f <= batch.num.size(); ++f) {
      const MatXd& values = f < batch.num.size() ? batch.num[f] : batch.dt;
      const Vec<Scalar> v = Eigen::Map<const VecXd>(values.data(), cols).unaryExpr(&missing_as_zero);
      const auto block = d_out.middleRows(row, feature_dim_);
      scalar_w_[f]->grad.noalias() += block * v;
      scalar_b_[f]->grad += block.rowwise().sum();
      row += feature_dim_;
    }
  }

 private:
  // Missing measurements (NaN) contribute only the bias of their feature map.
  static Scalar missing_as_zero(double x) { return std::isnan(x) ? Scalar(0) : static_cast<Scalar>(x); }

  void add_scalar_map(ParameterStore<Scalar>& store, const std::string& name, Rng& rng) {
    auto& w = store.add(name + ".weight", feature_dim_, 1);
    auto& b = store.add(name + ".bias", feature_dim_, 1);
    init_uniform(w, 1.0, rng);
    init_uniform(b, 1.0, rng);
    scalar_w_.push_back(&w);
    scalar_b_.push_back(&b);
    dim_ += feature_dim_;
  }

  Eigen::Index feature_dim_ = 0;
  Eigen::Index dim_ = 0;
  std::vector<Parameter<Scalar>*> tables_;
  std::vector<Parameter<Scalar>*> scalar_w_;
  std::vector<Parameter<Scalar>*> scalar_b_;
};

}  // namespace evs::nn
