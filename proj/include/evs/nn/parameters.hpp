#pragma once

#include "evs/types.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace evs::nn {

template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
};

/// Owns named parameters with matching gradient buffers. Addresses stay stable as
/// parameters are added, so layers keep raw pointers into the store.
template <typename Scalar>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<Scalar>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_[name] = params_.size();
    params_.push_back({name, Mat<Scalar>::Zero(rows, cols), Mat<Scalar>::Zero(rows, cols)});
    return params_.back();
  }

  Parameter<Scalar>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<Scalar>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  Parameter<Scalar>& at(const std::string& name) {
    auto* p = find(name);
    if (!p) throw std::out_of_range("no parameter '" + name + "'");
    return *p;
  }
  const Parameter<Scalar>& at(const std::string& name) const {
    auto* p = find(name);
    if (!p) throw std::out_of_range("no parameter '" + name + "'");
    return *p;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  Eigen::Index num_scalars() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
void init_uniform(Parameter<Scalar>& p, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void init_normal(Parameter<Scalar>& p, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
}

/// Fills consecutive square row-blocks of `p` with independent random orthogonal matrices.
template <typename Scalar>
void init_orthogonal_blocks(Parameter<Scalar>& p, Rng& rng) {
  const Eigen::Index n = p.value.cols();
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index r = 0; r + n <= p.value.rows(); r += n) {
    MatXd g(n, n);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = dist(rng);
    Eigen::HouseholderQR<MatXd> qr(g);
    MatXd q = qr.householderQ();
    // Sign fix makes the draw Haar-distributed.
    const VecXd d = qr.matrixQR().diagonal();
    for (Eigen::Index c = 0; c < n; ++c)
      if (d(c) < 0) q.col(c) = -q.col(c);
    p.value.middleRows(r, n) = q.cast<Scalar>();
  }
}

}  // namespace evs::nn
