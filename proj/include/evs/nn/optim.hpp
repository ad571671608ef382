#pragma once

#include "evs/nn/parameters.hpp"

#include <vector>

namespace evs::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Moment buffers are keyed by parameter order in the
/// store, so the store must not grow after the first step.
template <typename Scalar>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore<Scalar>& store) {
    if (m_.empty()) {
      for (const auto& p : store) {
        m_.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    if (m_.size() != store.size()) throw std::logic_error("adamw: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    const auto step = static_cast<Scalar>(cfg_.lr / bc1);
    const auto decay = static_cast<Scalar>(1.0 - cfg_.lr * cfg_.weight_decay);
    const auto eps = static_cast<Scalar>(cfg_.eps);
    const auto inv_bc2 = static_cast<Scalar>(1.0 / bc2);
    std::size_t i = 0;
    for (auto& p : store) {
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
        throw std::invalid_argument("adamw: shape mismatch for '" + p.name + "'");
      auto& m = m_[i];
      auto& v = v_[i];
      m = b1 * m + (Scalar(1) - b1) * p.grad;
      v.array() = b2 * v.array() + (Scalar(1) - b2) * p.grad.array().square();
      p.value *= decay;
      p.value.array() -= step * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
      ++i;
    }
  }

  long long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Mat<Scalar>> m_, v_;
  long long t_ = 0;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store) sq += static_cast<double>(p.grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto s = static_cast<Scalar>(max_norm / norm);
    for (auto& p : store) p.grad *= s;
  }
  return norm;
}

}  // namespace evs::nn
