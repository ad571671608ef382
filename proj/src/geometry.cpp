#include "evs/eval/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace evs::eval {

double anisotropy(const MatXd& X, bool center) {
  if (X.rows() < 2) throw std::invalid_argument("anisotropy: need at least two rows");
  if (!X.allFinite()) throw std::invalid_argument("anisotropy: non-finite entries");
  MatXd Z = X;
  if (center) Z.rowwise() -= X.colwise().mean();
  // Squared singular values of Z are the eigenvalues of the smaller Gram matrix.
  const MatXd gram = Z.rows() < Z.cols() ? MatXd(Z * Z.transpose()) : MatXd(Z.transpose() * Z);
  const VecXd ev = Eigen::SelfAdjointEigenSolver<MatXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().cwiseMax(0.0);
  const double total = ev.sum();
  if (!(total > 0.0)) throw std::invalid_argument("anisotropy: zero matrix");
  return ev.maxCoeff() / total;
}

TwoNNResult intrinsic_dimension(const MatXd& X) {
  if (!X.allFinite()) throw std::invalid_argument("intrinsic_dimension: non-finite entries");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (i == 0 || row_less(order[i - 1], order[i])) keep.push_back(order[i]);
  const auto N = static_cast<Eigen::Index>(keep.size());
  if (N < 10) throw std::invalid_argument("intrinsic_dimension: fewer than 10 distinct points");

  MatXd P(X.cols(), N);  // points as columns
  for (Eigen::Index i = 0; i < N; ++i) P.col(i) = X.row(keep[i]).transpose();
  double log_sum = 0.0;
  VecXd d2(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    d2 = (P.colwise() - P.col(i)).colwise().squaredNorm().transpose();
    d2(i) = std::numeric_limits<double>::infinity();
    double r1 = std::numeric_limits<double>::infinity(), r2 = r1;
    for (Eigen::Index j = 0; j < N; ++j) {
      const double v = d2(j);
      if (v < r1) {
        r2 = r1;
        r1 = v;
      } else if (v < r2) {
        r2 = v;
      }
    }
    log_sum += 0.5 * std::log(r2 / r1);
  }
  if (!(log_sum > 0.0)) throw std::invalid_argument("intrinsic_dimension: degenerate neighbour distances");
  return {static_cast<double>(N) / log_sum, N};
}

}  // namespace evs::eval
