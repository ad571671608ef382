#pragma once

#include "evs/types.hpp"

#include <span>

namespace evs::eval {

struct GbdtConfig {
  int max_depth = 6;
  int trees = 200;
  double learning_rate = 0.1;
  int bins = 64;
  int min_samples_leaf = 5;
  double l2 = 1.0;
};

/// Histogram gradient boosting. Regression uses squared error with one tree per round;
/// classification uses softmax cross-entropy with one tree per class and round.
class Gbdt {
 public:
  static Gbdt fit_regression(const MatXd& X, const VecXd& y, const GbdtConfig& cfg = {});
  static Gbdt fit_classification(const MatXd& X, std::span<const int> labels, int num_classes,
                                 const GbdtConfig& cfg = {});

  /// N x outputs raw scores (regression: predictions; classification: class logits).
  MatXd decision(const MatXd& X) const;
  int outputs() const { return outputs_; }
  std::size_t num_trees() const { return trees_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  static Tree grow(const std::vector<std::vector<double>>& edges,
                   const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& binned, const VecXd& g,
                   const VecXd& h, const GbdtConfig& cfg);
  static double eval_tree(const Tree& t, const double* row, Eigen::Index stride);

  int outputs_ = 1;
  double learning_rate_ = 0.1;
  VecXd base_;
  std::vector<Tree> trees_;  // round-major, outputs_ trees per round
};

}  // namespace evs::eval
