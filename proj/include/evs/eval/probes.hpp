#pragma once

#include "evs/eval/gbdt.hpp"
#include "evs/eval/metrics.hpp"
#include "evs/model.hpp"

namespace evs::eval {

/// Sequence embeddings as rows (N x m) with their ids and targets (NaN when absent).
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  MatXd H;
  VecXd targets;

  Eigen::Index size() const { return H.rows(); }
};

/// Encoder output at the last event of every sequence; for MLEM checkpoints this is the
/// generative encoder and for contrastive ones the pre-projector state.
EmbeddingMatrix extract_embeddings(const Checkpoint& ckpt, const Dataset& dataset);

enum class Metric { kAuto, kMse, kAccuracy, kRocAuc };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
bool lower_is_better(Metric m);

/// MSE for regression, ROC-AUC for binary and accuracy for multiclass targets.
Metric default_metric(TargetKind kind);

struct ProbeResult {
  Metric metric = Metric::kMse;
  double value = 0.0;
};

struct Standardizer {
  VecXd mean;
  VecXd scale;

  static Standardizer fit(const MatXd& X);
  MatXd apply(const MatXd& X) const;
};

/// Ridge regression on standardized features: minimizes mean squared error + lambda |w|^2.
struct RidgeModel {
  Standardizer standardizer;
  VecXd weights;
  double intercept = 0.0;

  VecXd predict(const MatXd& X) const;
};

RidgeModel fit_ridge(const MatXd& X, const VecXd& y, double lambda = 1e-3);

/// Multinomial logistic regression on standardized features: mean cross-entropy +
/// lambda/2 |W|^2, minimized by L-BFGS.
struct LogisticModel {
  Standardizer standardizer;
  MatXd weights;  // m x K
  VecXd intercepts;

  /// N x K class logits.
  MatXd decision(const MatXd& X) const;
  std::vector<int> predict(const MatXd& X) const;
};

struct LbfgsConfig {
  int max_iter = 500;
  int history = 10;
  double tolerance = 1e-8;
};

LogisticModel fit_logistic(const MatXd& X, std::span<const int> labels, int num_classes, double lambda = 1e-3,
                           const LbfgsConfig& cfg = {});

/// Fits on `train` and scores `test`. Classification targets are class indices.
ProbeResult linear_probe(const EmbeddingMatrix& train, const EmbeddingMatrix& test, TargetKind kind,
                         int num_classes, Metric metric = Metric::kAuto, double lambda = 1e-3);

ProbeResult nonlinear_probe(const EmbeddingMatrix& train, const EmbeddingMatrix& test, TargetKind kind,
                            int num_classes, Metric metric = Metric::kAuto, const GbdtConfig& cfg = {});

enum class TppTarget { kAuto, kCategory, kTime };

/// Next-event probe: the embedding of the first n-1 events linearly predicts the n-th event's
/// first categorical feature (accuracy) or its time delta (MSE, with the delta z-scored by the
/// training prefixes' statistics). kAuto picks the category when the schema has one.
ProbeResult tpp_probe(const Checkpoint& ckpt, const Dataset& train, const Dataset& test,
                      TppTarget target = TppTarget::kAuto, double lambda = 1e-3);

}  // namespace evs::eval
