#include "evs/eval/probes.hpp"

#include "evs/training.hpp"

#include <deque>
#include <limits>
#include <set>

namespace evs::eval {

EmbeddingMatrix extract_embeddings(const Checkpoint& ckpt, const Dataset& dataset) {
  if (!(ckpt.schema == dataset.schema)) throw DataError("extract_embeddings: checkpoint schema differs from the data");
  const SequenceModel<float> model = model_from_checkpoint<float>(ckpt);
  EmbeddingMatrix e;
  e.H = encode_sequences(model, std::span<const EventSequence>(dataset.sequences)).transpose().cast<double>();
  e.targets.resize(static_cast<Eigen::Index>(dataset.sequences.size()));
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const auto& s = dataset.sequences[i];
    e.ids.push_back(s.id);
    e.targets(static_cast<Eigen::Index>(i)) = s.target ? *s.target : std::numeric_limits<double>::quiet_NaN();
  }
  if (!e.H.allFinite()) throw DataError("extract_embeddings: non-finite embeddings");
  return e;
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kAuto: return "auto";
    case Metric::kMse: return "mse";
    case Metric::kAccuracy: return "accuracy";
    case Metric::kRocAuc: return "roc_auc";
  }
  return "auto";
}

Metric metric_from_string(const std::string& s) {
  for (Metric m : {Metric::kAuto, Metric::kMse, Metric::kAccuracy, Metric::kRocAuc})
    if (to_string(m) == s) return m;
  throw DataError("unknown metric '" + s + "'");
}

bool lower_is_better(Metric m) { return m == Metric::kMse; }

Metric default_metric(TargetKind kind) {
  switch (kind) {
    case TargetKind::kRegression: return Metric::kMse;
    case TargetKind::kBinary: return Metric::kRocAuc;
    case TargetKind::kMulticlass: return Metric::kAccuracy;
    case TargetKind::kNone: break;
  }
  throw DataError("dataset has no target to probe");
}

Standardizer Standardizer::fit(const MatXd& X) {
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  s.scale = ((X.rowwise() - s.mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
  return s;
}

MatXd Standardizer::apply(const MatXd& X) const {
  return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

VecXd RidgeModel::predict(const MatXd& X) const {
  return (standardizer.apply(X) * weights).array() + intercept;
}

RidgeModel fit_ridge(const MatXd& X, const VecXd& y, double lambda) {
  if (X.rows() == 0 || X.rows() != y.size()) throw std::invalid_argument("ridge: empty input or size mismatch");
  RidgeModel m;
  m.standardizer = Standardizer::fit(X);
  const MatXd Z = m.standardizer.apply(X);
  const auto n = static_cast<double>(X.rows());
  m.intercept = y.mean();
  MatXd A = Z.transpose() * Z / n;
  A.diagonal().array() += lambda;
  m.weights = A.ldlt().solve(Z.transpose() * (y.array() - m.intercept).matrix() / n);
  return m;
}

MatXd LogisticModel::decision(const MatXd& X) const {
  return (standardizer.apply(X) * weights).rowwise() + intercepts.transpose();
}

std::vector<int> LogisticModel::predict(const MatXd& X) const {
  const MatXd d = decision(X);
  std::vector<int> out(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index k = 0;
    d.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

namespace {

/// L-BFGS with Armijo backtracking; `f` returns the objective and writes the gradient.
VecXd lbfgs(const std::function<double(const VecXd&, VecXd&)>& f, VecXd x, const LbfgsConfig& cfg) {
  VecXd g(x.size()), g_new(x.size());
  double fx = f(x, g);
  std::deque<VecXd> S, Y;
  std::deque<double> rho;
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < cfg.tolerance) break;
    VecXd q = g;
    std::vector<double> a(S.size());
    for (std::size_t k = S.size(); k-- > 0;) {
      a[k] = rho[k] * S[k].dot(q);
      q -= a[k] * Y[k];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t k = 0; k < S.size(); ++k) q += (a[k] - rho[k] * Y[k].dot(q)) * S[k];
    VecXd d = -q;
    double slope = g.dot(d);
    if (slope >= 0) {
      d = -g;
      slope = -g.squaredNorm();
      S.clear();
      Y.clear();
      rho.clear();
    }
    double step = 1.0;
    VecXd x_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const VecXd s = x_new - x, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > cfg.history) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    const double rel = std::abs(fx - f_new) / std::max({std::abs(fx), std::abs(f_new), 1.0});
    x = std::move(x_new);
    g = g_new;
    fx = f_new;
    if (rel < 1e-12) break;
  }
  return x;
}

}  // namespace

LogisticModel fit_logistic(const MatXd& X, std::span<const int> labels, int K, double lambda,
                           const LbfgsConfig& cfg) {
  if (X.rows() == 0 || X.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("logistic: empty input or size mismatch");
  if (K < 2) throw std::invalid_argument("logistic: need at least two classes");
  for (int y : labels)
    if (y < 0 || y >= K) throw std::invalid_argument("logistic: label out of range");
  LogisticModel m;
  m.standardizer = Standardizer::fit(X);
  const MatXd Z = m.standardizer.apply(X);
  const Eigen::Index N = Z.rows(), D = Z.cols();
  const auto n = static_cast<double>(N);
  MatXd onehot = MatXd::Zero(N, K);
  for (Eigen::Index i = 0; i < N; ++i) onehot(i, labels[i]) = 1.0;

  auto objective = [&](const VecXd& theta, VecXd& grad) {
    const Eigen::Map<const MatXd> W(theta.data(), D, K);
    const Eigen::Map<const VecXd> b(theta.data() + D * K, K);
    MatXd logits = (Z * W).rowwise() + b.transpose();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp();
      const double s = logits.row(i).sum();
      int y = labels[i];
      loss += std::log(s) - std::log(logits(i, y));
      logits.row(i) /= s;
    }
    logits -= onehot;
    grad.resize(theta.size());
    Eigen::Map<MatXd>(grad.data(), D, K) = Z.transpose() * logits / n + lambda * W;
    Eigen::Map<VecXd>(grad.data() + D * K, K) = logits.colwise().sum().transpose() / n;
    return loss / n + 0.5 * lambda * W.squaredNorm();
  };
  const VecXd theta = lbfgs(objective, VecXd::Zero(D * K + K), cfg);
  m.weights = Eigen::Map<const MatXd>(theta.data(), D, K);
  m.intercepts = theta.tail(K);
  return m;
}

namespace {

std::vector<int> class_labels(const VecXd& targets, int K) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(targets.size()));
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    if (!std::isfinite(targets(i))) throw DataError("probe: missing target");
    const auto y = static_cast<int>(std::llround(targets(i)));
    if (y < 0 || y >= K) throw DataError("probe: class target out of range");
    out.push_back(y);
  }
  return out;
}

int count_classes(const VecXd& targets, TargetKind kind, int num_classes) {
  if (kind == TargetKind::kBinary) return 2;
  if (num_classes >= 2) return num_classes;
  return static_cast<int>(std::llround(targets.maxCoeff())) + 1;
}

void require_regression_targets(const VecXd& y) {
  if (!y.allFinite()) throw DataError("probe: missing target");
}

double score_classes(const MatXd& decision, std::span<const int> truth, Metric metric) {
  if (metric == Metric::kRocAuc) {
    if (decision.cols() != 2) throw DataError("probe: ROC-AUC needs a binary target");
    std::vector<double> s(static_cast<std::size_t>(decision.rows()));
    for (Eigen::Index i = 0; i < decision.rows(); ++i) s[i] = decision(i, 1) - decision(i, 0);
    return roc_auc(s, truth);
  }
  if (metric == Metric::kAccuracy) {
    std::vector<int> pred(static_cast<std::size_t>(decision.rows()));
    for (Eigen::Index i = 0; i < decision.rows(); ++i) {
      Eigen::Index k = 0;
      decision.row(i).maxCoeff(&k);
      pred[i] = static_cast<int>(k);
    }
    return accuracy(pred, truth);
  }
  throw DataError("probe: metric '" + to_string(metric) + "' does not apply to classification");
}

void require_two_classes(std::span<const int> labels) {
  if (std::set<int>(labels.begin(), labels.end()).size() < 2)
    throw DataError("probe: training targets contain a single class");
}

void check_shapes(const EmbeddingMatrix& train, const EmbeddingMatrix& test) {
  if (train.size() == 0 || test.size() == 0) throw DataError("probe: empty embedding matrix");
  if (train.H.cols() != test.H.cols()) throw DataError("probe: embedding widths differ");
}

}  // namespace

ProbeResult linear_probe(const EmbeddingMatrix& train, const EmbeddingMatrix& test, TargetKind kind,
                         int num_classes, Metric metric, double lambda) {
  check_shapes(train, test);
  if (metric == Metric::kAuto) metric = default_metric(kind);
  ProbeResult r{metric, 0.0};
  if (kind == TargetKind::kRegression) {
    if (metric != Metric::kMse) throw DataError("probe: regression targets are scored by MSE");
    require_regression_targets(train.targets);
    require_regression_targets(test.targets);
    const VecXd pred = fit_ridge(train.H, train.targets, lambda).predict(test.H);
    r.value = mean_squared_error(std::span<const double>(pred.data(), pred.size()),
                                 std::span<const double>(test.targets.data(), test.targets.size()));
    return r;
  }
  const int K = count_classes(train.targets, kind, num_classes);
  const auto ytr = class_labels(train.targets, K), yte = class_labels(test.targets, K);
  require_two_classes(ytr);
  const LogisticModel m = fit_logistic(train.H, ytr, K, lambda);
  r.value = score_classes(m.decision(test.H), yte, metric);
  return r;
}

ProbeResult nonlinear_probe(const EmbeddingMatrix& train, const EmbeddingMatrix& test, TargetKind kind,
                            int num_classes, Metric metric, const GbdtConfig& cfg) {
  check_shapes(train, test);
  if (metric == Metric::kAuto) metric = default_metric(kind);
  ProbeResult r{metric, 0.0};
  if (kind == TargetKind::kRegression) {
    if (metric != Metric::kMse) throw DataError("probe: regression targets are scored by MSE");
    require_regression_targets(train.targets);
    require_regression_targets(test.targets);
    const VecXd pred = Gbdt::fit_regression(train.H, train.targets, cfg).decision(test.H).col(0);
    r.value = mean_squared_error(std::span<const double>(pred.data(), pred.size()),
                                 std::span<const double>(test.targets.data(), test.targets.size()));
    return r;
  }
  const int K = count_classes(train.targets, kind, num_classes);
  const auto ytr = class_labels(train.targets, K), yte = class_labels(test.targets, K);
  require_two_classes(ytr);
  r.value = score_classes(Gbdt::fit_classification(train.H, ytr, K, cfg).decision(test.H), yte, metric);
  return r;
}

namespace {

struct PrefixData {
  Dataset prefixes;
  std::vector<int> next_code;
  std::vector<double> next_dt;
};

PrefixData make_prefixes(const Dataset& d) {
  PrefixData p;
  p.prefixes.schema = d.schema;
  for (const auto& s : d.sequences) {
    const std::size_t n = s.size();
    if (n < 2) continue;
    EventSequence pre;
    pre.id = s.id;
    pre.times.assign(s.times.begin(), s.times.end() - 1);
    for (const auto& c : s.cat) pre.cat.emplace_back(c.begin(), c.end() - 1);
    for (const auto& x : s.num) pre.num.emplace_back(x.begin(), x.end() - 1);
    p.prefixes.sequences.push_back(std::move(pre));
    p.next_code.push_back(s.cat.empty() ? 0 : s.cat[0][n - 1]);
    p.next_dt.push_back(s.times[n - 1] - s.times[n - 2]);
  }
  return p;
}

}  // namespace

ProbeResult tpp_probe(const Checkpoint& ckpt, const Dataset& train, const Dataset& test, TppTarget target,
                      double lambda) {
  if (target == TppTarget::kAuto)
    target = train.schema.categorical.empty() ? TppTarget::kTime : TppTarget::kCategory;
  if (target == TppTarget::kCategory && train.schema.categorical.empty())
    throw DataError("tpp_probe: schema has no categorical feature");
  const PrefixData tr = make_prefixes(train), te = make_prefixes(test);
  if (tr.prefixes.sequences.empty() || te.prefixes.sequences.empty())
    throw DataError("tpp_probe: every sequence has a single event");
  const EmbeddingMatrix etr = extract_embeddings(ckpt, tr.prefixes), ete = extract_embeddings(ckpt, te.prefixes);

  if (target == TppTarget::kTime) {
    // Copies, not maps: reductions over vector storage of varying alignment change summation order.
    const VecXd ytr_raw = Eigen::Map<const VecXd>(tr.next_dt.data(), static_cast<Eigen::Index>(tr.next_dt.size()));
    const VecXd yte_raw = Eigen::Map<const VecXd>(te.next_dt.data(), static_cast<Eigen::Index>(te.next_dt.size()));
    const double mu = ytr_raw.mean();
    double sd = std::sqrt((ytr_raw.array() - mu).square().mean());
    if (!(sd > 1e-12)) sd = 1.0;
    const VecXd ytr = (ytr_raw.array() - mu) / sd, yte = (yte_raw.array() - mu) / sd;
    const VecXd pred = fit_ridge(etr.H, ytr, lambda).predict(ete.H);
    return {Metric::kMse, mean_squared_error(std::span<const double>(pred.data(), pred.size()),
                                             std::span<const double>(yte.data(), yte.size()))};
  }

  const int K = train.schema.categorical[0].vocab_size;
  const std::set<int> seen(tr.next_code.begin(), tr.next_code.end());
  std::vector<int> pred;
  if (seen.size() == 1) {
    pred.assign(te.next_code.size(), *seen.begin());
  } else {
    pred = fit_logistic(etr.H, tr.next_code, K, lambda).predict(ete.H);
  }
  return {Metric::kAccuracy, accuracy(pred, te.next_code)};
}

}  // namespace evs::eval
