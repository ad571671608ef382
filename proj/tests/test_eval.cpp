#include "grad_suites.hpp"
#include "test_util.hpp"

#include "evs/eval/geometry.hpp"
#include "evs/eval/metrics.hpp"
#include "evs/eval/perturb.hpp"
#include "evs/eval/probes.hpp"
#include "evs/eval/report.hpp"
#include "evs/synthgen.hpp"
#include "evs/training.hpp"

#include <doctest.h>

#include <map>
#include <numbers>

using namespace evs;
using namespace evs::eval;
using namespace evs::testing;

namespace {

MatXd normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n;
  MatXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

MatXd uniform_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::uniform_real_distribution<double> u;
  MatXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

MatXd random_rotation(Eigen::Index d, Rng& rng) {
  Eigen::HouseholderQR<MatXd> qr(normal_matrix(d, d, rng));
  return qr.householderQ();
}

/// Singular-value route, independent of the Gram-matrix route used by the library.
double anisotropy_oracle(const MatXd& X, bool center) {
  MatXd Y = X;
  if (center) Y.rowwise() -= X.colwise().mean();
  const VecXd s = Eigen::JacobiSVD<MatXd>(Y).singularValues();
  return s(0) * s(0) / s.squaredNorm();
}

EmbeddingMatrix embeddings(const MatXd& H, const VecXd& y) {
  EmbeddingMatrix e;
  e.H = H;
  e.targets = y;
  for (Eigen::Index i = 0; i < H.rows(); ++i) e.ids.push_back(std::to_string(i));
  return e;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder.hidden_size = 12;
  m.encoder.feature_embed_dim = 4;
  m.decoder.layers = 1;
  m.decoder.model_dim = 8;
  m.decoder.ff_dim = 16;
  m.projector_dim = 8;
  return m;
}

const Dataset& pendulum() {
  static const Dataset d = truncate_recent(generate_pendulum_dataset(200, 8), 40);
  return d;
}

}  // namespace

TEST_CASE("anisotropy closed forms") {
  Rng rng(1);
  const VecXd u = normal_matrix(30, 1, rng), v = normal_matrix(1, 5, rng).transpose();
  CHECK(anisotropy(u * v.transpose(), false) == doctest::Approx(1.0).epsilon(1e-12));
  const MatXd Q = random_rotation(6, rng);
  CHECK(anisotropy(Q, false) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  MatXd rows(3, 2);
  rows << 1, 0, 0, 1, 1, 1;
  CHECK(anisotropy(rows, false) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS(anisotropy(MatXd::Ones(4, 3)));
  CHECK_THROWS(anisotropy(MatXd::Ones(1, 3), false));
}

TEST_CASE("anisotropy agrees with a singular-value oracle") {
  Rng rng(2);
  for (auto [n, d] : std::vector<std::pair<int, int>>{{50, 8}, {8, 50}, {200, 3}, {12, 12}}) {
    MatXd X = normal_matrix(n, d, rng);
    X.col(0) *= 4.0;
    for (bool center : {true, false})
      CHECK(anisotropy(X, center) == doctest::Approx(anisotropy_oracle(X, center)).epsilon(1e-10));
  }
}

TEST_CASE("anisotropy is invariant to rotation and uniform scaling") {
  Rng rng(3);
  MatXd X = normal_matrix(100, 7, rng);
  X.col(2) *= 3.0;
  const double base = anisotropy(X);
  CHECK(anisotropy(X * random_rotation(7, rng)) == doctest::Approx(base).epsilon(1e-10));
  CHECK(anisotropy(X * 17.5) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("TwoNN recovers the dimension of uniform manifolds") {
  Rng rng(4);
  {
    const MatXd seg = uniform_matrix(5000, 1, rng);
    const double d = intrinsic_dimension(seg).dimension;
    CHECK(d >= 0.8);
    CHECK(d <= 1.2);
  }
  {
    const MatXd sq = uniform_matrix(5000, 2, rng);
    const double d = intrinsic_dimension(sq).dimension;
    CHECK(d >= 1.7);
    CHECK(d <= 2.3);
  }
  {
    // A 2-D sheet embedded in 5-D space.
    const MatXd sheet = uniform_matrix(3000, 2, rng) * normal_matrix(2, 5, rng);
    const double d = intrinsic_dimension(sheet).dimension;
    CHECK(d >= 1.7);
    CHECK(d <= 2.3);
  }
}

TEST_CASE("TwoNN is invariant to scaling and rigid motion and drops duplicates") {
  Rng rng(5);
  const MatXd X = uniform_matrix(800, 3, rng);
  const TwoNNResult base = intrinsic_dimension(X);
  CHECK(base.points_used == 800);
  MatXd moved = (X * random_rotation(3, rng)) * 3.25;
  moved.rowwise() += Eigen::RowVector3d(1.0, -2.0, 5.0);
  CHECK(intrinsic_dimension(moved).dimension == doctest::Approx(base.dimension).epsilon(1e-8));

  MatXd dup(1000, 3);
  dup << X, X.topRows(200);
  const TwoNNResult d = intrinsic_dimension(dup);
  CHECK(d.points_used == 800);
  CHECK(d.dimension == doctest::Approx(base.dimension).epsilon(1e-12));

  CHECK_THROWS(intrinsic_dimension(uniform_matrix(9, 2, rng)));
  CHECK_THROWS(intrinsic_dimension(MatXd::Ones(50, 2)));
}

TEST_CASE("ROC-AUC by ranks") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(roc_auc(s, y) == doctest::Approx(0.75));
  const std::vector<double> tied(4, 1.0);
  CHECK(roc_auc(tied, y) == doctest::Approx(0.5));
  CHECK_THROWS(roc_auc(s, std::vector<int>{1, 1, 1, 1}));
}

TEST_CASE("ROC-AUC is invariant to strictly monotone transforms of the scores") {
  Rng rng(6);
  std::normal_distribution<double> n;
  std::vector<double> s, e, c;
  std::vector<int> y;
  for (int i = 0; i < 300; ++i) {
    y.push_back(i % 3 == 0);
    s.push_back(n(rng) + y.back());
    e.push_back(std::exp(s.back()));
    c.push_back(std::pow(s.back(), 3) * 2.0 - 7.0);
  }
  CHECK(roc_auc(e, y) == roc_auc(s, y));
  CHECK(roc_auc(c, y) == roc_auc(s, y));
}

TEST_CASE("linear probe on separable classes is perfect") {
  Rng rng(7);
  MatXd H = normal_matrix(400, 4, rng);
  VecXd y(400);
  for (Eigen::Index i = 0; i < 400; ++i) {
    y(i) = i % 2;
    H(i, 0) += y(i) > 0 ? 5.0 : -5.0;
  }
  const auto tr = embeddings(H.topRows(300), y.head(300)), te = embeddings(H.bottomRows(100), y.tail(100));
  CHECK(linear_probe(tr, te, TargetKind::kBinary, 2).value == 1.0);
  const ProbeResult acc = linear_probe(tr, te, TargetKind::kBinary, 2, Metric::kAccuracy);
  CHECK(acc.metric == Metric::kAccuracy);
  CHECK(acc.value == 1.0);
}

TEST_CASE("linear probe on labels independent of the embeddings is at chance") {
  Rng rng(8);
  const MatXd H = normal_matrix(4000, 8, rng);
  VecXd y(4000);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index i = 0; i < 4000; ++i) y(i) = coin(rng);
  const auto tr = embeddings(H.topRows(2000), y.head(2000)), te = embeddings(H.bottomRows(2000), y.tail(2000));
  const double auc = linear_probe(tr, te, TargetKind::kBinary, 2).value;
  CHECK(auc >= 0.45);
  CHECK(auc <= 0.55);
}

TEST_CASE("regressing on an embedding coordinate is exact") {
  Rng rng(9);
  const MatXd H = normal_matrix(500, 6, rng);
  const VecXd y = H.col(0);
  const auto tr = embeddings(H.topRows(400), y.head(400)), te = embeddings(H.bottomRows(100), y.tail(100));
  CHECK(linear_probe(tr, te, TargetKind::kRegression, 0, Metric::kAuto, 1e-10).value < 1e-12);
  CHECK(linear_probe(tr, te, TargetKind::kRegression, 0).value < 1e-5);
}

TEST_CASE("ridge solution matches an augmented least-squares oracle") {
  Rng rng(10);
  const MatXd X = normal_matrix(60, 5, rng) * 3.0;
  const VecXd y = normal_matrix(60, 1, rng);
  const double lambda = 0.2;
  const RidgeModel m = fit_ridge(X, y, lambda);
  // Standardize independently, then solve [Z; sqrt(n lambda) I] w = [y - mean; 0] by QR.
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const MatXd C = X.rowwise() - mu;
  const Eigen::RowVectorXd sd = (C.array().square().colwise().sum() / 60.0).sqrt();
  const MatXd Z = C.array().rowwise() / sd.array();
  MatXd A(65, 5);
  A << Z, std::sqrt(60.0 * lambda) * MatXd::Identity(5, 5);
  VecXd b = VecXd::Zero(65);
  b.head(60) = y.array() - y.mean();
  const VecXd w = A.colPivHouseholderQr().solve(b);
  const VecXd expected = (Z * w).array() + y.mean();
  CHECK((m.predict(X) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("logistic regression reaches a stationary point of its objective") {
  Rng rng(11);
  const MatXd X = normal_matrix(300, 3, rng);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < 300; ++i) labels.push_back(X(i, 0) + 0.5 * X(i, 1) > 0 ? (X(i, 2) > 0 ? 2 : 1) : 0);
  const double lambda = 1e-2;
  const LogisticModel m = fit_logistic(X, labels, 3, lambda);
  const MatXd Z = m.standardizer.apply(X);
  const MatXd logits = m.decision(X);
  MatXd P = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
  P.array().colwise() /= P.rowwise().sum().array();
  for (Eigen::Index i = 0; i < 300; ++i) P(i, labels[i]) -= 1.0;
  const MatXd gW = Z.transpose() * P / 300.0 + lambda * m.weights;
  const VecXd gb = P.colwise().sum().transpose() / 300.0;
  CHECK(gW.cwiseAbs().maxCoeff() < 1e-5);
  CHECK(gb.cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("probes fit on training rows only") {
  Rng rng(12);
  const MatXd H = normal_matrix(300, 4, rng);
  const VecXd y = H.col(1) * 2.0 + normal_matrix(300, 1, rng) * 0.3;
  const auto tr = embeddings(H.topRows(200), y.head(200));
  auto te = embeddings(H.bottomRows(100), y.tail(100));
  const VecXd pred = fit_ridge(tr.H, tr.targets).predict(te.H);
  for (int trial = 0; trial < 3; ++trial) {
    te.targets = normal_matrix(100, 1, rng);
    const double expected = mean_squared_error(std::span<const double>(pred.data(), 100),
                                               std::span<const double>(te.targets.data(), 100));
    CHECK(linear_probe(tr, te, TargetKind::kRegression, 0).value == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("single-class training targets are rejected") {
  Rng rng(13);
  const MatXd H = normal_matrix(40, 3, rng);
  const auto tr = embeddings(H, VecXd::Zero(40));
  CHECK_THROWS(linear_probe(tr, tr, TargetKind::kBinary, 2));
  CHECK_THROWS(nonlinear_probe(tr, tr, TargetKind::kBinary, 2));
}

TEST_CASE("boosted trees solve XOR where a linear probe cannot") {
  Rng rng(14);
  const MatXd H = uniform_matrix(2000, 2, rng).array() * 2.0 - 1.0;
  VecXd y(2000);
  for (Eigen::Index i = 0; i < 2000; ++i) y(i) = (H(i, 0) > 0) != (H(i, 1) > 0);
  const auto tr = embeddings(H.topRows(1500), y.head(1500)), te = embeddings(H.bottomRows(500), y.tail(500));
  const double tree_acc = nonlinear_probe(tr, te, TargetKind::kBinary, 2, Metric::kAccuracy).value;
  const double lin_acc = linear_probe(tr, te, TargetKind::kBinary, 2, Metric::kAccuracy).value;
  CHECK(tree_acc > 0.95);
  // The best half-plane on uniform XOR scores 0.625.
  CHECK(lin_acc <= 0.7);
  CHECK(nonlinear_probe(tr, te, TargetKind::kBinary, 2, Metric::kAccuracy).value == tree_acc);
}

TEST_CASE("boosted trees predict a constant target exactly") {
  Rng rng(15);
  const MatXd H = normal_matrix(200, 3, rng);
  const Gbdt g = Gbdt::fit_regression(H, VecXd::Constant(200, 2.5));
  CHECK((g.decision(H).array() - 2.5).abs().maxCoeff() < 1e-12);
  const auto e = embeddings(H, VecXd::Constant(200, 2.5));
  CHECK(nonlinear_probe(e, e, TargetKind::kRegression, 0).value < 1e-20);
  GbdtConfig too_deep;
  too_deep.max_depth = 7;
  CHECK_THROWS(Gbdt::fit_regression(H, VecXd::Zero(200), too_deep));
  GbdtConfig too_many;
  too_many.trees = 201;
  CHECK_THROWS(Gbdt::fit_regression(H, VecXd::Zero(200), too_many));
}

TEST_CASE("boosted regression fits a smooth non-linear target") {
  Rng rng(16);
  const MatXd H = uniform_matrix(3000, 2, rng).array() * 6.0 - 3.0;
  VecXd y(3000);
  for (Eigen::Index i = 0; i < 3000; ++i) y(i) = std::sin(H(i, 0)) * H(i, 1);
  const auto tr = embeddings(H.topRows(2500), y.head(2500)), te = embeddings(H.bottomRows(500), y.tail(500));
  const double var = (te.targets.array() - te.targets.mean()).square().mean();
  CHECK(nonlinear_probe(tr, te, TargetKind::kRegression, 0).value < 0.1 * var);
}

TEST_CASE("embedding extraction") {
  const Dataset& d = pendulum();
  const Checkpoint c = random_encoder(d.schema, tiny_model(), 3);
  const EmbeddingMatrix a = extract_embeddings(c, d), b = extract_embeddings(c, d);
  CHECK(a.size() == static_cast<Eigen::Index>(d.size()));
  CHECK(a.H.cols() == 12);
  CHECK(a.H == b.H);
  CHECK(a.ids.front() == d.sequences.front().id);
  CHECK(a.targets(0) == *d.sequences.front().target);
  CHECK(a.H.allFinite());

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 50;
  const Checkpoint con = pretrain_contrastive(d, tiny_model(), tc, 1);
  CHECK(extract_embeddings(con, d).H.cols() == 12);
  const Checkpoint ml = pretrain_mlem(d, con, tiny_model(), tc, 2);
  const auto gen_model = model_from_checkpoint<float>(ml);
  const MatXf expect = encode_sequences(gen_model, std::span<const EventSequence>(d.sequences));
  CHECK((extract_embeddings(ml, d).H - expect.transpose().cast<double>()).cwiseAbs().maxCoeff() == 0.0);

  Dataset other = d;
  other.schema.numeric[0].name = "renamed";
  CHECK_THROWS_AS(extract_embeddings(c, other), DataError);
}

TEST_CASE("next-event probes on degenerate data") {
  const Checkpoint c0 = random_encoder(pendulum().schema, tiny_model(), 4);
  SUBCASE("constant time deltas are predicted exactly") {
    Dataset d;
    d.schema = pendulum().schema;
    Rng rng(17);
    for (int i = 0; i < 120; ++i) {
      EventSequence s = random_sequence(d.schema, uniform_int(rng, 2, 9), rng, "k" + std::to_string(i));
      for (std::size_t j = 0; j < s.size(); ++j) s.times[j] = 0.5 * static_cast<double>(j);
      d.sequences.push_back(s);
    }
    const DatasetSplit sp = split(d, {0.7, 0.0, 0.3}, 1);
    CHECK(tpp_probe(c0, sp.train, sp.test, TppTarget::kTime).value < 1e-12);
  }
  SUBCASE("a single category is always right") {
    Dataset d;
    d.schema.categorical.push_back(categorical_feature("only", 3));
    Rng rng(18);
    for (int i = 0; i < 80; ++i) {
      EventSequence s = random_sequence(d.schema, uniform_int(rng, 2, 9), rng, "q" + std::to_string(i));
      std::fill(s.cat[0].begin(), s.cat[0].end(), 2);
      d.sequences.push_back(s);
    }
    const Checkpoint c = random_encoder(d.schema, tiny_model(), 4);
    const DatasetSplit sp = split(d, {0.7, 0.0, 0.3}, 1);
    const ProbeResult r = tpp_probe(c, sp.train, sp.test);
    CHECK(r.metric == Metric::kAccuracy);
    CHECK(r.value == 1.0);
  }
  SUBCASE("all-singleton datasets are rejected") {
    Dataset d = truncate_recent(pendulum(), 1);
    CHECK_THROWS_AS(tpp_probe(c0, d, d), DataError);
  }
}

TEST_CASE("shuffling permutes whole events") {
  const Dataset& d = pendulum();
  Rng a(19), b(19);
  const Dataset s1 = perturb_shuffle(d, a), s2 = perturb_shuffle(d, b);
  bool any_moved = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto &orig = d.sequences[i], &sh = s1.sequences[i];
    CHECK(sh.times == s2.sequences[i].times);
    CHECK(sh.target == orig.target);
    std::vector<std::tuple<double, double, double>> x, y;
    for (std::size_t j = 0; j < orig.size(); ++j) {
      x.emplace_back(orig.times[j], orig.num[0][j], orig.num[1][j]);
      y.emplace_back(sh.times[j], sh.num[0][j], sh.num[1][j]);
    }
    any_moved |= x != y;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    CHECK(x == y);
  }
  CHECK(any_moved);
  EventSequence one = d.sequences[0];
  one = truncate_recent(Dataset{d.schema, {one}, {}}, 1).sequences[0];
  Rng r(1);
  CHECK(shuffle_events(one, r).times == one.times);
}

TEST_CASE("event dropout keeps the expected fraction") {
  Dataset d;
  d.schema = pendulum().schema;
  Rng gen(20);
  for (int i = 0; i < 1000; ++i) d.sequences.push_back(random_sequence(d.schema, 50, gen, std::to_string(i)));
  Rng r0(1);
  const Dataset same = perturb_dropout(d, 0.0, r0);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(same.sequences[i].times == d.sequences[i].times);
  for (double p : kDropoutGrid) {
    Rng r(2);
    const Dataset out = perturb_dropout(d, p, r);
    double kept = 0.0;
    for (const auto& s : out.sequences) {
      kept += static_cast<double>(s.size());
      CHECK(s.size() >= 1);
      for (std::size_t j = 1; j < s.size(); ++j) CHECK(s.times[j] > s.times[j - 1]);
    }
    const double frac = kept / (1000.0 * 50.0);
    CHECK(std::abs(frac - (1.0 - p)) < 0.03);
  }
  CHECK(kDropoutGrid == std::vector<double>{0.1, 0.3, 0.5, 0.7});
  Rng r(3);
  CHECK_THROWS(perturb_dropout(d, 1.0, r));
  CHECK_THROWS(perturb_dropout(d, -0.1, r));
  const EventSequence single = truncate_recent(Dataset{d.schema, {d.sequences[0]}, {}}, 1).sequences[0];
  CHECK(dropout_events(single, 0.9, r).size() == 1);
}

TEST_CASE("percent change is signed by metric direction") {
  CHECK(percent_change(2.0, 2.0, Metric::kMse) == 0.0);
  CHECK(percent_change(1.0, 1.5, Metric::kMse) == doctest::Approx(-50.0));
  CHECK(percent_change(1.0, 0.5, Metric::kMse) == doctest::Approx(50.0));
  CHECK(percent_change(0.8, 0.6, Metric::kRocAuc) == doctest::Approx(-25.0));
  const RobustnessRow row =
      summarize_robustness("m", Perturbation{Perturbation::Kind::kDropout, 0.3}, Metric::kMse, {1.0, 1.0}, {1.2, 1.4});
  CHECK(row.mean_change == doctest::Approx(-30.0));
  CHECK(row.std_change == doctest::Approx(std::sqrt(200.0)));
  CHECK(row.p == 0.3);
  CHECK(row.perturbation == "dropout");
}

TEST_CASE("robustness report rows cover the grid with a zero baseline") {
  const DatasetSplit sp = split(pendulum(), {0.7, 0.0, 0.3}, 2);
  std::vector<std::vector<Checkpoint>> ckpts(1);
  for (std::uint64_t s : {0, 1}) ckpts[0].push_back(random_encoder(sp.train.schema, tiny_model(), s));
  const auto rows = robustness_report(ckpts, sp.train, sp.test, {0.1, 0.5});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].perturbation == "none");
  CHECK(rows[0].mean_change == 0.0);
  CHECK(rows[0].std_change == 0.0);
  CHECK(rows[1].perturbation == "shuffle");
  CHECK(rows[2].p == 0.1);
  CHECK(rows[3].p == 0.5);
  for (const auto& r : rows) {
    CHECK(r.method == "random");
    CHECK(r.baseline.size() == 2);
    CHECK(r.perturbed.size() == 2);
  }
  const ProbeResult a = perturbed_linear_probe(ckpts[0][0], sp.train, sp.test, {Perturbation::Kind::kShuffle, 0}, 5);
  const ProbeResult b = perturbed_linear_probe(ckpts[0][0], sp.train, sp.test, {Perturbation::Kind::kShuffle, 0}, 5);
  CHECK(a.value == b.value);
}

TEST_CASE("metrics reports round-trip and summarize over seeds") {
  TempDir dir;
  MetricsReport rep;
  rep.add({"r1", "mlem", "pendulum", 0, "linear_probe_mse", 0.5});
  rep.add({"r1", "mlem", "pendulum", 1, "linear_probe_mse", 0.7});
  rep.add({"r1", "mlem", "pendulum", 2, "linear_probe_mse", 0.9});
  rep.add({"r1", "contrastive", "pendulum", 0, "linear_probe_mse", 0.1 + 1e-17});
  rep.write_csv(dir.file("m.csv"));
  const MetricsReport back = MetricsReport::read_csv(dir.file("m.csv"));
  REQUIRE(back.records().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.records()[i].value == rep.records()[i].value);
    CHECK(back.records()[i].method == rep.records()[i].method);
    CHECK(back.records()[i].seed == rep.records()[i].seed);
  }
  const auto sum = rep.summarize();
  REQUIRE(sum.size() == 2);
  CHECK(sum[0].method == "contrastive");
  CHECK(sum[1].mean == doctest::Approx(0.7));
  CHECK(sum[1].std == doctest::Approx(0.2));
  CHECK(sum[1].seeds == 3);
  CHECK(rep.table().find("mlem") != std::string::npos);

  MetricsReport other;
  other.add({"r2", "naive", "pendulum", 0, "linear_probe_mse", 0.3});
  rep.merge(other);
  CHECK(rep.records().size() == 5);
}

TEST_CASE("config hashes are stable hex strings") {
  const nlohmann::json a = {{"x", 1}, {"y", {1, 2}}};
  const std::string h = config_hash(a);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(nlohmann::json::parse(a.dump())) == h);
  CHECK(config_hash({{"x", 2}, {"y", {1, 2}}}) != h);
}

TEST_CASE("embedding exports carry the config hash") {
  TempDir dir;
  Rng rng(21);
  const EmbeddingMatrix e = embeddings(normal_matrix(5, 3, rng), VecXd::LinSpaced(5, 0, 4));
  write_embeddings_csv(dir.file("e.csv"), e, "abc123");
  const std::string csv = read_file(dir.file("e.csv"));
  CHECK(csv.rfind("# config_hash=abc123\nid,target,h_0,h_1,h_2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  write_embeddings_binary(dir.file("e.f32"), e, "abc123");
  const std::string raw = read_file(dir.file("e.f32"));
  REQUIRE(raw.size() == 15 * sizeof(float));
  float v;
  std::memcpy(&v, raw.data() + sizeof(float) * 4, sizeof(float));  // row 1, col 1
  CHECK(v == static_cast<float>(e.H(1, 1)));
  const auto side = nlohmann::json::parse(read_file(dir.file("e.f32.json")));
  CHECK(side.at("rows") == 5);
  CHECK(side.at("cols") == 3);
  CHECK(side.at("config_hash") == "abc123");
  CHECK(side.at("ids").size() == 5);
}
