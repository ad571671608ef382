#include "grad_suites.hpp"

#include "evs/synthgen.hpp"

#include <doctest.h>

using namespace evs;
using namespace evs::testing;

TEST_CASE("every differentiable block matches central differences") {
  Rng rng(42);
  for (const auto& suite : gradient_suites()) {
    GradCheck total;
    for (int k = 0; k < 20; ++k) {
      const GradCheck g = suite.run(rng);
      INFO(suite.name << " worst entry " << g.worst);
      CHECK(g.entries > 0);
      CHECK(g.max_rel < 1e-4);
      total.merge(g);
    }
    INFO(suite.name << " skipped " << total.skipped << " of " << total.entries + total.skipped);
    CHECK(total.skipped * 100 <= total.entries + total.skipped);
  }
}

TEST_CASE("embedder width is (categorical + numeric + 1) times the feature width") {
  Rng rng(0);
  nn::ParameterStore<double> store;
  FeatureSchema age;
  age.categorical.push_back(categorical_feature("mcc", 10));
  age.numeric.push_back({"amount"});
  CHECK(nn::Embedder<double>(store, "a", age, 32, rng).output_dim() == 96);
  CHECK(nn::Embedder<double>(store, "p", pendulum_schema(), 8, rng).output_dim() == 24);
  FeatureSchema empty;
  CHECK_THROWS(nn::Embedder<double>(store, "e", empty, 8, rng));
}

TEST_CASE("batched GRU equals per-sequence encodings") {
  Rng rng(1);
  const FeatureSchema s = random_schema(rng);
  ModelConfig mc;
  mc.encoder.hidden_size = 7;
  mc.encoder.feature_embed_dim = 3;
  SequenceModel<double> model(s, mc, ModelParts{}, 3);
  std::vector<EventSequence> seqs{random_sequence(s, 2, rng, "a"), random_sequence(s, 3, rng, "b")};
  const MatXd h = model.encode(pad_batch(std::span<const EventSequence>(seqs)));
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const MatXd hi = model.encode(pad_batch(std::span<const EventSequence>(&seqs[i], 1)));
    CHECK((h.col(static_cast<Eigen::Index>(i)) - hi.col(0)).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("GRU with zero parameters and zero input stays at zero") {
  Rng rng(2);
  nn::ParameterStore<double> store;
  nn::Gru<double> gru(store, "g", 3, 5, rng);
  for (auto& p : store) p.value.setZero();
  const std::vector<Eigen::Index> lengths{2, 4};
  const MatXd h = gru.forward(MatXd::Zero(3, 8), lengths);
  CHECK(h.rows() == 5);
  CHECK(h.isZero(0.0));
  CHECK_THROWS(gru.forward(MatXd::Zero(3, 8), std::vector<Eigen::Index>{0, 4}));
}

TEST_CASE("default encoder width is 512 and the orthogonal recurrent blocks are orthogonal") {
  Rng rng(3);
  SequenceModel<double> model(pendulum_schema(), ModelConfig{}, ModelParts::for_method(Method::kContrastive, pendulum_schema()), 0);
  CHECK(model.config().encoder.hidden_size == 512);
  CHECK(model.params().at("projector.1.weight").value.rows() == 256);
  const MatXd& w = model.params().at("encoder.gru.w_hh").value;
  for (int g = 0; g < 3; ++g) {
    const MatXd blk = w.middleRows(g * 512, 512);
    CHECK((blk * blk.transpose() - MatXd::Identity(512, 512)).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("padded positions do not influence the encoding or the losses") {
  Rng rng(4);
  const FeatureSchema s = random_schema(rng);
  ModelConfig mc = small_model(rng);
  SequenceModel<double> model(s, mc, ModelParts::for_method(Method::kNaive, s), 5);
  const auto seqs = random_sequences(s, 3, 5, rng);
  PaddedBatch b = pad_batch(std::span<const EventSequence>(seqs));
  typename SequenceModel<double>::EncodeCache c1, c2;
  const MatXd h1 = model.encode(b, &c1);
  typename nn::Decoder<double>::Cache d1, d2;
  const double l1 = lm_loss(model.decoder().forward(h1, c1.events, b.lengths, d1), b).total;
  for (Eigen::Index i = 0; i < b.batch_size; ++i)
    for (Eigen::Index t = b.lengths[i]; t < b.max_len; ++t) {
      b.dt(i, t) = 123.0;
      for (auto& x : b.num) x(i, t) = -77.0;
    }
  const MatXd h2 = model.encode(b, &c2);
  const double l2 = lm_loss(model.decoder().forward(h2, c2.events, b.lengths, d2), b).total;
  CHECK(h1 == h2);
  CHECK(l1 == l2);
}

TEST_CASE("decoder is causal: event j only affects predictions after j") {
  Rng rng(5);
  const FeatureSchema s = random_schema(rng);
  ModelConfig mc;
  mc.encoder.hidden_size = 6;
  mc.encoder.feature_embed_dim = 3;
  mc.decoder.model_dim = 8;
  mc.decoder.ff_dim = 8;
  mc.decoder.layers = 2;
  SequenceModel<double> model(s, mc, ModelParts::for_method(Method::kGenerative, s), 1);
  auto seq = random_sequence(s, 6, rng, "x");
  auto run = [&](const EventSequence& q) {
    const PaddedBatch b = pad_batch(std::span<const EventSequence>(&q, 1));
    typename SequenceModel<double>::EncodeCache c;
    model.encode(b, &c);
    typename nn::Decoder<double>::Cache dc;
    // Fixed memory isolates the decoder's own causality.
    return model.decoder().forward(MatXd::Ones(6, 1), c.events, b.lengths, dc);
  };
  const auto before = run(seq);
  const std::size_t j = 3;
  seq.times[j] += 0.3;
  if (!seq.num.empty()) seq.num[0][j] += 1.0;
  if (!seq.cat.empty()) seq.cat[0][j] = seq.cat[0][j] == 1 ? 2 : 1;
  const auto after = run(seq);
  for (Eigen::Index t = 0; t <= static_cast<Eigen::Index>(j); ++t) CHECK(before.values.col(t) == after.values.col(t));
  CHECK(before.values.col(j + 1) != after.values.col(j + 1));
}

TEST_CASE("single-event sequence produces exactly one prediction step") {
  Rng rng(6);
  const FeatureSchema s = pendulum_schema();
  ModelConfig mc;
  mc.encoder.hidden_size = 4;
  mc.encoder.feature_embed_dim = 2;
  mc.decoder.model_dim = 4;
  mc.decoder.ff_dim = 4;
  SequenceModel<double> model(s, mc, ModelParts::for_method(Method::kGenerative, s), 1);
  EventSequence q{"one", {0.0}, {}, {{0.5}, {0.2}}, 1.0};
  const PaddedBatch b = pad_batch(std::span<const EventSequence>(&q, 1));
  typename SequenceModel<double>::EncodeCache c;
  const MatXd h = model.encode(b, &c);
  typename nn::Decoder<double>::Cache dc;
  const auto out = model.decoder().forward(h, c.events, b.lengths, dc);
  CHECK(out.values.cols() == 1);
  CHECK(out.values.rows() == 3);
}

TEST_CASE("projector with identity weights passes non-negative input through") {
  Rng rng(7);
  nn::ParameterStore<double> store;
  nn::FeedForward<double> ff(store, "p", 6, 6, 4, rng);
  store.at("p.0.weight").value = MatXd::Identity(6, 6);
  store.at("p.1.weight").value = MatXd::Identity(4, 6);
  for (const char* b : {"p.0.bias", "p.1.bias"}) store.at(b).value.setZero();
  const MatXd x = random_matrix(6, 3, rng).cwiseAbs();
  typename nn::FeedForward<double>::Cache c;
  CHECK((ff.forward(x, c) - x.topRows(4)).norm() == 0.0);
}

TEST_CASE("AdamW: zero gradient without decay is a no-op and a quadratic descends") {
  nn::ParameterStore<double> store;
  auto& w = store.add("w", 1, 1);
  w.value(0, 0) = 1.0;
  nn::AdamW<double> still(nn::AdamWConfig{1e-3, 0.0});
  still.step(store);
  CHECK(w.value(0, 0) == 1.0);
  nn::AdamW<double> opt(nn::AdamWConfig{0.1, 3e-3});
  w.grad(0, 0) = w.value(0, 0);  // d/dw of w^2 / 2
  opt.step(store);
  CHECK(std::abs(w.value(0, 0)) < 1.0);
  CHECK(nn::AdamWConfig{}.weight_decay == 3e-3);
  store.add("late", 2, 2);
  CHECK_THROWS(opt.step(store));
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  nn::ParameterStore<double> store;
  store.add("a", 2, 1).grad << 3.0, 0.0;
  store.add("b", 1, 1).grad << 4.0;
  CHECK(nn::clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  double sq = 0;
  for (const auto& p : store) sq += p.grad.squaredNorm();
  CHECK(std::sqrt(sq) == doctest::Approx(1.0));
}

TEST_CASE("parameter names are unique") {
  nn::ParameterStore<double> store;
  store.add("x", 1, 1);
  CHECK_THROWS_AS(store.add("x", 2, 2), std::invalid_argument);
}

TEST_CASE("identical seeds give bit-identical parameters after training steps") {
  Rng rng(8);
  const FeatureSchema s = random_schema(rng);
  const auto seqs = random_sequences(s, 6, 5, rng);
  std::vector<const EventSequence*> ptrs;
  for (const auto& q : seqs) ptrs.push_back(&q);
  ModelConfig mc = small_model(rng);
  TrainConfig tc;
  auto train = [&] {
    Trainer<float> tr(Method::kNaive, s, mc, tc, 11);
    for (int k = 0; k < 20; ++k) tr.step(ptrs);
    return parameter_fingerprint(tr.model().params());
  };
  CHECK(train() == train());
}
