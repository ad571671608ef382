#include "grad_suites.hpp"
#include "test_util.hpp"

#include "evs/synthgen.hpp"

#include <doctest.h>

#include <filesystem>

using namespace evs;
using namespace evs::testing;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder.hidden_size = 16;
  m.encoder.feature_embed_dim = 4;
  m.decoder.layers = 1;
  m.decoder.heads = 2;
  m.decoder.model_dim = 8;
  m.decoder.ff_dim = 16;
  m.projector_dim = 8;
  return m;
}

TrainConfig quick(int epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  return c;
}

const Dataset& pendulum() {
  static const Dataset d = truncate_recent(generate_pendulum_dataset(192, 4), 40);
  return d;
}

/// Small categorical dataset with a binary target.
Dataset categorical_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.schema.categorical.push_back(categorical_feature("kind", 5));
  d.schema.numeric.push_back({"amount"});
  d.schema.target_kind = TargetKind::kBinary;
  d.schema.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    EventSequence s = random_sequence(d.schema, uniform_int(rng, 2, 12), rng, "c" + std::to_string(i));
    s.target = static_cast<double>(std::count(s.cat[0].begin(), s.cat[0].end(), 1) > 1);
    d.sequences.push_back(std::move(s));
  }
  return d;
}

std::vector<const EventSequence*> first(const Dataset& d, std::size_t n) {
  std::vector<const EventSequence*> out;
  for (std::size_t i = 0; i < n && i < d.size(); ++i) out.push_back(&d.sequences[i]);
  return out;
}

bool same_arrays(const Checkpoint& a, const Checkpoint& b) {
  if (a.arrays.size() != b.arrays.size()) return false;
  for (std::size_t i = 0; i < a.arrays.size(); ++i) {
    if (a.arrays[i].first != b.arrays[i].first) return false;
    const MatXf &x = a.arrays[i].second, &y = b.arrays[i].second;
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) != 0) return false;
  }
  return true;
}

bool has_prefix(const Checkpoint& c, const std::string& prefix) {
  return std::any_of(c.arrays.begin(), c.arrays.end(), [&](const auto& a) { return a.first.rfind(prefix, 0) == 0; });
}

double mean_loss(Trainer<float>& tr, std::span<const EventSequence* const> batch) {
  double total = 0.0;
  for (int k = 0; k < 4; ++k) total += tr.evaluate(batch).loss;
  return total / 4.0;
}

}  // namespace

TEST_CASE("epoch count follows the training-set size") {
  TrainConfig c;
  CHECK(resolve_epochs(c, 99999) == 100);
  CHECK(resolve_epochs(c, 100000) == 40);
  c.epochs = 7;
  CHECK(resolve_epochs(c, 10) == 7);
}

TEST_CASE("training configuration round-trips and validates") {
  TrainConfig c;
  c.epochs = 3;
  c.alpha = 0.5;
  c.seeds = {4, 9};
  c.views.min_fraction = 0.3;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  TrainConfig bad = c;
  bad.seeds.clear();
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.lr = -1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("checkpoints round-trip forward outputs bit-exactly") {
  TempDir dir;
  const Dataset& d = pendulum();
  for (Method m : {Method::kContrastive, Method::kGenerative, Method::kNaive}) {
    const Checkpoint c = pretrain(m, d, nullptr, tiny_model(), quick(1), 3);
    const std::string path = dir.file(to_string(m) + ".ckpt");
    save_checkpoint(path, c);
    CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
    const Checkpoint back = load_checkpoint(path);
    CHECK(same_arrays(c, back));
    CHECK(back.method == m);
    CHECK(back.schema == c.schema);
    CHECK(back.steps == c.steps);
    CHECK(back.history == c.history);
    const auto a = model_from_checkpoint<float>(c), b = model_from_checkpoint<float>(back);
    const auto span = std::span<const EventSequence>(d.sequences).first(20);
    const MatXf ha = encode_sequences(a, span), hb = encode_sequences(b, span);
    CHECK(std::memcmp(ha.data(), hb.data(), sizeof(float) * static_cast<std::size_t>(ha.size())) == 0);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir;
  const Checkpoint c = random_encoder(pendulum().schema, tiny_model(), 1);
  save_checkpoint(dir.file("ok.ckpt"), c);
  const std::string bytes = read_file(dir.file("ok.ckpt"));
  write_file(dir.file("short.ckpt"), bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(dir.file("short.ckpt")), DataError);
  std::string bad = bytes;
  bad[0] = 'X';
  write_file(dir.file("magic.ckpt"), bad);
  CHECK_THROWS_AS(load_checkpoint(dir.file("magic.ckpt")), DataError);
  bad = bytes;
  bad[8] = 9;
  write_file(dir.file("version.ckpt"), bad);
  CHECK_THROWS_AS(load_checkpoint(dir.file("version.ckpt")), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing.ckpt")), DataError);
}

TEST_CASE("loss on a fixed batch decreases over 50 steps") {
  const Dataset& d = pendulum();
  const auto batch = first(d, 32);
  for (Method m : {Method::kContrastive, Method::kGenerative, Method::kNaive, Method::kSupervised}) {
    Trainer<float> tr(m, d.schema, tiny_model(), quick(), 5);
    const double before = mean_loss(tr, batch);
    for (int s = 0; s < 50; ++s) tr.step(batch);
    const double after = mean_loss(tr, batch);
    INFO(to_string(m) << " " << before << " -> " << after);
    CHECK(after < before);
    CHECK(tr.steps() == 50);
  }
}

TEST_CASE("alignment objective decreases on a fixed batch") {
  const Dataset& d = pendulum();
  const Checkpoint con = pretrain_contrastive(d, tiny_model(), quick(1), 1);
  const auto batch = first(d, 32);
  Trainer<float> tr(Method::kMlem, d.schema, tiny_model(), quick(), 6, &con);
  const double before = tr.evaluate(batch).align;
  for (int s = 0; s < 50; ++s) tr.step(batch);
  CHECK(tr.evaluate(batch).align < before);
}

TEST_CASE("initial cross-entropy is close to ln of the vocabulary") {
  const Dataset d = categorical_dataset(64, 2);
  Trainer<float> tr(Method::kGenerative, d.schema, tiny_model(), quick(), 7);
  const auto batch = first(d, 64);
  const ObjectiveBatch in = make_objective_batch(Method::kGenerative, batch, {}, tr.rng());
  const auto& model = tr.model();
  SequenceModel<float>::EncodeCache cache;
  const MatXf h = model.encode(in.full, &cache);
  nn::Decoder<float>::Cache dc;
  const auto pred = model.decoder().forward(h, cache.events, in.full.lengths, dc);
  const LmLossTerms l = lm_loss(pred, in.full);
  CHECK(std::abs(l.categorical[0] - std::log(5.0)) < 0.25);
}

TEST_CASE("pre-training is deterministic for a fixed seed") {
  const Dataset& d = pendulum();
  for (Method m : {Method::kContrastive, Method::kGenerative, Method::kNaive, Method::kSupervised}) {
    const Checkpoint a = pretrain(m, d, nullptr, tiny_model(), quick(1), 11);
    const Checkpoint b = pretrain(m, d, nullptr, tiny_model(), quick(1), 11);
    const Checkpoint c = pretrain(m, d, nullptr, tiny_model(), quick(1), 12);
    CHECK(same_arrays(a, b));
    CHECK(a.history == b.history);
    CHECK_FALSE(same_arrays(a, c));
  }
}

TEST_CASE("checkpoints carry the parameter groups of their method") {
  const Dataset& d = pendulum();
  const TrainConfig c = quick(1);
  const Checkpoint con = pretrain_contrastive(d, tiny_model(), c, 1);
  CHECK(has_prefix(con, "encoder."));
  CHECK(has_prefix(con, "projector."));
  CHECK_FALSE(has_prefix(con, "decoder."));
  const Checkpoint gen = pretrain_generative(d, tiny_model(), c, 1);
  CHECK(has_prefix(gen, "encoder."));
  CHECK(has_prefix(gen, "decoder."));
  const Checkpoint naive = pretrain_naive(d, tiny_model(), c, 1);
  CHECK(has_prefix(naive, "projector."));
  CHECK(has_prefix(naive, "decoder."));
  const Checkpoint sup = train_supervised(d, tiny_model(), c, 1);
  const MatXf* w = sup.find("head.weight");
  REQUIRE(w);
  CHECK(w->rows() == 1);
  CHECK(w->cols() == 16);
  CHECK(con.history.at("train_loss").size() == 1);
}

TEST_CASE("MLEM keeps the contrastive encoder frozen and records the alignment scalars") {
  const Dataset& d = pendulum();
  const Checkpoint con = pretrain_contrastive(d, tiny_model(), quick(1), 1);
  const Checkpoint ml = pretrain_mlem(d, con, tiny_model(), quick(3), 2);
  CHECK(ml.history.at("frozen_fingerprint_before") == ml.history.at("frozen_fingerprint_after"));
  const auto reloaded = model_from_checkpoint<float>(con);
  CHECK(ml.history.at("frozen_fingerprint_before").get<std::uint64_t>() == parameter_fingerprint(reloaded.params()));
  CHECK(ml.history.at("log_temperature").size() == 3);
  CHECK(ml.history.at("bias").size() == 3);
  const auto& align = ml.history.at("alignment");
  REQUIRE(align.size() == 3);
  CHECK(align.back().get<double>() < align.front().get<double>());
  CHECK(has_prefix(ml, "align."));
  CHECK_FALSE(has_prefix(ml, "projector."));

  const Dataset other = categorical_dataset(32, 1);
  CHECK_THROWS_AS(pretrain_mlem(other, con, tiny_model(), quick(1), 2), DataError);
}

TEST_CASE("empty training sets and missing targets are errors") {
  Dataset empty;
  empty.schema = pendulum().schema;
  CHECK_THROWS(pretrain_contrastive(empty, tiny_model(), quick(1), 0));
  Dataset no_target = categorical_dataset(16, 3);
  no_target.schema.target_kind = TargetKind::kNone;
  CHECK_THROWS(train_supervised(no_target, tiny_model(), quick(1), 0));
  CHECK_THROWS(check_task(pendulum().schema, Task::kClassification));
}

TEST_CASE("fine-tuning keeps the pretrained encoder and starts a fresh head") {
  const Dataset& d = pendulum();
  const DatasetSplit s = split(d, {0.8, 0.1, 0.1}, 0);
  const Checkpoint sup = train_supervised(s.train, tiny_model(), quick(2), 3);
  TrainConfig frozen = quick(1);
  frozen.lr = 1e-30;  // no visible update at f32
  const FinetuneResult r = finetune(sup, s.train, s.test, frozen, 8);
  const SequenceModel<float> fresh(d.schema, tiny_model(), ModelParts::for_method(Method::kSupervised, d.schema), 8);
  for (const auto& p : fresh.params()) {
    const MatXf* got = r.checkpoint.find(p.name);
    REQUIRE(got);
    const MatXf* expect = p.name.rfind("head.", 0) == 0 ? &p.value : sup.find(p.name);
    CHECK(*got == *expect);
  }
  CHECK(r.metric_name == "mse");
  CHECK(std::isfinite(r.metric));

  const Checkpoint gen = pretrain_generative(s.train, tiny_model(), quick(1), 3);
  TrainConfig longer = quick(20);
  longer.lr = 1e-2;
  const FinetuneResult t = finetune(gen, s.train, s.test, longer, 8);
  CHECK(t.checkpoint.history.at("pretrained_method") == "generative");
  const auto& curve = t.checkpoint.history.at("train_loss");
  REQUIRE(curve.size() == 20);
  CHECK(curve.back().get<double>() < 0.5 * curve.front().get<double>());
  CHECK(std::isfinite(t.metric));

  CHECK_THROWS(finetune(gen, s.train, s.test, quick(1), 8, Task::kClassification));
  const Dataset other = categorical_dataset(16, 4);
  CHECK_THROWS_AS(finetune(gen, other, other, quick(1), 8), DataError);
}

TEST_CASE("binary fine-tuning reports ROC-AUC") {
  const Dataset d = categorical_dataset(160, 5);
  const DatasetSplit s = split(d, {0.7, 0.0, 0.3}, 1);
  const Checkpoint con = pretrain_contrastive(s.train, tiny_model(), quick(1), 2);
  const FinetuneResult r = finetune(con, s.train, s.test, quick(2), 1);
  CHECK(r.metric_name == "roc_auc");
  CHECK(r.metric >= 0.0);
  CHECK(r.metric <= 1.0);
}

TEST_CASE("greedy rollouts are deterministic and produce valid sequences") {
  const Dataset d = categorical_dataset(64, 6);
  const Checkpoint gen = pretrain_generative(d, tiny_model(), quick(1), 4);
  const auto model = model_from_checkpoint<float>(gen);
  const MatXf h = encode_sequences(model, std::span<const EventSequence>(d.sequences).first(3));
  for (Eigen::Index i = 0; i < h.cols(); ++i) {
    Rng r1(1), r2(99);
    const VecXf hi = h.col(i);
    const EventSequence a = sample_sequence(model, hi, SampleOptions{30, true}, r1);
    const EventSequence b = sample_sequence(model, hi, SampleOptions{30, true}, r2);
    CHECK(a.times == b.times);
    CHECK(a.cat == b.cat);
    CHECK(a.size() == 30);
    Rng r3(5);
    const EventSequence c = sample_sequence(model, hi, SampleOptions{30, false}, r3);
    for (const EventSequence* s : {&a, &c}) {
      CHECK(s->times.front() >= 0.0);
      for (std::size_t j = 1; j < s->size(); ++j) CHECK(s->times[j] >= s->times[j - 1]);
      for (auto code : s->cat[0]) {
        CHECK(code >= 1);
        CHECK(code < 5);
      }
    }
  }
}
