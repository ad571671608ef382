#include "evs/training.hpp"

#include "evs/eval/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace evs {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 0) throw DataError("train: epochs must be >= 0");
  if (!(lr > 0.0)) throw DataError("train: lr must be positive");
  if (weight_decay < 0.0) throw DataError("train: weight_decay must be >= 0");
  if (batch_size < 1) throw DataError("train: batch_size must be >= 1");
  if (margin <= 0.0) throw DataError("train: margin must be positive");
  if (views.views < 2) throw DataError("train: contrastive training needs at least two views");
  if (!(views.min_fraction > 0.0 && views.min_fraction <= views.max_fraction && views.max_fraction <= 1.0))
    throw DataError("train: view fractions must satisfy 0 < min <= max <= 1");
  if (seeds.empty()) throw DataError("train: at least one seed is required");
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"seeds", c.seeds},
              {"deterministic", c.deterministic},
              {"margin", c.margin},
              {"views", {{"count", c.views.views}, {"min_fraction", c.views.min_fraction},
                         {"max_fraction", c.views.max_fraction}}},
              {"clip_norm", c.clip_norm},
              {"init_log_temperature", c.init_log_temperature},
              {"init_bias", c.init_bias},
              {"monitor_val", c.monitor_val},
              {"max_steps", c.max_steps}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.deterministic = j.value("deterministic", c.deterministic);
  c.margin = j.value("margin", c.margin);
  if (j.contains("views")) {
    const auto& v = j.at("views");
    c.views.views = v.value("count", c.views.views);
    c.views.min_fraction = v.value("min_fraction", c.views.min_fraction);
    c.views.max_fraction = v.value("max_fraction", c.views.max_fraction);
  }
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.init_log_temperature = j.value("init_log_temperature", c.init_log_temperature);
  c.init_bias = j.value("init_bias", c.init_bias);
  c.monitor_val = j.value("monitor_val", c.monitor_val);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.validate();
  return c;
}

int resolve_epochs(const TrainConfig& cfg, std::size_t train_size) {
  if (cfg.epochs > 0) return cfg.epochs;
  return train_size < 100000 ? 100 : 40;
}

ObjectiveBatch make_objective_batch(Method method, std::span<const EventSequence* const> batch,
                                    const ViewSampling& views, Rng& rng) {
  ObjectiveBatch out;
  if (method != Method::kContrastive) out.full = pad_batch(batch);
  if (method == Method::kContrastive || method == Method::kNaive) {
    std::vector<EventSequence> pieces;
    pieces.reserve(batch.size() * static_cast<std::size_t>(views.views));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (auto& v : sample_subsequences(*batch[i], views, rng)) {
        pieces.push_back(std::move(v));
        out.view_sources.push_back(static_cast<int>(i));
      }
    }
    out.views = pad_batch(std::span<const EventSequence>(pieces));
  }
  return out;
}

void check_task(const FeatureSchema& schema, Task task) {
  const TargetKind k = schema.target_kind;
  if (k == TargetKind::kNone) throw DataError("dataset has no supervised target");
  if (task == Task::kClassification && k == TargetKind::kRegression)
    throw DataError("classification requested on a regression target");
  if (task == Task::kRegression && k != TargetKind::kRegression)
    throw DataError("regression requested on a classification target");
}

namespace {

struct Accumulator {
  StepStats sum;
  std::size_t count = 0;

  void add(const StepStats& s, std::size_t weight) {
    const auto w = static_cast<double>(weight);
    sum.loss += w * s.loss;
    sum.lm += w * s.lm;
    sum.con += w * s.con;
    sum.align += w * s.align;
    sum.supervised += w * s.supervised;
    sum.grad_norm += w * s.grad_norm;
    count += weight;
  }

  StepStats mean() const {
    StepStats m = sum;
    if (count == 0) return m;
    const auto n = static_cast<double>(count);
    m.loss /= n;
    m.lm /= n;
    m.con /= n;
    m.align /= n;
    m.supervised /= n;
    m.grad_norm /= n;
    return m;
  }
};

void require_nonempty(const Dataset& d) {
  if (d.sequences.empty()) throw DataError("training set is empty");
  for (const auto& s : d.sequences)
    if (s.times.empty()) throw DataError("sequence '" + s.id + "' has no events");
}

StepStats evaluate_dataset(Trainer<float>& tr, const Dataset& d, int batch_size) {
  Accumulator acc;
  std::vector<const EventSequence*> ptrs;
  for (std::size_t start = 0; start < d.sequences.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(d.sequences.size(), start + static_cast<std::size_t>(batch_size));
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&d.sequences[i]);
    acc.add(tr.evaluate(ptrs), ptrs.size());
  }
  return acc.mean();
}

void record(json& h, const std::string& key, double v) {
  if (!h.contains(key)) h[key] = json::array();
  h[key].push_back(v);
}

Checkpoint run(Trainer<float>& tr, const Dataset& train, const Dataset* val, const TrainConfig& cfg,
               std::uint64_t seed, const ProgressFn& progress) {
  require_nonempty(train);
  const Method method = tr.method();
  const int epochs = resolve_epochs(cfg, train.sequences.size());
  std::vector<std::size_t> order(train.sequences.size());
  std::iota(order.begin(), order.end(), 0);
  json history = json::object();
  std::vector<const EventSequence*> ptrs;
  bool capped = false;
  for (int epoch = 0; epoch < epochs && !capped; ++epoch) {
    std::shuffle(order.begin(), order.end(), tr.rng());
    Accumulator acc;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ptrs.clear();
      for (std::size_t i = start; i < end; ++i) ptrs.push_back(&train.sequences[order[i]]);
      acc.add(tr.step(ptrs), ptrs.size());
      if (cfg.max_steps > 0 && tr.steps() >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    const StepStats m = acc.mean();
    record(history, "train_loss", m.loss);
    record(history, "grad_norm", m.grad_norm);
    if (method == Method::kGenerative || method == Method::kNaive || method == Method::kMlem)
      record(history, "lm", m.lm);
    if (method == Method::kContrastive || method == Method::kNaive) record(history, "contrastive", m.con);
    if (method == Method::kSupervised) record(history, "supervised", m.supervised);
    if (method == Method::kMlem) {
      record(history, "alignment", m.align);
      record(history, "log_temperature", static_cast<double>(tr.model().log_temperature().value(0, 0)));
      record(history, "bias", static_cast<double>(tr.model().align_bias().value(0, 0)));
    }
    if (val && cfg.monitor_val && !val->sequences.empty())
      record(history, "val_loss", evaluate_dataset(tr, *val, std::max(cfg.batch_size, 256)).loss);
    if (progress) progress(epoch, m);
  }
  Checkpoint c = make_checkpoint(tr.model(), method, seed);
  c.steps = tr.steps();
  c.train_config = to_json(cfg);
  c.history = std::move(history);
  return c;
}

}  // namespace

Checkpoint pretrain(Method method, const Dataset& train, const Dataset* val, const ModelConfig& model_cfg,
                    const TrainConfig& cfg, std::uint64_t seed, const Checkpoint* contrastive,
                    const ProgressFn& progress) {
  if (method == Method::kRandom) return random_encoder(train.schema, model_cfg, seed);
  if (method == Method::kSupervised) check_task(train.schema, Task::kAuto);
  Trainer<float> tr(method, train.schema, model_cfg, cfg, seed, contrastive);
  const std::uint64_t frozen_before = tr.frozen() ? parameter_fingerprint(tr.frozen()->params()) : 0;
  Checkpoint c = run(tr, train, val, cfg, seed, progress);
  if (contrastive) {
    const std::uint64_t frozen_after = parameter_fingerprint(tr.frozen()->params());
    if (frozen_after != frozen_before) throw std::logic_error("frozen contrastive encoder changed during training");
    c.history["contrastive_config_hash"] = contrastive->config_hash;
    c.history["frozen_fingerprint_before"] = frozen_before;
    c.history["frozen_fingerprint_after"] = frozen_after;
  }
  return c;
}

Checkpoint pretrain_contrastive(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed) {
  return pretrain(Method::kContrastive, train, nullptr, m, c, seed);
}

Checkpoint pretrain_generative(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed) {
  return pretrain(Method::kGenerative, train, nullptr, m, c, seed);
}

Checkpoint pretrain_naive(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed) {
  return pretrain(Method::kNaive, train, nullptr, m, c, seed);
}

Checkpoint pretrain_mlem(const Dataset& train, const Checkpoint& contrastive, const ModelConfig& m,
                         const TrainConfig& c, std::uint64_t seed) {
  return pretrain(Method::kMlem, train, nullptr, m, c, seed, &contrastive);
}

Checkpoint train_supervised(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed,
                            Task task) {
  check_task(train.schema, task);
  return pretrain(Method::kSupervised, train, nullptr, m, c, seed);
}

Checkpoint random_encoder(const FeatureSchema& schema, const ModelConfig& m, std::uint64_t seed) {
  SequenceModel<float> model(schema, m, ModelParts{}, seed);
  return make_checkpoint(model, Method::kRandom, seed);
}

FinetuneResult finetune(const Checkpoint& pretrained, const Dataset& train, const Dataset& test,
                        const TrainConfig& cfg, std::uint64_t seed, Task task) {
  if (!(pretrained.schema == train.schema)) throw DataError("finetune: checkpoint schema differs from the data");
  check_task(train.schema, task);
  Trainer<float> tr(Method::kSupervised, train.schema, pretrained.model, cfg, seed);
  load_parameters(tr.model(), pretrained, true, "encoder.");
  FinetuneResult r;
  r.checkpoint = run(tr, train, nullptr, cfg, seed, nullptr);
  r.checkpoint.history["pretrained_method"] = to_string(pretrained.method);

  const auto& model = tr.model();
  const MatXf h = encode_sequences(model, std::span<const EventSequence>(test.sequences));
  const MatXd logits = model.head().forward(h).cast<double>();
  std::vector<double> truth;
  for (const auto& s : test.sequences) {
    if (!s.target) throw DataError("test sequence '" + s.id + "' has no target");
    truth.push_back(*s.target);
  }
  const TargetKind kind = train.schema.target_kind;
  if (kind == TargetKind::kRegression) {
    std::vector<double> pred(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index i = 0; i < logits.cols(); ++i) pred[i] = logits(0, i);
    r.metric_name = "mse";
    r.metric = eval::mean_squared_error(pred, truth);
  } else if (kind == TargetKind::kBinary) {
    std::vector<double> score;
    std::vector<int> label;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      score.push_back(logits(1, i) - logits(0, i));
      label.push_back(static_cast<int>(std::llround(truth[i])));
    }
    r.metric_name = "roc_auc";
    r.metric = eval::roc_auc(score, label);
  } else {
    std::vector<int> pred, label;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      Eigen::Index arg = 0;
      logits.col(i).maxCoeff(&arg);
      pred.push_back(static_cast<int>(arg));
      label.push_back(static_cast<int>(std::llround(truth[i])));
    }
    r.metric_name = "accuracy";
    r.metric = eval::accuracy(pred, label);
  }
  return r;
}

}  // namespace evs
