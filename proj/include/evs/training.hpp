#pragma once

#include "evs/model.hpp"
#include "evs/nn/optim.hpp"
#include "evs/objectives.hpp"

#include <functional>
#include <optional>

namespace evs {

struct TrainConfig {
  int epochs = 0;  // 0 selects 100 epochs below 100k training sequences, 40 otherwise
  double lr = 1e-3;
  double weight_decay = 3e-3;
  int batch_size = 128;
  double alpha = 1.0;
  double beta = 10.0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool deterministic = true;
  double margin = 0.5;
  ViewSampling views;
  double clip_norm = 1.0;
  double init_log_temperature = std::log(10.0);
  double init_bias = -10.0;
  bool monitor_val = true;
  long long max_steps = 0;  // 0: no cap

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

int resolve_epochs(const TrainConfig& cfg, std::size_t train_size);

struct StepStats {
  double loss = 0.0;
  double lm = 0.0;
  double con = 0.0;
  double align = 0.0;
  double supervised = 0.0;
  double grad_norm = 0.0;
};

/// Inputs of one objective evaluation: the padded full sequences and, for objectives with a
/// contrastive term, the padded views together with the index of each view's source row.
struct ObjectiveBatch {
  PaddedBatch full;
  std::optional<PaddedBatch> views;
  std::vector<int> view_sources;
};

ObjectiveBatch make_objective_batch(Method method, std::span<const EventSequence* const> batch,
                                    const ViewSampling& views, Rng& rng);

enum class Task { kAuto, kClassification, kRegression };

/// Throws DataError when `task` cannot be trained on the schema's target.
void check_task(const FeatureSchema& schema, Task task);

/// Supervised head loss over sequence targets: cross-entropy for classification, MSE for
/// regression. Writes dL/dlogits when `grad` is non-null.
template <typename Scalar>
double supervised_loss(const Mat<Scalar>& logits, const PaddedBatch& batch, TargetKind kind,
                       Mat<Scalar>* grad) {
  const Eigen::Index B = logits.cols();
  if (grad) *grad = Mat<Scalar>::Zero(logits.rows(), B);
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    if (!batch.targets[b]) throw DataError("sequence '" + batch.ids[b] + "' has no target");
    const double y = *batch.targets[b];
    if (kind == TargetKind::kRegression) {
      const double err = static_cast<double>(logits(0, b)) - y;
      total += err * err;
      if (grad) (*grad)(0, b) = static_cast<Scalar>(2.0 * err / B);
    } else {
      const auto cls = static_cast<Eigen::Index>(std::llround(y));
      if (cls < 0 || cls >= logits.rows()) throw DataError("class target out of range");
      const Scalar mx = logits.col(b).maxCoeff();
      Vec<Scalar> p = (logits.col(b).array() - mx).exp();
      const Scalar z = p.sum();
      total += static_cast<double>(std::log(z) + mx - logits(cls, b));
      if (grad) {
        p /= z;
        p(cls) -= Scalar(1);
        grad->col(b) = p / static_cast<Scalar>(B);
      }
    }
  }
  return total / static_cast<double>(B);
}

/// Loss of `method` on one batch; with `backward`, gradients are accumulated into `model`
/// (never into `frozen`). Objective weights: naive and MLEM use alpha * LM + beta * other.
template <typename Scalar>
StepStats evaluate_objective(Method method, SequenceModel<Scalar>& model,
                             const SequenceModel<Scalar>* frozen, const ObjectiveBatch& in,
                             const TrainConfig& cfg, bool backward) {
  StepStats st;
  const bool uses_full = method != Method::kContrastive;
  const bool uses_views = method == Method::kContrastive || method == Method::kNaive;
  const bool uses_lm = method == Method::kGenerative || method == Method::kNaive || method == Method::kMlem;
  const double lm_weight = method == Method::kGenerative ? 1.0 : cfg.alpha;
  const double other_weight = method == Method::kContrastive ? 1.0 : cfg.beta;

  typename SequenceModel<Scalar>::EncodeCache full_cache;
  Mat<Scalar> h, dh, d_events;
  if (uses_full) {
    h = model.encode(in.full, &full_cache);
    dh = Mat<Scalar>::Zero(h.rows(), h.cols());
  }

  if (uses_lm) {
    typename nn::Decoder<Scalar>::Cache dc;
    const auto out = model.decoder().forward(h, full_cache.events, in.full.lengths, dc);
    nn::DecoderOutput<Scalar> g;
    st.lm = lm_loss(out, in.full, backward ? &g : nullptr).total;
    st.loss += lm_weight * st.lm;
    if (backward) {
      const auto w = static_cast<Scalar>(lm_weight);
      for (auto& l : g.logits) l *= w;
      g.values *= w;
      auto dg = model.decoder().backward(dc, g);
      dh += dg.memory;
      d_events = std::move(dg.events);
    }
  }

  if (method == Method::kSupervised) {
    const Mat<Scalar> logits = model.head().forward(h);
    Mat<Scalar> dlogits;
    st.supervised = supervised_loss(logits, in.full, model.schema().target_kind, backward ? &dlogits : nullptr);
    st.loss += st.supervised;
    if (backward) dh += model.head().backward(h, dlogits);
  }

  if (method == Method::kMlem) {
    if (!frozen) throw std::logic_error("mlem objective needs the frozen contrastive encoder");
    const Mat<Scalar> hc = frozen->encode(in.full);
    std::vector<int> src(static_cast<std::size_t>(h.cols()));
    std::iota(src.begin(), src.end(), 0);
    AlignmentGrad<Scalar> ag;
    st.align = static_cast<double>(alignment_loss<Scalar>(h, hc, src, src, model.log_temperature().value(0, 0),
                                                          model.align_bias().value(0, 0),
                                                          backward ? &ag : nullptr));
    st.loss += other_weight * st.align;
    if (backward) {
      const auto w = static_cast<Scalar>(other_weight);
      dh += w * ag.generative;
      model.log_temperature().grad(0, 0) += w * ag.log_temperature;
      model.align_bias().grad(0, 0) += w * ag.bias;
    }
  }

  if (uses_views) {
    if (!in.views) throw std::logic_error("contrastive objective needs sampled views");
    typename SequenceModel<Scalar>::EncodeCache vc;
    const Mat<Scalar> hv = model.encode(*in.views, &vc);
    typename nn::FeedForward<Scalar>::Cache pc;
    const Mat<Scalar> z = model.projector().forward(hv, pc);
    Mat<Scalar> dz;
    st.con = static_cast<double>(contrastive_loss<Scalar>(z, in.view_sources, static_cast<Scalar>(cfg.margin),
                                                          backward ? &dz : nullptr));
    st.loss += other_weight * st.con;
    if (backward) {
      dz *= static_cast<Scalar>(other_weight);
      model.encode_backward(*in.views, vc, model.projector().backward(pc, dz));
    }
  }

  if (uses_full && backward) model.encode_backward(in.full, full_cache, dh, d_events.size() ? &d_events : nullptr);
  return st;
}

/// Optimizer state plus the model (and the frozen contrastive encoder for MLEM).
template <typename Scalar>
class Trainer {
 public:
  Trainer(Method method, const FeatureSchema& schema, const ModelConfig& model_cfg, const TrainConfig& cfg,
          std::uint64_t seed, const Checkpoint* frozen_contrastive = nullptr)
      : method_(method),
        cfg_(cfg),
        model_(schema, model_cfg, ModelParts::for_method(method, schema), seed, cfg.init_log_temperature,
               cfg.init_bias),
        opt_(nn::AdamWConfig{cfg.lr, cfg.weight_decay}),
        rng_(make_stream(seed, 0xda7a)),
        eval_rng_(make_stream(seed, 0xe7a1)) {
    cfg.validate();
    if (method == Method::kMlem) {
      if (!frozen_contrastive) throw DataError("mlem needs a contrastive checkpoint");
      if (!(frozen_contrastive->schema == schema))
        throw DataError("contrastive checkpoint was trained on a different schema");
      if (frozen_contrastive->model.encoder.hidden_size != model_cfg.encoder.hidden_size)
        throw DataError("contrastive checkpoint hidden size differs from the generative encoder");
      frozen_.emplace(model_from_checkpoint<Scalar>(*frozen_contrastive));
    }
    if (method == Method::kRandom) throw DataError("random encoders are not trained");
  }

  StepStats step(std::span<const EventSequence* const> batch) {
    const ObjectiveBatch in = make_objective_batch(method_, batch, cfg_.views, rng_);
    model_.params().zero_grad();
    StepStats st = evaluate_objective(method_, model_, frozen_ ? &*frozen_ : nullptr, in, cfg_, true);
    st.grad_norm = cfg_.clip_norm > 0 ? nn::clip_grad_norm(model_.params(), cfg_.clip_norm) : 0.0;
    opt_.step(model_.params());
    return st;
  }

  StepStats evaluate(std::span<const EventSequence* const> batch) {
    const ObjectiveBatch in = make_objective_batch(method_, batch, cfg_.views, eval_rng_);
    return evaluate_objective(method_, model_, frozen_ ? &*frozen_ : nullptr, in, cfg_, false);
  }

  Method method() const { return method_; }
  SequenceModel<Scalar>& model() { return model_; }
  const SequenceModel<Scalar>* frozen() const { return frozen_ ? &*frozen_ : nullptr; }
  long long steps() const { return opt_.steps(); }
  Rng& rng() { return rng_; }

 private:
  Method method_;
  TrainConfig cfg_;
  SequenceModel<Scalar> model_;
  std::optional<SequenceModel<Scalar>> frozen_;
  nn::AdamW<Scalar> opt_;
  Rng rng_;
  Rng eval_rng_;
};

using ProgressFn = std::function<void(int epoch, const StepStats& train_mean)>;

/// Full pre-training run. Returns a checkpoint whose history carries per-epoch loss curves
/// (and, for MLEM, the alignment term together with temperature and bias trajectories).
Checkpoint pretrain(Method method, const Dataset& train, const Dataset* val, const ModelConfig& model_cfg,
                    const TrainConfig& cfg, std::uint64_t seed, const Checkpoint* contrastive = nullptr,
                    const ProgressFn& progress = nullptr);

Checkpoint pretrain_contrastive(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed);
Checkpoint pretrain_generative(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed);
Checkpoint pretrain_naive(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed);
Checkpoint pretrain_mlem(const Dataset& train, const Checkpoint& contrastive, const ModelConfig& m,
                         const TrainConfig& c, std::uint64_t seed);
Checkpoint train_supervised(const Dataset& train, const ModelConfig& m, const TrainConfig& c, std::uint64_t seed,
                            Task task = Task::kAuto);

/// An untrained encoder with the same initialization scheme, as a probing baseline.
Checkpoint random_encoder(const FeatureSchema& schema, const ModelConfig& m, std::uint64_t seed);

struct FinetuneResult {
  Checkpoint checkpoint;
  std::string metric_name;
  double metric = 0.0;
};

/// Attaches a freshly initialized linear head to the pretrained encoder and trains the whole
/// network on sequence targets, then scores the test split.
FinetuneResult finetune(const Checkpoint& pretrained, const Dataset& train, const Dataset& test,
                        const TrainConfig& cfg, std::uint64_t seed, Task task = Task::kAuto);

/// Encoder outputs for every sequence, as an H x N matrix in dataset order.
template <typename Scalar>
Mat<Scalar> encode_sequences(const SequenceModel<Scalar>& model, std::span<const EventSequence> seqs,
                             std::size_t batch_size = 256) {
  Mat<Scalar> out(model.config().encoder.hidden_size, static_cast<Eigen::Index>(seqs.size()));
  std::vector<const EventSequence*> ptrs;
  for (std::size_t start = 0; start < seqs.size(); start += batch_size) {
    const std::size_t end = std::min(seqs.size(), start + batch_size);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&seqs[i]);
    const PaddedBatch b = pad_batch(std::span<const EventSequence* const>(ptrs));
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = model.encode(b);
  }
  return out;
}

struct SampleOptions {
  std::size_t max_len = 200;
  bool greedy = false;  // argmax instead of sampling the categorical features
};

/// Autoregressive rollout of the decoder from the embedding `h`. Categorical codes are drawn
/// from the softmax over non-padding codes; numeric values and time deltas are the predicted
/// point values, with deltas clamped at zero so times are non-decreasing from 0.
template <typename Scalar>
EventSequence sample_sequence(const SequenceModel<Scalar>& model, const Vec<Scalar>& h, const SampleOptions& opt,
                              Rng& rng) {
  const FeatureSchema& schema = model.schema();
  const Mat<Scalar> memory = h;
  EventSequence seq;
  seq.id = "generated";
  seq.cat.resize(schema.categorical.size());
  seq.num.resize(schema.numeric.size());
  for (std::size_t j = 0; j < opt.max_len; ++j) {
    // The prediction at position j only sees events before j, so the appended placeholder
    // does not influence it.
    EventSequence probe = seq;
    probe.times.push_back(seq.times.empty() ? 0.0 : seq.times.back());
    for (auto& c : probe.cat) c.push_back(1);
    for (auto& x : probe.num) x.push_back(0.0);
    const EventSequence* ptr = &probe;
    const PaddedBatch b = pad_batch(std::span<const EventSequence* const>(&ptr, 1));
    const Mat<Scalar> events = model.embedder().forward(b);
    typename nn::Decoder<Scalar>::Cache dc;
    const auto out = model.decoder().forward(memory, events, b.lengths, dc);
    const auto col = static_cast<Eigen::Index>(j);
    for (std::size_t f = 0; f < schema.categorical.size(); ++f) {
      const auto& logits = out.logits[f];
      const Eigen::Index V = logits.rows();
      Eigen::Index code = 1;
      if (opt.greedy) {
        logits.col(col).tail(V - 1).maxCoeff(&code);
        code += 1;
      } else {
        const Scalar mx = logits.col(col).tail(V - 1).maxCoeff();
        std::vector<double> w(static_cast<std::size_t>(V - 1));
        for (Eigen::Index v = 1; v < V; ++v) w[v - 1] = std::exp(static_cast<double>(logits(v, col) - mx));
        code = 1 + static_cast<Eigen::Index>(std::discrete_distribution<int>(w.begin(), w.end())(rng));
      }
      seq.cat[f].push_back(static_cast<std::int32_t>(code));
    }
    for (std::size_t f = 0; f < schema.numeric.size(); ++f)
      seq.num[f].push_back(static_cast<double>(out.values(static_cast<Eigen::Index>(f), col)));
    const double dt = std::max(0.0, static_cast<double>(out.values(out.values.rows() - 1, col)));
    seq.times.push_back(seq.times.empty() ? 0.0 : seq.times.back() + dt);
  }
  return seq;
}

}  // namespace evs
