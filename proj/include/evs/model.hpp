#pragma once

#include "evs/data.hpp"
#include "evs/nn/decoder.hpp"
#include "evs/nn/embedder.hpp"
#include "evs/nn/gru.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <optional>

namespace evs {

struct EncoderConfig {
  int hidden_size = 512;
  int feature_embed_dim = 32;
  int num_layers = 1;
};

struct ModelConfig {
  EncoderConfig encoder;
  nn::DecoderConfig decoder;
  int projector_dim = 256;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class Method { kSupervised, kContrastive, kGenerative, kNaive, kMlem, kRandom };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Optional heads attached to the shared encoder.
struct ModelParts {
  bool projector = false;
  bool decoder = false;
  bool alignment = false;
  int head_outputs = 0;  // 0: no supervised head

  static ModelParts for_method(Method m, const FeatureSchema& schema);
};

int supervised_outputs(const FeatureSchema& schema);

/// Embedder + GRU encoder with the heads a training strategy needs. Parameter names:
/// encoder.*, projector.*, decoder.*, head.*, align.log_temperature, align.bias.
template <typename Scalar>
class SequenceModel {
 public:
  struct EncodeCache {
    Mat<Scalar> events;
    typename nn::Gru<Scalar>::Cache gru;
  };

  SequenceModel(const FeatureSchema& schema, const ModelConfig& cfg, const ModelParts& parts,
                std::uint64_t seed, double init_log_temperature = std::log(10.0),
                double init_bias = -10.0)
      : schema_(schema), cfg_(cfg), parts_(parts), store_(std::make_unique<nn::ParameterStore<Scalar>>()) {
    if (cfg.encoder.num_layers != 1) throw std::invalid_argument("encoder: only single-layer GRU supported");
    if (cfg.encoder.hidden_size <= 0) throw std::invalid_argument("encoder: hidden size must be positive");
    Rng rng(seed);
    auto& s = *store_;
    embedder_ = nn::Embedder<Scalar>(s, "encoder.embed", schema, cfg.encoder.feature_embed_dim, rng);
    gru_ = nn::Gru<Scalar>(s, "encoder.gru", embedder_.output_dim(), cfg.encoder.hidden_size, rng);
    const Eigen::Index H = cfg.encoder.hidden_size;
    if (parts.projector)
      projector_.emplace(s, "projector", H, H, cfg.projector_dim, rng);
    if (parts.decoder)
      decoder_.emplace(s, "decoder", schema, embedder_.output_dim(), H, cfg.decoder, rng);
    if (parts.head_outputs > 0) head_.emplace(s, "head", H, parts.head_outputs, rng);
    if (parts.alignment) {
      log_temperature_ = &s.add("align.log_temperature", 1, 1);
      bias_ = &s.add("align.bias", 1, 1);
      log_temperature_->value(0, 0) = static_cast<Scalar>(init_log_temperature);
      bias_->value(0, 0) = static_cast<Scalar>(init_bias);
    }
  }

  SequenceModel(const SequenceModel&) = delete;
  SequenceModel& operator=(const SequenceModel&) = delete;
  SequenceModel(SequenceModel&&) noexcept = default;
  SequenceModel& operator=(SequenceModel&&) noexcept = default;

  const FeatureSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return cfg_; }
  const ModelParts& parts() const { return parts_; }
  nn::ParameterStore<Scalar>& params() { return *store_; }
  const nn::ParameterStore<Scalar>& params() const { return *store_; }

  const nn::Embedder<Scalar>& embedder() const { return embedder_; }
  const nn::Gru<Scalar>& gru() const { return gru_; }
  const nn::FeedForward<Scalar>& projector() const { return require(projector_, "projector"); }
  const nn::Decoder<Scalar>& decoder() const { return require(decoder_, "decoder"); }
  const nn::Linear<Scalar>& head() const { return require(head_, "head"); }
  nn::Parameter<Scalar>& log_temperature() const { return *require_ptr(log_temperature_); }
  nn::Parameter<Scalar>& align_bias() const { return *require_ptr(bias_); }

  /// Hidden state at each row's last event: H x B.
  Mat<Scalar> encode(const PaddedBatch& batch, EncodeCache* cache = nullptr) const {
    if (cache) {
      cache->events = embedder_.forward(batch);
      return gru_.forward(cache->events, batch.lengths, &cache->gru);
    }
    return gru_.forward(embedder_.forward(batch), batch.lengths, nullptr);
  }

  /// `d_events_extra` carries gradient from other consumers of the embedder output.
  void encode_backward(const PaddedBatch& batch, const EncodeCache& cache, const Mat<Scalar>& dh,
                       const Mat<Scalar>* d_events_extra = nullptr) const {
    Mat<Scalar> d_events = gru_.backward(cache.gru, dh);
    if (d_events_extra) d_events += *d_events_extra;
    embedder_.backward(batch, d_events);
  }

 private:
  template <typename T>
  static const T& require(const std::optional<T>& o, const char* what) {
    if (!o) throw std::logic_error(std::string("model has no ") + what);
    return *o;
  }
  static nn::Parameter<Scalar>* require_ptr(nn::Parameter<Scalar>* p) {
    if (!p) throw std::logic_error("model has no alignment scalars");
    return p;
  }

  FeatureSchema schema_;
  ModelConfig cfg_;
  ModelParts parts_;
  std::unique_ptr<nn::ParameterStore<Scalar>> store_;
  nn::Embedder<Scalar> embedder_;
  nn::Gru<Scalar> gru_;
  std::optional<nn::FeedForward<Scalar>> projector_;
  std::optional<nn::Decoder<Scalar>> decoder_;
  std::optional<nn::Linear<Scalar>> head_;
  nn::Parameter<Scalar>* log_temperature_ = nullptr;
  nn::Parameter<Scalar>* bias_ = nullptr;
};

/// On-disk model: JSON header (schema, configs, seed, step count, history) followed by
/// named f32 arrays in column-major order.
struct Checkpoint {
  Method method = Method::kRandom;
  FeatureSchema schema;
  ModelConfig model;
  ModelParts parts;
  nlohmann::json train_config = nlohmann::json::object();
  nlohmann::json history = nlohmann::json::object();
  std::uint64_t seed = 0;
  long long steps = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, MatXf>> arrays;

  const MatXf* find(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[8] = {'E', 'V', 'S', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a temporary file then renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <typename Scalar>
Checkpoint make_checkpoint(const SequenceModel<Scalar>& model, Method method, std::uint64_t seed) {
  Checkpoint c;
  c.method = method;
  c.schema = model.schema();
  c.model = model.config();
  c.parts = model.parts();
  c.seed = seed;
  for (const auto& p : model.params()) c.arrays.emplace_back(p.name, p.value.template cast<float>());
  return c;
}

/// Copies matching arrays into `model`. With `require_all`, every model parameter must be present.
template <typename Scalar>
void load_parameters(SequenceModel<Scalar>& model, const Checkpoint& c, bool require_all,
                     const std::string& prefix = "") {
  for (auto& p : model.params()) {
    if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
    const MatXf* a = c.find(p.name);
    if (!a) {
      if (require_all) throw DataError("checkpoint lacks parameter '" + p.name + "'");
      continue;
    }
    if (a->rows() != p.value.rows() || a->cols() != p.value.cols())
      throw DataError("checkpoint shape mismatch for '" + p.name + "'");
    p.value = a->template cast<Scalar>();
  }
}

template <typename Scalar>
SequenceModel<Scalar> model_from_checkpoint(const Checkpoint& c) {
  SequenceModel<Scalar> m(c.schema, c.model, c.parts, c.seed);
  load_parameters(m, c, true);
  return m;
}

/// FNV-1a over parameter names and raw value bytes; equal iff bit-identical (up to collisions).
template <typename Scalar>
std::uint64_t parameter_fingerprint(const nn::ParameterStore<Scalar>& store, const std::string& prefix = "") {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : store) {
    if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
    mix(p.name.data(), p.name.size());
    mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(Scalar));
  }
  return h;
}

}  // namespace evs
