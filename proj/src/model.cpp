#include "evs/model.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace evs {

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{{"encoder",
               {{"hidden_size", c.encoder.hidden_size},
                {"feature_embed_dim", c.encoder.feature_embed_dim},
                {"num_layers", c.encoder.num_layers}}},
              {"decoder",
               {{"layers", c.decoder.layers},
                {"heads", c.decoder.heads},
                {"model_dim", c.decoder.model_dim},
                {"ff_dim", c.decoder.ff_dim},
                {"layer_norm", c.decoder.layer_norm},
                {"positional_encoding", c.decoder.positional_encoding}}},
              {"projector_dim", c.projector_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder.hidden_size = e.value("hidden_size", c.encoder.hidden_size);
    c.encoder.feature_embed_dim = e.value("feature_embed_dim", c.encoder.feature_embed_dim);
    c.encoder.num_layers = e.value("num_layers", c.encoder.num_layers);
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    c.decoder.layers = d.value("layers", c.decoder.layers);
    c.decoder.heads = d.value("heads", c.decoder.heads);
    c.decoder.model_dim = d.value("model_dim", c.decoder.model_dim);
    c.decoder.ff_dim = d.value("ff_dim", c.decoder.ff_dim);
    c.decoder.layer_norm = d.value("layer_norm", c.decoder.layer_norm);
    c.decoder.positional_encoding = d.value("positional_encoding", c.decoder.positional_encoding);
  }
  c.projector_dim = j.value("projector_dim", c.projector_dim);
  if (c.encoder.hidden_size <= 0 || c.encoder.feature_embed_dim <= 0 || c.encoder.num_layers <= 0 ||
      c.decoder.layers <= 0 || c.decoder.heads <= 0 || c.decoder.model_dim % c.decoder.heads != 0 ||
      c.decoder.ff_dim <= 0 || c.projector_dim <= 0)
    throw DataError("invalid model configuration");
  return c;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kSupervised: return "supervised";
    case Method::kContrastive: return "contrastive";
    case Method::kGenerative: return "generative";
    case Method::kNaive: return "naive";
    case Method::kMlem: return "mlem";
    case Method::kRandom: return "random";
  }
  return "random";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::kSupervised, Method::kContrastive, Method::kGenerative, Method::kNaive,
                   Method::kMlem, Method::kRandom})
    if (to_string(m) == s) return m;
  throw DataError("unknown method '" + s + "'");
}

int supervised_outputs(const FeatureSchema& schema) {
  switch (schema.target_kind) {
    case TargetKind::kBinary: return 2;
    case TargetKind::kMulticlass: return schema.num_classes;
    case TargetKind::kRegression: return 1;
    case TargetKind::kNone: break;
  }
  throw DataError("dataset has no supervised target");
}

ModelParts ModelParts::for_method(Method m, const FeatureSchema& schema) {
  ModelParts p;
  switch (m) {
    case Method::kSupervised: p.head_outputs = supervised_outputs(schema); break;
    case Method::kContrastive: p.projector = true; break;
    case Method::kGenerative: p.decoder = true; break;
    case Method::kNaive:
      p.projector = true;
      p.decoder = true;
      break;
    case Method::kMlem:
      p.decoder = true;
      p.alignment = true;
      break;
    case Method::kRandom: break;
  }
  return p;
}

const MatXf* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, a] : arrays)
    if (n == name) return &a;
  return nullptr;
}

namespace {

json parts_to_json(const ModelParts& p) {
  return json{{"projector", p.projector}, {"decoder", p.decoder}, {"alignment", p.alignment},
              {"head_outputs", p.head_outputs}};
}

ModelParts parts_from_json(const json& j) {
  ModelParts p;
  p.projector = j.value("projector", false);
  p.decoder = j.value("decoder", false);
  p.alignment = j.value("alignment", false);
  p.head_outputs = j.value("head_outputs", 0);
  return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  json header;
  header["format"] = "evs-checkpoint";
  header["version"] = kCheckpointVersion;
  header["method"] = to_string(c.method);
  header["schema"] = schema_to_json(c.schema);
  header["model"] = to_json(c.model);
  header["parts"] = parts_to_json(c.parts);
  header["train_config"] = c.train_config;
  header["history"] = c.history;
  header["seed"] = c.seed;
  header["steps"] = c.steps;
  header["config_hash"] = c.config_hash;
  header["arrays"] = json::array();
  for (const auto& [name, a] : c.arrays)
    header["arrays"].push_back(json{{"name", name}, {"rows", a.rows()}, {"cols", a.cols()}});
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, a] : c.arrays)
      out.write(reinterpret_cast<const char*>(a.data()),
                static_cast<std::streamsize>(a.size() * sizeof(float)));
    if (!out) throw DataError("write failed for checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("'" + path + "' is not a checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header in '" + path + "'");
  json h;
  try {
    h = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }
  Checkpoint c;
  c.method = method_from_string(h.at("method").get<std::string>());
  c.schema = schema_from_json(h.at("schema"));
  c.model = model_config_from_json(h.at("model"));
  c.parts = parts_from_json(h.at("parts"));
  c.train_config = h.value("train_config", json::object());
  c.history = h.value("history", json::object());
  c.seed = h.value("seed", std::uint64_t{0});
  c.steps = h.value("steps", 0LL);
  c.config_hash = h.value("config_hash", std::string());
  for (const auto& a : h.at("arrays")) {
    MatXf m(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint data in '" + path + "'");
    c.arrays.emplace_back(a.at("name").get<std::string>(), std::move(m));
  }
  // Shapes are validated against a freshly built model.
  SequenceModel<float> probe(c.schema, c.model, c.parts, 0);
  for (const auto& p : probe.params()) {
    const MatXf* a = c.find(p.name);
    if (!a) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    if (a->rows() != p.value.rows() || a->cols() != p.value.cols())
      throw DataError("checkpoint shape mismatch for '" + p.name + "'");
  }
  return c;
}

}  // namespace evs
