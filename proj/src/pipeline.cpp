#include "evs/pipeline.hpp"

#include "evs/eval/geometry.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace evs {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const PreprocessConfig& c) {
  return json{{"rare_min_count", c.rare_min_count},
              {"aggregate_window", c.aggregate_window},
              {"missing_fill", c.missing_fill},
              {"truncate", c.truncate},
              {"normalize_time", c.normalize_time},
              {"time_mode", c.time_mode == TimeNormalization::kGlobal ? "global" : "per_sequence"}};
}

PreprocessConfig preprocess_config_from_json(const json& j) {
  PreprocessConfig c;
  c.rare_min_count = j.value("rare_min_count", c.rare_min_count);
  c.aggregate_window = j.value("aggregate_window", c.aggregate_window);
  c.missing_fill = j.value("missing_fill", c.missing_fill);
  c.truncate = j.value("truncate", c.truncate);
  c.normalize_time = j.value("normalize_time", c.normalize_time);
  const std::string mode = j.value("time_mode", std::string("per_sequence"));
  if (mode == "global")
    c.time_mode = TimeNormalization::kGlobal;
  else if (mode == "per_sequence")
    c.time_mode = TimeNormalization::kPerSequence;
  else
    throw DataError("unknown time_mode '" + mode + "'");
  if (c.aggregate_window < 0.0) throw DataError("aggregate_window must be >= 0");
  return c;
}

Dataset preprocess(const Dataset& dataset, const PreprocessConfig& cfg) {
  Dataset d = dataset;
  if (cfg.aggregate_window > 0.0) d = aggregate_intervals(d, cfg.aggregate_window, cfg.missing_fill);
  if (cfg.rare_min_count > 0) d = consolidate_rare_categories(d, cfg.rare_min_count);
  if (cfg.truncate > 0) d = truncate_recent(d, cfg.truncate);
  if (cfg.normalize_time) d = normalize_time(d, cfg.time_mode);
  return d;
}

void PipelineConfig::validate() const {
  if (methods.empty()) throw DataError("pipeline: no methods requested");
  if (dataset_path.empty() && generate_n < 2) throw DataError("pipeline: generated dataset needs >= 2 sequences");
  if (jobs < 1) throw DataError("pipeline: --jobs must be >= 1");
  for (double p : evaluation.dropout_grid)
    if (!(p >= 0.0 && p < 1.0)) throw DataError("pipeline: dropout probabilities must lie in [0, 1)");
  train.validate();
}

json to_json(const PipelineConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  const auto& e = c.evaluation;
  return json{{"dataset",
               {{"path", c.dataset_path},
                {"name", c.dataset_name},
                {"generate", {{"n", c.generate_n}, {"seed", c.data_seed}, {"horizon", c.horizon}}}}},
              {"preprocess", to_json(c.preprocess)},
              {"split", {{"train", c.ratios.train}, {"val", c.ratios.val}, {"test", c.ratios.test}, {"seed", c.split_seed}}},
              {"methods", methods},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"evaluation",
               {{"linear_probe", e.linear_probe},
                {"nonlinear_probe", e.nonlinear_probe},
                {"tpp", e.tpp},
                {"geometry", e.geometry},
                {"robustness", e.robustness},
                {"finetune", e.finetune},
                {"random_baseline", e.random_baseline},
                {"export_embeddings", e.export_embeddings},
                {"dropout_grid", e.dropout_grid}}},
              {"jobs", c.jobs}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset_path = d.value("path", c.dataset_path);
    c.dataset_name = d.value("name", c.dataset_name);
    if (d.contains("generate")) {
      const auto& g = d.at("generate");
      c.generate_n = g.value("n", c.generate_n);
      c.data_seed = g.value("seed", c.data_seed);
      c.horizon = g.value("horizon", c.horizon);
    }
  }
  if (j.contains("preprocess")) c.preprocess = preprocess_config_from_json(j.at("preprocess"));
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.ratios.train = s.value("train", c.ratios.train);
    c.ratios.val = s.value("val", c.ratios.val);
    c.ratios.test = s.value("test", c.ratios.test);
    c.split_seed = s.value("seed", c.split_seed);
  }
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    auto& o = c.evaluation;
    o.linear_probe = e.value("linear_probe", o.linear_probe);
    o.nonlinear_probe = e.value("nonlinear_probe", o.nonlinear_probe);
    o.tpp = e.value("tpp", o.tpp);
    o.geometry = e.value("geometry", o.geometry);
    o.robustness = e.value("robustness", o.robustness);
    o.finetune = e.value("finetune", o.finetune);
    o.random_baseline = e.value("random_baseline", o.random_baseline);
    o.export_embeddings = e.value("export_embeddings", o.export_embeddings);
    if (e.contains("dropout_grid")) o.dropout_grid = e.at("dropout_grid").get<std::vector<double>>();
  }
  c.jobs = j.value("jobs", c.jobs);
  c.validate();
  return c;
}

std::string pipeline_hash(const PipelineConfig& c) {
  json j = to_json(c);
  j.erase("jobs");
  return eval::config_hash(j);
}

std::string make_run_id(const std::string& hash) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return std::string(buf) + "-" + hash;
}

Dataset prepare_dataset(const PipelineConfig& c) {
  Dataset d;
  if (c.dataset_path.empty()) {
    PendulumDatasetConfig pc;
    pc.hawkes.horizon = c.horizon;
    d = generate_pendulum_dataset(c.generate_n, c.data_seed, pc);
  } else {
    d = load_dataset(c.dataset_path, load_schema(schema_path_for(c.dataset_path)));
  }
  d = preprocess(d, c.preprocess);
  const bool tagged = std::any_of(d.split_tags.begin(), d.split_tags.end(), [](SplitTag t) { return t == SplitTag::kTest; });
  return tagged ? d : assign_splits(d, c.ratios, c.split_seed);
}

DatasetSplit split_for_seed(const Dataset& tagged, const PipelineConfig& c, std::uint64_t seed) {
  std::uint64_t s = c.split_seed;
  if (seed != 0) s = make_stream(c.split_seed, seed)();
  return partition_by_tags(assign_splits(tagged, c.ratios, s));
}

void append_run_log(const std::string& path, const std::vector<eval::MetricRecord>& records) {
  const bool fresh = !fs::exists(path);
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to run log '" + path + "'");
  if (fresh) out << "run_id,method,dataset,seed,metric,value\n";
  out.precision(17);
  for (const auto& r : records)
    out << r.run_id << ',' << r.method << ',' << r.dataset << ',' << r.seed << ',' << r.metric << ',' << r.value << '\n';
}

namespace {

std::vector<eval::Perturbation> robustness_perturbations(const EvaluationConfig& e) {
  std::vector<eval::Perturbation> out{{eval::Perturbation::Kind::kNone, 0.0}, {eval::Perturbation::Kind::kShuffle, 0.0}};
  for (double p : e.dropout_grid) out.push_back({eval::Perturbation::Kind::kDropout, p});
  return out;
}

std::string perturbation_key(const eval::Perturbation& p) {
  if (p.kind != eval::Perturbation::Kind::kDropout) return p.name();
  std::ostringstream os;
  os << "dropout_" << p.p;
  return os.str();
}

/// Training order for one seed: MLEM needs the contrastive encoder of the same seed.
std::vector<Method> training_order(const PipelineConfig& c) {
  std::vector<Method> order;
  auto wants = [&](Method m) { return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end(); };
  if (wants(Method::kContrastive) || wants(Method::kMlem)) order.push_back(Method::kContrastive);
  for (Method m : c.methods)
    if (m != Method::kContrastive && std::find(order.begin(), order.end(), m) == order.end()) order.push_back(m);
  if (c.evaluation.random_baseline && !wants(Method::kRandom)) order.push_back(Method::kRandom);
  return order;
}

struct SeedOutput {
  std::vector<eval::MetricRecord> records;
  std::map<std::string, std::vector<double>> robustness;  // method -> value per perturbation
  std::string error;
};

class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  void operator()(const std::string& line) {
    if (!os_) return;
    std::lock_guard<std::mutex> lock(mu_);
    *os_ << line << std::endl;
  }

 private:
  std::ostream* os_;
  std::mutex mu_;
};

SeedOutput run_seed(const PipelineConfig& cfg, const Dataset& tagged, std::uint64_t seed, const std::string& run_dir,
                    const std::string& run_id, const std::string& hash, Logger& log) {
  SeedOutput out;
  std::string stage = "split";
  try {
    const DatasetSplit sp = split_for_seed(tagged, cfg, seed);
    const auto& e = cfg.evaluation;
    const auto perturbations = robustness_perturbations(e);
    auto record = [&](Method m, const std::string& metric, double value) {
      out.records.push_back({run_id, to_string(m), cfg.dataset_name, seed, metric, value});
    };
    std::map<Method, Checkpoint> trained;
    for (Method m : training_order(cfg)) {
      const std::string name = to_string(m) + "-seed" + std::to_string(seed);
      const std::string path = (fs::path(run_dir) / "ckpts" / (name + ".ckpt")).string();
      stage = "pretrain:" + to_string(m);
      Checkpoint ckpt;
      if (fs::exists(path)) {
        ckpt = load_checkpoint(path);
        if (ckpt.config_hash != hash) throw DataError("checkpoint '" + path + "' belongs to another configuration");
        log("[seed " + std::to_string(seed) + "] resumed " + name);
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        const Checkpoint* contrastive = m == Method::kMlem ? &trained.at(Method::kContrastive) : nullptr;
        ckpt = pretrain(m, sp.train, &sp.val, cfg.model, cfg.train, seed, contrastive, [&](int epoch, const StepStats& st) {
          log("[seed " + std::to_string(seed) + "] " + to_string(m) + " epoch " + std::to_string(epoch + 1) +
              " loss " + std::to_string(st.loss));
        });
        ckpt.config_hash = hash;
        save_checkpoint(path, ckpt);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log("[seed " + std::to_string(seed) + "] trained " + name + " in " + std::to_string(secs) + " s");
      }
      trained.emplace(m, ckpt);
      const bool requested = std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
      if (!requested && m != Method::kRandom) continue;
      if (ckpt.history.contains("train_loss") && !ckpt.history["train_loss"].empty())
        record(m, "train_loss_final", ckpt.history["train_loss"].back().get<double>());

      stage = "embed:" + to_string(m);
      const eval::EmbeddingMatrix etr = eval::extract_embeddings(ckpt, sp.train);
      const eval::EmbeddingMatrix ete = eval::extract_embeddings(ckpt, sp.test);
      if (e.export_embeddings) {
        const auto base = fs::path(run_dir) / "embeddings" / (name + "-test");
        eval::write_embeddings_csv(base.string() + ".csv", ete, hash);
        eval::write_embeddings_binary(base.string() + ".f32", ete, hash);
      }
      const TargetKind kind = tagged.schema.target_kind;
      const bool has_target = kind != TargetKind::kNone;
      if (e.linear_probe && has_target) {
        stage = "probe:" + to_string(m);
        const auto r = eval::linear_probe(etr, ete, kind, tagged.schema.num_classes);
        record(m, "linear_probe_" + eval::to_string(r.metric), r.value);
      }
      if (e.nonlinear_probe && has_target) {
        stage = "gbdt:" + to_string(m);
        const auto r = eval::nonlinear_probe(etr, ete, kind, tagged.schema.num_classes);
        record(m, "gbdt_probe_" + eval::to_string(r.metric), r.value);
      }
      if (e.tpp) {
        stage = "tpp:" + to_string(m);
        const auto r = eval::tpp_probe(ckpt, sp.train, sp.test);
        record(m, "tpp_" + eval::to_string(r.metric), r.value);
      }
      if (e.geometry) {
        stage = "analyze:" + to_string(m);
        record(m, "anisotropy", eval::anisotropy(ete.H));
        record(m, "anisotropy_uncentered", eval::anisotropy(ete.H, false));
        record(m, "intrinsic_dimension", eval::intrinsic_dimension(ete.H).dimension);
      }
      if (e.finetune && has_target && m != Method::kSupervised && m != Method::kRandom) {
        stage = "finetune:" + to_string(m);
        const auto r = finetune(ckpt, sp.train, sp.test, cfg.train, seed);
        record(m, "finetune_" + r.metric_name, r.metric);
      }
      if (e.robustness && has_target && m != Method::kRandom) {
        stage = "perturb:" + to_string(m);
        auto& values = out.robustness[to_string(m)];
        for (const auto& p : perturbations) {
          const auto r = eval::perturbed_linear_probe(ckpt, sp.train, sp.test, p, seed);
          values.push_back(r.value);
          if (p.kind != eval::Perturbation::Kind::kNone)
            record(m, perturbation_key(p) + "_linear_probe_" + eval::to_string(r.metric), r.value);
        }
      }
    }
  } catch (const std::exception& ex) {
    out.error = StageError(stage, seed, ex.what()).what();
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& requested, const std::string& out_root, const std::string& resume_dir,
                            std::ostream* log_stream) {
  PipelineConfig cfg = requested;
  PipelineResult result;
  if (!resume_dir.empty()) {
    std::ifstream in(fs::path(resume_dir) / "config.json");
    if (!in) throw DataError("no config.json in '" + resume_dir + "'");
    const int jobs = cfg.jobs;
    cfg = pipeline_config_from_json(json::parse(in));
    cfg.jobs = jobs;
    result.run_dir = resume_dir;
    result.run_id = fs::path(resume_dir).filename().string();
  }
  cfg.validate();
  const std::string hash = pipeline_hash(cfg);
  if (resume_dir.empty()) {
    result.run_id = make_run_id(hash);
    result.run_dir = (fs::path(out_root) / "runs" / result.run_id).string();
  }
  for (const char* sub : {"ckpts", "embeddings", "reports"}) fs::create_directories(fs::path(result.run_dir) / sub);
  json stored = to_json(cfg);
  stored["config_hash"] = hash;
  eval::write_file_atomic((fs::path(result.run_dir) / "config.json").string(), stored.dump(2) + "\n");

  Logger log(log_stream);
  log("run " + result.run_id);
  Dataset tagged;
  try {
    tagged = prepare_dataset(cfg);
  } catch (const std::exception& ex) {
    throw StageError("preprocess", cfg.data_seed, ex.what());
  }
  log("dataset: " + std::to_string(tagged.size()) + " sequences, mean length " + std::to_string(tagged.mean_length()));

  const auto& seeds = cfg.train.seeds;
  std::vector<SeedOutput> outputs(seeds.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= seeds.size()) return;
        i = next++;
      }
      outputs[i] = run_seed(cfg, tagged, seeds[i], result.run_dir, result.run_id, hash, log);
    }
  };
  const int threads = std::min<int>(cfg.jobs, static_cast<int>(seeds.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& o : outputs)
    if (!o.error.empty()) throw std::runtime_error(o.error);

  for (const auto& o : outputs)
    for (const auto& r : o.records) result.report.add(r);
  if (cfg.evaluation.robustness && tagged.schema.target_kind != TargetKind::kNone) {
    const auto perturbations = robustness_perturbations(cfg.evaluation);
    const eval::Metric metric = eval::default_metric(tagged.schema.target_kind);
    for (Method m : cfg.methods) {
      const std::string name = to_string(m);
      if (m == Method::kRandom || !outputs.front().robustness.count(name)) continue;
      std::vector<double> base;
      for (const auto& o : outputs) base.push_back(o.robustness.at(name)[0]);
      for (std::size_t k = 0; k < perturbations.size(); ++k) {
        std::vector<double> pert;
        for (const auto& o : outputs) pert.push_back(o.robustness.at(name)[k]);
        result.report.add_robustness(eval::summarize_robustness(name, perturbations[k], metric, base, pert));
      }
    }
  }
  const fs::path reports = fs::path(result.run_dir) / "reports";
  result.report.write_csv((reports / "metrics.csv").string());
  result.report.write_robustness_csv((reports / "robustness.csv").string(), result.run_id);
  eval::write_file_atomic((reports / "summary.txt").string(),
                          "run " + result.run_id + "\nconfig_hash " + hash + "\n\n" + result.report.table());
  log(result.report.table());
  return result;
}

}  // namespace evs
