#include "evs/eval/geometry.hpp"
#include "evs/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evs;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool deterministic = false;
  std::string out;
};

json read_config(const Globals& g) {
  if (g.config.empty()) return json::object();
  std::ifstream in(g.config);
  if (!in) throw DataError("cannot open config '" + g.config + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config '" + g.config + "': " + e.what());
  }
}

ModelConfig model_config(const json& cfg) {
  return cfg.contains("model") ? model_config_from_json(cfg.at("model")) : ModelConfig{};
}

TrainConfig train_config(const json& cfg, const Globals& g) {
  TrainConfig t = cfg.contains("train") ? train_config_from_json(cfg.at("train")) : TrainConfig{};
  if (g.deterministic) t.deterministic = true;
  return t;
}

Dataset load(const std::string& path) { return load_dataset(path, load_schema(schema_path_for(path))); }

/// Uses stored split tags when present, otherwise draws the default split with `seed`.
DatasetSplit splits_of(const Dataset& d, std::uint64_t seed) {
  const bool tagged = !d.split_tags.empty();
  return tagged ? partition_by_tags(d) : split(d, SplitRatios{}, seed);
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string dataset_name(const std::string& path) { return fs::path(path).stem().string(); }

std::string default_log(const std::string& out) {
  const fs::path p(out);
  return (p.has_parent_path() ? p.parent_path() / "run_log.csv" : fs::path("run_log.csv")).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-sequence representation learning workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--jobs", g.jobs, "Parallel seed workers")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", g.deterministic, "Record deterministic mode in the resolved config");
  app.add_option("--out", g.out, "Output path or directory");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic pendulum dataset");
  std::size_t gen_n = 10000;
  double horizon = 7.0;
  gen->add_option("--n", gen_n, "Number of sequences")->check(CLI::PositiveNumber);
  gen->add_option("--horizon", horizon, "Observation window length")->check(CLI::PositiveNumber);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Preprocess a dataset and assign splits");
  std::string pre_data, norm_mode = "none", split_spec = "0.8,0.1,0.1";
  PreprocessConfig pcfg;
  pcfg.truncate = 0;
  pre->add_option("--data", pre_data, "Input JSON-lines dataset")->required();
  pre->add_option("--rare-min-count", pcfg.rare_min_count, "Merge categories rarer than this into RARE");
  pre->add_option("--aggregate-window", pcfg.aggregate_window, "Aggregate events into windows of this length");
  pre->add_option("--missing-fill", pcfg.missing_fill, "Value for features absent from a window");
  pre->add_option("--truncate", pcfg.truncate, "Keep the most recent N events");
  pre->add_option("--normalize-time", norm_mode, "none, per_sequence or global")
      ->check(CLI::IsMember({"none", "per_sequence", "global"}));
  pre->add_option("--split", split_spec, "train,val,test ratios");

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "Train an encoder");
  std::string pt_method, pt_data, pt_contrastive, pt_log;
  pt->add_option("--method", pt_method, "Training strategy")
      ->required()
      ->check(CLI::IsMember({"contrastive", "generative", "naive", "mlem", "supervised"}));
  pt->add_option("--data", pt_data, "Dataset (JSON lines)")->required();
  pt->add_option("--contrastive-ckpt", pt_contrastive, "Frozen contrastive encoder for mlem");
  pt->add_option("--log", pt_log, "Run-log CSV to append to");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune a pretrained encoder with a new head");
  std::string ft_ckpt, ft_data, ft_task = "auto", ft_log;
  ft->add_option("--ckpt", ft_ckpt, "Pretrained checkpoint")->required();
  ft->add_option("--data", ft_data, "Dataset with targets")->required();
  ft->add_option("--task", ft_task, "auto, classification or regression")
      ->check(CLI::IsMember({"auto", "classification", "regression"}));
  ft->add_option("--log", ft_log, "Run-log CSV to append to");

  // probe
  auto* pr = app.add_subcommand("probe", "Probe checkpoint embeddings");
  std::string pr_ckpt, pr_data, pr_kind = "linear", pr_metric = "auto", pr_log;
  pr->add_option("--ckpt", pr_ckpt, "Checkpoint")->required();
  pr->add_option("--data", pr_data, "Dataset")->required();
  pr->add_option("--kind", pr_kind, "linear, gbdt or tpp")->check(CLI::IsMember({"linear", "gbdt", "tpp"}));
  pr->add_option("--metric", pr_metric, "auto, mse, accuracy or roc_auc")
      ->check(CLI::IsMember({"auto", "mse", "accuracy", "roc_auc"}));
  pr->add_option("--log", pr_log, "Run-log CSV to append to");

  // analyze
  auto* an = app.add_subcommand("analyze", "Anisotropy and intrinsic dimension of embeddings");
  std::string an_ckpt, an_data, an_split = "test";
  an->add_option("--ckpt", an_ckpt, "Checkpoint")->required();
  an->add_option("--data", an_data, "Dataset")->required();
  an->add_option("--split", an_split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));

  // perturb
  auto* pb = app.add_subcommand("perturb", "Shuffle or drop events");
  std::string pb_data, pb_mode = "shuffle";
  double pb_p = 0.1;
  pb->add_option("--data", pb_data, "Dataset")->required();
  pb->add_option("--mode", pb_mode, "shuffle or dropout")->check(CLI::IsMember({"shuffle", "dropout"}));
  pb->add_option("--p", pb_p, "Dropout probability");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run every stage under a fresh run directory");
  std::string pl_methods, pl_dataset, pl_resume;
  std::vector<std::uint64_t> pl_seeds;
  pl->add_option("--methods", pl_methods, "Comma-separated methods or 'all'");
  pl->add_option("--method", pl_methods, "Single method");
  pl->add_option("--dataset", pl_dataset, "Dataset path (default: generated pendulum)");
  pl->add_option("--seeds", pl_seeds, "Training seeds");
  pl->add_option("--resume", pl_resume, "Existing run directory to resume");

  // report
  auto* rp = app.add_subcommand("report", "Merge metric CSVs and print a summary table");
  std::vector<std::string> rp_inputs;
  rp->add_option("inputs", rp_inputs, "metrics CSV files")->required();

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    const json cfg = read_config(g);
    if (*gen) {
      const std::string out = g.out.empty() ? "pendulum.jsonl" : g.out;
      PendulumDatasetConfig pc;
      pc.hawkes.horizon = horizon;
      const Dataset d = generate_pendulum_dataset(gen_n, g.seed, pc);
      ensure_parent(out);
      save_dataset(out, d);
      const json echo{{"n", gen_n}, {"seed", g.seed}, {"horizon", horizon}};
      std::cout << "wrote " << d.size() << " sequences to " << out << " (schema " << schema_path_for(out)
                << "), mean length " << d.mean_length() << ", config_hash " << eval::config_hash(echo) << "\n";
    } else if (*pre) {
      if (g.out.empty()) throw DataError("preprocess needs --out");
      if (cfg.contains("preprocess")) pcfg = preprocess_config_from_json(cfg.at("preprocess"));
      if (norm_mode != "none") {
        pcfg.normalize_time = true;
        pcfg.time_mode = norm_mode == "global" ? TimeNormalization::kGlobal : TimeNormalization::kPerSequence;
      }
      SplitRatios r;
      if (std::sscanf(split_spec.c_str(), "%lf,%lf,%lf", &r.train, &r.val, &r.test) != 3)
        throw DataError("--split expects three comma-separated ratios");
      const Dataset d = assign_splits(preprocess(load(pre_data), pcfg), r, g.seed);
      ensure_parent(g.out);
      save_dataset(g.out, d);
      std::cout << "wrote " << d.size() << " sequences to " << g.out << ", mean length " << d.mean_length() << "\n";
    } else if (*pt) {
      const Method m = method_from_string(pt_method);
      const ModelConfig mc = model_config(cfg);
      const TrainConfig tc = train_config(cfg, g);
      const Dataset d = load(pt_data);
      const DatasetSplit sp = splits_of(d, g.seed);
      std::optional<Checkpoint> con;
      if (m == Method::kMlem) {
        if (pt_contrastive.empty()) throw DataError("mlem needs --contrastive-ckpt");
        con = load_checkpoint(pt_contrastive);
      }
      const json resolved{{"command", "pretrain"}, {"method", pt_method}, {"data", pt_data}, {"seed", g.seed},
                          {"model", to_json(mc)}, {"train", to_json(tc)},
                          {"contrastive", con ? con->config_hash : std::string()}};
      const std::string hash = eval::config_hash(resolved);
      Checkpoint c = pretrain(m, sp.train, &sp.val, mc, tc, g.seed, con ? &*con : nullptr,
                              [&](int epoch, const StepStats& st) {
                                std::cerr << pt_method << " epoch " << epoch + 1 << " loss " << st.loss << "\n";
                              });
      c.config_hash = hash;
      const std::string out = g.out.empty() ? pt_method + "-seed" + std::to_string(g.seed) + ".ckpt" : g.out;
      ensure_parent(out);
      save_checkpoint(out, c);
      const std::string run_id = make_run_id(hash);
      std::vector<eval::MetricRecord> recs;
      for (const auto& [key, series] : c.history.items())
        if (series.is_array() && !series.empty() && series.back().is_number())
          recs.push_back({run_id, pt_method, dataset_name(pt_data), g.seed, key + "_final", series.back().get<double>()});
      append_run_log(pt_log.empty() ? default_log(out) : pt_log, recs);
      std::cout << "saved " << out << " after " << c.steps << " steps (run " << run_id << ")\n";
    } else if (*ft) {
      const Task task = ft_task == "classification" ? Task::kClassification
                        : ft_task == "regression"   ? Task::kRegression
                                                    : Task::kAuto;
      const Checkpoint pre_ckpt = load_checkpoint(ft_ckpt);
      const Dataset d = load(ft_data);
      const DatasetSplit sp = splits_of(d, g.seed);
      const TrainConfig tc = train_config(cfg, g);
      const json resolved{{"command", "finetune"}, {"ckpt", pre_ckpt.config_hash}, {"data", ft_data}, {"seed", g.seed},
                          {"task", ft_task}, {"train", to_json(tc)}};
      const std::string hash = eval::config_hash(resolved);
      FinetuneResult r = finetune(pre_ckpt, sp.train, sp.test, tc, g.seed, task);
      r.checkpoint.config_hash = hash;
      const std::string out = g.out.empty() ? "finetuned-seed" + std::to_string(g.seed) + ".ckpt" : g.out;
      ensure_parent(out);
      save_checkpoint(out, r.checkpoint);
      const std::string run_id = make_run_id(hash);
      append_run_log(ft_log.empty() ? default_log(out) : ft_log,
                     {{run_id, to_string(pre_ckpt.method), dataset_name(ft_data), g.seed, "finetune_" + r.metric_name, r.metric}});
      std::cout << "finetune " << r.metric_name << " = " << r.metric << " (saved " << out << ")\n";
    } else if (*pr) {
      const Checkpoint c = load_checkpoint(pr_ckpt);
      const Dataset d = load(pr_data);
      const DatasetSplit sp = splits_of(d, g.seed);
      eval::ProbeResult r;
      if (pr_kind == "tpp") {
        r = eval::tpp_probe(c, sp.train, sp.test);
      } else {
        const auto etr = eval::extract_embeddings(c, sp.train), ete = eval::extract_embeddings(c, sp.test);
        const eval::Metric metric = eval::metric_from_string(pr_metric);
        r = pr_kind == "linear" ? eval::linear_probe(etr, ete, d.schema.target_kind, d.schema.num_classes, metric)
                                : eval::nonlinear_probe(etr, ete, d.schema.target_kind, d.schema.num_classes, metric);
      }
      const std::string name = (pr_kind == "tpp" ? "tpp_" : pr_kind + "_probe_") + eval::to_string(r.metric);
      const std::string hash = eval::config_hash(
          json{{"command", "probe"}, {"ckpt", c.config_hash}, {"data", pr_data}, {"kind", pr_kind}, {"seed", g.seed}});
      if (!pr_log.empty() || !g.out.empty())
        append_run_log(pr_log.empty() ? g.out : pr_log,
                       {{make_run_id(hash), to_string(c.method), dataset_name(pr_data), c.seed, name, r.value}});
      std::cout << name << " = " << r.value << "\n";
    } else if (*an) {
      const Checkpoint c = load_checkpoint(an_ckpt);
      const Dataset d = load(an_data);
      const DatasetSplit sp = splits_of(d, g.seed);
      const Dataset& part = an_split == "train" ? sp.train : an_split == "test" ? sp.test : d;
      const auto e = eval::extract_embeddings(c, part);
      const auto id = eval::intrinsic_dimension(e.H);
      std::cout << "anisotropy " << eval::anisotropy(e.H) << "\nanisotropy_uncentered " << eval::anisotropy(e.H, false)
                << "\nintrinsic_dimension " << id.dimension << " (" << id.points_used << " distinct points)\n";
      if (!g.out.empty()) {
        ensure_parent(g.out);
        eval::write_embeddings_csv(g.out + ".csv", e, c.config_hash);
        eval::write_embeddings_binary(g.out + ".f32", e, c.config_hash);
        std::cout << "exported embeddings to " << g.out << ".csv and " << g.out << ".f32\n";
      }
    } else if (*pb) {
      if (g.out.empty()) throw DataError("perturb needs --out");
      Rng rng(g.seed);
      const Dataset d = load(pb_data);
      const Dataset p = pb_mode == "shuffle" ? eval::perturb_shuffle(d, rng) : eval::perturb_dropout(d, pb_p, rng);
      ensure_parent(g.out);
      save_dataset(g.out, p);
      std::cout << "wrote " << p.size() << " sequences to " << g.out << ", mean length " << p.mean_length() << "\n";
    } else if (*pl) {
      PipelineConfig pc = pipeline_config_from_json(cfg);
      if (!pl_methods.empty()) {
        pc.methods.clear();
        if (pl_methods == "all") {
          pc.methods = {Method::kContrastive, Method::kGenerative, Method::kNaive, Method::kMlem};
        } else {
          std::stringstream ss(pl_methods);
          for (std::string tok; std::getline(ss, tok, ',');) pc.methods.push_back(method_from_string(tok));
        }
      }
      if (!pl_dataset.empty()) {
        pc.dataset_path = pl_dataset;
        pc.dataset_name = dataset_name(pl_dataset);
      }
      if (!pl_seeds.empty()) pc.train.seeds = pl_seeds;
      else if (g.seed_set) pc.train.seeds = {g.seed};
      if (g.deterministic) pc.train.deterministic = true;
      pc.jobs = g.jobs;
      const PipelineResult r = run_pipeline(pc, g.out.empty() ? "." : g.out, pl_resume, &std::cerr);
      std::cout << r.report.table() << "\nrun directory: " << r.run_dir << "\n";
    } else if (*rp) {
      eval::MetricsReport merged;
      for (const auto& path : rp_inputs) merged.merge(eval::MetricsReport::read_csv(path));
      if (!g.out.empty()) merged.write_csv(g.out);
      std::cout << merged.table();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
