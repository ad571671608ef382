#pragma once

#include "evs/eval/report.hpp"
#include "evs/synthgen.hpp"
#include "evs/training.hpp"

#include <ostream>

namespace evs {

struct PreprocessConfig {
  std::size_t rare_min_count = 0;     // 0: keep every category
  double aggregate_window = 0.0;      // 0: no interval aggregation
  double missing_fill = -1.0;
  std::size_t truncate = 200;         // 0: keep all events
  bool normalize_time = false;
  TimeNormalization time_mode = TimeNormalization::kPerSequence;
};

nlohmann::json to_json(const PreprocessConfig& c);
PreprocessConfig preprocess_config_from_json(const nlohmann::json& j);

/// Aggregation, rare-category consolidation, truncation and time normalization, in that order.
Dataset preprocess(const Dataset& dataset, const PreprocessConfig& cfg);

struct EvaluationConfig {
  bool linear_probe = true;
  bool nonlinear_probe = false;
  bool tpp = true;
  bool geometry = true;
  bool robustness = true;
  bool finetune = false;
  bool random_baseline = true;
  bool export_embeddings = true;
  std::vector<double> dropout_grid = eval::kDropoutGrid;
};

struct PipelineConfig {
  std::string dataset_path;  // empty: generate the pendulum dataset
  std::string dataset_name = "pendulum";
  std::size_t generate_n = 10000;
  std::uint64_t data_seed = 0;
  double horizon = 7.0;
  PreprocessConfig preprocess;
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
  std::vector<Method> methods{Method::kContrastive, Method::kGenerative, Method::kNaive, Method::kMlem};
  ModelConfig model;
  TrainConfig train;
  EvaluationConfig evaluation;
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Raised when a pipeline stage fails; the message names the stage and seed.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, std::uint64_t seed, const std::string& what)
      : std::runtime_error("stage '" + stage + "' (seed " + std::to_string(seed) + ") failed: " + what),
        stage_(stage),
        seed_(seed) {}
  const std::string& stage() const { return stage_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::string stage_;
  std::uint64_t seed_;
};

/// Resolved configuration hash: everything that influences results, excluding `jobs`.
std::string pipeline_hash(const PipelineConfig& c);

std::string make_run_id(const std::string& hash);

/// Loads the configured dataset (or generates it), preprocesses it and tags the test split.
Dataset prepare_dataset(const PipelineConfig& c);

/// Train/val are redrawn per seed; the test split is the one tagged by `prepare_dataset`.
DatasetSplit split_for_seed(const Dataset& tagged, const PipelineConfig& c, std::uint64_t seed);

struct PipelineResult {
  std::string run_dir;
  std::string run_id;
  eval::MetricsReport report;
};

/// Runs every stage under `<out_root>/runs/<timestamp>-<hash>/`. With a non-empty
/// `resume_dir`, the configuration stored there is reused and finished checkpoints are loaded
/// instead of retrained.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_root,
                            const std::string& resume_dir = "", std::ostream* log = nullptr);

/// Appends records to a run-log CSV, writing the header when the file is new.
void append_run_log(const std::string& path, const std::vector<eval::MetricRecord>& records);

}  // namespace evs
