#pragma once

#include "evs/eval/perturb.hpp"

#include <nlohmann/json.hpp>

namespace evs::eval {

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct MetricRecord {
  std::string run_id;
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct MetricSummary {
  std::string method;
  std::string dataset;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds
  std::size_t seeds = 0;
};

class MetricsReport {
 public:
  void add(MetricRecord r) { records_.push_back(std::move(r)); }
  void add_robustness(RobustnessRow r) { robustness_.push_back(std::move(r)); }
  void merge(const MetricsReport& other);

  const std::vector<MetricRecord>& records() const { return records_; }
  const std::vector<RobustnessRow>& robustness() const { return robustness_; }

  /// Mean and spread over seeds per (method, dataset, metric), sorted by key.
  std::vector<MetricSummary> summarize() const;

  /// Columns: run_id, method, dataset, seed, metric, value.
  void write_csv(const std::string& path) const;
  static MetricsReport read_csv(const std::string& path);

  /// Columns: run_id, method, perturbation, p, metric, mean_change_pct, std_change_pct.
  void write_robustness_csv(const std::string& path, const std::string& run_id) const;

  std::string table() const;

 private:
  std::vector<MetricRecord> records_;
  std::vector<RobustnessRow> robustness_;
};

/// Header `id,target,h_0,...`, preceded by a `# config_hash=` comment line.
void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& e, const std::string& hash);

/// Row-major float32 matrix at `path` plus a JSON sidecar `path + ".json"` with shape and ids.
void write_embeddings_binary(const std::string& path, const EmbeddingMatrix& e, const std::string& hash);

/// Writes `contents` to a temporary sibling, then renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace evs::eval
