#pragma once

#include "evs/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evs {

/// Raised for malformed inputs: bad records, broken invariants, bad arguments.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TargetKind { kNone, kBinary, kMulticlass, kRegression };

std::string to_string(TargetKind kind);
TargetKind target_kind_from_string(const std::string& s);

/// Code 0 is padding in every categorical feature; real codes are 1..vocab_size-1.
inline constexpr int kPaddingCode = 0;

struct CategoricalFeature {
  std::string name;
  int vocab_size = 2;
  /// 0 means "use the encoder's feature width".
  int embed_dim = 0;
  /// Optional string labels; label i maps to code i + 1.
  std::vector<std::string> vocab;
  /// Reserved code for consolidated rare values, or -1 if none was assigned.
  int rare_code = -1;
};

struct NumericFeature {
  std::string name;
};

struct FeatureSchema {
  std::vector<CategoricalFeature> categorical;
  std::vector<NumericFeature> numeric;
  std::string time_unit = "s";
  TargetKind target_kind = TargetKind::kNone;
  int num_classes = 0;

  /// Throws DataError if names collide, a vocab is smaller than 2, or widths are negative.
  void validate() const;
  std::size_t num_features() const { return categorical.size() + numeric.size(); }
  bool operator==(const FeatureSchema&) const;
};

nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);

struct EventSequence {
  std::string id;
  std::vector<double> times;
  /// cat[f][j] is the code of categorical feature f at event j.
  std::vector<std::vector<std::int32_t>> cat;
  /// num[f][j]; NaN marks a missing measurement.
  std::vector<std::vector<double>> num;
  std::optional<double> target;

  std::size_t size() const { return times.size(); }
};

enum class SplitTag : std::uint8_t { kTrain, kVal, kTest };

std::string to_string(SplitTag tag);

struct Dataset {
  FeatureSchema schema;
  std::vector<EventSequence> sequences;
  /// Empty, or one tag per sequence.
  std::vector<SplitTag> split_tags;

  std::size_t size() const { return sequences.size(); }
  double mean_length() const;
};

/// Checks one sequence against the schema. `require_ascending` is off for perturbed data.
void validate_sequence(const EventSequence& seq, const FeatureSchema& schema,
                       bool require_ascending = true);

std::string schema_path_for(const std::string& data_path);

FeatureSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const FeatureSchema& schema);

/// Reads JSON-lines; one sequence per line. Errors carry the line number or sequence id.
Dataset load_dataset(const std::string& path, const FeatureSchema& schema);
/// Also writes the schema sidecar at `schema_path_for(path)`.
void save_dataset(const std::string& path, const Dataset& dataset);

nlohmann::json sequence_to_json(const EventSequence& seq, const FeatureSchema& schema);
EventSequence sequence_from_json(const nlohmann::json& j, const FeatureSchema& schema);

/// Flat event table: header with `id`, `time`, optional `target`, and one column per feature.
/// Categorical cells are either schema vocabulary labels or integer codes.
/// Rows are grouped by id (first-appearance order) and stably sorted by time.
Dataset import_csv(const std::string& path, const FeatureSchema& schema);

Dataset consolidate_rare_categories(const Dataset& dataset, std::size_t min_count = 500);

enum class TimeNormalization { kPerSequence, kGlobal };

/// Affine map of timestamps onto [0, 1]. Degenerate spans map to 0.
Dataset normalize_time(const Dataset& dataset,
                       TimeNormalization mode = TimeNormalization::kPerSequence);

/// Keeps the `max_events` most recent events of every sequence.
Dataset truncate_recent(const Dataset& dataset, std::size_t max_events);

/// Buckets events into windows of `window` time units counted from each sequence's first
/// event. Numeric features are averaged over present (non-NaN) values, `missing_fill` when
/// absent; categorical features take the window's last value. Empty windows emit nothing.
Dataset aggregate_intervals(const Dataset& dataset, double window = 360.0,
                            double missing_fill = -1.0);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Assigns split tags. Existing test tags are kept and only train/val are redrawn.
Dataset assign_splits(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

DatasetSplit split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

/// Partitions by existing tags; throws if the dataset carries none.
DatasetSplit partition_by_tags(const Dataset& dataset);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

/// B sequences left-aligned into a common length T. All matrices are B x T.
struct PaddedBatch {
  Eigen::Index batch_size = 0;
  Eigen::Index max_len = 0;
  std::vector<Eigen::Index> lengths;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  MatXd times;
  MatXd dt;
  std::vector<Eigen::ArrayXXi> cat;
  std::vector<MatXd> num;
  std::vector<std::string> ids;
  std::vector<std::optional<double>> targets;

  Eigen::Index valid_count() const { return mask.count(); }
};

PaddedBatch pad_batch(std::span<const EventSequence* const> sequences);
PaddedBatch pad_batch(std::span<const EventSequence> sequences);

/// Inverse of pad_batch.
std::vector<EventSequence> unpad(const PaddedBatch& batch);

}  // namespace evs
