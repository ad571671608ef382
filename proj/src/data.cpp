#include "evs/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace evs {

using nlohmann::json;

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kNone: return "none";
    case TargetKind::kBinary: return "binary";
    case TargetKind::kMulticlass: return "multiclass";
    case TargetKind::kRegression: return "regression";
  }
  return "none";
}

TargetKind target_kind_from_string(const std::string& s) {
  if (s == "none") return TargetKind::kNone;
  if (s == "binary") return TargetKind::kBinary;
  if (s == "multiclass") return TargetKind::kMulticlass;
  if (s == "regression") return TargetKind::kRegression;
  throw DataError("unknown target_kind '" + s + "'");
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  return "train";
}

static SplitTag split_tag_from_string(const std::string& s) {
  if (s == "train") return SplitTag::kTrain;
  if (s == "val") return SplitTag::kVal;
  if (s == "test") return SplitTag::kTest;
  throw DataError("unknown split tag '" + s + "'");
}

void FeatureSchema::validate() const {
  std::set<std::string> names;
  for (const auto& c : categorical) {
    if (!names.insert(c.name).second) throw DataError("duplicate feature name '" + c.name + "'");
    if (c.vocab_size < 2) throw DataError("feature '" + c.name + "': vocab_size must be >= 2");
    if (c.embed_dim < 0) throw DataError("feature '" + c.name + "': embed_dim must be positive");
    if (!c.vocab.empty() && static_cast<int>(c.vocab.size()) + 1 > c.vocab_size)
      throw DataError("feature '" + c.name + "': vocabulary larger than vocab_size");
    if (c.rare_code == 0 || c.rare_code >= c.vocab_size)
      throw DataError("feature '" + c.name + "': rare_code out of range");
  }
  for (const auto& n : numeric) {
    if (!names.insert(n.name).second) throw DataError("duplicate feature name '" + n.name + "'");
  }
  if (target_kind == TargetKind::kMulticlass && num_classes < 2)
    throw DataError("multiclass target needs num_classes >= 2");
}

bool FeatureSchema::operator==(const FeatureSchema& o) const {
  return schema_to_json(*this) == schema_to_json(o);
}

json schema_to_json(const FeatureSchema& schema) {
  json j;
  j["categorical"] = json::array();
  for (const auto& c : schema.categorical) {
    json f{{"name", c.name}, {"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim}};
    if (!c.vocab.empty()) f["vocab"] = c.vocab;
    if (c.rare_code >= 0) f["rare_code"] = c.rare_code;
    j["categorical"].push_back(f);
  }
  j["numeric"] = json::array();
  for (const auto& n : schema.numeric) j["numeric"].push_back(json{{"name", n.name}});
  j["time_unit"] = schema.time_unit;
  j["target_kind"] = to_string(schema.target_kind);
  if (schema.target_kind == TargetKind::kMulticlass) j["num_classes"] = schema.num_classes;
  return j;
}

FeatureSchema schema_from_json(const json& j) {
  FeatureSchema s;
  try {
    for (const auto& f : j.value("categorical", json::array())) {
      CategoricalFeature c;
      c.name = f.at("name").get<std::string>();
      c.vocab = f.value("vocab", std::vector<std::string>{});
      c.vocab_size = f.value("vocab_size", static_cast<int>(c.vocab.size()) + 1);
      c.embed_dim = f.value("embed_dim", 0);
      c.rare_code = f.value("rare_code", -1);
      s.categorical.push_back(std::move(c));
    }
    for (const auto& f : j.value("numeric", json::array())) {
      s.numeric.push_back({f.is_string() ? f.get<std::string>() : f.at("name").get<std::string>()});
    }
    s.time_unit = j.value("time_unit", std::string("s"));
    s.target_kind = target_kind_from_string(j.value("target_kind", std::string("none")));
    s.num_classes = j.value("num_classes", s.target_kind == TargetKind::kBinary ? 2 : 0);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

double Dataset::mean_length() const {
  if (sequences.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : sequences) total += static_cast<double>(s.size());
  return total / static_cast<double>(sequences.size());
}

void validate_sequence(const EventSequence& seq, const FeatureSchema& schema,
                       bool require_ascending) {
  const std::size_t n = seq.times.size();
  if (n == 0) throw DataError("sequence '" + seq.id + "' has no events");
  if (seq.cat.size() != schema.categorical.size() || seq.num.size() != schema.numeric.size())
    throw DataError("sequence '" + seq.id + "' does not match the schema's feature count");
  for (std::size_t f = 0; f < seq.cat.size(); ++f) {
    if (seq.cat[f].size() != n)
      throw DataError("sequence '" + seq.id + "': column '" + schema.categorical[f].name +
                      "' length differs from times");
    for (auto code : seq.cat[f]) {
      if (code <= kPaddingCode || code >= schema.categorical[f].vocab_size)
        throw DataError("sequence '" + seq.id + "': code " + std::to_string(code) +
                        " out of vocab for '" + schema.categorical[f].name + "'");
    }
  }
  for (std::size_t f = 0; f < seq.num.size(); ++f) {
    if (seq.num[f].size() != n)
      throw DataError("sequence '" + seq.id + "': column '" + schema.numeric[f].name +
                      "' length differs from times");
  }
  if (require_ascending) {
    for (std::size_t j = 1; j < n; ++j) {
      if (seq.times[j] < seq.times[j - 1])
        throw DataError("sequence '" + seq.id + "': timestamps not ascending at event " +
                        std::to_string(j));
    }
  }
}

std::string schema_path_for(const std::string& data_path) {
  const std::string ext = ".jsonl";
  if (data_path.size() > ext.size() &&
      data_path.compare(data_path.size() - ext.size(), ext.size(), ext) == 0)
    return data_path.substr(0, data_path.size() - ext.size()) + ".schema.json";
  return data_path + ".schema.json";
}

FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed schema file '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

void save_schema(const std::string& path, const FeatureSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write schema file '" + path + "'");
  out << schema_to_json(schema).dump(2) << "\n";
}

json sequence_to_json(const EventSequence& seq, const FeatureSchema& schema) {
  json j;
  j["id"] = seq.id;
  j["t"] = seq.times;
  j["cat"] = json::object();
  for (std::size_t f = 0; f < schema.categorical.size(); ++f)
    j["cat"][schema.categorical[f].name] = seq.cat[f];
  j["num"] = json::object();
  for (std::size_t f = 0; f < schema.numeric.size(); ++f) {
    json col = json::array();
    for (double v : seq.num[f]) {
      if (std::isnan(v))
        col.push_back(nullptr);
      else
        col.push_back(v);
    }
    j["num"][schema.numeric[f].name] = std::move(col);
  }
  j["target"] = seq.target ? json(*seq.target) : json(nullptr);
  return j;
}

EventSequence sequence_from_json(const json& j, const FeatureSchema& schema) {
  EventSequence seq;
  seq.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  seq.times = j.at("t").get<std::vector<double>>();
  const json empty = json::object();
  const json& cat = j.contains("cat") ? j.at("cat") : empty;
  const json& num = j.contains("num") ? j.at("num") : empty;
  for (const auto& c : schema.categorical) {
    if (!cat.contains(c.name)) throw DataError("missing categorical column '" + c.name + "'");
    std::vector<std::int32_t> codes;
    for (const auto& v : cat.at(c.name)) {
      if (v.is_string()) {
        auto it = std::find(c.vocab.begin(), c.vocab.end(), v.get<std::string>());
        if (it != c.vocab.end())
          codes.push_back(static_cast<std::int32_t>(it - c.vocab.begin()) + 1);
        else if (c.rare_code > 0)
          codes.push_back(c.rare_code);
        else
          throw DataError("unknown category '" + v.get<std::string>() + "' for '" + c.name + "'");
      } else {
        codes.push_back(v.get<std::int32_t>());
      }
    }
    seq.cat.push_back(std::move(codes));
  }
  for (const auto& n : schema.numeric) {
    if (!num.contains(n.name)) throw DataError("missing numeric column '" + n.name + "'");
    std::vector<double> values;
    for (const auto& v : num.at(n.name))
      values.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    seq.num.push_back(std::move(values));
  }
  if (j.contains("target") && !j.at("target").is_null()) seq.target = j.at("target").get<double>();
  return seq;
}

Dataset load_dataset(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  schema.validate();
  Dataset ds;
  ds.schema = schema;
  std::string line;
  std::size_t line_no = 0;
  bool any_tag = false;
  std::vector<std::optional<SplitTag>> tags;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    EventSequence seq;
    try {
      json j = json::parse(line);
      seq = sequence_from_json(j, schema);
      if (j.contains("split")) {
        tags.emplace_back(split_tag_from_string(j.at("split").get<std::string>()));
        any_tag = true;
      } else {
        tags.emplace_back(std::nullopt);
      }
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    validate_sequence(seq, schema);
    ds.sequences.push_back(std::move(seq));
  }
  if (any_tag) {
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (!tags[i]) throw DataError("sequence '" + ds.sequences[i].id + "' has no split tag");
      ds.split_tags.push_back(*tags[i]);
    }
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    json j = sequence_to_json(dataset.sequences[i], dataset.schema);
    if (!dataset.split_tags.empty()) j["split"] = to_string(dataset.split_tags[i]);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
  save_schema(schema_path_for(path), dataset.schema);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

double parse_number(const std::string& s, std::size_t line_no) {
  if (s.empty() || s == "NA" || s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
}

}  // namespace

Dataset import_csv(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv '" + path + "'");
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) return Dataset{schema, {}, {}};
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  if (!col.count("id") || !col.count("time")) throw DataError("csv header needs 'id' and 'time'");
  for (const auto& c : schema.categorical)
    if (!col.count(c.name)) throw DataError("csv lacks column '" + c.name + "'");
  for (const auto& n : schema.numeric)
    if (!col.count(n.name)) throw DataError("csv lacks column '" + n.name + "'");
  const bool has_target = col.count("target") > 0;

  struct Row {
    double time;
    std::vector<std::int32_t> cat;
    std::vector<double> num;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::pair<std::vector<Row>, std::optional<double>>> groups;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record (expected " +
                      std::to_string(header.size()) + " cells)");
    Row row;
    row.time = parse_number(cells[col["time"]], line_no);
    if (std::isnan(row.time)) throw DataError(path + ":" + std::to_string(line_no) + ": missing time");
    for (const auto& c : schema.categorical) {
      const std::string& cell = cells[col[c.name]];
      auto it = std::find(c.vocab.begin(), c.vocab.end(), cell);
      std::int32_t code = 0;
      const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), code);
      const bool integer = ec == std::errc() && end == cell.data() + cell.size() && !cell.empty();
      if (it != c.vocab.end()) {
        code = static_cast<std::int32_t>(it - c.vocab.begin()) + 1;
      } else if (integer) {
      } else if (c.vocab.empty()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": categorical cell '" + cell +
                        "' is not an integer code");
      } else if (c.rare_code > 0) {
        code = c.rare_code;
      } else {
        throw DataError(path + ":" + std::to_string(line_no) + ": unknown category '" + cell +
                        "' for '" + c.name + "'");
      }
      row.cat.push_back(code);
    }
    for (const auto& n : schema.numeric) row.num.push_back(parse_number(cells[col[n.name]], line_no));
    const std::string& id = cells[col["id"]];
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted) order.push_back(id);
    if (has_target && !cells[col["target"]].empty() && !it->second.second)
      it->second.second = parse_number(cells[col["target"]], line_no);
    it->second.first.push_back(std::move(row));
  }

  Dataset ds;
  ds.schema = schema;
  for (const auto& id : order) {
    auto& [rows, target] = groups[id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    EventSequence seq;
    seq.id = id;
    seq.target = target;
    seq.cat.resize(schema.categorical.size());
    seq.num.resize(schema.numeric.size());
    for (const auto& r : rows) {
      seq.times.push_back(r.time);
      for (std::size_t f = 0; f < r.cat.size(); ++f) seq.cat[f].push_back(r.cat[f]);
      for (std::size_t f = 0; f < r.num.size(); ++f) seq.num[f].push_back(r.num[f]);
    }
    validate_sequence(seq, schema);
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

Dataset consolidate_rare_categories(const Dataset& dataset, std::size_t min_count) {
  Dataset out = dataset;
  for (std::size_t f = 0; f < dataset.schema.categorical.size(); ++f) {
    const auto& feat = dataset.schema.categorical[f];
    std::vector<std::size_t> counts(static_cast<std::size_t>(feat.vocab_size), 0);
    for (const auto& s : dataset.sequences)
      for (auto code : s.cat[f]) ++counts[static_cast<std::size_t>(code)];

    bool any_rare = false;
    for (int code = 1; code < feat.vocab_size; ++code) {
      if (code == feat.rare_code) continue;
      if (counts[code] > 0 && counts[code] < min_count) any_rare = true;
    }
    if (!any_rare) continue;

    // New layout: 0 padding, 1 RARE, then surviving codes in their old order.
    std::vector<std::int32_t> remap(static_cast<std::size_t>(feat.vocab_size), 1);
    remap[0] = kPaddingCode;
    CategoricalFeature nf = feat;
    nf.vocab.clear();
    nf.rare_code = 1;
    std::vector<std::string> labels{"<rare>"};
    std::int32_t next = 2;
    for (int code = 1; code < feat.vocab_size; ++code) {
      if (code == feat.rare_code) continue;
      if (counts[code] >= min_count) {
        remap[code] = next++;
        if (!feat.vocab.empty() && code - 1 < static_cast<int>(feat.vocab.size()))
          labels.push_back(feat.vocab[code - 1]);
      }
    }
    nf.vocab_size = next;
    if (!feat.vocab.empty()) nf.vocab = labels;
    out.schema.categorical[f] = nf;
    for (auto& s : out.sequences)
      for (auto& code : s.cat[f]) code = remap[static_cast<std::size_t>(code)];
  }
  return out;
}

Dataset normalize_time(const Dataset& dataset, TimeNormalization mode) {
  Dataset out = dataset;
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = -gmin;
  if (mode == TimeNormalization::kGlobal) {
    for (const auto& s : dataset.sequences) {
      for (double t : s.times) {
        gmin = std::min(gmin, t);
        gmax = std::max(gmax, t);
      }
    }
  }
  for (auto& s : out.sequences) {
    if (s.times.empty()) continue;
    double lo = gmin;
    double hi = gmax;
    if (mode == TimeNormalization::kPerSequence) {
      auto [mn, mx] = std::minmax_element(s.times.begin(), s.times.end());
      lo = *mn;
      hi = *mx;
    }
    const double span = hi - lo;
    for (double& t : s.times) t = span > 0.0 ? (t - lo) / span : 0.0;
  }
  return out;
}

Dataset truncate_recent(const Dataset& dataset, std::size_t max_events) {
  if (max_events < 1) throw DataError("truncate_recent: N must be >= 1");
  Dataset out = dataset;
  for (auto& s : out.sequences) {
    if (s.size() <= max_events) continue;
    const auto drop = static_cast<std::ptrdiff_t>(s.size() - max_events);
    s.times.erase(s.times.begin(), s.times.begin() + drop);
    for (auto& c : s.cat) c.erase(c.begin(), c.begin() + drop);
    for (auto& c : s.num) c.erase(c.begin(), c.begin() + drop);
  }
  return out;
}

Dataset aggregate_intervals(const Dataset& dataset, double window, double missing_fill) {
  if (!(window > 0.0)) throw DataError("aggregate_intervals: window must be positive");
  Dataset out = dataset;
  for (auto& s : out.sequences) {
    const EventSequence src = s;
    s.times.clear();
    for (auto& c : s.cat) c.clear();
    for (auto& c : s.num) c.clear();
    if (src.times.empty()) continue;
    const double t0 = src.times.front();
    std::size_t j = 0;
    while (j < src.size()) {
      const auto bucket = static_cast<long long>(std::floor((src.times[j] - t0) / window));
      std::size_t end = j;
      while (end < src.size() &&
             static_cast<long long>(std::floor((src.times[end] - t0) / window)) == bucket)
        ++end;
      s.times.push_back(t0 + static_cast<double>(bucket) * window);
      for (std::size_t f = 0; f < src.cat.size(); ++f) s.cat[f].push_back(src.cat[f][end - 1]);
      for (std::size_t f = 0; f < src.num.size(); ++f) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t k = j; k < end; ++k) {
          if (!std::isnan(src.num[f][k])) {
            sum += src.num[f][k];
            ++n;
          }
        }
        s.num[f].push_back(n > 0 ? sum / n : missing_fill);
      }
      j = end;
    }
  }
  return out;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.schema = dataset.schema;
  out.sequences.reserve(indices.size());
  for (auto i : indices) {
    out.sequences.push_back(dataset.sequences.at(i));
    if (!dataset.split_tags.empty()) out.split_tags.push_back(dataset.split_tags[i]);
  }
  return out;
}

Dataset assign_splits(const Dataset& dataset, const SplitRatios& r, std::uint64_t seed) {
  const bool has_test = !dataset.split_tags.empty() &&
                        std::any_of(dataset.split_tags.begin(), dataset.split_tags.end(),
                                    [](SplitTag t) { return t == SplitTag::kTest; });
  if (!(r.train > 0.0) || !(r.val >= 0.0) || !(r.test >= 0.0))
    throw DataError("split ratios must be positive");
  if (!has_test && std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    throw DataError("split ratios must sum to 1");
  if (has_test && r.train + r.val > 1.0 + 1e-9) throw DataError("split ratios invalid");

  Dataset out = dataset;
  std::vector<std::size_t> pool;
  out.split_tags.assign(dataset.size(), SplitTag::kTrain);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (has_test && dataset.split_tags[i] == SplitTag::kTest)
      out.split_tags[i] = SplitTag::kTest;
    else
      pool.push_back(i);
  }
  Rng rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const double n = static_cast<double>(pool.size());
  std::size_t n_test = 0;
  std::size_t n_val;
  if (has_test) {
    n_val = static_cast<std::size_t>(std::llround(n * r.val / (r.train + r.val)));
  } else {
    n_test = static_cast<std::size_t>(std::llround(n * r.test));
    n_val = static_cast<std::size_t>(std::llround(n * r.val));
  }
  n_val = std::min(n_val, pool.size() - std::min(n_test, pool.size()));
  for (std::size_t k = 0; k < pool.size(); ++k) {
    if (k < n_test)
      out.split_tags[pool[k]] = SplitTag::kTest;
    else if (k < n_test + n_val)
      out.split_tags[pool[k]] = SplitTag::kVal;
  }
  return out;
}

DatasetSplit partition_by_tags(const Dataset& dataset) {
  if (dataset.split_tags.size() != dataset.size())
    throw DataError("dataset carries no split tags");
  std::vector<std::size_t> idx[3];
  for (std::size_t i = 0; i < dataset.size(); ++i)
    idx[static_cast<int>(dataset.split_tags[i])].push_back(i);
  return {subset(dataset, idx[0]), subset(dataset, idx[1]), subset(dataset, idx[2])};
}

DatasetSplit split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  return partition_by_tags(assign_splits(dataset, ratios, seed));
}

PaddedBatch pad_batch(std::span<const EventSequence* const> sequences) {
  if (sequences.empty()) throw DataError("pad_batch: empty sequence list");
  PaddedBatch b;
  b.batch_size = static_cast<Eigen::Index>(sequences.size());
  for (const auto* s : sequences) b.max_len = std::max<Eigen::Index>(b.max_len, s->size());
  const Eigen::Index B = b.batch_size, T = b.max_len;
  const std::size_t n_cat = sequences.front()->cat.size();
  const std::size_t n_num = sequences.front()->num.size();
  b.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(B, T, false);
  b.times = MatXd::Zero(B, T);
  b.dt = MatXd::Zero(B, T);
  b.cat.assign(n_cat, Eigen::ArrayXXi::Zero(B, T));
  b.num.assign(n_num, MatXd::Zero(B, T));
  for (Eigen::Index i = 0; i < B; ++i) {
    const EventSequence& s = *sequences[static_cast<std::size_t>(i)];
    if (s.cat.size() != n_cat || s.num.size() != n_num)
      throw DataError("pad_batch: sequences disagree on feature count");
    const auto n = static_cast<Eigen::Index>(s.size());
    b.lengths.push_back(n);
    b.ids.push_back(s.id);
    b.targets.push_back(s.target);
    for (Eigen::Index j = 0; j < n; ++j) {
      b.mask(i, j) = true;
      b.times(i, j) = s.times[j];
      b.dt(i, j) = j == 0 ? 0.0 : s.times[j] - s.times[j - 1];
      for (std::size_t f = 0; f < n_cat; ++f) b.cat[f](i, j) = s.cat[f][j];
      for (std::size_t f = 0; f < n_num; ++f) b.num[f](i, j) = s.num[f][j];
    }
  }
  return b;
}

PaddedBatch pad_batch(std::span<const EventSequence> sequences) {
  std::vector<const EventSequence*> ptrs;
  ptrs.reserve(sequences.size());
  for (const auto& s : sequences) ptrs.push_back(&s);
  return pad_batch(std::span<const EventSequence* const>(ptrs));
}

std::vector<EventSequence> unpad(const PaddedBatch& b) {
  std::vector<EventSequence> out;
  for (Eigen::Index i = 0; i < b.batch_size; ++i) {
    EventSequence s;
    s.id = b.ids[i];
    s.target = b.targets[i];
    s.cat.resize(b.cat.size());
    s.num.resize(b.num.size());
    for (Eigen::Index j = 0; j < b.max_len && b.mask(i, j); ++j) {
      s.times.push_back(b.times(i, j));
      for (std::size_t f = 0; f < b.cat.size(); ++f) s.cat[f].push_back(b.cat[f](i, j));
      for (std::size_t f = 0; f < b.num.size(); ++f) s.num[f].push_back(b.num[f](i, j));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace evs
