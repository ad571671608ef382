#include "evs/eval/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace evs::eval {

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw DataError("write failed for '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

void MetricsReport::merge(const MetricsReport& other) {
  records_.insert(records_.end(), other.records_.begin(), other.records_.end());
  robustness_.insert(robustness_.end(), other.robustness_.begin(), other.robustness_.end());
}

std::vector<MetricSummary> MetricsReport::summarize() const {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : records_) groups[{r.method, r.dataset, r.metric}].push_back(r.value);
  std::vector<MetricSummary> out;
  for (const auto& [key, values] : groups) {
    MetricSummary s;
    std::tie(s.method, s.dataset, s.metric) = key;
    s.seeds = values.size();
    const double n = static_cast<double>(values.size());
    for (double v : values) s.mean += v / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    out.push_back(s);
  }
  return out;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void MetricsReport::write_csv(const std::string& path) const {
  std::ostringstream os;
  os << "run_id,method,dataset,seed,metric,value\n";
  for (const auto& r : records_)
    os << r.run_id << ',' << r.method << ',' << r.dataset << ',' << r.seed << ',' << r.metric << ',' << fmt(r.value)
       << '\n';
  write_file_atomic(path, os.str());
}

MetricsReport MetricsReport::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (split_csv_line(line) != std::vector<std::string>{"run_id", "method", "dataset", "seed", "metric", "value"})
    throw DataError("'" + path + "' is not a metrics report");
  MetricsReport rep;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw DataError(path + ":" + std::to_string(lineno) + ": expected 6 columns");
    try {
      rep.add({f[0], f[1], f[2], std::stoull(f[3]), f[4], std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rep;
}

void MetricsReport::write_robustness_csv(const std::string& path, const std::string& run_id) const {
  std::ostringstream os;
  os << "run_id,method,perturbation,p,metric,mean_change_pct,std_change_pct\n";
  for (const auto& r : robustness_)
    os << run_id << ',' << r.method << ',' << r.perturbation << ',' << fmt(r.p) << ',' << to_string(r.metric) << ','
       << fmt(r.mean_change) << ',' << fmt(r.std_change) << '\n';
  write_file_atomic(path, os.str());
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "method" << std::setw(16) << "dataset" << std::setw(22) << "metric"
     << "mean +- std (seeds)\n";
  for (const auto& s : summarize())
    os << std::left << std::setw(14) << s.method << std::setw(16) << s.dataset << std::setw(22) << s.metric
       << std::fixed << std::setprecision(4) << s.mean << " +- " << s.std << " (" << s.seeds << ")\n"
       << std::defaultfloat;
  if (!robustness_.empty()) {
    os << "\n"
       << std::left << std::setw(14) << "method" << std::setw(14) << "perturbation" << std::setw(8) << "p"
       << "change % mean +- std\n";
    for (const auto& r : robustness_)
      os << std::left << std::setw(14) << r.method << std::setw(14) << r.perturbation << std::setw(8) << r.p
         << std::fixed << std::setprecision(2) << r.mean_change << " +- " << r.std_change << "\n"
         << std::defaultfloat;
  }
  return os.str();
}

void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& e, const std::string& hash) {
  std::ostringstream os;
  os << "# config_hash=" << hash << "\n" << "id,target";
  for (Eigen::Index j = 0; j < e.H.cols(); ++j) os << ",h_" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < e.H.rows(); ++i) {
    os << e.ids[static_cast<std::size_t>(i)] << ',';
    if (std::isfinite(e.targets(i))) os << fmt(e.targets(i));
    for (Eigen::Index j = 0; j < e.H.cols(); ++j) os << ',' << fmt(e.H(i, j));
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

void write_embeddings_binary(const std::string& path, const EmbeddingMatrix& e, const std::string& hash) {
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = e.H.cast<float>();
  write_file_atomic(path, std::string(reinterpret_cast<const char*>(rm.data()), rm.size() * sizeof(float)));
  nlohmann::json side{{"rows", e.H.rows()}, {"cols", e.H.cols()}, {"dtype", "float32"}, {"order", "row-major"},
                      {"config_hash", hash},  {"ids", e.ids}};
  std::vector<nlohmann::json> targets;
  for (Eigen::Index i = 0; i < e.targets.size(); ++i)
    targets.push_back(std::isfinite(e.targets(i)) ? nlohmann::json(e.targets(i)) : nlohmann::json(nullptr));
  side["targets"] = targets;
  write_file_atomic(path + ".json", side.dump(2) + "\n");
}

}  // namespace evs::eval
