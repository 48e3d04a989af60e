#pragma once

// CSV writers. Floats use "%.17g" in the C locale, rows end with '\n', and
// absent optional values are empty cells.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedrough/data.hpp"
#include "fedrough/errors.hpp"
#include "fedrough/harness.hpp"

namespace fedrough::csv {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline constexpr const char* kMetricsHeader =
    "round,test_accuracy,test_loss,mean_drift_sq,mean_ri,grad_norm_sq,wall_seconds";

inline std::string metrics_csv(const std::vector<RoundMetrics>& rows) {
  std::string out = std::string(kMetricsHeader) + '\n';
  for (const auto& m : rows) {
    out += std::to_string(m.round);
    out += ',' + cell(m.test_accuracy);
    out += ',' + cell(m.test_loss);
    out += ',' + format_double(m.mean_drift_sq);
    out += ',' + cell(m.mean_ri);
    out += ',' + cell(m.grad_norm_sq);
    out += ',' + cell(m.wall_seconds);
    out += '\n';
  }
  return out;
}

/// One row per (round, client) with that round's mean and population std of I_k.
inline std::string ri_trace_csv(const std::vector<RoundMetrics>& rows) {
  std::string out = "round,client_id,n_k,ri,round_mean_ri,round_std_ri\n";
  for (const auto& m : rows) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& c : m.clients)
      if (c.ri) {
        sum += *c.ri;
        ++count;
      }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& c : m.clients)
      if (c.ri) ss += (*c.ri - mean) * (*c.ri - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    for (const auto& c : m.clients) {
      if (!c.ri) continue;
      out += std::to_string(m.round) + ',' + std::to_string(c.client_id) + ',' + std::to_string(c.n_k) + ',' +
             format_double(*c.ri) + ',' + format_double(mean) + ',' + format_double(sd) + '\n';
    }
  }
  return out;
}

inline std::string partition_stats_csv(const Dataset& ds, const std::vector<ClientShard>& shards) {
  std::string out = "client_id,n_k";
  for (std::size_t c = 0; c < ds.num_classes; ++c) out += ",class_" + std::to_string(c);
  out += '\n';
  for (const auto& s : shards) {
    out += std::to_string(s.client_id) + ',' + std::to_string(s.n_k());
    for (std::size_t v : class_histogram(ds, s)) out += ',' + std::to_string(v);
    out += '\n';
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace fedrough::csv
