#include "binfer/harness/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace binfer::harness {

void MetricsSink::append(std::size_t step, const std::string& split,
                         const std::string& metric, double value) {
  if (seen_any_ && step < last_step_) {
    throw std::logic_error("metrics rows must be appended with non-decreasing steps");
  }
  last_step_ = step;
  seen_any_ = true;
  write({step, split, metric, value});
}

std::vector<double> MemoryMetrics::series(const std::string& metric) const {
  std::vector<double> out;
  for (const MetricsRow& r : rows_) {
    if (r.metric == metric) out.push_back(r.value);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvMetrics::CsvMetrics(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
  out_ << "step,split,metric,value\n";
}

CsvMetrics::~CsvMetrics() { flush(); }

void CsvMetrics::flush() { out_.flush(); }

void CsvMetrics::write(const MetricsRow& row) {
  out_ << row.step << ',' << row.split << ',' << row.metric << ','
       << format_double(row.value) << '\n';
}

}  // namespace binfer::harness
