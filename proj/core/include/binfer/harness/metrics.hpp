#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

namespace binfer::harness {

struct MetricsRow {
  std::size_t step = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

/// Destination for per-step training metrics. Rows must arrive with
/// non-decreasing step numbers.
class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  void append(std::size_t step, const std::string& split, const std::string& metric,
              double value);

 protected:
  virtual void write(const MetricsRow& row) = 0;

 private:
  std::size_t last_step_ = 0;
  bool seen_any_ = false;
};

class MemoryMetrics final : public MetricsSink {
 public:
  const std::vector<MetricsRow>& rows() const { return rows_; }
  /// Values of one metric in arrival order.
  std::vector<double> series(const std::string& metric) const;

 protected:
  void write(const MetricsRow& row) override { rows_.push_back(row); }

 private:
  std::vector<MetricsRow> rows_;
};

/// CSV with header `step,split,metric,value`; floats carry 17 significant
/// digits so a rerun with the same seed is byte-identical.
class CsvMetrics final : public MetricsSink {
 public:
  explicit CsvMetrics(const std::string& path);
  ~CsvMetrics() override;
  void flush();

 protected:
  void write(const MetricsRow& row) override;

 private:
  std::ofstream out_;
};

std::string format_double(double v);  // %.17g

}  // namespace binfer::harness
