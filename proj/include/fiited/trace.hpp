#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "fiited/batch.hpp"

namespace fiited {

/// Malformed trace input. `line()` is 1-based (the header is line 1); 0 when not tied to a line.
class TraceError : public std::runtime_error {
 public:
  TraceError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct TraceSchema {
  std::size_t dense_dim = 0;
  std::size_t num_features = 0;
};

/// Streaming reader for `label,dense_0..dense_{n-1},f_0..f_{F-1}` CSV traces. Holds one
/// line in memory at a time.
class TraceReader final : public SampleSource {
 public:
  /// Parses and validates the header. When `expected` is given, the column counts must match it.
  explicit TraceReader(std::string path, std::optional<TraceSchema> expected = std::nullopt);

  bool next_batch(std::size_t max_samples, Batch& out) override;
  void reset() override;
  [[nodiscard]] std::size_t num_features() const override { return schema_.num_features; }
  [[nodiscard]] std::size_t dense_dim() const override { return schema_.dense_dim; }
  [[nodiscard]] const TraceSchema& schema() const { return schema_; }

 private:
  void open();

  std::string path_;
  std::optional<TraceSchema> expected_;
  TraceSchema schema_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

/// Writes every remaining batch of `source` as a trace file; returns the sample count.
std::size_t write_trace(const std::string& path, SampleSource& source, std::size_t batch_size = 1024);

/// Header line for a schema (no trailing newline).
std::string trace_header(const TraceSchema& schema);

}  // namespace fiited
