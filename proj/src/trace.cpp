#include "fiited/trace.hpp"

#include <charconv>
#include <string_view>
#include <vector>

namespace fiited {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

std::string trace_header(const TraceSchema& schema) {
  std::string h = "label";
  for (std::size_t j = 0; j < schema.dense_dim; ++j) h += ",dense_" + std::to_string(j);
  for (std::size_t f = 0; f < schema.num_features; ++f) h += ",f_" + std::to_string(f);
  return h;
}

TraceReader::TraceReader(std::string path, std::optional<TraceSchema> expected)
    : path_(std::move(path)), expected_(expected) {
  open();
}

void TraceReader::open() {
  in_ = std::ifstream(path_);
  if (!in_) throw TraceError("cannot open trace " + path_, 0);
  line_no_ = 0;
  std::string header;
  if (!std::getline(in_, header)) throw TraceError(path_ + ": missing header line", 1);
  line_no_ = 1;
  const auto cols = split_commas(strip_cr(header));
  if (cols.empty() || cols[0] != "label") {
    throw TraceError(path_ + ": column 0 is '" + std::string(cols.empty() ? "" : cols[0]) + "', expected 'label'", 1);
  }
  TraceSchema s;
  std::size_t i = 1;
  while (i < cols.size() && cols[i].starts_with("dense_")) {
    const std::string want = "dense_" + std::to_string(s.dense_dim);
    if (cols[i] != want) {
      throw TraceError(path_ + ": column " + std::to_string(i) + " is '" + std::string(cols[i]) + "', expected '" + want + "'", 1);
    }
    ++s.dense_dim;
    ++i;
  }
  for (; i < cols.size(); ++i) {
    const std::string want = "f_" + std::to_string(s.num_features);
    if (cols[i] != want) {
      throw TraceError(path_ + ": column " + std::to_string(i) + " is '" + std::string(cols[i]) + "', expected '" + want + "'", 1);
    }
    ++s.num_features;
  }
  if (s.num_features == 0) throw TraceError(path_ + ": header has no sparse feature column (expected 'f_0')", 1);
  if (expected_) {
    if (expected_->dense_dim != s.dense_dim) {
      const std::string col = "dense_" + std::to_string(std::min(expected_->dense_dim, s.dense_dim));
      throw TraceError(path_ + ": schema mismatch at column '" + col + "': trace has " + std::to_string(s.dense_dim) +
                           " dense columns, expected " + std::to_string(expected_->dense_dim), 1);
    }
    if (expected_->num_features != s.num_features) {
      const std::string col = "f_" + std::to_string(std::min(expected_->num_features, s.num_features));
      throw TraceError(path_ + ": schema mismatch at column '" + col + "': trace has " + std::to_string(s.num_features) +
                           " sparse features, expected " + std::to_string(expected_->num_features), 1);
    }
  }
  schema_ = s;
}

void TraceReader::reset() { open(); }

bool TraceReader::next_batch(std::size_t max_samples, Batch& out) {
  out.reset(schema_.num_features, schema_.dense_dim, max_samples);
  const std::size_t width = 1 + schema_.dense_dim + schema_.num_features;
  std::string line;
  while (out.size() < max_samples && std::getline(in_, line)) {
    ++line_no_;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    const auto fields = split_commas(view);
    auto fail = [&](const std::string& why) {
      throw TraceError(path_ + ":" + std::to_string(line_no_) + ": " + why, line_no_);
    };
    if (fields.size() != width) {
      fail("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    }
    int label = -1;
    {
      const auto f = fields[0];
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
      if (ec != std::errc() || p != f.data() + f.size() || (label != 0 && label != 1)) {
        fail("label must be 0 or 1, found '" + std::string(f) + "'");
      }
    }
    const auto row = static_cast<Eigen::Index>(out.size());
    for (std::size_t j = 0; j < schema_.dense_dim; ++j) {
      const auto f = fields[1 + j];
      double v = 0.0;
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size()) fail("dense_" + std::to_string(j) + " is not a number: '" + std::string(f) + "'");
      out.dense(row, static_cast<Eigen::Index>(j)) = v;
    }
    for (std::size_t k = 0; k < schema_.num_features; ++k) {
      const auto f = fields[1 + schema_.dense_dim + k];
      std::uint64_t v = 0;
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || f.empty()) {
        fail("f_" + std::to_string(k) + " is not an unsigned integer: '" + std::string(f) + "'");
      }
      out.sparse.push_back(v);
    }
    out.labels.push_back(label);
  }
  out.shrink_dense();
  return out.size() > 0;
}

std::size_t write_trace(const std::string& path, SampleSource& source, std::size_t batch_size) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TraceError("cannot open " + path + " for writing", 0);
  out << trace_header({source.dense_dim(), source.num_features()}) << '\n';
  Batch b;
  std::size_t written = 0;
  char buf[64];
  while (source.next_batch(batch_size, b)) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      out << b.labels[i];
      for (Eigen::Index j = 0; j < b.dense.cols(); ++j) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), b.dense(static_cast<Eigen::Index>(i), j));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      }
      for (std::size_t f = 0; f < b.num_features; ++f) out << ',' << b.sparse[i * b.num_features + f];
      out << '\n';
      ++written;
    }
  }
  if (!out) throw TraceError("failed writing " + path, 0);
  return written;
}

}  // namespace fiited
