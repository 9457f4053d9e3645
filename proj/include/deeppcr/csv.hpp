#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace deeppcr {

// Minimal CSV assembly: one '#' metadata comment line, a header, then rows.
// Numbers are formatted deterministically ('.' decimal, %.17g for doubles) so
// identical results produce identical files.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void set_metadata(std::uint64_t seed, int worker_count, const std::string& version) {
    std::ostringstream os;
    os << "# seed=" << seed << " worker_count=" << worker_count << " version=" << version;
    metadata_ = os.str();
  }

  void begin_row() { row_.clear(); }

  void add(const std::string& v) { row_.push_back(v); }
  void add(const char* v) { row_.push_back(v); }
  void add(std::int64_t v) { row_.push_back(std::to_string(v)); }
  void add(int v) { row_.push_back(std::to_string(v)); }
  void add(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    row_.push_back(buf);
  }

  void end_row() {
    if (row_.size() != columns_.size()) {
      throw std::runtime_error("csv: row has " + std::to_string(row_.size()) +
                               " cells, header has " + std::to_string(columns_.size()));
    }
    rows_.push_back(join(row_));
  }

  std::string str() const {
    std::ostringstream os;
    if (!metadata_.empty()) os << metadata_ << "\n";
    os << join(columns_) << "\n";
    for (const auto& r : rows_) os << r << "\n";
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot open " + path);
    out << str();
  }

  const std::vector<std::string>& columns() const { return columns_; }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) line += ',';
      line += cells[i];
    }
    return line;
  }

  std::vector<std::string> columns_;
  std::string metadata_;
  std::vector<std::string> row_;
  std::vector<std::string> rows_;
};

}  // namespace deeppcr
