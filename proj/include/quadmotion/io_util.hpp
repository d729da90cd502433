#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadmotion {

/// Raised when a config file is malformed (CLI maps this to exit code 3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a data file (clip, checkpoint, CSV) violates its schema.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on simulation faults (NaN propagation, divergent rollouts).
struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Canonical double formatting: %.17g round-trips every finite double and is
/// byte-stable, which the clip round-trip and determinism contracts rely on.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write file: " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

/// Minimal CSV writer with canonical float formatting. Column set is fixed at
/// construction so every run emits byte-identical layouts.
class CsvWriter {
 public:
  CsvWriter(std::filesystem::path path, std::vector<std::string> columns)
      : path_(std::move(path)), columns_(std::move(columns)) {
    buffer_.reserve(1 << 16);
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (i) buffer_ += ',';
      buffer_ += columns_[i];
    }
    buffer_ += '\n';
  }

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size())
      throw std::invalid_argument("CsvWriter: cell count does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) buffer_ += ',';
      buffer_ += cells[i];
    }
    buffer_ += '\n';
  }

  const std::string& content() const { return buffer_; }

  void flush() const { write_text_file(path_, buffer_); }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<std::string> columns_;
  std::string buffer_;
};

}  // namespace quadmotion
