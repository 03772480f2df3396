#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scarkit/dynamics.hpp"
#include "scarkit/errors.hpp"

namespace scarkit {

/// Round-trip formatting used in every CSV (17 significant digits).
inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Column-oriented CSV table with a fixed header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw ConsistencyError("csv: row width does not match the header");
    rows_.push_back(cells);
    return *this;
  }

  std::string str() const {
    std::string s;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) s += ',';
        s += cells[k];
      }
      s += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return s;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Tracks files written by one task so a failure can remove partial output.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    created_ = !std::filesystem::exists(root_);
    std::filesystem::create_directories(root_, ec);
    if (ec || !std::filesystem::is_directory(root_)) throw IoError("output directory " + root_.string() + " is not writable");
  }

  std::filesystem::path path(const std::string& name) const { return root_ / name; }

  void write(const std::string& name, const std::string& content) {
    const auto p = path(name);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write " + p.string());
    os << content;
    if (!os) throw IoError("short write to " + p.string());
    written_.push_back(p);
  }

  void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

  /// Removes everything this object wrote (and the directory if it created it and it is now empty).
  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) std::filesystem::remove(p, ec);
    written_.clear();
    if (created_ && std::filesystem::is_empty(root_, ec)) std::filesystem::remove(root_, ec);
  }

  const std::vector<std::filesystem::path>& written() const { return written_; }

 private:
  std::filesystem::path root_;
  bool created_{false};
  std::vector<std::filesystem::path> written_;
};

/// t,<channel>[,<channel>_stderr]...
inline std::string time_series_csv(const TimeSeries& ts) {
  std::vector<std::string> header{"t"};
  for (std::size_t k = 0; k < ts.names.size(); ++k) {
    header.push_back(ts.names[k]);
    if (ts.errors[k]) header.push_back(ts.names[k] + "_stderr");
  }
  CsvTable t(header);
  for (std::size_t i = 0; i < ts.times.size(); ++i) {
    std::vector<std::string> r{fmt(ts.times[i])};
    for (std::size_t k = 0; k < ts.names.size(); ++k) {
      r.push_back(fmt(ts.values[k][i]));
      if (ts.errors[k]) r.push_back(fmt((*ts.errors[k])[i]));
    }
    t.row(r);
  }
  return t.str();
}

}  // namespace scarkit
