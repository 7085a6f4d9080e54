#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trace/common/error.hpp"

namespace trace {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write to " + p.string());
}

/// 64-bit FNV-1a over raw bytes, printed as 16 hex digits.
inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

inline std::string file_checksum(const fs::path& p) {
  const std::string s = read_file(p);
  return hex64(fnv1a_bytes(s.data(), s.size()));
}

/// Shortest round-trip text for a double so CSVs are reproducible byte for byte.
inline std::string fmt_num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  double back = 0.0;
  // Prefer a shorter form when it parses back to the same value.
  for (int prec = 6; prec < 17; ++prec) {
    std::ostringstream t;
    t << std::setprecision(prec) << v;
    std::istringstream(t.str()) >> back;
    if (back == v) return t.str();
  }
  return ss.str();
}

/// Appending CSV writer. The header is written only when the file is new.
class CsvAppender {
 public:
  CsvAppender(const fs::path& p, std::string_view header) {
    const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    out_.open(p, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot open " + p.string());
    if (fresh) out_ << header << '\n';
  }

  template <class... Ts>
  void row(const Ts&... cols) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cols), first = false), ...);
    out_ << '\n';
    out_.flush();
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt_num(v); }
  static std::string cell(float v) { return fmt_num(v); }
  template <class I>
  static std::string cell(I v) requires std::is_integral_v<I> {
    return std::to_string(v);
  }

  std::ofstream out_;
};

/// Read a CSV with a header line into rows of string cells (no quoting support).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw DataError("missing csv column " + std::string(name));
  }
};

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline CsvTable read_csv(const fs::path& p) {
  CsvTable t;
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::string line;
  if (!std::getline(in, line)) return t;
  t.header = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line, ','));
  }
  return t;
}

/// Drop rows whose integer `step` column exceeds `last_step`; used on resume.
inline void truncate_csv_after(const fs::path& p, long long last_step) {
  if (!fs::exists(p)) return;
  std::ifstream in(p);
  std::string header, line, kept;
  if (!std::getline(in, header)) return;
  const auto cols = split(header, ',');
  int idx = -1;
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] == "step") idx = static_cast<int>(i);
  if (idx < 0) return;
  kept = header + "\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (std::stoll(cells.at(static_cast<std::size_t>(idx))) <= last_step) kept += line + "\n";
  }
  in.close();
  write_file(p, kept);
}

}  // namespace trace
