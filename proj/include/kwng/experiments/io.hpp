#ifndef KWNG_EXPERIMENTS_IO_HPP
#define KWNG_EXPERIMENTS_IO_HPP

// CSV records and `key = value` config files.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kwng/error.hpp"
#include "kwng/experiments/sweep.hpp"

namespace kwng::experiments {

inline constexpr const char* kCsvHeader = "run_id,model,d,q,N,M,sigma0,eps,lambda,rel_error,wall_seconds";

/// Shortest round-trip-safe form with 17 significant digits; NaN as "nan".
inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_records_csv(std::ostream& os, const std::vector<ExperimentRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.run_id << ',' << r.model << ',' << r.d << ',' << r.q << ',' << r.n << ',' << r.m << ','
       << format_real(r.sigma0) << ',' << format_real(r.epsilon) << ',' << format_real(r.lambda) << ','
       << format_real(r.failed ? std::nan("") : r.rel_error) << ',' << format_real(r.wall_seconds) << '\n';
  }
}

inline void write_records_csv(const std::string& path, const std::vector<ExperimentRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  check(static_cast<bool>(os), ErrorCode::InvalidArgument, "cannot open CSV output");
  write_records_csv(os, records);
  check(static_cast<bool>(os), ErrorCode::InvalidArgument, "CSV write failed");
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<ExperimentRecord> read_records_csv(std::istream& is) {
  std::string line;
  check(static_cast<bool>(std::getline(is, line)) && line == kCsvHeader, ErrorCode::InvalidArgument,
        "CSV header mismatch");
  std::vector<ExperimentRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    check(f.size() == 11, ErrorCode::InvalidArgument, "CSV row must have 11 fields");
    ExperimentRecord r;
    try {
      r.run_id = std::stoull(f[0]);
      r.model = f[1];
      r.d = std::stol(f[2]);
      r.q = std::stol(f[3]);
      r.n = std::stol(f[4]);
      r.m = std::stol(f[5]);
      r.sigma0 = std::stod(f[6]);
      r.epsilon = std::stod(f[7]);
      r.lambda = std::stod(f[8]);
      r.rel_error = std::stod(f[9]);
      r.wall_seconds = std::stod(f[10]);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "malformed CSV row: " + line);
    }
    r.failed = std::isnan(r.rel_error);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; a later key overrides an earlier one.
inline std::map<std::string, std::string> parse_config(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    check(eq != std::string::npos, ErrorCode::InvalidArgument,
          ("config line " + std::to_string(lineno) + " lacks '='").c_str());
    const std::string key = trim(t.substr(0, eq));
    check(!key.empty(), ErrorCode::InvalidArgument, ("config line " + std::to_string(lineno) + " has no key").c_str());
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream is(path);
  check(static_cast<bool>(is), ErrorCode::InvalidArgument, ("cannot open config file " + path).c_str());
  return parse_config(is);
}

}  // namespace kwng::experiments

#endif  // KWNG_EXPERIMENTS_IO_HPP
