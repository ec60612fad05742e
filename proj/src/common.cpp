#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rd {

int64_t Rng::uniform_int(int64_t n) {
  require(n > 0, ErrCode::invalid_argument, "uniform_int needs n > 0");
  return static_cast<int64_t>(std::uniform_int_distribution<uint64_t>(0, uint64_t(n) - 1)(engine_));
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t derive_seed(uint64_t master, std::string_view tag) {
  return splitmix64(master ^ fnv1a64(tag));
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

double parse_double_strict(const std::string& s, const std::string& where) {
  require(!s.empty(), ErrCode::parse, "empty numeric field in " + where);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  require(end == s.c_str() + s.size() && errno == 0, ErrCode::parse,
          "bad numeric field '" + s + "' in " + where);
  return v;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrCode::io, "cannot open " + path + " for writing");
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    require(row.size() == header.size(), ErrCode::contract,
            "csv row width mismatch writing " + path);
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  require(out.good(), ErrCode::io, "write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrCode::io, "cannot open " + path);
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : l) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    out.push_back(cur);
    return out;
  };
  require(static_cast<bool>(std::getline(in, line)), ErrCode::integrity, "missing header in " + path);
  t.header = split(line);
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split(line);
    require(row.size() == t.header.size(), ErrCode::integrity,
            path + ":" + std::to_string(lineno) + ": row width mismatch (expected " +
                std::to_string(t.header.size()) + ", got " + std::to_string(row.size()) + ")");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrCode::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrCode::io, "cannot open " + path + " for writing");
  out << content;
  require(out.good(), ErrCode::io, "write failed for " + path);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  require(!ec, ErrCode::io, "cannot create directory " + path + ": " + ec.message());
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double quantile(std::vector<double> v, double q) {
  require(!v.empty(), ErrCode::invalid_argument, "quantile of empty vector");
  require(q >= 0.0 && q <= 1.0, ErrCode::invalid_argument, "quantile q out of range");
  std::sort(v.begin(), v.end());
  double pos = q * double(v.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - double(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace rd
