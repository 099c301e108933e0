#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rsr/errors.hpp"
#include "rsr/model.hpp"

namespace rsr {

// Decimal with a fixed number of significant digits; the format used for all
// human-facing numbers so that repeated runs emit identical bytes.
inline std::string format_sig(double v, int sig = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", sig, v);
  return buf;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<double> parse_double_list(const std::string& text,
                                             const std::string& what) {
  std::vector<double> out;
  for (const std::string& tok : split(text, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) throw ConfigError(what + ": empty entry in list");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ConfigError(what + ": '" + t + "' is not a number");
    }
    if (used != t.size())
      throw ConfigError(what + ": '" + t + "' is not a number");
    out.push_back(v);
  }
  return out;
}

// Flat key = value configuration with dotted section names and # comments.
class Config {
 public:
  static Config from_string(const std::string& text,
                            const std::string& origin = "<string>") {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      std::string line = raw;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected 'key = value', got '" + trim(raw) + "'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": empty key");
      cfg.kv_[key] = value;
      cfg.line_[key] = lineno;
    }
    return cfg;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError(where(key) + "missing key '" + key + "'");
    return it->second;
  }

  std::string get_string_or(const std::string& key,
                            const std::string& fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
  }

  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long long get_int(const std::string& key) const {
    const std::string t = get_string(key);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(t, &used);
    } catch (const std::exception&) {
      throw ConfigError(where(key) + "'" + key + "' = '" + t +
                        "' is not an integer");
    }
    if (used != t.size())
      throw ConfigError(where(key) + "'" + key + "' = '" + t +
                        "' is not an integer");
    return v;
  }

  long long get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::vector<double> get_list(const std::string& key) const {
    return parse_double_list(get_string(key), where(key) + "'" + key + "'");
  }

  // Scalar values broadcast to the requested length; lists must match it.
  Vector get_broadcast(const std::string& key, int length) const {
    const std::vector<double> vals = get_list(key);
    if (vals.size() == 1) return Vector::Constant(length, vals[0]);
    if (static_cast<int>(vals.size()) != length)
      throw ConfigError(where(key) + "'" + key + "' has " +
                        std::to_string(vals.size()) + " entries, expected " +
                        std::to_string(length) + " (or a scalar)");
    Vector out(length);
    for (int i = 0; i < length; ++i) out(i) = vals[i];
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::string where(const std::string& key) const {
    const auto it = line_.find(key);
    if (it == line_.end()) return origin_ + ": ";
    return origin_ + ":" + std::to_string(it->second) + ": ";
  }

  double parse_double(const std::string& key, const std::string& t) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ConfigError(where(key) + "'" + key + "' = '" + t +
                        "' is not a number");
    }
    if (used != t.size())
      throw ConfigError(where(key) + "'" + key + "' = '" + t +
                        "' is not a number");
    return v;
  }

  std::map<std::string, std::string> kv_;
  std::map<std::string, int> line_;
  std::string origin_;
};

// Matrix text format: rows of whitespace- or comma-separated numbers, with an
// optional '# rows cols' first line. Other # lines are comments.
inline Matrix parse_matrix_text(std::istream& in, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  long declared_rows = -1, declared_cols = -1;
  std::string raw;
  int lineno = 0;
  bool saw_content = false;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!saw_content && declared_rows < 0) {
        std::istringstream hdr(line.substr(1));
        long r = 0, c = 0;
        if (hdr >> r >> c) {
          declared_rows = r;
          declared_cols = c;
        }
      }
      continue;
    }
    saw_content = true;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": '" + tok +
                          "' is not a number");
      }
      if (used != tok.size())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": '" + tok +
                          "' is not a number");
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": row has " +
                        std::to_string(row.size()) + " entries, expected " +
                        std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(origin + ": no numeric data");
  if (declared_rows >= 0 &&
      (declared_rows != static_cast<long>(rows.size()) ||
       declared_cols != static_cast<long>(rows.front().size())))
    throw ConfigError(origin + ": header declares " +
                      std::to_string(declared_rows) + "x" +
                      std::to_string(declared_cols) + " but data is " +
                      std::to_string(rows.size()) + "x" +
                      std::to_string(rows.front().size()));
  Matrix M(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j) M(i, j) = rows[i][j];
  return M;
}

inline Matrix read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file '" + path + "'");
  return parse_matrix_text(in, path);
}

// A one-column or one-row matrix read as a vector.
inline Vector read_vector(const std::string& path) {
  const Matrix M = read_matrix(path);
  if (M.cols() == 1) return M.col(0);
  if (M.rows() == 1) return M.row(0).transpose();
  throw ConfigError("'" + path + "' holds a " + std::to_string(M.rows()) +
                    "x" + std::to_string(M.cols()) +
                    " matrix where a vector was expected");
}

inline void write_matrix_text(std::ostream& out, const Matrix& M) {
  out << "# " << M.rows() << " " << M.cols() << "\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << " ";
      out << format_sig(M(i, j), 17);
    }
    out << "\n";
  }
}

inline void write_matrix(const std::string& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  write_matrix_text(out, M);
}

}  // namespace rsr
