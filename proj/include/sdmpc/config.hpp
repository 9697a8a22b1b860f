// Copyright 2026 The sdmpc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdmpc/model.hpp"
#include "sdmpc/ocp.hpp"

namespace sdmpc {

/// A configuration file could not be read, parsed, or validated.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Structured-text configuration: `[section]` headers and `key = value` lines,
// `#` comments, blank lines ignored.  Values keep their raw text; typed
// accessors parse on demand.  Key reads are tracked so callers can reject
// misspelled keys instead of silently ignoring them.
// ---------------------------------------------------------------------------

class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
        cfg.sections_.insert(section);
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": key before any [section]");
      std::string full = section + "." + key;
      if (cfg.values_.count(full))
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + full);
      cfg.values_[full] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) != 0;
  }
  bool has_section(const std::string& section) const { return sections_.count(section) != 0; }

  std::string get_string(const std::string& section, const std::string& key) const {
    auto it = values_.find(section + "." + key);
    if (it == values_.end())
      throw ConfigError(origin_ + ": missing required key [" + section + "] " + key);
    used_.insert(it->first);
    return it->second;
  }
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    return has(section, key) ? get_string(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    return to_double(get_string(section, key), section + "." + key);
  }
  double get_double(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
  }

  int get_int(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    try {
      std::size_t pos = 0;
      long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return int(v);
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": [" + section + "] " + key + ": not an integer: " + s);
    }
  }
  int get_int(const std::string& section, const std::string& key, int fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string s = get_string(section, key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": not a boolean: " + s);
  }

  /// Whitespace- or comma-separated numbers.
  std::vector<double> get_numbers(const std::string& section, const std::string& key) const {
    return parse_numbers(get_string(section, key), section + "." + key);
  }
  std::vector<double> get_numbers(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const {
    return has(section, key) ? get_numbers(section, key) : fallback;
  }

  Vec get_vector(const std::string& section, const std::string& key) const {
    std::vector<double> v = get_numbers(section, key);
    Vec out(int(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[int(i)] = v[i];
    return out;
  }

  /// Rows separated by ';', entries by whitespace or ','.
  Mat get_matrix(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    const std::string where = section + "." + key;
    std::vector<std::vector<double>> rows;
    std::string piece;
    std::istringstream in(s);
    while (std::getline(in, piece, ';')) rows.push_back(parse_numbers(piece, where));
    while (!rows.empty() && rows.back().empty()) rows.pop_back();
    if (rows.empty()) throw ConfigError(origin_ + ": [" + section + "] " + key + ": empty matrix");
    const std::size_t cols = rows.front().size();
    for (const auto& r : rows)
      if (r.size() != cols)
        throw ConfigError(origin_ + ": [" + section + "] " + key + ": ragged matrix rows");
    Mat m(int(rows.size()), int(cols));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) m(int(i), int(j)) = rows[i][j];
    return m;
  }

  /// A box: either one number (symmetric half-width, `dim` from context) or
  /// one `lo hi` row per dimension, rows separated by ';'.
  Box get_box(const std::string& section, const std::string& key, int dim_hint) const {
    Mat m = get_matrix(section, key);
    if (m.rows() == 1 && m.cols() == 1) {
      if (dim_hint <= 0)
        throw ConfigError(origin_ + ": [" + section + "] " + key +
                          ": symmetric box shorthand needs a known dimension");
      return Box::symmetric(dim_hint, m(0, 0));
    }
    if (m.cols() != 2)
      throw ConfigError(origin_ + ": [" + section + "] " + key +
                        ": box rows must be `lo hi` pairs");
    Box b;
    b.lo = m.col(0);
    b.hi = m.col(1);
    for (int i = 0; i < m.rows(); ++i)
      if (!(b.lo[i] < b.hi[i]))
        throw ConfigError(origin_ + ": [" + section + "] " + key + ": requires lo < hi per row");
    return b;
  }

  /// A list of vectors: vectors separated by ';'.
  std::vector<Vec> get_vector_list(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    const std::string where = section + "." + key;
    std::vector<Vec> out;
    std::string piece;
    std::istringstream in(s);
    while (std::getline(in, piece, ';')) {
      std::vector<double> v = parse_numbers(piece, where);
      if (v.empty()) continue;
      Vec x(int(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) x[int(i)] = v[i];
      out.push_back(x);
    }
    if (out.empty()) throw ConfigError(origin_ + ": [" + section + "] " + key + ": empty list");
    return out;
  }

  /// Keys present in the file but never read by any accessor.  Callers reject
  /// these to catch typos.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }
  void require_all_used() const {
    std::vector<std::string> stray = unused_keys();
    if (stray.empty()) return;
    std::string msg = origin_ + ": unknown key(s):";
    for (const auto& k : stray) msg += " " + k;
    throw ConfigError(msg);
  }

  const std::string& origin() const { return origin_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  double to_double(const std::string& s, const std::string& where) const {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": " + where + ": not a number: " + s);
    }
  }
  std::vector<double> parse_numbers(const std::string& s, const std::string& where) const {
    std::string cleaned = s;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream in(cleaned);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) out.push_back(to_double(tok, where));
    return out;
  }

  std::string origin_;
  std::map<std::string, std::string> values_;
  std::set<std::string> sections_;
  mutable std::set<std::string> used_;
};

// ------------------------------ plant building ------------------------------

/// Builds the plant named in [system], then applies any [constraints] and
/// [cost] overrides.  Known registry names: double_integrator,
/// scalar_unstable.  Alternatively [system] may give explicit A and B
/// matrices (linear plants only), in which case [cost] Q and R are required.
inline Plant build_plant(const Config& cfg) {
  Plant p;
  const std::string name = cfg.get_string("system", "name", "");
  if (name == "double_integrator") {
    p = build_double_integrator();
  } else if (name == "scalar_unstable") {
    p = build_scalar_unstable();
  } else if (name.empty() && cfg.has("system", "A") && cfg.has("system", "B")) {
    LinearSystem lin;
    lin.A = cfg.get_matrix("system", "A");
    lin.B = cfg.get_matrix("system", "B");
    if (lin.A.rows() != lin.A.cols() || lin.B.rows() != lin.A.rows())
      throw ConfigError(cfg.origin() + ": [system] A must be square and B row-conformant");
    p.lin = lin;
    p.sys = lin.as_control_system();
    Mat Q = cfg.get_matrix("cost", "Q"), R = cfg.get_matrix("cost", "R");
    Mat N;
    if (cfg.has("cost", "N")) N = cfg.get_matrix("cost", "N");
    p.cost = StageCost::quadratic(Q, R, N);
    p.cons = ConstraintSpec::from_boxes(
        cfg.get_box("constraints", "state_box", int(lin.A.rows())),
        cfg.get_box("constraints", "input_box", int(lin.B.cols())));
    return p;
  } else {
    throw ConfigError(cfg.origin() + ": [system] name must be double_integrator or "
                      "scalar_unstable (or give explicit A and B)");
  }
  // Overrides on top of a registry plant.
  const int n = p.sys.state_dim, m = p.sys.input_dim;
  bool cons_changed = false;
  Box xb = p.cons.state_box ? *p.cons.state_box : Box::symmetric(n, 1.0);
  Box ub = p.cons.input_box ? *p.cons.input_box : Box::symmetric(m, 1.0);
  if (cfg.has("constraints", "state_box")) {
    xb = cfg.get_box("constraints", "state_box", n);
    cons_changed = true;
  }
  if (cfg.has("constraints", "input_box")) {
    ub = cfg.get_box("constraints", "input_box", m);
    cons_changed = true;
  }
  if (cons_changed) p.cons = ConstraintSpec::from_boxes(xb, ub);
  if (cfg.has("cost", "Q") || cfg.has("cost", "R") || cfg.has("cost", "N")) {
    Mat Q = cfg.has("cost", "Q") ? cfg.get_matrix("cost", "Q") : p.cost.lq->Q;
    Mat R = cfg.has("cost", "R") ? cfg.get_matrix("cost", "R") : p.cost.lq->R;
    Mat N;
    if (cfg.has("cost", "N")) N = cfg.get_matrix("cost", "N");
    p.cost = StageCost::quadratic(Q, R, N);
  }
  return p;
}

/// Reads [solver] overrides onto the defaults.
inline SolverOptions solver_options(const Config& cfg) {
  SolverOptions o;
  o.feas_tol = cfg.get_double("solver", "feas_tol", o.feas_tol);
  o.grad_tol = cfg.get_double("solver", "grad_tol", o.grad_tol);
  o.max_outer = cfg.get_int("solver", "max_outer", o.max_outer);
  o.max_inner = cfg.get_int("solver", "max_inner", o.max_inner);
  o.rho_init = cfg.get_double("solver", "rho_init", o.rho_init);
  o.rho_growth = cfg.get_double("solver", "rho_growth", o.rho_growth);
  o.rho_max = cfg.get_double("solver", "rho_max", o.rho_max);
  o.armijo = cfg.get_double("solver", "armijo", o.armijo);
  o.max_linesearch = cfg.get_int("solver", "max_linesearch", o.max_linesearch);
  o.infeasibility_cap = cfg.get_double("solver", "infeasibility_cap", o.infeasibility_cap);
  o.divergence_bound = cfg.get_double("solver", "divergence_bound", o.divergence_bound);
  return o;
}

}  // namespace sdmpc
