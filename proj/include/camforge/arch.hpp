#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "camforge/ir.hpp"
#include "camforge/printer.hpp"

// Architecture specification and technology parameters. Both load from flat
// key-value files with [hierarchy], [optimization] and [tech] sections; the
// whole flow retargets through these two inputs.

namespace camforge {

enum class AccessMode { Sequential, Parallel };
enum class OptTarget { Latency, Power, Utilization };

struct ArchSpec {
  // Four-level hierarchy: banks > mats > arrays > subarrays of rows x cols.
  int64_t banks = 1;
  bool auto_banks = true;  // size the bank count to the workload
  int64_t mats_per_bank = 4;
  int64_t arrays_per_mat = 4;
  int64_t subarrays_per_array = 8;
  int64_t rows = 0;
  int64_t cols = 0;
  AccessMode bank_mode = AccessMode::Parallel;
  AccessMode mat_mode = AccessMode::Parallel;
  AccessMode array_mode = AccessMode::Parallel;
  bool selective_search = true;
  OptTarget opt_target = OptTarget::Latency;

  int64_t subarrays_per_bank() const {
    return mats_per_bank * arrays_per_mat * subarrays_per_array;
  }
};

struct Capacity {
  int64_t subarrays = 0;
  int64_t cells = 0;
};

inline Capacity capacity(const ArchSpec& a) {
  Capacity c;
  c.subarrays = a.banks * a.subarrays_per_bank();
  c.cells = c.subarrays * a.rows * a.cols;
  return c;
}

struct TechParams {
  // Search latency anchors keyed by column count; intermediate sizes are
  // linearly interpolated. Defaults are the published endpoint values.
  std::map<int64_t, double> search_latency_anchors = {{16, 0.86}, {256, 7.5}};
  double search_energy_pj_per_cell = 0.1;
  double write_latency_ns = 1.0;
  double write_energy_pj_per_cell = 0.1;
  double peripheral_subarray_pj = 10.0;
  double peripheral_array_pj = 20.0;
  double peripheral_mat_pj = 40.0;
  double peripheral_bank_pj = 80.0;
  double ml_voltage_scale = 1.5;  // multi-bit cells search at higher voltage
};

inline bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

inline void validate_arch(const ArchSpec& a) {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw CompileError("arch spec: " + msg);
  };
  check(a.rows > 0 && a.cols > 0, "rows and cols are mandatory and must be positive");
  check(is_power_of_two(a.rows) && a.rows >= 16 && a.rows <= 256,
        "rows must be a power of two in [16, 256]");
  check(is_power_of_two(a.cols) && a.cols >= 16 && a.cols <= 256,
        "cols must be a power of two in [16, 256]");
  check(a.banks >= 1, "banks must be >= 1");
  check(a.mats_per_bank >= 1 && a.arrays_per_mat >= 1 && a.subarrays_per_array >= 1,
        "hierarchy counts must be >= 1");
  if (a.opt_target == OptTarget::Utilization)
    check(a.selective_search, "density optimization requires selective_search");
}

inline void validate_tech(const TechParams& t) {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw CompileError("tech params: " + msg);
  };
  check(!t.search_latency_anchors.empty(), "at least one search latency anchor");
  double prev = 0.0;
  for (const auto& [c, ns] : t.search_latency_anchors) {
    check(c >= 16 && c <= 256, "latency anchors must be keyed by C in [16, 256]");
    check(ns > 0, "latencies must be positive");
    check(ns >= prev, "latency anchors must be non-decreasing in C");
    prev = ns;
  }
  check(t.search_energy_pj_per_cell > 0 && t.write_energy_pj_per_cell > 0 &&
            t.write_latency_ns > 0,
        "energy/latency constants must be positive");
  check(t.peripheral_subarray_pj > 0 && t.peripheral_array_pj > 0 &&
            t.peripheral_mat_pj > 0 && t.peripheral_bank_pj > 0,
        "peripheral energies must be positive");
  check(t.ml_voltage_scale >= 1.0, "ml_voltage_scale must be >= 1");
}

// Search latency for one R x C subarray search step. Exact at anchors,
// linear in C between the nearest anchors. The match line discharge is
// column-bound, so R does not enter.
inline double search_latency(const TechParams& tp, int64_t rows, int64_t cols) {
  (void)rows;
  if (cols < 16 || cols > 256)
    throw CompileError("search_latency: C=" + std::to_string(cols) +
                       " outside supported range [16, 256]");
  const auto& anchors = tp.search_latency_anchors;
  auto it = anchors.find(cols);
  if (it != anchors.end()) return it->second;
  auto hi = anchors.upper_bound(cols);
  if (hi == anchors.begin()) return hi->second;
  if (hi == anchors.end()) return std::prev(hi)->second;
  auto lo = std::prev(hi);
  double t = double(cols - lo->first) / double(hi->first - lo->first);
  return lo->second + (hi->second - lo->second) * t;
}

// ---------------------------------------------------------------------------
// Flat key-value config format shared by .camarch / .camtech / .camsweep.

struct ConfigFile {
  // section -> ordered (key, value) pairs
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;

  bool has(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    if (it == sections.end()) return false;
    for (const auto& [k, v] : it->second)
      if (k == key) return true;
    return false;
  }
  std::string get(const std::string& section, const std::string& key,
                  const std::string& dflt = "") const {
    auto it = sections.find(section);
    if (it == sections.end()) return dflt;
    for (const auto& [k, v] : it->second)
      if (k == key) return v;
    return dflt;
  }
};

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline ConfigFile parse_config(const std::string& text) {
  ConfigFile cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto slashes = line.find("//");
    if (slashes != std::string::npos) line = line.substr(0, slashes);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw CompileError("malformed section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CompileError("expected key = value", lineno);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || section.empty())
      throw CompileError("key outside of a section", lineno);
    cfg.sections[section].emplace_back(key, val);
  }
  return cfg;
}

namespace cfg_detail {

inline int64_t to_int(const std::string& section, const std::string& key,
                      const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw CompileError("[" + section + "] " + key + ": expected integer, got '" + v + "'");
  }
}

inline double to_real(const std::string& section, const std::string& key,
                      const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw CompileError("[" + section + "] " + key + ": expected number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& section, const std::string& key,
                    const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw CompileError("[" + section + "] " + key + ": expected true/false, got '" + v + "'");
}

inline AccessMode to_mode(const std::string& section, const std::string& key,
                          const std::string& v) {
  if (v == "parallel") return AccessMode::Parallel;
  if (v == "sequential") return AccessMode::Sequential;
  throw CompileError("[" + section + "] " + key + ": expected parallel|sequential");
}

}  // namespace cfg_detail

inline ArchSpec parse_arch_spec(const std::string& text) {
  ConfigFile cfg = parse_config(text);
  ArchSpec a;
  const std::string h = "hierarchy";
  auto it = cfg.sections.find(h);
  if (it == cfg.sections.end())
    throw CompileError("arch spec: missing [hierarchy] section");
  for (const auto& [key, val] : it->second) {
    if (key == "banks") {
      if (val == "auto") {
        a.auto_banks = true;
        a.banks = 1;
      } else {
        a.auto_banks = false;
        a.banks = cfg_detail::to_int(h, key, val);
      }
    } else if (key == "mats_per_bank") {
      a.mats_per_bank = cfg_detail::to_int(h, key, val);
    } else if (key == "arrays_per_mat") {
      a.arrays_per_mat = cfg_detail::to_int(h, key, val);
    } else if (key == "subarrays_per_array") {
      a.subarrays_per_array = cfg_detail::to_int(h, key, val);
    } else if (key == "rows") {
      a.rows = cfg_detail::to_int(h, key, val);
    } else if (key == "cols") {
      a.cols = cfg_detail::to_int(h, key, val);
    } else if (key == "bank_mode") {
      a.bank_mode = cfg_detail::to_mode(h, key, val);
    } else if (key == "mat_mode") {
      a.mat_mode = cfg_detail::to_mode(h, key, val);
    } else if (key == "array_mode") {
      a.array_mode = cfg_detail::to_mode(h, key, val);
    } else if (key == "selective_search") {
      a.selective_search = cfg_detail::to_bool(h, key, val);
    } else {
      throw CompileError("arch spec: unknown key '" + key + "'");
    }
  }
  if (cfg.sections.count("optimization")) {
    std::string target = cfg.get("optimization", "target", "latency");
    if (target == "latency")
      a.opt_target = OptTarget::Latency;
    else if (target == "power")
      a.opt_target = OptTarget::Power;
    else if (target == "utilization")
      a.opt_target = OptTarget::Utilization;
    else
      throw CompileError("arch spec: unknown optimization target '" + target + "'");
  }
  validate_arch(a);
  return a;
}

inline std::string save_arch_spec(const ArchSpec& a) {
  std::ostringstream os;
  os << "[hierarchy]\n";
  os << "banks = " << (a.auto_banks ? std::string("auto") : std::to_string(a.banks))
     << "\n";
  os << "mats_per_bank = " << a.mats_per_bank << "\n";
  os << "arrays_per_mat = " << a.arrays_per_mat << "\n";
  os << "subarrays_per_array = " << a.subarrays_per_array << "\n";
  os << "rows = " << a.rows << "\n";
  os << "cols = " << a.cols << "\n";
  auto mode = [](AccessMode m) { return m == AccessMode::Parallel ? "parallel" : "sequential"; };
  os << "bank_mode = " << mode(a.bank_mode) << "\n";
  os << "mat_mode = " << mode(a.mat_mode) << "\n";
  os << "array_mode = " << mode(a.array_mode) << "\n";
  os << "selective_search = " << (a.selective_search ? "true" : "false") << "\n";
  os << "\n[optimization]\n";
  os << "target = "
     << (a.opt_target == OptTarget::Latency
             ? "latency"
             : a.opt_target == OptTarget::Power ? "power" : "utilization")
     << "\n";
  return os.str();
}

inline TechParams parse_tech_params(const std::string& text) {
  ConfigFile cfg = parse_config(text);
  TechParams t;
  auto it = cfg.sections.find("tech");
  if (it == cfg.sections.end()) throw CompileError("tech params: missing [tech] section");
  bool saw_anchor = false;
  const std::string prefix = "search_latency_ns_";
  for (const auto& [key, val] : it->second) {
    if (key.rfind(prefix, 0) == 0) {
      if (!saw_anchor) {
        t.search_latency_anchors.clear();
        saw_anchor = true;
      }
      int64_t c = cfg_detail::to_int("tech", key, key.substr(prefix.size()));
      t.search_latency_anchors[c] = cfg_detail::to_real("tech", key, val);
    } else if (key == "search_energy_pj_per_cell") {
      t.search_energy_pj_per_cell = cfg_detail::to_real("tech", key, val);
    } else if (key == "write_latency_ns") {
      t.write_latency_ns = cfg_detail::to_real("tech", key, val);
    } else if (key == "write_energy_pj_per_cell") {
      t.write_energy_pj_per_cell = cfg_detail::to_real("tech", key, val);
    } else if (key == "peripheral_subarray_pj") {
      t.peripheral_subarray_pj = cfg_detail::to_real("tech", key, val);
    } else if (key == "peripheral_array_pj") {
      t.peripheral_array_pj = cfg_detail::to_real("tech", key, val);
    } else if (key == "peripheral_mat_pj") {
      t.peripheral_mat_pj = cfg_detail::to_real("tech", key, val);
    } else if (key == "peripheral_bank_pj") {
      t.peripheral_bank_pj = cfg_detail::to_real("tech", key, val);
    } else if (key == "ml_voltage_scale") {
      t.ml_voltage_scale = cfg_detail::to_real("tech", key, val);
    } else {
      throw CompileError("tech params: unknown key '" + key + "'");
    }
  }
  validate_tech(t);
  return t;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CompileError("file not found: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline ArchSpec load_arch_spec(const std::string& path) {
  return parse_arch_spec(read_file(path));
}

// Loads tech params from the given path, from $CAMFORGE_TECH when the path
// is empty, and falls back to the built-in defaults otherwise.
inline TechParams load_tech_params(const std::string& path = "") {
  std::string p = path;
  if (p.empty()) {
    if (const char* env = std::getenv("CAMFORGE_TECH")) p = env;
  }
  if (p.empty()) {
    TechParams t;
    validate_tech(t);
    return t;
  }
  return parse_tech_params(read_file(p));
}

}  // namespace camforge
