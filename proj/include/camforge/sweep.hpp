#pragma once

#include <future>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "camforge/arch.hpp"
#include "camforge/interp.hpp"
#include "camforge/kernel.hpp"
#include "camforge/pipeline.hpp"

// Design-space exploration: run the full pipeline plus simulation for every
// (subarray size, optimization mode) combination of a sweep file and emit one
// CSV row each, size-major and mode-minor. Rows are byte-reproducible across
// runs and parallelism degrees.

namespace camforge {

struct SweepConfig {
  std::vector<int64_t> sizes;          // square subarrays, R = C
  std::vector<OptModeKind> modes;
  int64_t dimension = 0;               // D
  int64_t entries = 0;                 // stored rows
  ElemType elem = elem_i1();
  std::string metric = "dot";          // dot | euclidean
  int64_t k = 1;
  int64_t mats_per_bank = 4;
  int64_t arrays_per_mat = 4;
  int64_t subarrays_per_array = 8;
  int64_t max_active = 1;
  uint64_t seed = 42;
};

inline SweepConfig parse_sweep_config(const std::string& text) {
  ConfigFile cfg = parse_config(text);
  SweepConfig sc;
  auto split_list = [](const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
      if (c == ',') {
        if (!trim(cur).empty()) out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
  };
  if (!cfg.sections.count("sweep")) throw CompileError("sweep file: missing [sweep]");
  for (const auto& [key, val] : cfg.sections.at("sweep")) {
    if (key == "sizes") {
      for (const auto& s : split_list(val))
        sc.sizes.push_back(cfg_detail::to_int("sweep", key, s));
    } else if (key == "modes") {
      for (const auto& s : split_list(val)) sc.modes.push_back(mode_from_string(s));
    } else if (key == "max_active") {
      sc.max_active = cfg_detail::to_int("sweep", key, val);
    } else if (key == "seed") {
      sc.seed = uint64_t(cfg_detail::to_int("sweep", key, val));
    } else {
      throw CompileError("sweep file: unknown key '" + key + "'");
    }
  }
  if (!cfg.sections.count("workload"))
    throw CompileError("sweep file: missing [workload]");
  for (const auto& [key, val] : cfg.sections.at("workload")) {
    if (key == "dimension") {
      sc.dimension = cfg_detail::to_int("workload", key, val);
    } else if (key == "entries") {
      sc.entries = cfg_detail::to_int("workload", key, val);
    } else if (key == "elem") {
      if (val == "f32") throw CompileError("sweep workload must be integer-typed");
      if (val.size() < 2 || val[0] != 'i')
        throw CompileError("sweep file: bad elem '" + val + "'");
      sc.elem = elem_i(std::stoi(val.substr(1)));
    } else if (key == "metric") {
      if (val != "dot" && val != "euclidean")
        throw CompileError("sweep metric must be dot or euclidean");
      sc.metric = val;
    } else if (key == "k") {
      sc.k = cfg_detail::to_int("workload", key, val);
    } else {
      throw CompileError("sweep file: unknown workload key '" + key + "'");
    }
  }
  if (cfg.sections.count("hierarchy")) {
    for (const auto& [key, val] : cfg.sections.at("hierarchy")) {
      if (key == "mats_per_bank")
        sc.mats_per_bank = cfg_detail::to_int("hierarchy", key, val);
      else if (key == "arrays_per_mat")
        sc.arrays_per_mat = cfg_detail::to_int("hierarchy", key, val);
      else if (key == "subarrays_per_array")
        sc.subarrays_per_array = cfg_detail::to_int("hierarchy", key, val);
      else
        throw CompileError("sweep file: unknown hierarchy key '" + key + "'");
    }
  }
  if (sc.sizes.empty() || sc.modes.empty())
    throw CompileError("sweep file: sizes and modes must be non-empty");
  for (int64_t s : sc.sizes)
    if (s < 16 || s > 256 || !is_power_of_two(s))
      throw CompileError("sweep sizes must be powers of two in [16, 256]");
  if (sc.dimension < 1 || sc.entries < 1 || sc.k < 1 || sc.k > sc.entries)
    throw CompileError("sweep workload dims invalid");
  if (sc.metric == "dot" && !sc.elem.is_i1())
    throw CompileError("dot workloads require i1 data");
  return sc;
}

// Synthetic kernel matching the workload; data comes from a seeded RNG so
// reruns are bit-identical.
inline std::string sweep_kernel_text(const SweepConfig& sc) {
  std::ostringstream os;
  std::string et = sc.elem.str();
  int64_t n = sc.entries;
  int64_t d = sc.dimension;
  if (sc.metric == "dot") {
    os << "kernel sweep_dot(stored: " << et << "[" << n << "x" << d
       << "], query: " << et << "[1x" << d << "]) -> (i32[1x" << sc.k
       << "], i32[1x" << sc.k << "]) {\n"
       << "  t = transpose(stored);\n"
       << "  s = matmul(query, t);\n"
       << "  v, i = topk(s, k=" << sc.k << ");\n"
       << "  return v, i;\n}\n";
  } else {
    os << "kernel sweep_eucl(stored: " << et << "[" << n << "x" << d
       << "], query: " << et << "[1x" << d << "]) -> (f32[1x" << sc.k
       << "], i32[1x" << sc.k << "]) {\n"
       << "  df = sub(query, stored);\n"
       << "  nr = norm(df, p=2, dim=1);\n"
       << "  v, i = topk(nr, k=" << sc.k << ", largest=false);\n"
       << "  return v, i;\n}\n";
  }
  return os.str();
}

inline Tensor random_int_tensor(std::vector<int64_t> shape, ElemType elem,
                                std::mt19937_64& rng) {
  int64_t hi = (int64_t{1} << std::min(elem.bits, 16)) - 1;
  std::uniform_int_distribution<int64_t> dist(0, hi);
  TensorType ty{shape, elem};
  std::vector<int64_t> data(static_cast<size_t>(ty.numel()), 0);
  for (auto& v : data) v = dist(rng);
  return Tensor::ints(std::move(shape), elem, std::move(data));
}

struct SweepRow {
  std::string config;
  Metrics metrics;
};

inline SweepRow run_sweep_config(const SweepConfig& sc, int64_t size,
                                 OptModeKind mode, const TechParams& tech) {
  ArchSpec arch;
  arch.rows = size;
  arch.cols = size;
  arch.auto_banks = true;
  arch.banks = 1;
  arch.mats_per_bank = sc.mats_per_bank;
  arch.arrays_per_mat = sc.arrays_per_mat;
  arch.subarrays_per_array = sc.subarrays_per_array;
  arch.selective_search = true;
  validate_arch(arch);

  ProgramModule m = parse_kernel(sweep_kernel_text(sc));
  CompileFlags flags;
  flags.device = sc.elem.is_i1() ? "tcam" : "mcam";
  flags.metric = sc.elem.is_i1() ? "hamming" : "euclidean";
  flags.mode = mode_to_string(mode);
  flags.max_active = sc.max_active;
  PassRegistry reg = build_pass_registry(&arch);
  ProgramModule mapped = run_pipeline(m, stage_pipeline("cam-mapped", arch, flags), reg);

  std::mt19937_64 rng(sc.seed);
  std::map<std::string, Tensor> inputs;
  inputs["stored"] = random_int_tensor({sc.entries, sc.dimension}, sc.elem, rng);
  inputs["query"] = random_int_tensor({1, sc.dimension}, sc.elem, rng);

  ExecOptions opts;
  opts.collect_trace = false;
  ExecResult res = execute(mapped, &arch, tech, inputs, opts);
  SweepRow row;
  row.config = std::to_string(size) + "x" + std::to_string(size) + "-" +
               mode_to_string(mode);
  row.metrics = std::move(res.metrics);
  return row;
}

// Size-major, mode-minor evaluation; configurations are independent pure
// evaluations so they may run concurrently without affecting output order.
inline std::vector<SweepRow> run_sweep(const SweepConfig& sc, const TechParams& tech,
                                       int jobs = 1) {
  std::vector<std::pair<int64_t, OptModeKind>> configs;
  for (int64_t size : sc.sizes)
    for (OptModeKind mode : sc.modes) configs.emplace_back(size, mode);
  std::vector<SweepRow> rows(configs.size());
  if (jobs <= 1) {
    for (size_t i = 0; i < configs.size(); ++i)
      rows[i] = run_sweep_config(sc, configs[i].first, configs[i].second, tech);
    return rows;
  }
  std::vector<std::future<SweepRow>> futures;
  for (const auto& [size, mode] : configs)
    futures.push_back(std::async(std::launch::async, [&, size, mode] {
      return run_sweep_config(sc, size, mode, tech);
    }));
  for (size_t i = 0; i < futures.size(); ++i) rows[i] = futures[i].get();
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, bool edp = false) {
  std::ostringstream os;
  os << metrics_csv_header(edp) << "\n";
  for (const SweepRow& r : rows) os << metrics_csv_row(r.metrics, r.config, edp) << "\n";
  return os.str();
}

}  // namespace camforge
