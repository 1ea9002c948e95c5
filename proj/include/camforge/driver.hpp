#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "camforge/interp.hpp"
#include "camforge/kernel.hpp"
#include "camforge/pipeline.hpp"
#include "camforge/sweep.hpp"
#include "camforge/tensor_io.hpp"

// Driver layer shared by the camforge CLI and the test suite. Exit codes are
// a stable contract: 0 success, 1 compile error, 2 input error, 3 validation
// mismatch.

namespace camforge {

constexpr int kExitOk = 0;
constexpr int kExitCompileError = 1;
constexpr int kExitInputError = 2;
constexpr int kExitValidationError = 3;

struct CompileArgs {
  std::string kernel_path;
  std::string arch_path;
  std::string out_dir;              // default: kernel's directory
  std::vector<std::string> emit;    // stage names, or the single entry "all"
  CompileFlags flags;
};

struct SimulateArgs {
  std::string kernel_path;
  std::string arch_path;
  std::string tech_path;
  std::map<std::string, std::string> data;  // param name -> tensor file
  uint64_t seed = 42;                       // used when data files are absent
  CompileFlags flags;
  bool check_oracle = false;
  std::string trace_path;
  std::string format = "text";
  bool edp = false;
};

struct SweepArgs {
  std::string sweep_path;
  std::string tech_path;
  std::string out_path;  // empty: stdout
  int jobs = 1;
  bool edp = false;
};

namespace driver_detail {

inline std::string kernel_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

inline ProgramModule compile_to(const std::string& stage, const ProgramModule& tensor_mod,
                                const ArchSpec& arch, const CompileFlags& flags) {
  PassRegistry reg = build_pass_registry(&arch);
  return run_pipeline(tensor_mod, stage_pipeline(stage, arch, flags), reg);
}

// Locates the fused similarity op and maps its stored/query captures back to
// function argument positions; required by --check-oracle.
struct OracleParams {
  size_t stored_arg = 0;
  size_t query_arg = 0;
  std::string metric;
  int64_t k = 0;
  bool largest = true;
};

inline OracleParams oracle_params(const ProgramModule& fused) {
  if (fused.functions.empty()) throw SimError("empty module");
  const FunctionDef& fn = fused.functions.front();
  for (const Operation& op : fn.body.ops) {
    if (op.full_name() != "cim.execute" || op.regions.empty()) continue;
    const Region& r = op.regions[0];
    if (r.ops.empty() || r.ops[0].full_name() != "cim.similarity") continue;
    const Operation& sim = r.ops[0];
    OracleParams p;
    p.metric = sim.str_attr("metric");
    p.k = sim.int_attr("k");
    p.largest = sim.int_attr("largest", 1) != 0;
    auto arg_pos = [&](ValueId region_arg) -> size_t {
      for (size_t i = 0; i < r.args.size(); ++i)
        if (r.args[i].id == region_arg) {
          ValueId outer = op.operands[i + 1];
          for (size_t j = 0; j < fn.args.size(); ++j)
            if (fn.args[j].id == outer) return j;
        }
      throw SimError("similarity operands are not direct kernel parameters");
    };
    p.stored_arg = arg_pos(sim.operands[0]);
    p.query_arg = arg_pos(sim.operands[1]);
    return p;
  }
  throw SimError("kernel does not fuse to a similarity operation");
}

inline bool tensors_numeric_equal(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.fval_raw(i) != b.fval_raw(i)) return false;
  return true;
}

inline std::map<std::string, Tensor> gather_inputs(const FunctionDef& fn,
                                                   const SimulateArgs& args) {
  std::map<std::string, Tensor> inputs;
  std::mt19937_64 rng(args.seed);
  for (size_t i = 0; i < fn.args.size(); ++i) {
    std::string name = fn.arg_name(i);
    auto it = args.data.find(name);
    if (it != args.data.end()) {
      inputs[name] = load_tensor(it->second);
      continue;
    }
    const TensorType& ty = fn.args[i].type.tensor;
    if (ty.elem.kind == ElemKind::Float) {
      std::uniform_real_distribution<float> dist(0.0f, 1.0f);
      std::vector<float> data(static_cast<size_t>(ty.numel()), 0.0f);
      for (auto& v : data) v = dist(rng);
      inputs[name] = Tensor::floats(ty.shape, std::move(data));
    } else {
      inputs[name] = random_int_tensor(ty.shape, ty.elem, rng);
    }
  }
  return inputs;
}

}  // namespace driver_detail

inline int cmd_compile(const CompileArgs& args, std::ostream& out, std::ostream& err) {
  try {
    std::string kernel_text = read_file(args.kernel_path);
    ArchSpec arch = load_arch_spec(args.arch_path);
    ProgramModule tensor_mod = parse_kernel(kernel_text);

    std::vector<std::string> stages = args.emit;
    if (stages.empty()) stages = {"cam-mapped"};
    if (stages.size() == 1 && stages[0] == "all") stages = stage_names();

    std::filesystem::path dir = args.out_dir.empty()
                                    ? std::filesystem::path(args.kernel_path).parent_path()
                                    : std::filesystem::path(args.out_dir);
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::string stem = driver_detail::kernel_stem(args.kernel_path);

    for (const std::string& stage : stages) {
      ProgramModule m = driver_detail::compile_to(stage, tensor_mod, arch, args.flags);
      std::filesystem::path file = dir / (stem + "." + stage + ".ir");
      std::ofstream os(file);
      if (!os) {
        err << "cannot write " << file.string() << "\n";
        return kExitCompileError;
      }
      os << print_module(m);
      out << "wrote " << file.string() << "\n";
    }
    return kExitOk;
  } catch (const CompileError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompileError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompileError;
  }
}

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  ProgramModule mapped;
  ProgramModule fused;
  ArchSpec arch;
  TechParams tech;
  try {
    std::string kernel_text = read_file(args.kernel_path);
    arch = load_arch_spec(args.arch_path);
    tech = load_tech_params(args.tech_path);
    ProgramModule tensor_mod = parse_kernel(kernel_text);
    mapped = driver_detail::compile_to("cam-mapped", tensor_mod, arch, args.flags);
    if (args.check_oracle)
      fused = driver_detail::compile_to("cim-fused", tensor_mod, arch, args.flags);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompileError;
  }

  try {
    const FunctionDef& fn = mapped.functions.front();
    std::map<std::string, Tensor> inputs = driver_detail::gather_inputs(fn, args);
    ExecOptions opts;
    opts.collect_trace = !args.trace_path.empty();
    ExecResult res = execute(mapped, &arch, tech, inputs, opts);

    std::string config = driver_detail::kernel_stem(args.kernel_path) + "-" +
                         (args.flags.mode.empty() ? default_mode_for(arch)
                                                  : args.flags.mode);
    out << metrics_report(res.metrics, args.format, config, args.edp);
    if (!args.trace_path.empty()) {
      std::ofstream ts(args.trace_path);
      ts << trace_lines(res.metrics);
    }

    if (args.check_oracle) {
      driver_detail::OracleParams p = driver_detail::oracle_params(fused);
      std::string match = args.flags.match;
      int64_t threshold = args.flags.threshold.value_or(0);
      OracleResult oracle = dense_oracle(
          inputs.at(fn.arg_name(p.stored_arg)), inputs.at(fn.arg_name(p.query_arg)),
          p.metric, p.k, p.largest, match, threshold);
      bool ok = !res.outputs.empty() &&
                driver_detail::tensors_numeric_equal(res.outputs[0], oracle.values);
      if (p.k > 0)
        ok = ok && res.outputs.size() == 2 &&
             driver_detail::tensors_numeric_equal(res.outputs[1], oracle.indices);
      if (!ok) {
        err << "oracle mismatch\n";
        return kExitValidationError;
      }
      out << "oracle check passed\n";
    }
    return kExitOk;
  } catch (const SimError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

inline int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
  try {
    SweepConfig sc = parse_sweep_config(read_file(args.sweep_path));
    TechParams tech = load_tech_params(args.tech_path);
    std::vector<SweepRow> rows = run_sweep(sc, tech, args.jobs);
    std::string csv = sweep_csv(rows, args.edp);
    if (args.out_path.empty()) {
      out << csv;
    } else {
      std::ofstream os(args.out_path);
      if (!os) {
        err << "cannot write " << args.out_path << "\n";
        return kExitCompileError;
      }
      os << csv;
      out << "wrote " << args.out_path << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompileError;
  }
}

}  // namespace camforge
