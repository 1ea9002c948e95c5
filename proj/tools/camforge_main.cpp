// camforge: compile, simulate and sweep similarity kernels on hierarchical
// CAM accelerator models.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "camforge/camforge.hpp"

namespace {

void add_compile_flags(CLI::App* cmd, camforge::CompileFlags& flags,
                       int64_t& threshold, bool& has_threshold) {
  cmd->add_option("--device", flags.device, "CAM device type (tcam|mcam|acam)")
      ->check(CLI::IsMember({"tcam", "mcam", "acam"}));
  cmd->add_option("--match", flags.match, "Match type (exact|best|threshold)")
      ->check(CLI::IsMember({"exact", "best", "threshold"}));
  cmd->add_option("--metric", flags.metric, "Search metric (hamming|euclidean)")
      ->check(CLI::IsMember({"hamming", "euclidean"}));
  auto* t = cmd->add_option("--threshold", threshold, "Distance bound for threshold match");
  t->each([&has_threshold](const std::string&) { has_threshold = true; });
  cmd->add_option("--mode", flags.mode,
                  "Mapping mode (base|power|density|power_density); default from arch")
      ->check(CLI::IsMember({"base", "power", "density", "power_density"}));
  cmd->add_option("--max-active", flags.max_active,
                  "Subarrays active per array at a time in power modes");
  cmd->add_option("--pe-rows", flags.pe_rows, "Partition tile rows (default: subarray rows)");
  cmd->add_option("--pe-cols", flags.pe_cols, "Partition tile cols (default: subarray cols)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compiler and simulator for CAM-based similarity accelerators",
               "camforge"};
  app.require_subcommand(1);

  // compile
  camforge::CompileArgs cargs;
  int64_t cthreshold = 0;
  bool chas_threshold = false;
  std::vector<std::string> emit;
  auto* compile = app.add_subcommand("compile", "Lower a kernel and dump stage IR");
  compile->add_option("kernel", cargs.kernel_path, "Kernel file (.camk)")->required();
  compile->add_option("--arch", cargs.arch_path, "Architecture file (.camarch)")
      ->required();
  compile->add_option("--emit", emit,
                      "Stages to dump: tensor, cim, cim-fused, cim-partitioned, "
                      "cam, cam-mapped, or all")
      ->delimiter(',');
  compile->add_option("-o,--out-dir", cargs.out_dir, "Output directory for IR dumps");
  add_compile_flags(compile, cargs.flags, cthreshold, chas_threshold);

  // simulate
  camforge::SimulateArgs sargs;
  int64_t sthreshold = 0;
  bool shas_threshold = false;
  std::vector<std::string> data_specs;
  auto* simulate = app.add_subcommand("simulate", "Compile and run a kernel");
  simulate->add_option("kernel", sargs.kernel_path, "Kernel file (.camk)")->required();
  simulate->add_option("--arch", sargs.arch_path, "Architecture file (.camarch)")
      ->required();
  simulate->add_option("--tech", sargs.tech_path,
                       "Technology file (.camtech); default $CAMFORGE_TECH or built-ins");
  simulate->add_option("--data", data_specs, "Input tensors as name=path")
      ->delimiter(',');
  simulate->add_option("--seed", sargs.seed, "Seed for synthetic inputs");
  simulate->add_flag("--check-oracle", sargs.check_oracle,
                     "Compare outputs against the dense reference oracle");
  simulate->add_option("--trace", sargs.trace_path, "Write a per-event trace CSV");
  simulate->add_option("--format", sargs.format, "Report format (text|csv)")
      ->check(CLI::IsMember({"text", "csv"}));
  simulate->add_flag("--edp", sargs.edp, "Include the energy-delay product");
  add_compile_flags(simulate, sargs.flags, sthreshold, shas_threshold);

  // sweep
  camforge::SweepArgs wargs;
  auto* sweep = app.add_subcommand("sweep", "Design-space exploration to CSV");
  sweep->add_option("config", wargs.sweep_path, "Sweep file (.camsweep)")->required();
  sweep->add_option("--tech", wargs.tech_path, "Technology file (.camtech)");
  sweep->add_option("-o,--out", wargs.out_path, "Output CSV path (default stdout)");
  sweep->add_option("--jobs", wargs.jobs, "Parallel configuration evaluations");
  sweep->add_flag("--edp", wargs.edp, "Include the energy-delay product column");

  CLI11_PARSE(app, argc, argv);

  if (compile->parsed()) {
    cargs.emit = emit;
    if (chas_threshold) cargs.flags.threshold = cthreshold;
    return camforge::cmd_compile(cargs, std::cout, std::cerr);
  }
  if (simulate->parsed()) {
    if (shas_threshold) sargs.flags.threshold = sthreshold;
    for (const std::string& spec : data_specs) {
      auto eq = spec.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --data expects name=path\n";
        return camforge::kExitInputError;
      }
      sargs.data[spec.substr(0, eq)] = spec.substr(eq + 1);
    }
    return camforge::cmd_simulate(sargs, std::cout, std::cerr);
  }
  if (sweep->parsed()) return camforge::cmd_sweep(wargs, std::cout, std::cerr);
  return camforge::kExitOk;
}
