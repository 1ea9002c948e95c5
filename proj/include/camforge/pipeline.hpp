#pragma once

#include <optional>
#include <string>
#include <vector>

#include "camforge/arch.hpp"
#include "camforge/cam_passes.hpp"
#include "camforge/cim_passes.hpp"
#include "camforge/pass.hpp"

// Built-in pass registration and the stage pipelines the driver exposes as
// --emit targets. Passes that map onto hardware capture the ArchSpec.

namespace camforge {

inline PassRegistry build_pass_registry(const ArchSpec* arch = nullptr) {
  PassRegistry reg;
  auto opt_s = [] { return PassOptionSpec{AttrKind::String, false}; };
  auto opt_i = [] { return PassOptionSpec{AttrKind::Int, false}; };
  auto req_i = [] { return PassOptionSpec{AttrKind::Int, true}; };

  reg.add({"lower-tensor-to-cim",
           {},
           [](const ProgramModule& m, const AttrMap&) {
             return lower_tensor_to_cim(m);
           }});
  reg.add({"cim-fuse-ops",
           {{"flag", opt_s()}},
           [](const ProgramModule& m, const AttrMap& opts) {
             auto it = opts.find("flag");
             std::string flag =
                 it == opts.end() ? "similarity" : std::get<std::string>(it->second);
             return fuse_ops(m, flag);
           }});
  reg.add({"cim-partition",
           {{"rows", req_i()}, {"cols", req_i()}},
           [](const ProgramModule& m, const AttrMap& opts) {
             return partition(m, std::get<int64_t>(opts.at("rows")),
                              std::get<int64_t>(opts.at("cols")));
           }});
  reg.add({"lower-cim-to-cam",
           {{"device", opt_s()},
            {"match", opt_s()},
            {"metric", opt_s()},
            {"threshold", opt_i()}},
           [](const ProgramModule& m, const AttrMap& opts) {
             auto str = [&](const char* k, const std::string& dflt) {
               auto it = opts.find(k);
               return it == opts.end() ? dflt : std::get<std::string>(it->second);
             };
             CamDevice device = device_from_string(str("device", "tcam"));
             SearchSpec spec;
             spec.match = match_from_string(str("match", "best"));
             std::string metric =
                 str("metric", device == CamDevice::TCAM ? "hamming" : "euclidean");
             spec.metric = metric_from_string(metric);
             auto th = opts.find("threshold");
             if (th != opts.end()) spec.threshold = std::get<int64_t>(th->second);
             return lower_cim_to_cam(m, device, spec);
           }});
  reg.add({"cam-map",
           {{"mode", opt_s()}, {"max_active", opt_i()}},
           [arch](const ProgramModule& m, const AttrMap& opts) {
             if (!arch)
               throw CompileError("cam-map requires an architecture specification");
             OptMode mode;
             auto it = opts.find("mode");
             mode.kind = mode_from_string(
                 it == opts.end() ? "base" : std::get<std::string>(it->second));
             auto ma = opts.find("max_active");
             if (ma != opts.end()) mode.max_active = std::get<int64_t>(ma->second);
             return cam_map(m, *arch, mode);
           }});
  return reg;
}

// Compile-flow configuration resolved from CLI flags and the arch spec.
struct CompileFlags {
  int64_t pe_rows = 0;  // 0: use the subarray geometry
  int64_t pe_cols = 0;
  std::string device = "tcam";
  std::string match = "best";
  std::string metric;  // empty: derived from the device
  std::optional<int64_t> threshold;
  std::string mode;  // empty: derived from the arch optimization target
  int64_t max_active = 1;
};

inline std::string default_mode_for(const ArchSpec& arch) {
  switch (arch.opt_target) {
    case OptTarget::Latency: return "base";
    case OptTarget::Power: return "power";
    case OptTarget::Utilization: return "density";
  }
  return "base";
}

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> stages = {
      "tensor", "cim", "cim-fused", "cim-partitioned", "cam", "cam-mapped"};
  return stages;
}

// Cumulative pipeline producing the given stage from tensor-dialect input.
inline PipelineSpec stage_pipeline(const std::string& stage, const ArchSpec& arch,
                                   const CompileFlags& flags) {
  const auto& stages = stage_names();
  if (std::find(stages.begin(), stages.end(), stage) == stages.end())
    throw CompileError("unknown stage '" + stage + "'");
  PipelineSpec spec;
  auto add_until = [&](const std::string& target) {
    std::vector<std::pair<std::string, std::pair<std::string, AttrMap>>> all;
    all.push_back({"cim", {"lower-tensor-to-cim", {}}});
    all.push_back({"cim-fused", {"cim-fuse-ops", {{"flag", std::string("similarity")}}}});
    all.push_back({"cim-partitioned",
                   {"cim-partition",
                    {{"rows", flags.pe_rows > 0 ? flags.pe_rows : arch.rows},
                     {"cols", flags.pe_cols > 0 ? flags.pe_cols : arch.cols}}}});
    AttrMap lower_opts = {{"device", flags.device}, {"match", flags.match}};
    if (!flags.metric.empty()) lower_opts["metric"] = flags.metric;
    if (flags.threshold) lower_opts["threshold"] = *flags.threshold;
    all.push_back({"cam", {"lower-cim-to-cam", lower_opts}});
    AttrMap map_opts = {
        {"mode", flags.mode.empty() ? default_mode_for(arch) : flags.mode},
        {"max_active", flags.max_active}};
    all.push_back({"cam-mapped", {"cam-map", map_opts}});
    for (const auto& [name, pass] : all) {
      spec.passes.push_back(pass);
      if (name == target) return;
    }
  };
  if (stage != "tensor") add_until(stage);
  return spec;
}

}  // namespace camforge
