#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "camforge/ir.hpp"
#include "camforge/printer.hpp"
#include "camforge/registry.hpp"

// Pass pipeline machinery. Passes are pure ProgramModule -> ProgramModule
// functions registered under a name with a typed option schema. Every pass
// output is re-verified; a failing pass aborts the pipeline with the pass
// name attached.

namespace camforge {

struct PassOptionSpec {
  AttrKind kind;
  bool required = false;
};

struct PassInfo {
  std::string name;
  std::map<std::string, PassOptionSpec> options;
  std::function<ProgramModule(const ProgramModule&, const AttrMap&)> run;
};

class PassRegistry {
public:
  void add(PassInfo info) { passes_[info.name] = std::move(info); }

  const PassInfo* find(const std::string& name) const {
    auto it = passes_.find(name);
    return it == passes_.end() ? nullptr : &it->second;
  }

private:
  std::map<std::string, PassInfo> passes_;
};

struct PipelineSpec {
  std::vector<std::pair<std::string, AttrMap>> passes;

  // Validates pass names and option types against a registry.
  void validate(const PassRegistry& registry) const {
    for (const auto& [name, opts] : passes) {
      const PassInfo* info = registry.find(name);
      if (!info) throw CompileError("unregistered pass '" + name + "'");
      for (const auto& [key, spec] : info->options) {
        auto it = opts.find(key);
        if (it == opts.end()) {
          if (spec.required)
            throw CompileError("pass '" + name + "': missing option '" + key + "'");
        } else if (attr_kind(it->second) != spec.kind) {
          throw CompileError("pass '" + name + "': option '" + key + "' has wrong type");
        }
      }
      for (const auto& [key, v] : opts) {
        (void)v;
        if (!info->options.count(key))
          throw CompileError("pass '" + name + "': unknown option '" + key + "'");
      }
    }
  }
};

// Pipeline text form: pass-name{key=value, ...} separated by commas, e.g.
//   lower-tensor-to-cim,cim-fuse-ops{flag=similarity},cim-partition{rows=32, cols=32}
// Values: integers, reals, or bare words (strings).
inline PipelineSpec parse_pipeline(const std::string& text) {
  PipelineSpec spec;
  size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  };
  while (i < text.size()) {
    skip_ws();
    if (i >= text.size()) break;
    size_t start = i;
    while (i < text.size() && text[i] != ',' && text[i] != '{') ++i;
    std::string name = text.substr(start, i - start);
    while (!name.empty() && name.back() == ' ') name.pop_back();
    if (name.empty()) throw CompileError("empty pass name in pipeline");
    AttrMap opts;
    if (i < text.size() && text[i] == '{') {
      ++i;
      while (true) {
        skip_ws();
        if (i < text.size() && text[i] == '}') {
          ++i;
          break;
        }
        size_t ks = i;
        while (i < text.size() && text[i] != '=' && text[i] != '}' && text[i] != ',')
          ++i;
        std::string key = text.substr(ks, i - ks);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        if (i >= text.size() || text[i] != '=')
          throw CompileError("expected '=' in pipeline option for pass '" + name + "'");
        ++i;
        skip_ws();
        size_t vs = i;
        while (i < text.size() && text[i] != ',' && text[i] != '}') ++i;
        std::string val = text.substr(vs, i - vs);
        while (!val.empty() && val.back() == ' ') val.pop_back();
        bool is_int = !val.empty();
        for (size_t c = 0; c < val.size(); ++c)
          if (!std::isdigit(static_cast<unsigned char>(val[c])) &&
              !(c == 0 && val[c] == '-'))
            is_int = false;
        if (is_int)
          opts[key] = static_cast<int64_t>(std::stoll(val));
        else
          opts[key] = val;
        if (i < text.size() && text[i] == ',') ++i;
      }
    }
    spec.passes.emplace_back(std::move(name), std::move(opts));
    skip_ws();
    if (i < text.size()) {
      if (text[i] != ',') throw CompileError("expected ',' between pipeline passes");
      ++i;
    }
  }
  return spec;
}

// Applies the pipeline. The input module is untouched; every intermediate
// module is verified before the next pass runs.
inline ProgramModule run_pipeline(const ProgramModule& m, const PipelineSpec& spec,
                                  const PassRegistry& registry) {
  spec.validate(registry);
  {
    auto diags = verify(m);
    if (!diags.empty())
      throw CompileError("pipeline input does not verify: " + diags.front().str());
  }
  ProgramModule cur = m;
  for (const auto& [name, opts] : spec.passes) {
    const PassInfo* info = registry.find(name);
    ProgramModule out;
    try {
      out = info->run(cur, opts);
    } catch (const CompileError& e) {
      throw CompileError("pass '" + name + "' failed: " + e.what());
    }
    auto diags = verify(out);
    if (!diags.empty())
      throw CompileError("pass '" + name + "' produced invalid IR: " +
                         diags.front().str());
    cur = std::move(out);
  }
  return cur;
}

}  // namespace camforge
