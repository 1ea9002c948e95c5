#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "camforge/arch.hpp"
#include "camforge/cim_passes.hpp"
#include "camforge/ir.hpp"

// CAM-specific abstraction: lowering from cim to cam calls (alloc hierarchy,
// write/search/read) and mapping onto a concrete ArchSpec with the
// base/power/density/power+density optimization modes.

namespace camforge {

enum class CamDevice { TCAM, MCAM, ACAM };
enum class MatchType { Exact, Best, Threshold };
enum class CamMetric { Hamming, Euclidean };

struct SearchSpec {
  MatchType match = MatchType::Best;
  CamMetric metric = CamMetric::Hamming;
  std::optional<int64_t> threshold;
};

enum class OptModeKind { Base, Power, Density, PowerDensity };

struct OptMode {
  OptModeKind kind = OptModeKind::Base;
  int64_t max_active = 1;  // subarrays active per array at a time (power modes)

  bool power() const {
    return kind == OptModeKind::Power || kind == OptModeKind::PowerDensity;
  }
  bool density() const {
    return kind == OptModeKind::Density || kind == OptModeKind::PowerDensity;
  }
};

inline CamDevice device_from_string(const std::string& s) {
  if (s == "tcam") return CamDevice::TCAM;
  if (s == "mcam") return CamDevice::MCAM;
  if (s == "acam") return CamDevice::ACAM;
  throw CompileError("unknown CAM device '" + s + "'");
}

inline MatchType match_from_string(const std::string& s) {
  if (s == "exact") return MatchType::Exact;
  if (s == "best") return MatchType::Best;
  if (s == "threshold") return MatchType::Threshold;
  throw CompileError("unknown match type '" + s + "'");
}

inline const char* match_to_string(MatchType m) {
  switch (m) {
    case MatchType::Exact: return "exact";
    case MatchType::Best: return "best";
    case MatchType::Threshold: return "threshold";
  }
  return "?";
}

inline CamMetric metric_from_string(const std::string& s) {
  if (s == "hamming") return CamMetric::Hamming;
  if (s == "euclidean") return CamMetric::Euclidean;
  throw CompileError("unknown search metric '" + s + "'");
}

inline OptModeKind mode_from_string(const std::string& s) {
  if (s == "base") return OptModeKind::Base;
  if (s == "power") return OptModeKind::Power;
  if (s == "density") return OptModeKind::Density;
  if (s == "power_density") return OptModeKind::PowerDensity;
  throw CompileError("unknown optimization mode '" + s + "'");
}

inline const char* mode_to_string(OptModeKind k) {
  switch (k) {
    case OptModeKind::Base: return "base";
    case OptModeKind::Power: return "power";
    case OptModeKind::Density: return "density";
    case OptModeKind::PowerDensity: return "power_density";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Placement

struct TilePlacement {
  int64_t tile = 0;
  int64_t wave = 0;
  int64_t bank = 0;
  int64_t mat = 0;
  int64_t array = 0;
  int64_t subarray = 0;      // index within the array
  int64_t slot = 0;          // packed position within the subarray
  int64_t row_offset = 0;
  int64_t phys_subarray = 0; // linear physical subarray id
};

struct PlacementPlan {
  int64_t tiles = 0;
  int64_t packing = 1;        // column tiles packed per subarray
  int64_t subarrays_used = 0; // distinct physical subarrays
  int64_t banks_used = 0;
  int64_t waves = 1;
  std::vector<TilePlacement> assign;
};

// Core placement: n_tiles uniform tiles of n_eff rows each onto the
// hierarchy. Density packs p = floor(R / n_eff) tiles per subarray using
// selective row ranges; n_eff > R falls back to the base layout (p = 1).
inline PlacementPlan compute_placement(int64_t n_tiles, int64_t n_eff,
                                       const ArchSpec& arch, bool density) {
  if (n_tiles < 1) throw CompileError("placement: need at least one tile");
  PlacementPlan plan;
  plan.tiles = n_tiles;
  plan.packing = 1;
  if (density && n_eff >= 1 && n_eff <= arch.rows)
    plan.packing = std::max<int64_t>(1, arch.rows / n_eff);
  int64_t needed = (n_tiles + plan.packing - 1) / plan.packing;
  int64_t per_bank = arch.subarrays_per_bank();
  int64_t banks_needed = (needed + per_bank - 1) / per_bank;
  int64_t phys_banks = arch.auto_banks ? banks_needed : arch.banks;
  int64_t phys_total = phys_banks * per_bank;
  plan.waves = (needed + phys_total - 1) / phys_total;
  plan.subarrays_used = std::min(needed, phys_total);
  plan.banks_used = std::min(banks_needed, phys_banks);
  plan.assign.reserve(size_t(n_tiles));
  int64_t as = arch.subarrays_per_array;
  int64_t ms = arch.arrays_per_mat * as;
  for (int64_t i = 0; i < n_tiles; ++i) {
    TilePlacement tp;
    tp.tile = i;
    int64_t sidx = i / plan.packing;
    tp.slot = i % plan.packing;
    tp.wave = sidx / phys_total;
    tp.phys_subarray = sidx % phys_total;
    tp.bank = tp.phys_subarray / per_bank;
    int64_t rem = tp.phys_subarray % per_bank;
    tp.mat = rem / ms;
    rem %= ms;
    tp.array = rem / as;
    tp.subarray = rem % as;
    tp.row_offset = tp.slot * n_eff;
    plan.assign.push_back(tp);
  }
  return plan;
}

// Placement for a D-wide, n_entries-deep workload tiled to the subarray
// geometry: ceil(n/R) x ceil(D/C) tiles, packed when density is enabled.
inline PlacementPlan placement_plan(int64_t d, int64_t n_entries,
                                    const ArchSpec& arch, const OptMode& mode) {
  if (d < 1 || n_entries < 1)
    throw CompileError("placement: workload dims must be >= 1");
  int64_t row_tiles = (n_entries + arch.rows - 1) / arch.rows;
  int64_t col_tiles = (d + arch.cols - 1) / arch.cols;
  int64_t n_eff = std::min(n_entries, arch.rows);
  return compute_placement(row_tiles * col_tiles, n_eff, arch, mode.density());
}

// ---------------------------------------------------------------------------
// lower-cim-to-cam

namespace cam_detail {

struct ReadConv {
  int64_t scale = 1;
  bool offset_is_width = false;  // offset = written query columns of the tile
  std::string post = "none";
};

// Value-domain conversion so cam outputs match the dense cim semantics
// bit-exactly: dot over bipolar binary data is width - 2*hamming, squared
// euclidean over binary data is 4*hamming. Exact/threshold pipelines stay in
// the raw distance domain.
inline ReadConv derive_conversion(const std::string& sim_metric, bool is_i1,
                                  const SearchSpec& spec, int64_t k) {
  ReadConv rc;
  if (spec.match != MatchType::Best) return rc;
  if (sim_metric == "dot" || sim_metric == "cosine") {
    rc.scale = -2;
    rc.offset_is_width = true;
  } else if (sim_metric == "euclidean") {
    rc.scale = is_i1 ? 4 : 1;
    if (k > 0) rc.post = "sqrt";
  }
  return rc;
}

inline void validate_lowering(const Operation& sim, const TensorType& stored,
                              CamDevice device, const SearchSpec& spec) {
  std::string metric = sim.str_attr("metric");
  bool is_i1 = stored.elem.is_i1();
  int64_t k = sim.int_attr("k");
  bool largest = sim.int_attr("largest", metric == "dot" || metric == "cosine") != 0;

  if (spec.match == MatchType::Threshold && !spec.threshold)
    throw CompileError("threshold match requires a threshold");
  if (device == CamDevice::TCAM && spec.metric == CamMetric::Euclidean)
    throw CompileError("metric unsupported by device: euclidean search on tcam");
  if (device == CamDevice::TCAM && !is_i1)
    throw CompileError("tcam stores binary data; use mcam or acam for multi-bit");
  if (stored.elem.kind == ElemKind::Float)
    throw CompileError("floating-point stored data cannot be lowered to cam");

  if (metric == "dot" || metric == "cosine") {
    if (metric == "cosine" && k > 0)
      throw CompileError("cosine similarity supports scores mode (k=0) only");
    if (spec.match != MatchType::Best)
      throw CompileError("exact/threshold match requires a distance metric");
    if (!is_i1 || spec.metric != CamMetric::Hamming)
      throw CompileError(
          "dot/cosine similarity lowers to hamming search over binary data");
    if (k > 0 && !largest)
      throw CompileError("largest=false dot similarity has no CAM lowering");
  } else if (metric == "euclidean") {
    if (k > 0 && largest && spec.match == MatchType::Best)
      throw CompileError("largest=true euclidean similarity has no CAM lowering");
    if (spec.metric == CamMetric::Hamming && !is_i1)
      throw CompileError("hamming search over multi-bit data requires binary input");
  } else if (metric == "hamming") {
    if (spec.metric != CamMetric::Hamming)
      throw CompileError("hamming similarity requires a hamming search");
    if (k > 0 && largest)
      throw CompileError("largest=true hamming similarity has no CAM lowering");
  } else {
    throw CompileError("unknown similarity metric '" + metric + "'");
  }
}

}  // namespace cam_detail

inline ProgramModule lower_cim_to_cam(const ProgramModule& m, CamDevice device,
                                      const SearchSpec& spec) {
  ProgramModule out;
  for (const FunctionDef& f : m.functions) {
    auto types = type_index(f);
    clone::ValueMap map;
    FunctionDef fn = clone::begin_rebuild(f, map);
    OpBuilder b(fn, fn.body);
    bool lowered_any = false;

    for (size_t oi = 0; oi < f.body.ops.size(); ++oi) {
      const Operation& op = f.body.ops[oi];
      const Operation* sim = nullptr;
      if (op.full_name() == "cim.acquire" && oi + 2 < f.body.ops.size()) {
        const Operation& e = f.body.ops[oi + 1];
        const Operation& r = f.body.ops[oi + 2];
        if (e.full_name() == "cim.execute" && r.full_name() == "cim.release" &&
            !op.results.empty() && e.operands[0] == op.results[0].id &&
            r.operands[0] == op.results[0].id)
          sim = part_detail::similarity_of(e);
      }
      if (!sim) {
        fn.body.ops.push_back(clone::clone_op(fn, op, map));
        continue;
      }

      const Operation& exec = f.body.ops[oi + 1];
      size_t stored_idx = part_detail::capture_index(exec, sim->operands[0]);
      size_t query_idx = part_detail::capture_index(exec, sim->operands[1]);
      const TensorType& stored_t = types.at(exec.operands[stored_idx]).tensor;
      cam_detail::validate_lowering(*sim, stored_t, device, spec);

      ValueId stored_outer = clone::remap(map, exec.operands[stored_idx]);
      ValueId query_outer = clone::remap(map, exec.operands[query_idx]);
      int64_t n = stored_t.shape[0];
      int64_t d = stored_t.shape[1];
      std::string metric = sim->str_attr("metric");
      int64_t k = sim->int_attr("k");
      cam_detail::ReadConv rc =
          cam_detail::derive_conversion(metric, stored_t.elem.is_i1(), spec, k);

      // Minimal one-of-each system sized to the tile.
      std::string device_name = device == CamDevice::TCAM
                                    ? "tcam"
                                    : device == CamDevice::MCAM ? "mcam" : "acam";
      ValueId bank_id = b.create("cam", "alloc_bank", {},
                                 {handle_type(HandleKind::Bank)},
                                 {{"rows", n}, {"cols", d},
                                  {"device", device_name}})[0].id;
      ValueId mat_id =
          b.create("cam", "alloc_mat", {bank_id}, {handle_type(HandleKind::Mat)})[0].id;
      ValueId arr_id = b.create("cam", "alloc_array", {mat_id},
                                {handle_type(HandleKind::Array)})[0].id;
      ValueId sub_id = b.create("cam", "alloc_subarray", {arr_id},
                                {handle_type(HandleKind::Subarray)})[0].id;
      b.create("cam", "write_value", {sub_id, stored_outer}, {},
               {{"row_offset", int64_t{0}}});
      AttrMap search_attrs = {{"match", std::string(match_to_string(spec.match))},
                              {"metric", std::string(spec.metric == CamMetric::Hamming
                                                         ? "hamming"
                                                         : "euclidean")},
                              {"row_offset", int64_t{0}},
                              {"rows_active", n}};
      if (spec.match == MatchType::Threshold) search_attrs["threshold"] = *spec.threshold;
      ValueId search_id = b.create("cam", "search", {sub_id, query_outer},
                                   {handle_type(HandleKind::Matches)},
                                   search_attrs)[0].id;

      AttrMap read_attrs = {{"k", k},
                            {"scale", rc.scale},
                            {"offset", rc.offset_is_width ? d : int64_t{0}},
                            {"row_base", sim->int_attr("row_base")}};
      if (rc.post != "none") read_attrs["post"] = rc.post;
      std::vector<Type> read_types;
      if (metric == "cosine") {
        // Raw dot scores on device; normalization runs on the host.
        read_types = {tensor_type({1, n}, elem_i32())};
      } else {
        for (const Value& r : exec.results) read_types.push_back(r.type);
      }
      std::vector<Value> read =
          b.create("cam", "read_value", {search_id}, read_types, read_attrs);

      std::vector<ValueId> finals;
      if (metric == "cosine") {
        ValueId ns_id = b.create("tensor", "norm", {stored_outer},
                                 {tensor_type({n}, elem_f32())},
                                 {{"p", int64_t{2}}, {"dim", int64_t{1}}})[0].id;
        ValueId nq_id = b.create("tensor", "norm", {query_outer},
                                 {tensor_type({int64_t{1}}, elem_f32())},
                                 {{"p", int64_t{2}}, {"dim", int64_t{1}}})[0].id;
        finals = {b.create("tensor", "div", {read[0].id, ns_id, nq_id},
                           {exec.results[0].type}, {})[0].id};
      } else {
        for (const Value& r : read) finals.push_back(r.id);
      }
      for (size_t i = 0; i < exec.results.size(); ++i)
        map[exec.results[i].id] = finals[i];
      lowered_any = true;
      oi += 2;
    }

    // Exact/threshold pipelines filter at the merge points in the raw
    // distance domain: tag every top-k merge and drop the sqrt post.
    if (lowered_any && spec.match != MatchType::Best) {
      for (Operation& op : fn.body.ops) {
        if (op.full_name() != "cim.merge_partial") continue;
        std::string kind = op.str_attr("kind");
        if (kind != "topk-min" && kind != "topk-max") continue;
        op.attrs["match"] = std::string(match_to_string(spec.match));
        if (spec.match == MatchType::Threshold) op.attrs["threshold"] = *spec.threshold;
        op.attrs.erase("post");
      }
    }
    out.functions.push_back(std::move(fn));
  }
  return out;
}

// ---------------------------------------------------------------------------
// cam-map

namespace cam_detail {

struct MiniSystem {
  size_t first_op = 0;  // index of alloc_bank; spans 7 consecutive ops
  ValueId stored = kInvalidValue;
  ValueId query = kInvalidValue;
  AttrMap search_attrs;
  AttrMap read_attrs;
  std::vector<Type> read_types;
  std::vector<ValueId> read_results;
  int64_t rows = 0;
  int64_t cols = 0;
  std::string device = "tcam";
};

inline std::optional<MiniSystem> match_mini_system(const Region& body, size_t i,
                                                   const std::map<ValueId, Type>& types) {
  if (i + 7 > body.ops.size()) return std::nullopt;
  const Operation& bank = body.ops[i];
  const Operation& mat = body.ops[i + 1];
  const Operation& arr = body.ops[i + 2];
  const Operation& sub = body.ops[i + 3];
  const Operation& write = body.ops[i + 4];
  const Operation& search = body.ops[i + 5];
  const Operation& read = body.ops[i + 6];
  auto is = [&](const Operation& op, const char* name) {
    return op.full_name() == name;
  };
  if (!is(bank, "cam.alloc_bank") || !is(mat, "cam.alloc_mat") ||
      !is(arr, "cam.alloc_array") || !is(sub, "cam.alloc_subarray") ||
      !is(write, "cam.write_value") || !is(search, "cam.search") ||
      !is(read, "cam.read_value"))
    return std::nullopt;
  if (mat.operands[0] != bank.results[0].id ||
      arr.operands[0] != mat.results[0].id ||
      sub.operands[0] != arr.results[0].id ||
      write.operands[0] != sub.results[0].id ||
      search.operands[0] != sub.results[0].id ||
      read.operands[0] != search.results[0].id)
    return std::nullopt;
  MiniSystem ms;
  ms.first_op = i;
  ms.stored = write.operands[1];
  ms.query = search.operands[1];
  ms.search_attrs = search.attrs;
  ms.read_attrs = read.attrs;
  ms.device = bank.str_attr("device", "tcam");
  for (const Value& r : read.results) {
    ms.read_types.push_back(r.type);
    ms.read_results.push_back(r.id);
  }
  const TensorType& st = types.at(ms.stored).tensor;
  ms.rows = st.shape[0];
  ms.cols = st.shape[1];
  return ms;
}

// Mixed-radix step index over the sequentialized levels (outer to inner).
struct StepDims {
  std::vector<std::pair<int64_t, int64_t>> active;  // (index, size) of seq levels

  void add(int64_t index, int64_t size, bool sequential) {
    if (sequential) active.emplace_back(index, size);
  }
  int64_t step() const {
    int64_t s = 0;
    for (const auto& [idx, size] : active) s = s * size + idx;
    return s;
  }
};

}  // namespace cam_detail

inline ProgramModule cam_map(const ProgramModule& m, const ArchSpec& arch,
                             const OptMode& mode) {
  if (mode.density() && !arch.selective_search)
    throw CompileError("density mode requires selective_search in the arch spec");
  if (mode.max_active < 1) throw CompileError("max_active must be >= 1");
  Capacity cap = capacity(arch);
  if (cap.subarrays < 1 || cap.cells < 1)
    throw CompileError("zero-capacity architecture");

  ProgramModule out;
  for (const FunctionDef& f : m.functions) {
    auto types = type_index(f);

    // Collect mini systems and classify the remaining ops.
    std::vector<cam_detail::MiniSystem> systems;
    std::set<size_t> system_ops;
    for (size_t i = 0; i < f.body.ops.size(); ++i) {
      auto ms = cam_detail::match_mini_system(f.body, i, types);
      if (ms) {
        systems.push_back(*ms);
        for (size_t j = 0; j < 7; ++j) system_ops.insert(i + j);
        i += 6;
      }
    }
    if (systems.empty()) {
      clone::ValueMap map;
      FunctionDef fn = clone::begin_rebuild(f, map);
      for (const Operation& op : f.body.ops)
        fn.body.ops.push_back(clone::clone_op(fn, op, map));
      out.functions.push_back(std::move(fn));
      continue;
    }

    // Taint: ops depending (transitively) on any read result run after the
    // scheduled cam section; everything else runs before it.
    std::set<ValueId> tainted;
    for (const auto& ms : systems)
      for (ValueId r : ms.read_results) tainted.insert(r);
    std::vector<size_t> pre_ops, post_ops;
    for (size_t i = 0; i < f.body.ops.size(); ++i) {
      if (system_ops.count(i)) continue;
      const Operation& op = f.body.ops[i];
      bool dep = false;
      for (ValueId v : op.operands) dep = dep || tainted.count(v) > 0;
      if (dep)
        for (const Value& r : op.results) tainted.insert(r.id);
      (dep ? post_ops : pre_ops).push_back(i);
    }

    // Tile geometry checks and packing factor.
    int64_t n_eff = 0;
    std::string device = systems.front().device;
    for (const auto& ms : systems) {
      if (ms.rows > arch.rows || ms.cols > arch.cols)
        throw CompileError("tile " + std::to_string(ms.rows) + "x" +
                           std::to_string(ms.cols) + " exceeds subarray " +
                           std::to_string(arch.rows) + "x" + std::to_string(arch.cols));
      n_eff = std::max(n_eff, ms.rows);
    }
    PlacementPlan plan = compute_placement(
        static_cast<int64_t>(systems.size()), n_eff, arch, mode.density());

    clone::ValueMap map;
    FunctionDef fn = clone::begin_rebuild(f, map);
    OpBuilder b(fn, fn.body);
    for (size_t i : pre_ops)
      fn.body.ops.push_back(clone::clone_op(fn, f.body.ops[i], map));

    // Pad narrow query tiles to the physical column width.
    std::vector<ValueId> queries(systems.size());
    for (size_t t = 0; t < systems.size(); ++t) {
      ValueId q = clone::remap(map, systems[t].query);
      if (systems[t].cols < arch.cols) {
        q = b.create("plumb", "pad", {q},
                     {tensor_type({1, arch.cols},
                                  types.at(systems[t].query).tensor.elem)},
                     {{"sizes", std::vector<int64_t>{1, arch.cols}}})[0].id;
      }
      queries[t] = q;
    }

    // Allocate the physical hierarchy (only the handles actually used).
    std::set<int64_t> used_phys;
    for (const auto& tp : plan.assign) used_phys.insert(tp.phys_subarray);
    std::map<int64_t, ValueId> bank_h, mat_h, array_h, sub_h;
    int64_t as = arch.subarrays_per_array;
    int64_t ms_ = arch.arrays_per_mat * as;
    int64_t per_bank = arch.subarrays_per_bank();
    for (int64_t phys : used_phys) {
      int64_t bank = phys / per_bank;
      int64_t rem = phys % per_bank;
      int64_t mat = rem / ms_;
      int64_t array = (rem % ms_) / as;
      int64_t sub = rem % as;
      if (!bank_h.count(bank))
        bank_h[bank] = b.create("cam", "alloc_bank", {},
                                {handle_type(HandleKind::Bank)},
                                {{"rows", arch.rows}, {"cols", arch.cols},
                                 {"bank", bank}, {"device", device}})[0].id;
      int64_t mkey = bank * arch.mats_per_bank + mat;
      if (!mat_h.count(mkey))
        mat_h[mkey] = b.create("cam", "alloc_mat", {bank_h[bank]},
                               {handle_type(HandleKind::Mat)}, {{"mat", mat}})[0].id;
      int64_t akey = mkey * arch.arrays_per_mat + array;
      if (!array_h.count(akey))
        array_h[akey] = b.create("cam", "alloc_array", {mat_h[mkey]},
                                 {handle_type(HandleKind::Array)},
                                 {{"array", array}})[0].id;
      if (!sub_h.count(phys))
        sub_h[phys] = b.create("cam", "alloc_subarray", {array_h[akey]},
                               {handle_type(HandleKind::Subarray)},
                               {{"subarray", sub}})[0].id;
    }

    // Schedule: per wave a write phase then a search phase; step indices are
    // mixed-radix over the sequentialized levels.
    int64_t groups = (arch.subarrays_per_array + mode.max_active - 1) / mode.max_active;
    auto local_step = [&](const TilePlacement& tp) {
      cam_detail::StepDims dims;
      dims.add(tp.bank, std::max<int64_t>(1, plan.banks_used),
               arch.bank_mode == AccessMode::Sequential);
      dims.add(tp.mat, arch.mats_per_bank, arch.mat_mode == AccessMode::Sequential);
      dims.add(tp.array, arch.arrays_per_mat,
               arch.array_mode == AccessMode::Sequential);
      dims.add(tp.subarray / mode.max_active, groups, mode.power());
      dims.add(tp.slot, plan.packing, true);
      return dims.step();
    };

    int64_t step_base = 0;
    for (int64_t wave = 0; wave < plan.waves; ++wave) {
      std::vector<size_t> wave_tiles;
      for (size_t t = 0; t < systems.size(); ++t)
        if (plan.assign[t].wave == wave) wave_tiles.push_back(t);

      int64_t max_write = 0, max_search = 0;
      for (size_t t : wave_tiles) {
        max_write = std::max(max_write, local_step(plan.assign[t]));
        max_search = std::max(max_search, local_step(plan.assign[t]));
      }

      for (size_t t : wave_tiles) {
        const TilePlacement& tp = plan.assign[t];
        b.create("cam", "write_value",
                 {sub_h[tp.phys_subarray], clone::remap(map, systems[t].stored)}, {},
                 {{"row_offset", tp.row_offset},
                  {"wave", wave},
                  {"slot", tp.slot},
                  {"step", step_base + local_step(tp)}});
      }
      int64_t search_base = step_base + max_write + 1;
      std::vector<ValueId> match_handles(systems.size(), kInvalidValue);
      for (size_t t : wave_tiles) {
        const TilePlacement& tp = plan.assign[t];
        AttrMap attrs = systems[t].search_attrs;
        attrs["row_offset"] = tp.row_offset;
        attrs["wave"] = wave;
        attrs["slot"] = tp.slot;
        attrs["step"] = search_base + local_step(tp);
        match_handles[t] = b.create("cam", "search",
                                    {sub_h[tp.phys_subarray], queries[t]},
                                    {handle_type(HandleKind::Matches)}, attrs)[0].id;
      }
      for (size_t t : wave_tiles) {
        std::vector<Value> read = b.create("cam", "read_value", {match_handles[t]},
                                           systems[t].read_types,
                                           systems[t].read_attrs);
        for (size_t ri = 0; ri < read.size(); ++ri)
          map[systems[t].read_results[ri]] = read[ri].id;
      }
      step_base = search_base + max_search + 1;
    }

    for (size_t i : post_ops)
      fn.body.ops.push_back(clone::clone_op(fn, f.body.ops[i], map));
    out.functions.push_back(std::move(fn));
  }
  return out;
}

}  // namespace camforge
