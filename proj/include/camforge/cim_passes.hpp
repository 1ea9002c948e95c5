#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "camforge/ir.hpp"
#include "camforge/registry.hpp"

// Device-agnostic CIM abstraction passes:
//   lower_tensor_to_cim  - wrap each supported tensor op in its own
//                          acquire/execute/release triple
//   similarity_matching  - recognize similarity dataflow patterns in an
//                          execute block
//   fuse_ops             - merge dataflow-connected execute blocks, then
//                          rewrite recognized patterns to cim.similarity
//   partition            - compulsory tiling of cim.similarity to the
//                          processing-element size, partial results merged
//                          with cim.merge_partial

namespace camforge {

namespace clone {

using ValueMap = std::map<ValueId, ValueId>;

inline ValueId remap(const ValueMap& map, ValueId id) {
  auto it = map.find(id);
  if (it == map.end())
    throw CompileError("internal: unmapped value during clone");
  return it->second;
}

inline Operation clone_op(FunctionDef& fn, const Operation& op, ValueMap& map) {
  Operation out;
  out.dialect = op.dialect;
  out.opname = op.opname;
  out.attrs = op.attrs;
  for (ValueId v : op.operands) out.operands.push_back(remap(map, v));
  for (const Value& r : op.results) {
    Value nv = fn.new_value(r.type);
    map[r.id] = nv.id;
    out.results.push_back(nv);
  }
  for (const Region& region : op.regions) {
    Region nr;
    for (const Value& a : region.args) {
      Value nv = fn.new_value(a.type);
      map[a.id] = nv.id;
      nr.args.push_back(nv);
    }
    for (const Operation& inner : region.ops)
      nr.ops.push_back(clone_op(fn, inner, map));
    out.regions.push_back(std::move(nr));
  }
  return out;
}

inline FunctionDef begin_rebuild(const FunctionDef& old, ValueMap& map) {
  FunctionDef fn;
  fn.name = old.name;
  fn.arg_names = old.arg_names;
  fn.result_types = old.result_types;
  for (const Value& a : old.args) {
    Value nv = fn.new_value(a.type);
    map[a.id] = nv.id;
    fn.args.push_back(nv);
  }
  return fn;
}

}  // namespace clone

// Types of every value defined anywhere in a function.
inline void index_types(const Region& r, std::map<ValueId, Type>& out) {
  for (const Value& a : r.args) out[a.id] = a.type;
  for (const Operation& op : r.ops) {
    for (const Value& v : op.results) out[v.id] = v.type;
    for (const Region& nested : op.regions) index_types(nested, out);
  }
}

inline std::map<ValueId, Type> type_index(const FunctionDef& fn) {
  std::map<ValueId, Type> out;
  for (const Value& a : fn.args) out[a.id] = a.type;
  index_types(fn.body, out);
  return out;
}

// ---------------------------------------------------------------------------
// lower-tensor-to-cim

inline bool is_supported_tensor_op(const Operation& op) {
  return op.dialect == "tensor" && tensor_op_from_name(op.opname).has_value();
}

inline ProgramModule lower_tensor_to_cim(const ProgramModule& m) {
  ProgramModule out;
  for (const FunctionDef& f : m.functions) {
    auto types = type_index(f);
    clone::ValueMap map;
    FunctionDef fn = clone::begin_rebuild(f, map);
    for (const Operation& op : f.body.ops) {
      if (!is_supported_tensor_op(op)) {
        fn.body.ops.push_back(clone::clone_op(fn, op, map));
        continue;
      }
      Operation acquire;
      acquire.dialect = "cim";
      acquire.opname = "acquire";
      Value handle = fn.new_value(handle_type(HandleKind::Device));
      acquire.results.push_back(handle);
      fn.body.ops.push_back(std::move(acquire));

      Operation exec;
      exec.dialect = "cim";
      exec.opname = "execute";
      exec.operands.push_back(handle.id);
      Region body;
      clone::ValueMap inner;
      for (ValueId operand : op.operands) {
        exec.operands.push_back(clone::remap(map, operand));
        Value arg = fn.new_value(types.at(operand));
        body.args.push_back(arg);
        inner[operand] = arg.id;
      }
      Operation cloned = clone::clone_op(fn, op, inner);
      Operation yield;
      yield.dialect = "cim";
      yield.opname = "yield";
      for (const Value& r : cloned.results) yield.operands.push_back(r.id);
      body.ops.push_back(std::move(cloned));
      body.ops.push_back(std::move(yield));
      exec.regions.push_back(std::move(body));
      for (const Value& r : op.results) {
        Value nv = fn.new_value(r.type);
        map[r.id] = nv.id;
        exec.results.push_back(nv);
      }
      fn.body.ops.push_back(std::move(exec));

      Operation release;
      release.dialect = "cim";
      release.opname = "release";
      release.operands.push_back(handle.id);
      fn.body.ops.push_back(std::move(release));
    }
    out.functions.push_back(std::move(fn));
  }
  return out;
}

// ---------------------------------------------------------------------------
// similarity_matching (dataflow-template recognition)

enum class SimilarityPattern { DotProd, EuclNorm, CosSim };

namespace sim_match {

inline bool is_terminator_name(const std::string& full) {
  return full == "cim.yield" || full == "plumb.yield" || full == "plumb.return";
}

struct DFG {
  std::vector<std::string> kinds;                 // per node: op kind name
  std::vector<std::pair<int, int>> edges;         // producer -> consumer, one
                                                  // entry per consuming operand
};

inline DFG block_dfg(const Region& block) {
  DFG g;
  std::map<ValueId, int> producer;
  std::vector<const Operation*> nodes;
  for (const Operation& op : block.ops) {
    if (is_terminator_name(op.full_name())) continue;
    nodes.push_back(&op);
  }
  for (size_t i = 0; i < nodes.size(); ++i) {
    g.kinds.push_back(nodes[i]->opname);
    for (const Value& r : nodes[i]->results) producer[r.id] = static_cast<int>(i);
  }
  for (size_t i = 0; i < nodes.size(); ++i)
    for (ValueId v : nodes[i]->operands) {
      auto it = producer.find(v);
      if (it != producer.end()) g.edges.emplace_back(it->second, static_cast<int>(i));
    }
  return g;
}

inline DFG pattern_dfg(SimilarityPattern p) {
  DFG g;
  switch (p) {
    case SimilarityPattern::DotProd:
      g.kinds = {"transpose", "matmul", "topk"};
      g.edges = {{0, 1}, {1, 2}};
      break;
    case SimilarityPattern::EuclNorm:
      g.kinds = {"sub", "norm", "topk"};
      g.edges = {{0, 1}, {1, 2}};
      break;
    case SimilarityPattern::CosSim:
      g.kinds = {"norm", "norm", "transpose", "matmul", "div"};
      g.edges = {{2, 3}, {3, 4}, {0, 4}, {1, 4}};
      break;
  }
  return g;
}

// Dataflow isomorphism: a bijection between pattern nodes and block nodes
// preserving op kinds and the producer->consumer edge multiset exactly.
// Operand slots are not distinguished (the algorithmic templates list edges
// positionlessly).
inline bool similar_dfg(const DFG& block, const DFG& pattern) {
  size_t n = pattern.kinds.size();
  if (block.kinds.size() != n) return false;
  if (block.edges.size() != pattern.edges.size()) return false;

  std::vector<int> assign(n, -1);
  std::vector<bool> used(n, false);

  auto edges_match = [&]() {
    std::multiset<std::pair<int, int>> be(block.edges.begin(), block.edges.end());
    std::multiset<std::pair<int, int>> pe;
    for (auto [a, b] : pattern.edges) pe.insert({assign[a], assign[b]});
    return be == pe;
  };

  std::function<bool(size_t)> rec = [&](size_t i) -> bool {
    if (i == n) return edges_match();
    for (size_t j = 0; j < n; ++j) {
      if (used[j] || block.kinds[j] != pattern.kinds[i]) continue;
      used[j] = true;
      assign[i] = static_cast<int>(j);
      if (rec(i + 1)) return true;
      used[j] = false;
      assign[i] = -1;
    }
    return false;
  };
  return rec(0);
}

}  // namespace sim_match

// Checks whether an execute block's op list matches one of the similarity
// templates. Counts include the block terminator (opSize 4 covers the three
// 3-op patterns plus yield, opSize 6 the 5-op cosine pattern plus yield).
inline std::optional<SimilarityPattern> similarity_matching(const Region& block) {
  size_t op_size = block.ops.size();
  sim_match::DFG g = sim_match::block_dfg(block);
  if (op_size == 4) {
    if (sim_match::similar_dfg(g, sim_match::pattern_dfg(SimilarityPattern::DotProd)))
      return SimilarityPattern::DotProd;
    if (sim_match::similar_dfg(g, sim_match::pattern_dfg(SimilarityPattern::EuclNorm)))
      return SimilarityPattern::EuclNorm;
    return std::nullopt;
  }
  if (op_size == 6) {
    if (sim_match::similar_dfg(g, sim_match::pattern_dfg(SimilarityPattern::CosSim)))
      return SimilarityPattern::CosSim;
    return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// fuse_ops

namespace fuse_detail {

struct Triple {
  size_t acquire;  // op indices into the function body
  size_t exec;
  size_t release;
};

// Triples are kept contiguous by construction: acquire, execute, release.
inline std::vector<Triple> find_triples(const Region& body) {
  std::vector<Triple> out;
  for (size_t i = 0; i + 2 < body.ops.size(); ++i) {
    const Operation& a = body.ops[i];
    const Operation& e = body.ops[i + 1];
    const Operation& r = body.ops[i + 2];
    if (a.full_name() != "cim.acquire" || e.full_name() != "cim.execute" ||
        r.full_name() != "cim.release")
      continue;
    if (a.results.empty() || e.operands.empty()) continue;
    if (e.operands[0] != a.results[0].id || r.operands[0] != a.results[0].id)
      continue;
    out.push_back({i, i + 1, i + 2});
  }
  return out;
}

// Definition position of each top-level value: op index, or -1 for function
// arguments and region-internal values.
inline std::map<ValueId, int> def_positions(const FunctionDef& fn) {
  std::map<ValueId, int> pos;
  for (const Value& a : fn.args) pos[a.id] = -1;
  for (size_t i = 0; i < fn.body.ops.size(); ++i)
    for (const Value& r : fn.body.ops[i].results)
      pos[r.id] = static_cast<int>(i);
  return pos;
}

inline void count_uses(const Region& r, std::map<ValueId, int>& uses) {
  for (const Operation& op : r.ops) {
    for (ValueId v : op.operands) ++uses[v];
    for (const Region& nested : op.regions) count_uses(nested, uses);
  }
}

// Merges triple B into triple A (A precedes B). Returns the new body.
inline void merge_pair(FunctionDef& fn, const Triple& ta, const Triple& tb) {
  Region& body = fn.body;
  Operation& ea = body.ops[ta.exec];
  Operation& eb = body.ops[tb.exec];

  // Internal value yielded for each of A's results.
  const Operation& ya = ea.regions[0].ops.back();
  std::map<ValueId, ValueId> a_result_to_internal;
  for (size_t i = 0; i < ea.results.size(); ++i)
    a_result_to_internal[ea.results[i].id] = ya.operands[i];

  Operation merged;
  merged.dialect = "cim";
  merged.opname = "execute";
  merged.operands = ea.operands;  // [handle, A captures...]
  Region region;
  region.args = ea.regions[0].args;

  // A's body without its terminator.
  for (size_t i = 0; i + 1 < ea.regions[0].ops.size(); ++i)
    region.ops.push_back(ea.regions[0].ops[i]);

  // B's body with captures remapped: captures of A-results become A's
  // internal values, other captures become new region args.
  clone::ValueMap bmap;
  for (size_t i = 1; i < eb.operands.size(); ++i) {
    ValueId outer = eb.operands[i];
    ValueId barg = eb.regions[0].args[i - 1].id;
    auto internal = a_result_to_internal.find(outer);
    if (internal != a_result_to_internal.end()) {
      bmap[barg] = internal->second;
      continue;
    }
    // Reuse the existing capture if A already captures this value.
    bool found = false;
    for (size_t j = 1; j < merged.operands.size() && !found; ++j)
      if (merged.operands[j] == outer) {
        bmap[barg] = region.args[j - 1].id;
        found = true;
      }
    if (!found) {
      merged.operands.push_back(outer);
      region.args.push_back(eb.regions[0].args[i - 1]);
      bmap[barg] = barg;
    }
  }
  for (size_t i = 0; i + 1 < eb.regions[0].ops.size(); ++i) {
    Operation op = eb.regions[0].ops[i];
    for (ValueId& v : op.operands) {
      auto it = bmap.find(v);
      if (it != bmap.end()) v = it->second;
    }
    region.ops.push_back(std::move(op));
  }

  // Combined yield and results: A's results then B's results (ids reused so
  // downstream uses stay valid). Dead results are pruned afterwards.
  Operation yield;
  yield.dialect = "cim";
  yield.opname = "yield";
  const Operation& yb = eb.regions[0].ops.back();
  for (size_t i = 0; i < ea.results.size(); ++i) {
    merged.results.push_back(ea.results[i]);
    yield.operands.push_back(ya.operands[i]);
  }
  for (size_t i = 0; i < eb.results.size(); ++i) {
    merged.results.push_back(eb.results[i]);
    ValueId v = yb.operands[i];
    auto it = bmap.find(v);
    yield.operands.push_back(it != bmap.end() ? it->second : v);
  }
  region.ops.push_back(std::move(yield));
  merged.regions.push_back(std::move(region));

  body.ops[ta.exec] = std::move(merged);
  // Erase B's triple (acquire, exec, release), highest index first.
  body.ops.erase(body.ops.begin() + tb.release);
  body.ops.erase(body.ops.begin() + tb.exec);
  body.ops.erase(body.ops.begin() + tb.acquire);
}

// Removes execute results (and matching yield operands) with no uses.
inline void prune_dead_results(FunctionDef& fn) {
  std::map<ValueId, int> uses;
  count_uses(fn.body, uses);
  for (Operation& op : fn.body.ops) {
    if (op.full_name() != "cim.execute" || op.regions.empty()) continue;
    Operation& yield = op.regions[0].ops.back();
    std::vector<Value> keep_res;
    std::vector<ValueId> keep_yield;
    for (size_t i = 0; i < op.results.size(); ++i) {
      if (uses[op.results[i].id] > 0) {
        keep_res.push_back(op.results[i]);
        keep_yield.push_back(yield.operands[i]);
      }
    }
    op.results = std::move(keep_res);
    yield.operands = std::move(keep_yield);
  }
}

// One merge step: returns true if any pair was merged.
inline bool merge_once(FunctionDef& fn) {
  auto triples = find_triples(fn.body);
  auto defpos = def_positions(fn);
  for (size_t ai = 0; ai < triples.size(); ++ai) {
    for (size_t bi = ai + 1; bi < triples.size(); ++bi) {
      const Triple& a = triples[ai];
      const Triple& b = triples[bi];
      const Operation& ea = fn.body.ops[a.exec];
      const Operation& eb = fn.body.ops[b.exec];
      std::set<ValueId> a_results;
      for (const Value& r : ea.results) a_results.insert(r.id);
      bool direct = false;
      bool placeable = true;
      for (size_t i = 1; i < eb.operands.size(); ++i) {
        ValueId v = eb.operands[i];
        if (a_results.count(v)) {
          direct = true;
          continue;
        }
        auto it = defpos.find(v);
        if (it == defpos.end() || it->second >= static_cast<int>(a.acquire))
          placeable = false;
      }
      if (direct && placeable) {
        merge_pair(fn, a, b);
        prune_dead_results(fn);
        return true;
      }
    }
  }
  return false;
}

}  // namespace fuse_detail

// Rewrites a fused execute block to cim.similarity when the pattern and its
// operand roles check out; returns false (leaving the block untouched) when
// the graph matches only loosely.
inline bool rewrite_similarity(FunctionDef& fn, Operation& exec) {
  Region& block = exec.regions[0];
  auto pattern = similarity_matching(block);
  if (!pattern) return false;

  std::map<ValueId, const Operation*> producer;
  for (const Operation& op : block.ops)
    for (const Value& r : op.results) producer[r.id] = &op;
  std::set<ValueId> block_args;
  for (const Value& a : block.args) block_args.insert(a.id);
  auto arg_type = [&](ValueId id) -> const Type* {
    for (const Value& a : block.args)
      if (a.id == id) return &a.type;
    return nullptr;
  };
  auto find_op = [&](const std::string& name,
                     const Operation* skip = nullptr) -> const Operation* {
    for (const Operation& op : block.ops)
      if (op.opname == name && &op != skip) return &op;
    return nullptr;
  };
  const Operation& yield = block.ops.back();

  ValueId stored = kInvalidValue;
  ValueId query = kInvalidValue;
  std::string metric;
  AttrMap sim_attrs;
  std::vector<Type> sim_result_types;

  if (*pattern == SimilarityPattern::DotProd ||
      *pattern == SimilarityPattern::CosSim) {
    const Operation* t_op = find_op("transpose");
    const Operation* m_op = find_op("matmul");
    if (!t_op || !m_op) return false;
    ValueId t_res = t_op->results[0].id;
    stored = t_op->operands[0];
    query = m_op->operands[0] == t_res ? m_op->operands[1] : m_op->operands[0];
    // The transposed operand must be matmul's second input: scores = q x s^T.
    if (m_op->operands[1] != t_res) return false;
    if (!block_args.count(stored) || !block_args.count(query)) return false;
    const Type* qt = arg_type(query);
    if (!qt || !qt->is_tensor || qt->tensor.rank() != 2 || qt->tensor.shape[0] != 1)
      return false;

    if (*pattern == SimilarityPattern::DotProd) {
      const Operation* k_op = find_op("topk");
      if (!k_op || k_op->operands[0] != m_op->results[0].id) return false;
      if (k_op->int_attr("dim") != 1) return false;
      if (yield.operands.size() != 2 || yield.operands[0] != k_op->results[0].id ||
          yield.operands[1] != k_op->results[1].id)
        return false;
      metric = "dot";
      sim_attrs["k"] = k_op->int_attr("k");
      sim_attrs["largest"] = k_op->int_attr("largest", 1);
      sim_result_types = {k_op->results[0].type, k_op->results[1].type};
    } else {
      const Operation* d_op = find_op("div");
      const Operation* n1 = find_op("norm");
      const Operation* n2 = find_op("norm", n1);
      if (!d_op || !n1 || !n2 || d_op->operands.size() != 3) return false;
      if (d_op->operands[0] != m_op->results[0].id) return false;
      std::set<ValueId> norm_results = {n1->results[0].id, n2->results[0].id};
      if (!norm_results.count(d_op->operands[1]) ||
          !norm_results.count(d_op->operands[2]) ||
          d_op->operands[1] == d_op->operands[2])
        return false;
      // One norm over the stored matrix, one over the query row.
      auto norm_over = [&](ValueId v) -> const Operation* {
        if (n1->operands[0] == v) return n1;
        if (n2->operands[0] == v) return n2;
        return nullptr;
      };
      const Operation* ns = norm_over(stored);
      const Operation* nq = norm_over(query);
      if (!ns || !nq || ns == nq) return false;
      if (ns->int_attr("p", 2) != 2 || nq->int_attr("p", 2) != 2) return false;
      if (yield.operands.size() != 1 || yield.operands[0] != d_op->results[0].id)
        return false;
      metric = "cosine";
      sim_attrs["k"] = int64_t{0};
      sim_result_types = {d_op->results[0].type};
    }
  } else {  // EuclNorm
    const Operation* s_op = find_op("sub");
    const Operation* n_op = find_op("norm");
    const Operation* k_op = find_op("topk");
    if (!s_op || !n_op || !k_op) return false;
    if (n_op->operands[0] != s_op->results[0].id ||
        k_op->operands[0] != n_op->results[0].id)
      return false;
    if (n_op->int_attr("p", 2) != 2) return false;
    ValueId a = s_op->operands[0];
    ValueId b = s_op->operands[1];
    if (!block_args.count(a) || !block_args.count(b)) return false;
    const Type* at = arg_type(a);
    const Type* bt = arg_type(b);
    if (!at || !bt || !at->is_tensor || !bt->is_tensor) return false;
    bool a_row = at->tensor.rank() == 2 && at->tensor.shape[0] == 1;
    bool b_row = bt->tensor.rank() == 2 && bt->tensor.shape[0] == 1;
    if (a_row && !b_row) {
      query = a;
      stored = b;
    } else if (b_row && !a_row) {
      query = b;
      stored = a;
    } else if (a_row && b_row) {
      query = a;  // 1xD against 1xD: stored side is the second operand
      stored = b;
    } else {
      return false;
    }
    // Distance per stored row: norm over the D axis, topk over the rest.
    if (n_op->int_attr("dim") != 1) return false;
    if (yield.operands.size() != 2 || yield.operands[0] != k_op->results[0].id ||
        yield.operands[1] != k_op->results[1].id)
      return false;
    metric = "euclidean";
    sim_attrs["k"] = k_op->int_attr("k");
    sim_attrs["largest"] = k_op->int_attr("largest", 1);
    sim_result_types = {k_op->results[0].type, k_op->results[1].type};
  }

  const Type* st = arg_type(stored);
  if (!st || !st->is_tensor || st->tensor.rank() != 2) return false;

  // Rebuild the execute: captures [stored, query], one similarity op.
  ValueId handle = exec.operands[0];
  ValueId outer_stored = kInvalidValue;
  ValueId outer_query = kInvalidValue;
  for (size_t i = 1; i < exec.operands.size(); ++i) {
    ValueId arg = block.args[i - 1].id;
    if (arg == stored) outer_stored = exec.operands[i];
    if (arg == query) outer_query = exec.operands[i];
  }
  if (outer_stored == kInvalidValue || outer_query == kInvalidValue) return false;

  sim_attrs["metric"] = metric;
  sim_attrs["row_base"] = int64_t{0};

  Region region;
  Value s_arg = fn.new_value(*arg_type(stored));
  Value q_arg = fn.new_value(*arg_type(query));
  region.args = {s_arg, q_arg};
  Operation sim;
  sim.dialect = "cim";
  sim.opname = "similarity";
  sim.operands = {s_arg.id, q_arg.id};
  sim.attrs = std::move(sim_attrs);
  Operation yield_new;
  yield_new.dialect = "cim";
  yield_new.opname = "yield";
  for (const Type& t : sim_result_types) {
    Value v = fn.new_value(t);
    sim.results.push_back(v);
    yield_new.operands.push_back(v.id);
  }
  region.ops.push_back(std::move(sim));
  region.ops.push_back(std::move(yield_new));

  // Execute results keep their ids; their types already match.
  exec.operands = {handle, outer_stored, outer_query};
  exec.regions.clear();
  exec.regions.push_back(std::move(region));
  return true;
}

inline ProgramModule fuse_ops(const ProgramModule& m,
                              const std::string& flag = "similarity") {
  ProgramModule out = m;
  for (FunctionDef& fn : out.functions) {
    while (fuse_detail::merge_once(fn)) {
    }
    if (flag == "similarity") {
      for (Operation& op : fn.body.ops)
        if (op.full_name() == "cim.execute" && !op.regions.empty())
          rewrite_similarity(fn, op);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// partition

namespace part_detail {

struct SimTriple {
  size_t acquire;
  size_t exec;
  size_t release;
  const Operation* sim;
};

// An execute block containing exactly {cim.similarity, cim.yield}.
inline const Operation* similarity_of(const Operation& exec) {
  if (exec.full_name() != "cim.execute" || exec.regions.size() != 1) return nullptr;
  const Region& r = exec.regions[0];
  if (r.ops.size() != 2) return nullptr;
  if (r.ops[0].full_name() != "cim.similarity") return nullptr;
  return &r.ops[0];
}

// Execute operand index carrying the given region argument.
inline size_t capture_index(const Operation& exec, ValueId region_arg) {
  const Region& r = exec.regions[0];
  for (size_t i = 0; i < r.args.size(); ++i)
    if (r.args[i].id == region_arg) return i + 1;
  throw CompileError("internal: similarity operand is not a region argument");
}

}  // namespace part_detail

inline ProgramModule partition(const ProgramModule& m, int64_t pe_rows,
                               int64_t pe_cols) {
  if (pe_rows < 1 || pe_cols < 1)
    throw CompileError("partition: pe sizes must be >= 1");
  ProgramModule out;
  for (const FunctionDef& f : m.functions) {
    auto types = type_index(f);
    clone::ValueMap map;
    FunctionDef fn = clone::begin_rebuild(f, map);
    OpBuilder b(fn, fn.body);

    for (size_t oi = 0; oi < f.body.ops.size(); ++oi) {
      const Operation& op = f.body.ops[oi];
      // Detect acquire/execute(similarity)/release triples.
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
      int64_t n = stored_t.shape[0];
      int64_t d = stored_t.shape[1];
      int64_t row_tiles = (n + pe_rows - 1) / pe_rows;
      int64_t col_tiles = (d + pe_cols - 1) / pe_cols;
      if (row_tiles == 1 && col_tiles == 1) {
        // Single tile: slice bookkeeping elided, triple kept as-is.
        fn.body.ops.push_back(clone::clone_op(fn, op, map));
        fn.body.ops.push_back(clone::clone_op(fn, f.body.ops[oi + 1], map));
        fn.body.ops.push_back(clone::clone_op(fn, f.body.ops[oi + 2], map));
        oi += 2;
        continue;
      }

      ValueId stored_outer = clone::remap(map, exec.operands[stored_idx]);
      ValueId query_outer = clone::remap(map, exec.operands[query_idx]);
      const TensorType& query_t = types.at(exec.operands[query_idx]).tensor;
      std::string metric = sim->str_attr("metric");
      std::string tile_metric = metric == "cosine" ? "dot" : metric;
      int64_t k = sim->int_attr("k");
      if (metric == "cosine" && k > 0)
        throw CompileError("cosine similarity supports scores mode (k=0) only");
      bool largest = sim->int_attr("largest", metric == "dot" || metric == "cosine")
                     != 0;
      std::string kind = largest ? "topk-max" : "topk-min";
      bool float_scores = stored_t.elem.kind == ElemKind::Float ||
                          query_t.elem.kind == ElemKind::Float;
      ElemType score_elem = float_scores ? elem_f32() : elem_i32();

      std::vector<Type> final_types;
      for (const Value& r : exec.results) final_types.push_back(r.type);

      // Rows outer, columns inner: one streaming accumulator per row tile.
      std::vector<std::pair<ValueId, int64_t>> row_results;  // (scores or packed)
      std::vector<std::pair<std::pair<ValueId, ValueId>, int64_t>> row_topk;
      for (int64_t rt = 0; rt < row_tiles; ++rt) {
        int64_t rb = rt * pe_rows;
        int64_t nr = std::min(pe_rows, n - rb);
        ValueId acc = kInvalidValue;
        for (int64_t ct = 0; ct < col_tiles; ++ct) {
          int64_t cb = ct * pe_cols;
          int64_t nc = std::min(pe_cols, d - cb);
          Type st_ty = tensor_type({nr, nc}, stored_t.elem);
          Type q_ty = tensor_type({1, nc}, query_t.elem);
          ValueId st_id = b.create("plumb", "slice", {stored_outer}, {st_ty},
                                   {{"offsets", std::vector<int64_t>{rb, cb}},
                                    {"sizes", std::vector<int64_t>{nr, nc}}})[0].id;
          ValueId qs_id = b.create("plumb", "slice", {query_outer}, {q_ty},
                                   {{"offsets", std::vector<int64_t>{0, cb}},
                                    {"sizes", std::vector<int64_t>{1, nc}}})[0].id;

          ValueId acq_id =
              b.create("cim", "acquire", {}, {handle_type(HandleKind::Device)})[0].id;
          Operation exec_tile;
          exec_tile.dialect = "cim";
          exec_tile.opname = "execute";
          exec_tile.operands = {acq_id, st_id, qs_id};
          Region region;
          Value sa = fn.new_value(st_ty);
          Value qa = fn.new_value(q_ty);
          region.args = {sa, qa};
          Operation tile_sim;
          tile_sim.dialect = "cim";
          tile_sim.opname = "similarity";
          tile_sim.operands = {sa.id, qa.id};
          tile_sim.attrs = {{"metric", tile_metric},
                            {"k", int64_t{0}},
                            {"row_base", rb}};
          Value score = fn.new_value(tensor_type({1, nr}, score_elem));
          tile_sim.results = {score};
          Operation yield;
          yield.dialect = "cim";
          yield.opname = "yield";
          yield.operands = {score.id};
          region.ops.push_back(std::move(tile_sim));
          region.ops.push_back(std::move(yield));
          exec_tile.regions.push_back(std::move(region));
          Value score_out = fn.new_value(tensor_type({1, nr}, score_elem));
          exec_tile.results = {score_out};
          fn.body.ops.push_back(std::move(exec_tile));
          b.create("cim", "release", {acq_id}, {});

          if (acc == kInvalidValue) {
            acc = score_out.id;
          } else {
            // The last column merge of a lone row tile is the final value in
            // scores mode and takes the original result type.
            bool final_scores = k == 0 && row_tiles == 1 && metric != "cosine" &&
                                ct == col_tiles - 1;
            Type merge_ty =
                final_scores ? final_types[0] : tensor_type({1, nr}, score_elem);
            acc = b.create("cim", "merge_partial", {acc, score_out.id}, {merge_ty},
                           {{"kind", std::string("sum-cols")}})[0].id;
          }
        }
        if (k > 0) {
          int64_t kr = std::min(k, nr);
          bool final_here = row_tiles == 1;
          AttrMap attrs = {{"kind", kind}, {"k", k}, {"row_base", rb}};
          if (final_here && metric == "euclidean") attrs["post"] = std::string("sqrt");
          std::vector<Type> rts =
              final_here ? final_types
                         : std::vector<Type>{tensor_type({1, kr}, score_elem),
                                             tensor_type({1, kr}, elem_i32())};
          std::vector<Value> select = b.create("cim", "merge_partial", {acc}, rts, attrs);
          row_topk.push_back({{select[0].id, select[1].id}, kr});
        } else {
          row_results.push_back({acc, nr});
        }
      }

      std::vector<ValueId> finals;
      if (k > 0) {
        ValueId bv = row_topk[0].first.first;
        ValueId bi = row_topk[0].first.second;
        int64_t have = row_topk[0].second;
        for (size_t rt = 1; rt < row_topk.size(); ++rt) {
          have = std::min(k, have + row_topk[rt].second);
          bool final_here = rt + 1 == row_topk.size();
          AttrMap attrs = {{"kind", kind}, {"k", k}};
          if (final_here && metric == "euclidean") attrs["post"] = std::string("sqrt");
          std::vector<Type> rts =
              final_here ? final_types
                         : std::vector<Type>{tensor_type({1, have}, score_elem),
                                             tensor_type({1, have}, elem_i32())};
          std::vector<Value> merge = b.create(
              "cim", "merge_partial",
              {bv, bi, row_topk[rt].first.first, row_topk[rt].first.second}, rts,
              attrs);
          bv = merge[0].id;
          bi = merge[1].id;
        }
        finals = {bv, bi};
      } else {
        ValueId acc = row_results[0].first;
        int64_t have = row_results[0].second;
        for (size_t rt = 1; rt < row_results.size(); ++rt) {
          have += row_results[rt].second;
          bool final_here = rt + 1 == row_results.size() && metric != "cosine";
          std::vector<Type> rts =
              final_here ? std::vector<Type>{final_types[0]}
                         : std::vector<Type>{tensor_type({1, have}, score_elem)};
          acc = b.create("cim", "merge_partial", {acc, row_results[rt].first}, rts,
                         {{"kind", std::string("concat")}})[0].id;
        }
        if (metric == "cosine") {
          // Host-side normalization of the on-device dot scores.
          ValueId ns_id = b.create("tensor", "norm", {stored_outer},
                                   {tensor_type({n}, elem_f32())},
                                   {{"p", int64_t{2}}, {"dim", int64_t{1}}})[0].id;
          ValueId nq_id = b.create("tensor", "norm", {query_outer},
                                   {tensor_type({int64_t{1}}, elem_f32())},
                                   {{"p", int64_t{2}}, {"dim", int64_t{1}}})[0].id;
          acc = b.create("tensor", "div", {acc, ns_id, nq_id}, {final_types[0]},
                         {})[0].id;
        }
        finals = {acc};
      }

      for (size_t i = 0; i < exec.results.size(); ++i)
        map[exec.results[i].id] = finals[i];
      oi += 2;  // skip execute and release
    }
    out.functions.push_back(std::move(fn));
  }
  return out;
}

}  // namespace camforge
