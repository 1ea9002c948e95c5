#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "camforge/ir.hpp"
#include "camforge/shapes.hpp"

// Operation registry and module verifier. Each (dialect, opname) pair has a
// registered signature: operand/result arities, attribute schema, region
// count, and a semantic check. Unregistered ops are verifier errors.

namespace camforge {

class VerifyCtx;
using SemanticCheck = std::function<void(VerifyCtx&)>;

struct AttrSpec {
  AttrKind kind;
  bool required = false;
};

struct OpSignature {
  int min_operands = 0;
  int max_operands = 0;           // -1: variadic
  int num_results = 0;            // -1: variadic
  int num_regions = 0;
  bool isolated = false;          // region sees only its block args
  bool is_terminator = false;
  std::string region_terminator;  // required trailing op of each region
  std::map<std::string, AttrSpec> attrs;
  SemanticCheck check;
};

class VerifyCtx {
public:
  VerifyCtx(const Operation& op, std::string path,
            std::function<const Type*(ValueId)> resolve,
            std::vector<Diagnostic>& diags)
      : op_(op), path_(std::move(path)), resolve_(std::move(resolve)),
        diags_(diags) {}

  const Operation& op() const { return op_; }

  const Type* type_of(ValueId id) const { return resolve_(id); }

  const TensorType* tensor_operand(size_t i) const {
    if (i >= op_.operands.size()) return nullptr;
    const Type* t = resolve_(op_.operands[i]);
    if (!t || !t->is_tensor) return nullptr;
    return &t->tensor;
  }

  bool operand_is_handle(size_t i, HandleKind k) const {
    if (i >= op_.operands.size()) return false;
    const Type* t = resolve_(op_.operands[i]);
    return t && t->is_handle(k);
  }

  void error(const std::string& msg) { diags_.push_back({path_, msg, -1, -1}); }

  void require(bool cond, const std::string& msg) {
    if (!cond) error(msg);
  }

private:
  const Operation& op_;
  std::string path_;
  std::function<const Type*(ValueId)> resolve_;
  std::vector<Diagnostic>& diags_;
};

namespace reg_detail {

inline void check_tensor_op(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  auto kind = tensor_op_from_name(op.opname);
  if (!kind) return;
  std::vector<TensorType> operands;
  for (size_t i = 0; i < op.operands.size(); ++i) {
    const TensorType* t = ctx.tensor_operand(i);
    if (!t) {
      ctx.error(op.full_name() + ": operand " + std::to_string(i) + " must be a tensor");
      return;
    }
    operands.push_back(*t);
  }
  std::vector<TensorType> inferred;
  try {
    inferred = infer_shapes(*kind, operands, op.attrs);
  } catch (const CompileError& e) {
    ctx.error(e.what());
    return;
  }
  if (inferred.size() != op.results.size()) {
    ctx.error(op.full_name() + ": result count mismatch");
    return;
  }
  for (size_t i = 0; i < inferred.size(); ++i) {
    if (!op.results[i].type.is_tensor || op.results[i].type.tensor != inferred[i])
      ctx.error(op.full_name() + ": result " + std::to_string(i) +
                " type does not match inferred " + shape_str(inferred[i].shape));
  }
}

inline void check_similarity(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  const TensorType* stored = ctx.tensor_operand(0);
  const TensorType* query = ctx.tensor_operand(1);
  if (!stored || !query || stored->rank() != 2 || query->rank() != 2) {
    ctx.error("similarity expects rank-2 tensor operands");
    return;
  }
  if (query->shape[0] != 1 || query->shape[1] != stored->shape[1]) {
    ctx.error("similarity query must be 1xD matching stored NxD");
    return;
  }
  std::string metric = op.str_attr("metric");
  if (metric != "dot" && metric != "euclidean" && metric != "cosine" &&
      metric != "hamming") {
    ctx.error("similarity: unknown metric \"" + metric + "\"");
    return;
  }
  int64_t n = stored->shape[0];
  int64_t k = op.int_attr("k");
  ctx.require(k >= 0 && k <= n, "similarity: k must be in [0, N]");
  if (k == 0) {
    ctx.require(op.results.size() == 1 &&
                    op.results[0].type.is_tensor &&
                    op.results[0].type.tensor.numel() == n,
                "similarity with k=0 yields one score vector of extent N");
  } else {
    bool ok = op.results.size() == 2;
    for (const auto& r : op.results)
      ok = ok && r.type.is_tensor && r.type.tensor.numel() == k;
    ctx.require(ok, "similarity with k>0 yields (values, indices) of extent k");
  }
}

inline void check_merge_partial(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  std::string kind = op.str_attr("kind");
  auto tt = [&](size_t i) { return ctx.tensor_operand(i); };
  if (kind == "sum-cols") {
    const TensorType* a = tt(0);
    const TensorType* b = tt(1);
    ctx.require(op.operands.size() == 2 && a && b && *a == *b,
                "sum-cols expects two tensors of equal type");
    ctx.require(op.results.size() == 1 && a &&
                    op.results[0].type.is_tensor &&
                    op.results[0].type.tensor.numel() == a->numel() &&
                    op.results[0].type.tensor.elem == a->elem,
                "sum-cols result must match operand extent and element type");
  } else if (kind == "concat") {
    const TensorType* a = tt(0);
    const TensorType* b = tt(1);
    if (op.operands.size() != 2 || !a || !b || a->rank() != 2 || b->rank() != 2 ||
        a->shape[0] != 1 || b->shape[0] != 1 || !(a->elem == b->elem)) {
      ctx.error("concat expects two 1xW tensors of the same element type");
      return;
    }
    ctx.require(op.results.size() == 1 && op.results[0].type.is_tensor &&
                    op.results[0].type.tensor.numel() == a->numel() + b->numel(),
                "concat result extent must be the sum of operand extents");
  } else if (kind == "topk-min" || kind == "topk-max") {
    int64_t k = op.int_attr("k");
    ctx.require(k >= 1, "topk merge requires k >= 1");
    int64_t avail = 0;
    if (op.operands.size() == 1) {
      const TensorType* s = tt(0);
      if (!s) {
        ctx.error("topk merge select form expects a score tensor");
        return;
      }
      avail = s->numel();
    } else if (op.operands.size() == 4) {
      const TensorType* v1 = tt(0);
      const TensorType* i1 = tt(1);
      const TensorType* v2 = tt(2);
      const TensorType* i2 = tt(3);
      if (!v1 || !i1 || !v2 || !i2 || v1->numel() != i1->numel() ||
          v2->numel() != i2->numel()) {
        ctx.error("topk merge combine form expects (values, indices) pairs");
        return;
      }
      avail = v1->numel() + v2->numel();
    } else {
      ctx.error("topk merge expects 1 (select) or 4 (combine) operands");
      return;
    }
    int64_t want = std::min(k, avail);
    bool ok = op.results.size() == 2;
    for (const auto& r : op.results)
      ok = ok && r.type.is_tensor && r.type.tensor.numel() == want;
    ctx.require(ok, "topk merge yields (values, indices) of extent min(k, available)");
  } else {
    ctx.error("merge_partial: unknown kind \"" + kind + "\"");
  }
}

inline void check_slice(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  const TensorType* t = ctx.tensor_operand(0);
  if (!t) {
    ctx.error("slice expects a tensor operand");
    return;
  }
  auto offsets = op.list_attr("offsets");
  auto sizes = op.list_attr("sizes");
  if (offsets.size() != t->shape.size() || sizes.size() != t->shape.size()) {
    ctx.error("slice offsets/sizes rank mismatch");
    return;
  }
  for (size_t i = 0; i < sizes.size(); ++i) {
    if (offsets[i] < 0 || sizes[i] < 1 || offsets[i] + sizes[i] > t->shape[i]) {
      ctx.error("slice out of bounds on dim " + std::to_string(i));
      return;
    }
  }
  ctx.require(op.results.size() == 1 && op.results[0].type.is_tensor &&
                  op.results[0].type.tensor.shape == sizes &&
                  op.results[0].type.tensor.elem == t->elem,
              "slice result type must equal sizes with preserved element type");
}

inline void check_pad(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  const TensorType* t = ctx.tensor_operand(0);
  if (!t) {
    ctx.error("pad expects a tensor operand");
    return;
  }
  auto sizes = op.list_attr("sizes");
  if (sizes.size() != t->shape.size()) {
    ctx.error("pad sizes rank mismatch");
    return;
  }
  for (size_t i = 0; i < sizes.size(); ++i)
    if (sizes[i] < t->shape[i]) {
      ctx.error("pad sizes must be >= operand extents");
      return;
    }
  ctx.require(op.results.size() == 1 && op.results[0].type.is_tensor &&
                  op.results[0].type.tensor.shape == sizes &&
                  op.results[0].type.tensor.elem == t->elem,
              "pad result type must equal sizes with preserved element type");
}

inline void check_for(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  int64_t lower = op.int_attr("lower");
  int64_t upper = op.int_attr("upper");
  int64_t step = op.int_attr("step", 1);
  ctx.require(step >= 1, "for: step must be >= 1");
  ctx.require(upper >= lower, "for: upper must be >= lower");
  if (op.regions.size() != 1) return;
  const Region& body = op.regions[0];
  size_t iters = op.operands.size();
  if (body.args.size() != iters + 1) {
    ctx.error("for: body takes the index plus one argument per init value");
    return;
  }
  const Type& idx = body.args[0].type;
  ctx.require(idx.is_tensor && idx.tensor.rank() == 0 &&
                  idx.tensor.elem == elem_i32(),
              "for: index argument must be i32[]");
  for (size_t i = 0; i < iters; ++i) {
    const Type* init = ctx.type_of(op.operands[i]);
    if (!init) continue;
    ctx.require(body.args[i + 1].type == *init,
                "for: iter argument type must match init operand");
    if (i < op.results.size())
      ctx.require(op.results[i].type == *init,
                  "for: result type must match init operand");
  }
  ctx.require(op.results.size() == iters, "for: one result per init value");
  if (!body.ops.empty()) {
    const Operation& term = body.ops.back();
    if (term.full_name() == "plumb.yield")
      ctx.require(term.operands.size() == iters,
                  "for: yield must carry one value per iter argument");
  }
}

inline void check_execute(VerifyCtx& ctx) {
  const Operation& op = ctx.op();
  ctx.require(ctx.operand_is_handle(0, HandleKind::Device),
              "execute: first operand must be a !cim.device handle");
  if (op.regions.size() != 1) return;
  const Region& body = op.regions[0];
  size_t captures = op.operands.empty() ? 0 : op.operands.size() - 1;
  if (body.args.size() != captures) {
    ctx.error("execute: region takes one argument per captured operand");
    return;
  }
  for (size_t i = 0; i < captures; ++i) {
    const Type* t = ctx.type_of(op.operands[i + 1]);
    if (t && !(body.args[i].type == *t))
      ctx.error("execute: region argument " + std::to_string(i) +
                " type mismatch with captured operand");
  }
  if (!body.ops.empty()) {
    const Operation& term = body.ops.back();
    if (term.full_name() == "cim.yield") {
      if (term.operands.size() != op.results.size())
        ctx.error("execute: yield arity must match results");
    }
  }
}

// Finds the alloc_bank rows/cols for a subarray/array/mat handle by walking
// producer ops. Returns {rows, cols} or {-1, -1} when unavailable.
struct BankDims {
  int64_t rows = -1;
  int64_t cols = -1;
};

}  // namespace reg_detail

inline const std::map<std::string, OpSignature>& op_registry() {
  static const std::map<std::string, OpSignature> table = [] {
    std::map<std::string, OpSignature> t;
    auto req = [](AttrKind k) { return AttrSpec{k, true}; };
    auto opt = [](AttrKind k) { return AttrSpec{k, false}; };

    // --- plumb: structural plumbing ---------------------------------------
    {
      OpSignature s;
      s.min_operands = 0;
      s.max_operands = -1;
      s.is_terminator = true;
      t["plumb.return"] = s;
      t["plumb.yield"] = s;
      t["cim.yield"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 0;
      s.max_operands = -1;
      s.num_results = -1;
      s.num_regions = 1;
      s.region_terminator = "plumb.yield";
      s.attrs = {{"lower", req(AttrKind::Int)},
                 {"upper", req(AttrKind::Int)},
                 {"step", opt(AttrKind::Int)},
                 {"level", opt(AttrKind::String)},
                 {"trip", opt(AttrKind::Int)}};
      s.check = reg_detail::check_for;
      t["plumb.for"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = 1;
      s.num_results = 1;
      s.attrs = {{"offsets", req(AttrKind::IntList)}, {"sizes", req(AttrKind::IntList)}};
      s.check = reg_detail::check_slice;
      t["plumb.slice"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = 1;
      s.num_results = 1;
      s.attrs = {{"sizes", req(AttrKind::IntList)}};
      s.check = reg_detail::check_pad;
      t["plumb.pad"] = s;
    }

    // --- tensor ------------------------------------------------------------
    {
      auto tensor_sig = [&](int min_op, int max_op, int nres,
                            std::map<std::string, AttrSpec> attrs = {}) {
        OpSignature s;
        s.min_operands = min_op;
        s.max_operands = max_op;
        s.num_results = nres;
        s.attrs = std::move(attrs);
        s.check = reg_detail::check_tensor_op;
        return s;
      };
      t["tensor.transpose"] = tensor_sig(1, 1, 1);
      t["tensor.matmul"] = tensor_sig(2, 2, 1);
      t["tensor.sub"] = tensor_sig(2, 2, 1);
      t["tensor.div"] = tensor_sig(2, 3, 1);
      t["tensor.norm"] = tensor_sig(1, 1, 1,
                                    {{"p", opt(AttrKind::Int)}, {"dim", opt(AttrKind::Int)}});
      t["tensor.topk"] = tensor_sig(1, 1, 2,
                                    {{"k", req(AttrKind::Int)},
                                     {"dim", opt(AttrKind::Int)},
                                     {"largest", opt(AttrKind::Int)}});
    }

    // --- cim ---------------------------------------------------------------
    {
      OpSignature s;
      s.num_results = 1;
      t["cim.acquire"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = 1;
      t["cim.release"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = -1;
      s.num_results = -1;
      s.num_regions = 1;
      s.isolated = true;
      s.region_terminator = "cim.yield";
      s.check = reg_detail::check_execute;
      t["cim.execute"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 2;
      s.max_operands = 2;
      s.num_results = -1;
      s.attrs = {{"metric", req(AttrKind::String)},
                 {"k", req(AttrKind::Int)},
                 {"largest", opt(AttrKind::Int)},
                 {"row_base", opt(AttrKind::Int)},
                 {"match", opt(AttrKind::String)},
                 {"threshold", opt(AttrKind::Int)}};
      s.check = reg_detail::check_similarity;
      t["cim.similarity"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = 4;
      s.num_results = -1;
      s.attrs = {{"kind", req(AttrKind::String)},
                 {"k", opt(AttrKind::Int)},
                 {"row_base", opt(AttrKind::Int)},
                 {"post", opt(AttrKind::String)},
                 {"match", opt(AttrKind::String)},
                 {"threshold", opt(AttrKind::Int)}};
      s.check = reg_detail::check_merge_partial;
      t["cim.merge_partial"] = s;
    }

    // --- cam ---------------------------------------------------------------
    std::map<std::string, AttrSpec> sched = {{"step", opt(AttrKind::Int)},
                                             {"wave", opt(AttrKind::Int)},
                                             {"slot", opt(AttrKind::Int)}};
    {
      OpSignature s;
      s.num_results = 1;
      s.attrs = {{"rows", req(AttrKind::Int)},
                 {"cols", req(AttrKind::Int)},
                 {"bank", opt(AttrKind::Int)},
                 {"device", opt(AttrKind::String)}};
      s.check = [](VerifyCtx& ctx) {
        ctx.require(ctx.op().int_attr("rows") >= 1 && ctx.op().int_attr("cols") >= 1,
                    "alloc_bank: rows and cols must be >= 1");
        ctx.require(!ctx.op().results.empty() &&
                        ctx.op().results[0].type.is_handle(HandleKind::Bank),
                    "alloc_bank yields a !cam.bank handle");
      };
      t["cam.alloc_bank"] = s;
    }
    auto alloc_child = [&](HandleKind parent, HandleKind child, const char* idx_attr) {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = 1;
      s.num_results = 1;
      s.attrs = {{idx_attr, opt(AttrKind::Int)}};
      s.check = [parent, child](VerifyCtx& ctx) {
        ctx.require(ctx.operand_is_handle(0, parent),
                    "alloc: operand must be the parent handle");
        ctx.require(!ctx.op().results.empty() &&
                        ctx.op().results[0].type.is_handle(child),
                    "alloc: result handle kind mismatch");
      };
      return s;
    };
    t["cam.alloc_mat"] = alloc_child(HandleKind::Bank, HandleKind::Mat, "mat");
    t["cam.alloc_array"] = alloc_child(HandleKind::Mat, HandleKind::Array, "array");
    t["cam.alloc_subarray"] =
        alloc_child(HandleKind::Array, HandleKind::Subarray, "subarray");
    {
      OpSignature s;
      s.min_operands = 2;
      s.max_operands = 2;
      s.attrs = sched;
      s.attrs["row_offset"] = opt(AttrKind::Int);
      s.check = [](VerifyCtx& ctx) {
        ctx.require(ctx.operand_is_handle(0, HandleKind::Subarray),
                    "write_value: first operand must be a subarray handle");
        ctx.require(ctx.tensor_operand(1) != nullptr,
                    "write_value: second operand must be a tensor");
      };
      t["cam.write_value"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 2;
      s.max_operands = 2;
      s.num_results = 1;
      s.attrs = sched;
      s.attrs["match"] = req(AttrKind::String);
      s.attrs["metric"] = req(AttrKind::String);
      s.attrs["threshold"] = opt(AttrKind::Int);
      s.attrs["row_offset"] = opt(AttrKind::Int);
      s.attrs["rows_active"] = req(AttrKind::Int);
      s.check = [](VerifyCtx& ctx) {
        const Operation& op = ctx.op();
        ctx.require(ctx.operand_is_handle(0, HandleKind::Subarray),
                    "search: first operand must be a subarray handle");
        const TensorType* q = ctx.tensor_operand(1);
        if (!q || q->rank() != 2 || q->shape[0] != 1) {
          ctx.error("search: query must be a 1xC tensor");
          return;
        }
        std::string match = op.str_attr("match");
        if (match != "exact" && match != "best" && match != "threshold")
          ctx.error("search: unknown match type \"" + match + "\"");
        if (match == "threshold" && !op.has_attr("threshold"))
          ctx.error("search: threshold match requires a threshold attribute");
        if (match == "exact" && op.has_attr("threshold"))
          ctx.error("search: exact match takes no threshold");
        std::string metric = op.str_attr("metric");
        if (metric != "hamming" && metric != "euclidean")
          ctx.error("search: unknown metric \"" + metric + "\"");
        ctx.require(op.int_attr("rows_active") >= 1, "search: rows_active must be >= 1");
        ctx.require(!op.results.empty() &&
                        op.results[0].type.is_handle(HandleKind::Matches),
                    "search yields a !cam.matches handle");
      };
      t["cam.search"] = s;
    }
    {
      OpSignature s;
      s.min_operands = 1;
      s.max_operands = 1;
      s.num_results = -1;
      s.attrs = {{"k", req(AttrKind::Int)},
                 {"scale", opt(AttrKind::Int)},
                 {"offset", opt(AttrKind::Int)},
                 {"post", opt(AttrKind::String)},
                 {"row_base", opt(AttrKind::Int)}};
      s.check = [](VerifyCtx& ctx) {
        const Operation& op = ctx.op();
        ctx.require(ctx.operand_is_handle(0, HandleKind::Matches),
                    "read_value: operand must be a !cam.matches handle");
        int64_t k = op.int_attr("k");
        ctx.require(k >= 0, "read_value: k must be >= 0");
        size_t want = k == 0 ? 1 : 2;
        ctx.require(op.results.size() == want,
                    "read_value yields scores (k=0) or (values, indices)");
      };
      t["cam.read_value"] = s;
    }
    return t;
  }();
  return table;
}

// ---------------------------------------------------------------------------
// Verifier

class Verifier {
public:
  std::vector<Diagnostic> run(const ProgramModule& m) {
    diags_.clear();
    std::set<std::string> names;
    for (size_t fi = 0; fi < m.functions.size(); ++fi) {
      const FunctionDef& fn = m.functions[fi];
      if (!names.insert(fn.name).second)
        diags_.push_back({"@" + fn.name, "duplicate function name", -1, -1});
      verify_function(fn);
    }
    return diags_;
  }

private:
  std::vector<Diagnostic> diags_;
  // Scope stack: each entry maps visible value ids to types. Isolated
  // regions start a fresh stack section.
  std::vector<std::map<ValueId, Type>> scopes_;
  std::vector<size_t> isolation_marks_;
  std::set<ValueId> defined_;

  const Type* resolve(ValueId id) const {
    size_t floor = isolation_marks_.empty() ? 0 : isolation_marks_.back();
    for (size_t i = scopes_.size(); i-- > floor;) {
      auto it = scopes_[i].find(id);
      if (it != scopes_[i].end()) return &it->second;
    }
    return nullptr;
  }

  void define(const Value& v, const std::string& path) {
    if (!defined_.insert(v.id).second)
      diags_.push_back({path, "value defined more than once", -1, -1});
    scopes_.back()[v.id] = v.type;
  }

  void verify_function(const FunctionDef& fn) {
    scopes_.clear();
    isolation_marks_.clear();
    defined_.clear();
    producers_.clear();
    index_producers(fn.body);
    scopes_.push_back({});
    std::string path = "@" + fn.name;
    for (const auto& a : fn.args) define(a, path);

    verify_region(fn.body, path, "plumb.return");

    // Return arity/types against the declared signature.
    if (!fn.body.ops.empty() && fn.body.ops.back().full_name() == "plumb.return") {
      const Operation& ret = fn.body.ops.back();
      if (ret.operands.size() != fn.result_types.size()) {
        diags_.push_back({path, "return arity does not match function results", -1, -1});
      } else {
        for (size_t i = 0; i < ret.operands.size(); ++i) {
          const Type* t = resolve(ret.operands[i]);
          if (t && !(*t == fn.result_types[i]))
            diags_.push_back({path, "return operand " + std::to_string(i) +
                                        " type mismatch", -1, -1});
        }
      }
    }
    verify_handle_discipline(fn.body, path);
  }

  void verify_region(const Region& region, const std::string& path,
                     const std::string& terminator) {
    for (size_t oi = 0; oi < region.ops.size(); ++oi) {
      const Operation& op = region.ops[oi];
      std::string op_path = path + "/op" + std::to_string(oi);
      verify_op(op, op_path);
      for (const auto& r : op.results) define(r, op_path);
    }
    if (!terminator.empty()) {
      if (region.ops.empty() || region.ops.back().full_name() != terminator)
        diags_.push_back({path, "region must end with " + terminator, -1, -1});
    }
    for (size_t oi = 0; oi + 1 < region.ops.size(); ++oi) {
      const auto& sig = op_registry().find(region.ops[oi].full_name());
      if (sig != op_registry().end() && sig->second.is_terminator)
        diags_.push_back({path + "/op" + std::to_string(oi),
                          "terminator before end of region", -1, -1});
    }
  }

  void verify_op(const Operation& op, const std::string& path) {
    auto it = op_registry().find(op.full_name());
    if (it == op_registry().end()) {
      diags_.push_back({path, "unregistered op '" + op.full_name() + "'", -1, -1});
      // Still walk operands for use-before-def reporting.
      for (ValueId v : op.operands)
        if (!resolve(v))
          diags_.push_back({path, "use before def of operand value", -1, -1});
      return;
    }
    const OpSignature& sig = it->second;

    int n = static_cast<int>(op.operands.size());
    if (n < sig.min_operands || (sig.max_operands >= 0 && n > sig.max_operands)) {
      std::string expect =
          sig.min_operands == sig.max_operands
              ? std::to_string(sig.min_operands)
              : (std::to_string(sig.min_operands) + ".." +
                 (sig.max_operands < 0 ? "N" : std::to_string(sig.max_operands)));
      diags_.push_back({path, op.opname + " expects " + expect + " operands", -1, -1});
    }
    if (sig.num_results >= 0 && static_cast<int>(op.results.size()) != sig.num_results)
      diags_.push_back({path, op.opname + " expects " +
                                  std::to_string(sig.num_results) + " results", -1, -1});
    if (static_cast<int>(op.regions.size()) != sig.num_regions)
      diags_.push_back({path, op.opname + " expects " +
                                  std::to_string(sig.num_regions) + " regions", -1, -1});

    for (const auto& [key, spec] : sig.attrs) {
      auto a = op.attrs.find(key);
      if (a == op.attrs.end()) {
        if (spec.required)
          diags_.push_back({path, op.opname + ": missing attribute '" + key + "'", -1, -1});
      } else if (attr_kind(a->second) != spec.kind) {
        diags_.push_back({path, op.opname + ": attribute '" + key + "' has wrong kind", -1, -1});
      }
    }
    for (const auto& [key, value] : op.attrs) {
      (void)value;
      if (!sig.attrs.count(key))
        diags_.push_back({path, op.opname + ": unknown attribute '" + key + "'", -1, -1});
    }

    for (ValueId v : op.operands)
      if (!resolve(v))
        diags_.push_back({path, "use before def of operand value", -1, -1});

    // Regions: nested scope, isolated ops hide enclosing definitions.
    for (size_t ri = 0; ri < op.regions.size(); ++ri) {
      if (sig.isolated) isolation_marks_.push_back(scopes_.size());
      scopes_.push_back({});
      std::string rpath = path + "/region" + std::to_string(ri);
      for (const auto& a : op.regions[ri].args) define(a, rpath);
      verify_region(op.regions[ri], rpath, sig.region_terminator);
      scopes_.pop_back();
      if (sig.isolated) isolation_marks_.pop_back();
    }

    if (sig.check) {
      VerifyCtx ctx(op, path, [this](ValueId id) { return resolve(id); }, diags_);
      sig.check(ctx);
      if (op.full_name() == "cam.search") check_search_width(op, path);
      if (op.full_name() == "cam.write_value") check_write_bounds(op, path);
    }
  }

  // Producer map so cam.search can check its query width against the
  // subarray's column count (from the originating alloc_bank).
  std::map<ValueId, Operation const*> producers_;

  void index_producers(const Region& r) {
    for (const auto& op : r.ops) {
      for (const auto& res : op.results) producers_[res.id] = &op;
      for (const auto& reg : op.regions) index_producers(reg);
    }
  }

  reg_detail::BankDims bank_dims_for(ValueId handle) {
    for (int depth = 0; depth < 8; ++depth) {
      auto it = producers_.find(handle);
      if (it == producers_.end()) return {};
      const Operation* op = it->second;
      if (op->full_name() == "cam.alloc_bank")
        return {op->int_attr("rows"), op->int_attr("cols")};
      if (op->operands.empty()) return {};
      handle = op->operands[0];
    }
    return {};
  }

  void check_search_width(const Operation& op, const std::string& path) {
    if (op.operands.size() != 2) return;
    reg_detail::BankDims dims = bank_dims_for(op.operands[0]);
    const Type* q = resolve(op.operands[1]);
    if (dims.cols < 0 || !q || !q->is_tensor || q->tensor.rank() != 2) return;
    if (q->tensor.shape[1] != dims.cols)
      diags_.push_back({path, "query width mismatch: query has " +
                                  std::to_string(q->tensor.shape[1]) +
                                  " columns, subarray has " +
                                  std::to_string(dims.cols), -1, -1});
    int64_t ra = op.int_attr("rows_active");
    int64_t ro = op.int_attr("row_offset");
    if (dims.rows >= 0 && (ro < 0 || ro + ra > dims.rows))
      diags_.push_back({path, "active row range exceeds subarray rows", -1, -1});
  }

  void check_write_bounds(const Operation& op, const std::string& path) {
    if (op.operands.size() != 2) return;
    reg_detail::BankDims dims = bank_dims_for(op.operands[0]);
    const Type* t = resolve(op.operands[1]);
    if (dims.rows < 0 || !t || !t->is_tensor || t->tensor.rank() != 2) return;
    int64_t ro = op.int_attr("row_offset");
    if (ro < 0 || ro + t->tensor.shape[0] > dims.rows ||
        t->tensor.shape[1] > dims.cols)
      diags_.push_back({path, "write tile does not fit subarray from row offset", -1, -1});
  }

  // cim handle discipline: every acquire has exactly one release that comes
  // after the last execute; every execute's handle is an acquire result.
  void verify_handle_discipline(const Region& region, const std::string& path) {
    std::map<ValueId, size_t> acquire_pos;
    std::map<ValueId, std::vector<size_t>> executes;
    std::map<ValueId, std::vector<size_t>> releases;
    for (size_t i = 0; i < region.ops.size(); ++i) {
      const Operation& op = region.ops[i];
      if (op.full_name() == "cim.acquire" && !op.results.empty())
        acquire_pos[op.results[0].id] = i;
      else if (op.full_name() == "cim.execute" && !op.operands.empty())
        executes[op.operands[0]].push_back(i);
      else if (op.full_name() == "cim.release" && !op.operands.empty())
        releases[op.operands[0]].push_back(i);
    }
    for (const auto& [h, pos] : acquire_pos) {
      (void)pos;
      auto r = releases.find(h);
      if (r == releases.end() || r->second.size() != 1) {
        diags_.push_back({path, "device handle must be released exactly once", -1, -1});
        continue;
      }
      auto e = executes.find(h);
      if (e != executes.end() && !e->second.empty() &&
          r->second[0] < e->second.back())
        diags_.push_back({path, "release must postdominate all executes on handle", -1, -1});
    }
    for (const auto& [h, uses] : executes) {
      (void)uses;
      if (!acquire_pos.count(h))
        diags_.push_back({path, "execute handle does not come from an acquire", -1, -1});
    }
    for (const auto& op : region.ops)
      for (const auto& r : op.regions) verify_handle_discipline(r, path);
  }
};

inline std::vector<Diagnostic> verify(const ProgramModule& m) {
  Verifier v;
  return v.run(m);
}

}  // namespace camforge
