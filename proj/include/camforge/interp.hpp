#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "camforge/arch.hpp"
#include "camforge/ir.hpp"
#include "camforge/shapes.hpp"
#include "camforge/sim.hpp"

// Module interpreter. Executes tensor, cim, plumb and cam dialect ops with
// identical functional semantics at every pipeline stage; cam write/search
// ops additionally produce trace events that the metrics accounting folds
// into latency/energy/power.

namespace camforge {

struct ExecOptions {
  std::string function;     // empty: first function
  bool collect_trace = true;
};

struct ExecResult {
  std::vector<Tensor> outputs;
  Metrics metrics;
};

class Interpreter {
public:
  Interpreter(const TechParams& tech) : tech_(tech) {}

  ExecResult run(const ProgramModule& m, const std::map<std::string, Tensor>& inputs,
                 const ExecOptions& opts = {}) {
    ExecResult result;
    if (m.functions.empty()) {
      finalize(result.metrics);
      return result;
    }
    const FunctionDef* fn = nullptr;
    if (opts.function.empty()) {
      fn = &m.functions.front();
    } else {
      fn = m.find_function(opts.function);
      if (!fn) throw SimError("no function named '" + opts.function + "'");
    }

    for (size_t i = 0; i < fn->args.size(); ++i) {
      auto it = inputs.find(fn->arg_name(i));
      if (it == inputs.end())
        throw SimError("missing input tensor '" + fn->arg_name(i) + "'");
      if (!fn->args[i].type.is_tensor ||
          !(it->second.type == fn->args[i].type.tensor))
        throw SimError("shape mismatch for input '" + fn->arg_name(i) + "'");
      env_[fn->args[i].id] = it->second;
    }

    std::vector<RtValue> returned = eval_region(fn->body, {});
    for (RtValue& v : returned) result.outputs.push_back(std::get<Tensor>(v));
    finalize(result.metrics);
    if (!opts.collect_trace) result.metrics.trace.clear();
    return result;
  }

private:
  struct HandleRt {
    HandleKind kind;
    int64_t uid;
  };
  struct MatchesRt {
    MatchResultRt res;
    int64_t subarray_uid = 0;
    std::string match = "best";
  };
  using RtValue = std::variant<Tensor, HandleRt, MatchesRt>;

  const TechParams& tech_;
  std::map<ValueId, RtValue> env_;

  struct HandleInfo {
    HandleKind kind;
    int64_t parent = -1;
    std::string name;
    int64_t rows = 0, cols = 0;
    std::string device = "tcam";
  };
  int64_t next_uid_ = 0;
  std::map<int64_t, HandleInfo> handles_;
  std::map<int64_t, SubarrayState> subarrays_;
  std::map<HandleKind, int64_t> level_counters_;

  struct Event {
    TraceEvent t;
    int64_t subarray_uid;
    bool is_search;
  };
  std::vector<Event> events_;
  std::set<int64_t> written_subarrays_;
  int64_t host_merges_ = 0;
  int64_t auto_step_ = 0;
  bool saw_step_attr_ = false;

  const Tensor& tensor_of(ValueId id) {
    auto it = env_.find(id);
    if (it == env_.end()) throw SimError("use of undefined runtime value");
    Tensor* t = std::get_if<Tensor>(&it->second);
    if (!t) throw SimError("expected a tensor value");
    return *t;
  }

  // ---- region evaluation --------------------------------------------------

  std::vector<RtValue> eval_region(const Region& r, const std::vector<RtValue>& args) {
    if (args.size() != r.args.size())
      throw SimError("region argument arity mismatch");
    for (size_t i = 0; i < args.size(); ++i) env_[r.args[i].id] = args[i];
    for (const Operation& op : r.ops) {
      const std::string name = op.full_name();
      if (name == "plumb.return" || name == "plumb.yield" || name == "cim.yield") {
        std::vector<RtValue> out;
        for (ValueId v : op.operands) out.push_back(env_.at(v));
        return out;
      }
      eval_op(op);
    }
    return {};
  }

  void eval_op(const Operation& op) {
    const std::string name = op.full_name();
    if (op.dialect == "tensor") {
      eval_tensor_op(op);
    } else if (name == "plumb.slice") {
      eval_slice(op);
    } else if (name == "plumb.pad") {
      eval_pad(op);
    } else if (name == "plumb.for") {
      eval_for(op);
    } else if (name == "cim.acquire") {
      env_[op.results[0].id] = HandleRt{HandleKind::Device, next_uid_++};
    } else if (name == "cim.release") {
      // nothing to tear down in the functional model
    } else if (name == "cim.execute") {
      std::vector<RtValue> args;
      for (size_t i = 1; i < op.operands.size(); ++i)
        args.push_back(env_.at(op.operands[i]));
      std::vector<RtValue> results = eval_region(op.regions[0], args);
      if (results.size() != op.results.size())
        throw SimError("execute yielded wrong arity");
      for (size_t i = 0; i < results.size(); ++i)
        env_[op.results[i].id] = reshape_to(std::get<Tensor>(results[i]),
                                            op.results[i].type);
    } else if (name == "cim.similarity") {
      eval_similarity(op);
    } else if (name == "cim.merge_partial") {
      eval_merge(op);
    } else if (name == "cam.alloc_bank" || name == "cam.alloc_mat" ||
               name == "cam.alloc_array" || name == "cam.alloc_subarray") {
      eval_alloc(op);
    } else if (name == "cam.write_value") {
      eval_write(op);
    } else if (name == "cam.search") {
      eval_search(op);
    } else if (name == "cam.read_value") {
      eval_read(op);
    } else {
      throw SimError("interpreter: unsupported op " + name);
    }
  }

  Tensor reshape_to(Tensor t, const Type& ty) {
    if (!ty.is_tensor) throw SimError("expected tensor type");
    if (t.numel() != ty.tensor.numel()) throw SimError("reshape numel mismatch");
    if (t.type.elem == ty.tensor.elem) {
      t.type = ty.tensor;
      return t;
    }
    // Element cast (int -> float or float passthrough) at declared-type
    // boundaries, e.g. raw distances read into an f32 result.
    Tensor out = Tensor::zeros(ty.tensor);
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (out.is_float())
        out.fv[size_t(i)] = t.is_float() ? t.fv[size_t(i)] : float(t.iv[size_t(i)]);
      else
        out.iv[size_t(i)] = t.is_float() ? int64_t(t.fv[size_t(i)]) : t.iv[size_t(i)];
    }
    return out;
  }

  // ---- dense tensor ops ---------------------------------------------------

  void eval_tensor_op(const Operation& op) {
    auto kind = tensor_op_from_name(op.opname);
    if (!kind) throw SimError("unknown tensor op " + op.opname);
    const TensorType& out0 = op.results[0].type.tensor;
    switch (*kind) {
      case TensorOpKind::Transpose: {
        Tensor r = dense::transpose(tensor_of(op.operands[0]));
        env_[op.results[0].id] = reshape_to(std::move(r), op.results[0].type);
        return;
      }
      case TensorOpKind::Matmul: {
        env_[op.results[0].id] = dense::matmul(tensor_of(op.operands[0]),
                                               tensor_of(op.operands[1]), out0);
        return;
      }
      case TensorOpKind::Sub: {
        env_[op.results[0].id] = dense::elementwise(
            tensor_of(op.operands[0]), tensor_of(op.operands[1]), out0,
            [](int64_t a, int64_t b) { return a - b; },
            [](double a, double b) { return a - b; });
        return;
      }
      case TensorOpKind::Div: {
        if (op.operands.size() == 2) {
          env_[op.results[0].id] = dense::elementwise(
              tensor_of(op.operands[0]), tensor_of(op.operands[1]), out0,
              [](int64_t a, int64_t b) { return b == 0 ? 0 : a / b; },
              [](double a, double b) { return a / b; });
          return;
        }
        // Ternary cosine form: x / (n1 * n2), all promoted to f32.
        const Tensor& x = tensor_of(op.operands[0]);
        const Tensor& n1 = tensor_of(op.operands[1]);
        const Tensor& n2 = tensor_of(op.operands[2]);
        Tensor out = Tensor::zeros(out0);
        int64_t n = out0.numel();
        for (int64_t i = 0; i < n; ++i) {
          float a = float(x.fval(i));
          float b = float(n1.fval(n1.numel() == n ? i : 0));
          float c = float(n2.fval(n2.numel() == n ? i : 0));
          out.fv[size_t(i)] = a / (b * c);
        }
        env_[op.results[0].id] = std::move(out);
        return;
      }
      case TensorOpKind::Norm: {
        env_[op.results[0].id] =
            dense::norm(tensor_of(op.operands[0]), op.int_attr("p", 2),
                        op.int_attr("dim"), out0);
        return;
      }
      case TensorOpKind::Topk: {
        auto [v, i] = dense::topk(tensor_of(op.operands[0]), op.int_attr("k"),
                                  op.int_attr("dim"), op.int_attr("largest", 1) != 0,
                                  op.results[0].type.tensor,
                                  op.results[1].type.tensor);
        env_[op.results[0].id] = std::move(v);
        env_[op.results[1].id] = std::move(i);
        return;
      }
    }
  }

  void eval_slice(const Operation& op) {
    const Tensor& t = tensor_of(op.operands[0]);
    auto offsets = op.list_attr("offsets");
    auto sizes = op.list_attr("sizes");
    Tensor out = Tensor::zeros(TensorType{sizes, t.type.elem});
    // rank <= 2 in practice; generic row-major copy
    std::vector<int64_t> idx(sizes.size(), 0);
    int64_t n = out.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
      int64_t rem = flat;
      int64_t src = 0;
      for (size_t dms = 0; dms < sizes.size(); ++dms) {
        int64_t stride = 1;
        for (size_t j = dms + 1; j < sizes.size(); ++j) stride *= sizes[j];
        int64_t pos = rem / stride;
        rem %= stride;
        int64_t sstride = 1;
        for (size_t j = dms + 1; j < sizes.size(); ++j) sstride *= t.type.shape[j];
        src += (offsets[dms] + pos) * sstride;
      }
      if (t.is_float())
        out.fv[size_t(flat)] = t.fv[size_t(src)];
      else
        out.iv[size_t(flat)] = t.iv[size_t(src)];
    }
    env_[op.results[0].id] = std::move(out);
  }

  void eval_pad(const Operation& op) {
    const Tensor& t = tensor_of(op.operands[0]);
    auto sizes = op.list_attr("sizes");
    Tensor out = Tensor::zeros(TensorType{sizes, t.type.elem});
    // zero padding beyond the original extents (rank-2 expected)
    if (t.type.rank() != 2) throw SimError("pad supports rank-2 tensors");
    for (int64_t i = 0; i < t.type.shape[0]; ++i)
      for (int64_t j = 0; j < t.type.shape[1]; ++j) {
        int64_t dst = i * sizes[1] + j;
        int64_t src = i * t.type.shape[1] + j;
        if (t.is_float())
          out.fv[size_t(dst)] = t.fv[size_t(src)];
        else
          out.iv[size_t(dst)] = t.iv[size_t(src)];
      }
    env_[op.results[0].id] = std::move(out);
  }

  void eval_for(const Operation& op) {
    int64_t lower = op.int_attr("lower");
    int64_t upper = op.int_attr("upper");
    int64_t step = op.int_attr("step", 1);
    std::vector<RtValue> iters;
    for (ValueId v : op.operands) iters.push_back(env_.at(v));
    for (int64_t iv = lower; iv < upper; iv += step) {
      std::vector<RtValue> args;
      Tensor idx = Tensor::ints({}, elem_i32(), {iv});
      args.push_back(std::move(idx));
      for (RtValue& v : iters) args.push_back(v);
      std::vector<RtValue> yielded = eval_region(op.regions[0], args);
      if (yielded.size() != iters.size())
        throw SimError("for: yield arity mismatch");
      iters = std::move(yielded);
    }
    for (size_t i = 0; i < op.results.size(); ++i)
      env_[op.results[i].id] = iters[i];
  }

  // ---- cim.similarity (dense semantics) ------------------------------------

  void eval_similarity(const Operation& op) {
    const Tensor& stored = tensor_of(op.operands[0]);
    const Tensor& query = tensor_of(op.operands[1]);
    std::string metric = op.str_attr("metric");
    int64_t k = op.int_attr("k");
    bool largest = op.int_attr("largest", 1) != 0;
    int64_t row_base = op.int_attr("row_base");
    std::string match = op.str_attr("match", "best");
    int64_t threshold = op.int_attr("threshold");
    if (metric == "cosine" && k > 0)
      throw SimError("cosine similarity supports scores mode (k=0) only");

    OracleResult r = dense_oracle(stored, query, metric, k, largest, match, threshold);
    if (k == 0) {
      // scores carry implicit global indices row_base..row_base+N-1
      env_[op.results[0].id] = reshape_to(std::move(r.values), op.results[0].type);
      return;
    }
    // dense_oracle indexes rows from 0; shift to the global base
    for (auto& v : r.indices.iv)
      if (v >= 0) v += row_base;
    env_[op.results[0].id] = reshape_to(std::move(r.values), op.results[0].type);
    env_[op.results[1].id] = reshape_to(std::move(r.indices), op.results[1].type);
  }

  // ---- cim.merge_partial ----------------------------------------------------

  void eval_merge(const Operation& op) {
    std::string kind = op.str_attr("kind");
    host_merges_++;
    TraceEvent te;
    te.step = -1;
    te.level = "host";
    te.handle = "-";
    te.op = "merge";
    events_.push_back({te, -1, false});

    if (kind == "sum-cols") {
      const Tensor& a = tensor_of(op.operands[0]);
      const Tensor& b = tensor_of(op.operands[1]);
      Tensor out = Tensor::zeros(a.type);
      for (int64_t i = 0; i < a.numel(); ++i) {
        if (a.is_float())
          out.fv[size_t(i)] = a.fv[size_t(i)] + b.fv[size_t(i)];
        else
          out.iv[size_t(i)] = a.iv[size_t(i)] + b.iv[size_t(i)];
      }
      env_[op.results[0].id] = reshape_to(std::move(out), op.results[0].type);
      return;
    }
    if (kind == "concat") {
      const Tensor& a = tensor_of(op.operands[0]);
      const Tensor& b = tensor_of(op.operands[1]);
      Tensor out = Tensor::zeros(TensorType{{1, a.numel() + b.numel()}, a.type.elem});
      for (int64_t i = 0; i < a.numel(); ++i) {
        if (a.is_float()) out.fv[size_t(i)] = a.fv[size_t(i)];
        else out.iv[size_t(i)] = a.iv[size_t(i)];
      }
      for (int64_t i = 0; i < b.numel(); ++i) {
        if (b.is_float()) out.fv[size_t(a.numel() + i)] = b.fv[size_t(i)];
        else out.iv[size_t(a.numel() + i)] = b.iv[size_t(i)];
      }
      env_[op.results[0].id] = reshape_to(std::move(out), op.results[0].type);
      return;
    }
    if (kind != "topk-min" && kind != "topk-max")
      throw SimError("merge_partial: unknown kind " + kind);

    bool min_kind = kind == "topk-min";
    int64_t k = op.int_attr("k");
    std::string match = op.str_attr("match", "best");
    int64_t threshold = op.int_attr("threshold");
    std::string post = op.str_attr("post", "none");
    ScoredList cand;
    if (op.operands.size() == 1) {
      const Tensor& scores = tensor_of(op.operands[0]);
      int64_t row_base = op.int_attr("row_base");
      for (int64_t i = 0; i < scores.numel(); ++i) {
        cand.values.push_back(scores.is_float() ? double(scores.fv[size_t(i)])
                                                : double(scores.iv[size_t(i)]));
        cand.indices.push_back(row_base + i);
      }
    } else {
      auto append = [&](const Tensor& v, const Tensor& ix) {
        for (int64_t i = 0; i < v.numel(); ++i) {
          cand.values.push_back(v.is_float() ? double(v.fv[size_t(i)])
                                             : double(v.iv[size_t(i)]));
          cand.indices.push_back(ix.iv[size_t(i)]);
        }
      };
      append(tensor_of(op.operands[0]), tensor_of(op.operands[1]));
      append(tensor_of(op.operands[2]), tensor_of(op.operands[3]));
    }
    int64_t want = op.results[0].type.tensor.numel();
    ScoredList sel = select_topk(cand, want, min_kind, match, threshold);
    (void)k;

    Tensor values = Tensor::zeros(op.results[0].type.tensor);
    Tensor indices = Tensor::zeros(op.results[1].type.tensor);
    for (int64_t i = 0; i < want; ++i) {
      double v = sel.values[size_t(i)];
      if (post == "sqrt" && sel.indices[size_t(i)] >= 0) v = double(float(std::sqrt(v)));
      if (values.is_float())
        values.fv[size_t(i)] = float(v);
      else
        values.iv[size_t(i)] = int64_t(v);
      indices.iv[size_t(i)] = sel.indices[size_t(i)];
    }
    env_[op.results[0].id] = std::move(values);
    env_[op.results[1].id] = std::move(indices);
  }

  // ---- cam ops --------------------------------------------------------------

  void eval_alloc(const Operation& op) {
    HandleInfo info;
    int64_t uid = next_uid_++;
    if (op.opname == "alloc_bank") {
      info.kind = HandleKind::Bank;
      info.rows = op.int_attr("rows");
      info.cols = op.int_attr("cols");
      info.device = op.str_attr("device", "tcam");
      info.name = "b" + std::to_string(op.has_attr("bank")
                                           ? op.int_attr("bank")
                                           : level_counters_[HandleKind::Bank]++);
    } else {
      const HandleRt* parent = std::get_if<HandleRt>(&env_.at(op.operands[0]));
      if (!parent) throw SimError("alloc: parent handle missing");
      const HandleInfo& pi = handles_.at(parent->uid);
      info.parent = parent->uid;
      info.rows = pi.rows;
      info.cols = pi.cols;
      info.device = pi.device;
      if (op.opname == "alloc_mat") {
        info.kind = HandleKind::Mat;
        info.name = pi.name + ".m" +
                    std::to_string(op.has_attr("mat") ? op.int_attr("mat")
                                                      : level_counters_[HandleKind::Mat]++);
      } else if (op.opname == "alloc_array") {
        info.kind = HandleKind::Array;
        info.name = pi.name + ".a" +
                    std::to_string(op.has_attr("array")
                                       ? op.int_attr("array")
                                       : level_counters_[HandleKind::Array]++);
      } else {
        info.kind = HandleKind::Subarray;
        info.name = pi.name + ".s" +
                    std::to_string(op.has_attr("subarray")
                                       ? op.int_attr("subarray")
                                       : level_counters_[HandleKind::Subarray]++);
        SubarrayState st;
        st.rows = info.rows;
        st.cols = info.cols;
        st.device = info.device;
        st.name = info.name;
        st.cells.assign(size_t(st.rows * st.cols), CamCell{});
        subarrays_[uid] = std::move(st);
      }
    }
    handles_[uid] = info;
    env_[op.results[0].id] = HandleRt{info.kind, uid};
  }

  int64_t event_step(const Operation& op) {
    if (op.has_attr("step")) {
      saw_step_attr_ = true;
      return op.int_attr("step");
    }
    if (saw_step_attr_)
      throw SimError("schedule attribute missing on " + op.full_name());
    return auto_step_++;
  }

  double peripheral_energy() const {
    return tech_.peripheral_subarray_pj + tech_.peripheral_array_pj +
           tech_.peripheral_mat_pj + tech_.peripheral_bank_pj;
  }

  void eval_write(const Operation& op) {
    const HandleRt* h = std::get_if<HandleRt>(&env_.at(op.operands[0]));
    if (!h || h->kind != HandleKind::Subarray)
      throw SimError("write_value: not a subarray handle");
    SubarrayState& s = subarrays_.at(h->uid);
    const Tensor& tile = tensor_of(op.operands[1]);
    if (tile.is_float()) throw SimError("cam cells store integers");
    int64_t ro = op.int_attr("row_offset");
    auto shape = tile.type.shape;
    if (shape.size() != 2 || ro < 0 || ro + shape[0] > s.rows || shape[1] > s.cols)
      throw SimError("write tile does not fit subarray");
    if (s.device == "tcam" && !tile.type.elem.is_i1())
      throw SimError("tcam stores binary data");
    if (tile.type.elem.bits > 1) s.multibit = true;
    for (int64_t r = 0; r < shape[0]; ++r)
      for (int64_t c = 0; c < shape[1]; ++c) {
        CamCell& cell = s.at(ro + r, c);
        cell.written = true;
        cell.dont_care = false;
        cell.lo = cell.hi = tile.iv[size_t(r * shape[1] + c)];
      }
    written_subarrays_.insert(h->uid);

    TraceEvent te;
    te.step = event_step(op);
    te.level = "subarray";
    te.handle = s.name;
    te.op = "write";
    te.rows_active = shape[0];
    te.latency_ns = tech_.write_latency_ns;
    te.energy_pj = double(shape[0] * shape[1]) * tech_.write_energy_pj_per_cell +
                   peripheral_energy();
    te.wave = op.int_attr("wave");
    te.slot = op.int_attr("slot");
    events_.push_back({te, h->uid, false});
  }

  void eval_search(const Operation& op) {
    const HandleRt* h = std::get_if<HandleRt>(&env_.at(op.operands[0]));
    if (!h || h->kind != HandleKind::Subarray)
      throw SimError("search: not a subarray handle");
    SubarrayState& s = subarrays_.at(h->uid);
    const Tensor& q = tensor_of(op.operands[1]);
    if (q.is_float()) throw SimError("cam queries are integers");
    std::vector<int64_t> query(q.iv.begin(), q.iv.end());
    std::string match = op.str_attr("match");
    std::string metric = op.str_attr("metric");
    int64_t threshold = op.int_attr("threshold");
    int64_t ro = op.int_attr("row_offset");
    int64_t ra = op.int_attr("rows_active");

    MatchesRt mr;
    mr.res = search_subarray(s, query, match, metric, threshold, ro, ra);
    mr.subarray_uid = h->uid;
    mr.match = match;
    env_[op.results[0].id] = std::move(mr);

    TraceEvent te;
    te.step = event_step(op);
    te.level = "subarray";
    te.handle = s.name;
    te.op = "search";
    te.rows_active = ra;
    // Pre-mapping stages carry logical devices sized to tiles, which can be
    // narrower than the anchored range; clamp for costing purposes.
    te.latency_ns =
        search_latency(tech_, s.rows, std::clamp<int64_t>(s.cols, 16, 256));
    double cell_scale = s.multibit ? tech_.ml_voltage_scale : 1.0;
    te.energy_pj = double(ra * s.cols) * tech_.search_energy_pj_per_cell * cell_scale +
                   peripheral_energy();
    te.wave = op.int_attr("wave");
    te.slot = op.int_attr("slot");
    events_.push_back({te, h->uid, true});
  }

  void eval_read(const Operation& op) {
    const MatchesRt* m = std::get_if<MatchesRt>(&env_.at(op.operands[0]));
    if (!m) throw SimError("read_value: operand is not a match result");
    int64_t k = op.int_attr("k");
    int64_t scale = op.int_attr("scale", 1);
    int64_t offset = op.int_attr("offset", 0);
    int64_t row_base = op.int_attr("row_base");
    std::string post = op.str_attr("post", "none");

    if (k == 0) {
      // scores for all active rows in row order
      Tensor out = Tensor::zeros(TensorType{{1, int64_t(m->res.rows.size())}, elem_i32()});
      for (size_t i = 0; i < m->res.rows.size(); ++i)
        out.iv[i] = scale * m->res.rows[i].distance + offset;
      env_[op.results[0].id] = reshape_to(std::move(out), op.results[0].type);
      return;
    }

    ScoredList cand;
    for (const MatchRow& row : m->res.rows) {
      if (m->match != "best" && !row.flag) continue;
      cand.values.push_back(double(row.distance));
      cand.indices.push_back(row_base + row.rel);
    }
    // Selection is always by minimal distance (ties to the lowest row); the
    // affine conversion maps distances into the similarity value domain.
    ScoredList sel = select_topk(cand, k, true, "best", 0);
    Tensor values = Tensor::zeros(TensorType{{1, k}, elem_i32()});
    Tensor indices = Tensor::zeros(TensorType{{1, k}, elem_i32()});
    std::vector<float> fvalues(size_t(k), 0.0f);
    bool as_float = post == "sqrt";
    for (int64_t i = 0; i < k; ++i) {
      int64_t idx = sel.indices[size_t(i)];
      indices.iv[size_t(i)] = idx;
      if (idx < 0) continue;
      int64_t v = scale * int64_t(sel.values[size_t(i)]) + offset;
      if (as_float)
        fvalues[size_t(i)] = float(std::sqrt(double(v)));
      else
        values.iv[size_t(i)] = v;
    }
    if (as_float) {
      Tensor fout = Tensor::floats({1, k}, std::move(fvalues));
      env_[op.results[0].id] = reshape_to(std::move(fout), op.results[0].type);
    } else {
      env_[op.results[0].id] = reshape_to(std::move(values), op.results[0].type);
    }
    env_[op.results[1].id] = reshape_to(std::move(indices), op.results[1].type);
  }

  // ---- metrics finalization --------------------------------------------------

  void finalize(Metrics& m) {
    // Timeline: group scheduled events by step; a step's latency is the
    // longest event in it, sequential steps add up.
    std::map<int64_t, std::pair<double, double>> steps;  // step -> (lat, energy)
    std::map<int64_t, bool> step_is_search;
    for (const Event& e : events_) {
      if (e.t.step < 0) continue;  // host events carry no cost
      auto& s = steps[e.t.step];
      s.first = std::max(s.first, e.t.latency_ns);
      s.second += e.t.energy_pj;
      if (e.is_search) step_is_search[e.t.step] = true;
      else step_is_search.emplace(e.t.step, false);
    }
    for (const auto& [step, le] : steps) {
      m.total_latency_ns += le.first;
      if (le.first > 0)
        m.peak_power_w = std::max(m.peak_power_w, le.second / le.first * 1e-3);
      if (step_is_search[step]) m.search_steps++;
      else m.write_steps++;
    }
    // Canonical energy fold: order by (handle, wave, slot, op) so the total
    // is identical across schedules of the same event multiset.
    std::vector<const Event*> order;
    for (const Event& e : events_)
      if (e.t.step >= 0) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const Event* a, const Event* b) {
      if (a->t.handle != b->t.handle) return a->t.handle < b->t.handle;
      if (a->t.wave != b->t.wave) return a->t.wave < b->t.wave;
      if (a->t.slot != b->t.slot) return a->t.slot < b->t.slot;
      if (a->t.op != b->t.op) return a->t.op < b->t.op;
      return a->t.step < b->t.step;
    });
    for (const Event* e : order) m.total_energy_pj += e->t.energy_pj;
    if (m.total_latency_ns > 0)
      m.avg_power_w = m.total_energy_pj / m.total_latency_ns * 1e-3;

    m.subarrays_used = int64_t(written_subarrays_.size());
    std::set<int64_t> banks;
    for (int64_t uid : written_subarrays_) {
      int64_t cur = uid;
      while (handles_.count(cur) && handles_.at(cur).parent >= 0)
        cur = handles_.at(cur).parent;
      banks.insert(cur);
    }
    m.banks_used = int64_t(banks.size());
    m.host_merges = host_merges_;
    for (const Event& e : events_) m.trace.push_back(e.t);
    std::sort(m.trace.begin(), m.trace.end(), [](const TraceEvent& a, const TraceEvent& b) {
      if (a.step != b.step) return a.step < b.step;
      if (a.handle != b.handle) return a.handle < b.handle;
      return a.op < b.op;
    });
  }
};

// Convenience entry point. The ArchSpec parameter keeps call sites uniform
// with the rest of the toolchain; the interpreter itself reads geometry from
// the allocation ops, so it can run pre-mapping stages too.
inline ExecResult execute(const ProgramModule& m, const ArchSpec* arch,
                          const TechParams& tech,
                          const std::map<std::string, Tensor>& inputs,
                          const ExecOptions& opts = {}) {
  (void)arch;
  Interpreter interp(tech);
  return interp.run(m, inputs, opts);
}

}  // namespace camforge
