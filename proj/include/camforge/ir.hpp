#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// SSA-form IR carrying dialect-tagged operations through the lowering
// pipeline. Modules are plain value types: copying a ProgramModule yields an
// independent program, which is what makes passes pure module -> module
// functions.

namespace camforge {

// ---------------------------------------------------------------------------
// Diagnostics / errors

struct Diagnostic {
  std::string path;     // e.g. "@hdc/op3/region0/op1"
  std::string message;
  int line = -1;
  int col = -1;

  std::string str() const {
    std::string s;
    if (!path.empty()) s += path + ": ";
    s += message;
    if (line >= 0) {
      s += " (line " + std::to_string(line);
      if (col >= 0) s += ", col " + std::to_string(col);
      s += ")";
    }
    return s;
  }
};

// Thrown by parsers, pass pipelines and loaders on unrecoverable input
// errors. The verifier itself never throws; it returns Diagnostic lists.
class CompileError : public std::runtime_error {
public:
  explicit CompileError(std::string message, int line = -1, int col = -1)
      : std::runtime_error(format(message, line, col)),
        line_(line), col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

private:
  static std::string format(const std::string& m, int line, int col) {
    if (line < 0) return m;
    std::string s = "line " + std::to_string(line);
    if (col >= 0) s += ":" + std::to_string(col);
    return s + ": " + m;
  }
  int line_;
  int col_;
};

// ---------------------------------------------------------------------------
// Types

enum class ElemKind { Int, Float };

struct ElemType {
  ElemKind kind = ElemKind::Int;
  int bits = 32;

  bool operator==(const ElemType& o) const = default;
  bool is_i1() const { return kind == ElemKind::Int && bits == 1; }
  std::string str() const {
    return kind == ElemKind::Float ? "f" + std::to_string(bits)
                                   : "i" + std::to_string(bits);
  }
};

inline ElemType elem_i(int bits) { return ElemType{ElemKind::Int, bits}; }
inline ElemType elem_i1() { return elem_i(1); }
inline ElemType elem_i32() { return elem_i(32); }
inline ElemType elem_f32() { return ElemType{ElemKind::Float, 32}; }

// Static-shape tensor type. Rank 0 is a scalar; extents are always >= 1.
struct TensorType {
  std::vector<int64_t> shape;
  ElemType elem;

  bool operator==(const TensorType& o) const = default;
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
  }
};

enum class HandleKind { Device, Bank, Mat, Array, Subarray, Matches };

inline const char* handle_name(HandleKind k) {
  switch (k) {
    case HandleKind::Device: return "cim.device";
    case HandleKind::Bank: return "cam.bank";
    case HandleKind::Mat: return "cam.mat";
    case HandleKind::Array: return "cam.array";
    case HandleKind::Subarray: return "cam.subarray";
    case HandleKind::Matches: return "cam.matches";
  }
  return "?";
}

struct Type {
  // Exactly one of the two alternatives; tensor by default.
  bool is_tensor = true;
  TensorType tensor;
  HandleKind handle = HandleKind::Device;

  bool operator==(const Type& o) const {
    if (is_tensor != o.is_tensor) return false;
    return is_tensor ? tensor == o.tensor : handle == o.handle;
  }
  bool is_handle(HandleKind k) const { return !is_tensor && handle == k; }
};

inline Type tensor_type(std::vector<int64_t> shape, ElemType elem) {
  Type t;
  t.is_tensor = true;
  t.tensor = TensorType{std::move(shape), elem};
  return t;
}

inline Type handle_type(HandleKind k) {
  Type t;
  t.is_tensor = false;
  t.handle = k;
  return t;
}

// ---------------------------------------------------------------------------
// Attributes: int | real | string | int-list

using Attr = std::variant<int64_t, double, std::string, std::vector<int64_t>>;
using AttrMap = std::map<std::string, Attr>;  // ordered for deterministic print

enum class AttrKind { Int, Real, String, IntList };

inline AttrKind attr_kind(const Attr& a) {
  return static_cast<AttrKind>(a.index());
}

// ---------------------------------------------------------------------------
// Values, operations, regions, functions, modules

using ValueId = int32_t;
constexpr ValueId kInvalidValue = -1;

struct Value {
  ValueId id = kInvalidValue;
  Type type;
};

struct Operation;

// Single-block region. Block arguments model cim.execute captures and
// plumb.for induction/iteration variables.
struct Region {
  std::vector<Value> args;
  std::vector<Operation> ops;
};

struct Operation {
  std::string dialect;
  std::string opname;
  std::vector<ValueId> operands;
  std::vector<Value> results;
  AttrMap attrs;
  std::vector<Region> regions;

  std::string full_name() const { return dialect + "." + opname; }

  bool has_attr(const std::string& k) const { return attrs.count(k) > 0; }
  int64_t int_attr(const std::string& k, int64_t dflt = 0) const {
    auto it = attrs.find(k);
    if (it == attrs.end()) return dflt;
    if (auto* v = std::get_if<int64_t>(&it->second)) return *v;
    return dflt;
  }
  double real_attr(const std::string& k, double dflt = 0.0) const {
    auto it = attrs.find(k);
    if (it == attrs.end()) return dflt;
    if (auto* v = std::get_if<double>(&it->second)) return *v;
    if (auto* v = std::get_if<int64_t>(&it->second)) return double(*v);
    return dflt;
  }
  std::string str_attr(const std::string& k, const std::string& dflt = "") const {
    auto it = attrs.find(k);
    if (it == attrs.end()) return dflt;
    if (auto* v = std::get_if<std::string>(&it->second)) return *v;
    return dflt;
  }
  std::vector<int64_t> list_attr(const std::string& k) const {
    auto it = attrs.find(k);
    if (it == attrs.end()) return {};
    if (auto* v = std::get_if<std::vector<int64_t>>(&it->second)) return *v;
    return {};
  }
};

struct FunctionDef {
  std::string name;
  std::vector<Value> args;            // also the body region's inputs
  std::vector<std::string> arg_names; // source-level names; empty -> arg0...
  std::vector<Type> result_types;
  Region body;
  ValueId next_value = 0;             // id allocator for this function

  Value new_value(Type type) {
    Value v{next_value++, std::move(type)};
    return v;
  }

  std::string arg_name(size_t i) const {
    if (i < arg_names.size() && !arg_names[i].empty()) return arg_names[i];
    return "arg" + std::to_string(i);
  }
};

struct ProgramModule {
  std::vector<FunctionDef> functions;

  const FunctionDef* find_function(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Small construction helpers used by passes and tests.

class OpBuilder {
public:
  OpBuilder(FunctionDef& fn, Region& region) : fn_(fn), region_(region) {}

  // Appends an op with freshly allocated result values of the given types.
  // Returns the result values by value: the op vector may reallocate on the
  // next create, so references into it must not be retained.
  std::vector<Value> create(const std::string& dialect, const std::string& opname,
                            std::vector<ValueId> operands,
                            std::vector<Type> result_types, AttrMap attrs = {}) {
    Operation op;
    op.dialect = dialect;
    op.opname = opname;
    op.operands = std::move(operands);
    op.attrs = std::move(attrs);
    for (auto& t : result_types) op.results.push_back(fn_.new_value(std::move(t)));
    std::vector<Value> results = op.results;
    region_.ops.push_back(std::move(op));
    return results;
  }

  FunctionDef& fn() { return fn_; }
  Region& region() { return region_; }

private:
  FunctionDef& fn_;
  Region& region_;
};

// Walk every operation in a module (pre-order, nested regions included).
template <typename Fn>
void walk_ops(const Region& region, Fn&& fn) {
  for (const auto& op : region.ops) {
    fn(op);
    for (const auto& r : op.regions) walk_ops(r, fn);
  }
}

template <typename Fn>
void walk_ops(const ProgramModule& m, Fn&& fn) {
  for (const auto& f : m.functions) walk_ops(f.body, fn);
}

inline int64_t count_ops(const ProgramModule& m, const std::string& full_name) {
  int64_t n = 0;
  walk_ops(m, [&](const Operation& op) {
    if (op.full_name() == full_name) ++n;
  });
  return n;
}

}  // namespace camforge
