#pragma once

#include <charconv>
#include <map>
#include <sstream>
#include <string>

#include "camforge/ir.hpp"

// Textual IR emission. Output is deterministic: values are renumbered
// %0, %1, ... per function in definition order (function arguments print as
// %arg0, ...), attributes print in key order, reals print in shortest
// round-trip form. Structural equality of modules is string equality of
// their printed forms.

namespace camforge {

namespace detail {

inline std::string real_str(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  // Keep reals visually distinct from ints so the parser round-trips kinds.
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
    s += ".0";
  return s;
}

inline std::string attr_str(const Attr& a) {
  switch (attr_kind(a)) {
    case AttrKind::Int:
      return std::to_string(std::get<int64_t>(a));
    case AttrKind::Real:
      return real_str(std::get<double>(a));
    case AttrKind::String: {
      std::string out = "\"";
      for (char c : std::get<std::string>(a)) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    }
    case AttrKind::IntList: {
      std::string out = "[";
      const auto& v = std::get<std::vector<int64_t>>(a);
      for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(v[i]);
      }
      return out + "]";
    }
  }
  return "?";
}

}  // namespace detail

inline std::string type_str(const Type& t) {
  if (!t.is_tensor) return std::string("!") + handle_name(t.handle);
  std::string s = t.tensor.elem.str() + "[";
  for (size_t i = 0; i < t.tensor.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.tensor.shape[i]);
  }
  return s + "]";
}

class Printer {
public:
  std::string print(const ProgramModule& m) {
    std::ostringstream os;
    for (size_t i = 0; i < m.functions.size(); ++i) {
      if (i) os << "\n";
      print_function(os, m.functions[i]);
    }
    return os.str();
  }

private:
  std::map<ValueId, std::string> names_;
  std::map<ValueId, Type> types_;
  int next_ = 0;

  std::string define(const Value& v) {
    std::string n = "%" + std::to_string(next_++);
    names_[v.id] = n;
    types_[v.id] = v.type;
    return n;
  }

  const std::string& use(ValueId id) const {
    auto it = names_.find(id);
    if (it == names_.end())
      throw CompileError("printer: use of unknown value id " + std::to_string(id));
    return it->second;
  }

  std::string operand_type(ValueId id) const {
    auto it = types_.find(id);
    if (it == types_.end())
      throw CompileError("printer: unknown type for value id " + std::to_string(id));
    return type_str(it->second);
  }

  void print_function(std::ostringstream& os, const FunctionDef& fn) {
    names_.clear();
    types_.clear();
    next_ = 0;
    os << "func @" << fn.name << "(";
    for (size_t i = 0; i < fn.args.size(); ++i) {
      if (i) os << ", ";
      std::string n = "%arg" + std::to_string(i);
      names_[fn.args[i].id] = n;
      types_[fn.args[i].id] = fn.args[i].type;
      os << n << ": " << type_str(fn.args[i].type);
    }
    os << ")";
    if (!fn.result_types.empty()) {
      os << " -> (";
      for (size_t i = 0; i < fn.result_types.size(); ++i) {
        if (i) os << ", ";
        os << type_str(fn.result_types[i]);
      }
      os << ")";
    }
    os << " {\n";
    print_region_body(os, fn.body, 1);
    os << "}\n";
  }

  void print_region_body(std::ostringstream& os, const Region& r, int indent) {
    for (const auto& op : r.ops) print_op(os, op, indent);
  }

  void print_op(std::ostringstream& os, const Operation& op, int indent) {
    std::string pad(2 * size_t(indent), ' ');

    // Operand names/types first: results must not shadow operand lookups.
    std::string opers;
    std::string oper_types;
    for (size_t i = 0; i < op.operands.size(); ++i) {
      if (i) {
        opers += ", ";
        oper_types += ", ";
      }
      opers += use(op.operands[i]);
      oper_types += operand_type(op.operands[i]);
    }

    os << pad;
    if (!op.results.empty()) {
      for (size_t i = 0; i < op.results.size(); ++i) {
        if (i) os << ", ";
        os << define(op.results[i]);
      }
      os << " = ";
    }
    os << op.dialect << "." << op.opname << "(" << opers << ")";

    if (!op.attrs.empty()) {
      os << " {";
      bool first = true;
      for (const auto& [k, v] : op.attrs) {
        if (!first) os << ", ";
        first = false;
        os << k << " = " << detail::attr_str(v);
      }
      os << "}";
    }

    for (const auto& region : op.regions) {
      os << " ({\n";
      std::string rpad(2 * size_t(indent + 1), ' ');
      if (!region.args.empty()) {
        os << rpad << "^(";
        for (size_t i = 0; i < region.args.size(); ++i) {
          if (i) os << ", ";
          os << define(region.args[i]) << ": " << type_str(region.args[i].type);
        }
        os << "):\n";
      }
      print_region_body(os, region, indent + 2);
      os << rpad << "})";
    }

    os << " : (" << oper_types << ") -> (";
    for (size_t i = 0; i < op.results.size(); ++i) {
      if (i) os << ", ";
      os << type_str(op.results[i].type);
    }
    os << ")\n";
  }
};

inline std::string print_module(const ProgramModule& m) {
  Printer p;
  return p.print(m);
}

inline bool structurally_equal(const ProgramModule& a, const ProgramModule& b) {
  return print_module(a) == print_module(b);
}

}  // namespace camforge
