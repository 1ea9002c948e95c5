#pragma once

#include <map>
#include <string>
#include <vector>

#include "camforge/ir.hpp"
#include "camforge/parser.hpp"
#include "camforge/shapes.hpp"

// Kernel DSL frontend. A .camk file holds one or more kernels over the six
// supported primitives (transpose, matmul, sub, div, norm, topk):
//
//   kernel dot_sim(hvs: i1[10x8192], query: i1[1x8192]) -> (i32[1x1], i32[1x1]) {
//     t = transpose(hvs);
//     s = matmul(query, t);
//     v, i = topk(s, k=1);
//     return v, i;
//   }
//
// Attribute arguments (k=, dim=, p=, largest=) follow positional tensor
// arguments. Shapes are inferred statically and annotated on every op.

namespace camforge {

class KernelParser {
public:
  explicit KernelParser(const std::string& text) : lexer_(text) {}

  ProgramModule parse() {
    ProgramModule m;
    while (!at(lex::Tok::End)) {
      expect_word("kernel");
      m.functions.push_back(parse_kernel_fn());
    }
    auto diags = verify(m);
    if (!diags.empty()) throw CompileError(diags.front().str());
    return m;
  }

private:
  lex::Lexer lexer_;
  size_t idx_ = 0;
  FunctionDef* fn_ = nullptr;
  std::map<std::string, Value> env_;

  const lex::Token& cur() const { return lexer_.tokens()[idx_]; }
  const lex::Token& next() { return lexer_.tokens()[idx_++]; }
  bool at(lex::Tok k) const { return cur().kind == k; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw CompileError(msg, cur().line, cur().col);
  }

  const lex::Token& expect(lex::Tok k, const char* what) {
    if (!at(k)) fail(std::string("expected ") + what);
    return next();
  }

  void expect_word(const std::string& w) {
    if (!at(lex::Tok::Ident) || cur().text != w) fail("expected '" + w + "'");
    next();
  }

  bool accept(lex::Tok k) {
    if (at(k)) {
      next();
      return true;
    }
    return false;
  }

  Type parse_tensor_type() {
    std::string elem = expect(lex::Tok::Ident, "element type").text;
    ElemType et;
    if (elem == "f32") {
      et = elem_f32();
    } else if (elem.size() > 1 && elem[0] == 'i') {
      int bits = 0;
      for (size_t i = 1; i < elem.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(elem[i]))) fail("bad element type");
        bits = bits * 10 + (elem[i] - '0');
      }
      if (bits < 1 || bits > 32) fail("integer bitwidth must be in [1, 32]");
      et = elem_i(bits);
    } else {
      fail("bad element type '" + elem + "'");
    }
    expect(lex::Tok::LBracket, "[");
    std::vector<int64_t> shape;
    if (!at(lex::Tok::RBracket)) {
      shape.push_back(expect(lex::Tok::Int, "extent").ival);
      while (at(lex::Tok::Ident) && cur().text[0] == 'x') {
        const std::string& s = next().text;
        size_t p = 1;
        while (p < s.size()) {
          size_t q = p;
          int64_t v = 0;
          while (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q])))
            v = v * 10 + (s[q++] - '0');
          if (q == p) fail("bad dimension list");
          shape.push_back(v);
          p = (q < s.size() && s[q] == 'x') ? q + 1 : q;
        }
      }
    }
    expect(lex::Tok::RBracket, "]");
    for (int64_t e : shape)
      if (e < 1) fail("tensor extents must be >= 1");
    return tensor_type(std::move(shape), et);
  }

  FunctionDef parse_kernel_fn() {
    FunctionDef fn;
    fn_ = &fn;
    env_.clear();
    fn.name = expect(lex::Tok::Ident, "kernel name").text;
    expect(lex::Tok::LParen, "(");
    if (!at(lex::Tok::RParen)) {
      do {
        const lex::Token& name = expect(lex::Tok::Ident, "parameter name");
        expect(lex::Tok::Colon, ":");
        Type t = parse_tensor_type();
        if (t.tensor.elem.kind == ElemKind::Int && t.tensor.elem.bits > 8)
          throw CompileError("stored data must be i1..i8 or f32", name.line, name.col);
        if (env_.count(name.text))
          throw CompileError("duplicate parameter '" + name.text + "'", name.line,
                             name.col);
        Value v = fn.new_value(t);
        env_[name.text] = v;
        fn.args.push_back(v);
        fn.arg_names.push_back(name.text);
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    expect(lex::Tok::Arrow, "->");
    expect(lex::Tok::LParen, "(");
    if (!at(lex::Tok::RParen)) {
      do {
        fn.result_types.push_back(parse_tensor_type());
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    expect(lex::Tok::LBrace, "{");

    while (!(at(lex::Tok::Ident) && cur().text == "return")) {
      if (at(lex::Tok::End)) fail("kernel body missing return");
      parse_statement(fn);
    }
    expect_word("return");
    Operation ret;
    ret.dialect = "plumb";
    ret.opname = "return";
    do {
      const lex::Token& name = expect(lex::Tok::Ident, "return value");
      auto it = env_.find(name.text);
      if (it == env_.end())
        throw CompileError("use of undefined name '" + name.text + "'", name.line,
                           name.col);
      ret.operands.push_back(it->second.id);
    } while (accept(lex::Tok::Comma));
    expect(lex::Tok::Semicolon, ";");
    expect(lex::Tok::RBrace, "}");

    if (ret.operands.size() != fn.result_types.size())
      throw CompileError("kernel '" + fn.name + "' returns " +
                         std::to_string(ret.operands.size()) + " values but declares " +
                         std::to_string(fn.result_types.size()));
    fn.body.ops.push_back(std::move(ret));
    return fn;
  }

  void parse_statement(FunctionDef& fn) {
    std::vector<lex::Token> names;
    names.push_back(expect(lex::Tok::Ident, "result name"));
    while (accept(lex::Tok::Comma))
      names.push_back(expect(lex::Tok::Ident, "result name"));
    expect(lex::Tok::Equal, "=");
    const lex::Token& prim = expect(lex::Tok::Ident, "primitive");
    auto kind = tensor_op_from_name(prim.text);
    if (!kind)
      throw CompileError("unknown primitive '" + prim.text + "'", prim.line, prim.col);

    expect(lex::Tok::LParen, "(");
    Operation op;
    op.dialect = "tensor";
    op.opname = prim.text;
    std::vector<TensorType> operand_types;
    if (!at(lex::Tok::RParen)) {
      do {
        if (at(lex::Tok::Ident) &&
            lexer_.tokens()[idx_ + 1].kind == lex::Tok::Equal) {
          std::string key = next().text;
          next();  // '='
          if (at(lex::Tok::Ident)) {
            const std::string& word = cur().text;
            if (word == "true")
              op.attrs[key] = int64_t{1};
            else if (word == "false")
              op.attrs[key] = int64_t{0};
            else
              fail("expected integer or true/false attribute value");
            next();
          } else {
            op.attrs[key] = expect(lex::Tok::Int, "attribute value").ival;
          }
        } else {
          const lex::Token& name = expect(lex::Tok::Ident, "argument name");
          auto it = env_.find(name.text);
          if (it == env_.end())
            throw CompileError("use of undefined name '" + name.text + "'",
                               name.line, name.col);
          op.operands.push_back(it->second.id);
          operand_types.push_back(it->second.type.tensor);
        }
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    expect(lex::Tok::Semicolon, ";");

    // Fill defaulted attributes so the printed IR is self-contained.
    if (*kind == TensorOpKind::Norm) {
      if (!op.attrs.count("p")) op.attrs["p"] = int64_t{2};
      if (!op.attrs.count("dim") && !operand_types.empty())
        op.attrs["dim"] = operand_types[0].rank() - 1;
    } else if (*kind == TensorOpKind::Topk) {
      if (!op.attrs.count("k")) op.attrs["k"] = int64_t{1};
      if (!op.attrs.count("dim") && !operand_types.empty())
        op.attrs["dim"] = operand_types[0].rank() - 1;
      if (!op.attrs.count("largest")) op.attrs["largest"] = int64_t{1};
    }

    std::vector<TensorType> results;
    try {
      results = infer_shapes(*kind, operand_types, op.attrs);
    } catch (const CompileError& e) {
      throw CompileError(std::string(e.what()) + " in kernel '" + fn.name + "'",
                         prim.line, prim.col);
    }
    if (results.size() != names.size())
      throw CompileError(prim.text + " yields " + std::to_string(results.size()) +
                             " values, statement binds " + std::to_string(names.size()),
                         prim.line, prim.col);
    for (size_t i = 0; i < results.size(); ++i) {
      Type t;
      t.tensor = results[i];
      Value v = fn.new_value(t);
      if (env_.count(names[i].text))
        throw CompileError("redefinition of '" + names[i].text + "'",
                           names[i].line, names[i].col);
      env_[names[i].text] = v;
      op.results.push_back(v);
    }
    fn.body.ops.push_back(std::move(op));
  }
};

inline ProgramModule parse_kernel(const std::string& text) {
  KernelParser p(text);
  return p.parse();
}

}  // namespace camforge
