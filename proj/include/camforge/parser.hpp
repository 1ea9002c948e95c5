#pragma once

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "camforge/ir.hpp"
#include "camforge/printer.hpp"
#include "camforge/registry.hpp"

// Parser for the textual IR produced by the printer. One op per line:
//   %r0, %r1 = dialect.opname(%a, %b) {attr = value} : (T1, T2) -> (T3, T4)
// Regions follow the attribute dict as ({ ... }) blocks, functions wrap a
// single body region. Line comments start with //.

namespace camforge {

namespace lex {

enum class Tok {
  Ident, ValueName, SymbolName, Int, Real, String,
  LParen, RParen, LBrace, RBrace, LBracket, RBracket,
  Comma, Equal, Colon, Semicolon, Arrow, Caret, Bang, Dot, End
};

struct Token {
  Tok kind;
  std::string text;
  int64_t ival = 0;
  double rval = 0.0;
  int line = 1;
  int col = 1;
};

class Lexer {
public:
  explicit Lexer(const std::string& src) : src_(src) { tokenize(); }
  const std::vector<Token>& tokens() const { return tokens_; }

private:
  const std::string& src_;
  std::vector<Token> tokens_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;

  char peek(size_t off = 0) const {
    return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
  }
  char advance() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void push(Tok kind, std::string text, int line, int col) {
    Token t;
    t.kind = kind;
    t.text = std::move(text);
    t.line = line;
    t.col = col;
    tokens_.push_back(std::move(t));
  }

  void tokenize() {
    while (pos_ < src_.size()) {
      char c = peek();
      int line = line_, col = col_;
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
        continue;
      }
      if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && peek() != '\n') advance();
        continue;
      }
      if (c == '-' && peek(1) == '>') {
        advance();
        advance();
        push(Tok::Arrow, "->", line, col);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '-' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
        lex_number(line, col);
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string s;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')
          s += advance();
        push(Tok::Ident, s, line, col);
        continue;
      }
      if (c == '%' || c == '@') {
        bool value = c == '%';
        advance();
        std::string s;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')
          s += advance();
        if (s.empty())
          throw CompileError("expected name after sigil", line, col);
        push(value ? Tok::ValueName : Tok::SymbolName, s, line, col);
        continue;
      }
      if (c == '"') {
        advance();
        std::string s;
        while (peek() != '"') {
          if (pos_ >= src_.size())
            throw CompileError("unterminated string literal", line, col);
          char d = advance();
          if (d == '\\' && (peek() == '"' || peek() == '\\')) d = advance();
          s += d;
        }
        advance();
        push(Tok::String, s, line, col);
        continue;
      }
      advance();
      switch (c) {
        case '(': push(Tok::LParen, "(", line, col); break;
        case ')': push(Tok::RParen, ")", line, col); break;
        case '{': push(Tok::LBrace, "{", line, col); break;
        case '}': push(Tok::RBrace, "}", line, col); break;
        case '[': push(Tok::LBracket, "[", line, col); break;
        case ']': push(Tok::RBracket, "]", line, col); break;
        case ',': push(Tok::Comma, ",", line, col); break;
        case '=': push(Tok::Equal, "=", line, col); break;
        case ':': push(Tok::Colon, ":", line, col); break;
        case ';': push(Tok::Semicolon, ";", line, col); break;
        case '^': push(Tok::Caret, "^", line, col); break;
        case '!': push(Tok::Bang, "!", line, col); break;
        case '.': push(Tok::Dot, ".", line, col); break;
        default:
          throw CompileError(std::string("unexpected character '") + c + "'", line, col);
      }
    }
    push(Tok::End, "", line_, col_);
  }

  void lex_number(int line, int col) {
    std::string s;
    if (peek() == '-') s += advance();
    while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    bool real = false;
    if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
      real = true;
      s += advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    }
    if (peek() == 'e' || peek() == 'E') {
      size_t save = pos_;
      std::string ex;
      ex += advance();
      if (peek() == '+' || peek() == '-') ex += advance();
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        real = true;
        while (std::isdigit(static_cast<unsigned char>(peek()))) ex += advance();
        s += ex;
      } else {
        pos_ = save;  // not an exponent, e.g. the x in a dim list
      }
    }
    Token t;
    t.kind = real ? Tok::Real : Tok::Int;
    t.text = s;
    if (real)
      t.rval = std::stod(s);
    else
      t.ival = std::stoll(s);
    t.line = line;
    t.col = col;
    tokens_.push_back(std::move(t));
  }
};

}  // namespace lex

class Parser {
public:
  explicit Parser(const std::string& text) : lexer_(text) {}

  ProgramModule parse() {
    ProgramModule m;
    while (!at(lex::Tok::End)) {
      expect_ident("func");
      m.functions.push_back(parse_function());
    }
    auto diags = verify(m);
    if (!diags.empty()) throw CompileError(diags.front().str());
    return m;
  }

private:
  lex::Lexer lexer_;
  size_t idx_ = 0;
  FunctionDef* fn_ = nullptr;
  std::map<std::string, Value> values_;

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

  void expect_ident(const std::string& word) {
    if (!at(lex::Tok::Ident) || cur().text != word)
      fail("expected '" + word + "'");
    next();
  }

  bool accept(lex::Tok k) {
    if (at(k)) {
      next();
      return true;
    }
    return false;
  }

  Type parse_type() {
    if (accept(lex::Tok::Bang)) {
      std::string dialect = expect(lex::Tok::Ident, "handle dialect").text;
      expect(lex::Tok::Dot, ".");
      std::string name = expect(lex::Tok::Ident, "handle name").text;
      std::string full = dialect + "." + name;
      for (HandleKind k : {HandleKind::Device, HandleKind::Bank, HandleKind::Mat,
                           HandleKind::Array, HandleKind::Subarray, HandleKind::Matches})
        if (full == handle_name(k)) return handle_type(k);
      fail("unknown handle type !" + full);
    }
    std::string elem = expect(lex::Tok::Ident, "element type").text;
    ElemType et;
    if (elem == "f32") {
      et = elem_f32();
    } else if (elem.size() > 1 && elem[0] == 'i') {
      int bits = 0;
      for (size_t i = 1; i < elem.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(elem[i])))
          fail("bad element type '" + elem + "'");
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
      shape.push_back(parse_extent());
      while (at(lex::Tok::Ident)) {
        // Dims print as 10x8192; the lexer splits that into 10 and x8192.
        const std::string& s = cur().text;
        if (s[0] != 'x') break;
        size_t p = 1;
        while (p < s.size()) {
          size_t q = p;
          int64_t v = 0;
          while (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q])))
            v = v * 10 + (s[q++] - '0');
          if (q == p) fail("bad dimension list");
          shape.push_back(v);
          if (q < s.size()) {
            if (s[q] != 'x') fail("bad dimension list");
            p = q + 1;
          } else {
            p = q;
          }
        }
        next();
      }
    }
    expect(lex::Tok::RBracket, "]");
    for (int64_t e : shape)
      if (e < 1) fail("tensor extents must be >= 1");
    return tensor_type(std::move(shape), et);
  }

  int64_t parse_extent() {
    const lex::Token& t = expect(lex::Tok::Int, "integer extent");
    return t.ival;
  }

  Value define_value(const std::string& name, Type type, int line, int col) {
    if (values_.count(name))
      throw CompileError("redefinition of %" + name, line, col);
    Value v = fn_->new_value(std::move(type));
    values_[name] = v;
    return v;
  }

  FunctionDef parse_function() {
    FunctionDef fn;
    fn_ = &fn;
    values_.clear();
    fn.name = expect(lex::Tok::SymbolName, "@name").text;
    expect(lex::Tok::LParen, "(");
    if (!at(lex::Tok::RParen)) {
      do {
        const lex::Token& name = expect(lex::Tok::ValueName, "%arg");
        expect(lex::Tok::Colon, ":");
        Type t = parse_type();
        fn.args.push_back(define_value(name.text, t, name.line, name.col));
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    if (accept(lex::Tok::Arrow)) {
      expect(lex::Tok::LParen, "(");
      if (!at(lex::Tok::RParen)) {
        do {
          fn.result_types.push_back(parse_type());
        } while (accept(lex::Tok::Comma));
      }
      expect(lex::Tok::RParen, ")");
    }
    expect(lex::Tok::LBrace, "{");
    while (!at(lex::Tok::RBrace)) fn.body.ops.push_back(parse_op());
    expect(lex::Tok::RBrace, "}");
    return fn;
  }

  Operation parse_op() {
    Operation op;
    std::vector<std::pair<std::string, lex::Token>> result_names;
    if (at(lex::Tok::ValueName)) {
      do {
        const lex::Token& t = expect(lex::Tok::ValueName, "%result");
        result_names.emplace_back(t.text, t);
      } while (accept(lex::Tok::Comma));
      expect(lex::Tok::Equal, "=");
    }
    op.dialect = expect(lex::Tok::Ident, "dialect").text;
    expect(lex::Tok::Dot, ".");
    op.opname = expect(lex::Tok::Ident, "op name").text;

    expect(lex::Tok::LParen, "(");
    std::vector<lex::Token> operand_toks;
    if (!at(lex::Tok::RParen)) {
      do {
        operand_toks.push_back(expect(lex::Tok::ValueName, "%operand"));
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    for (const auto& t : operand_toks) {
      auto it = values_.find(t.text);
      if (it == values_.end())
        throw CompileError("use of undefined value %" + t.text, t.line, t.col);
      op.operands.push_back(it->second.id);
    }

    if (at(lex::Tok::LBrace)) parse_attrs(op);

    while (at(lex::Tok::LParen)) parse_region(op);

    expect(lex::Tok::Colon, ":");
    expect(lex::Tok::LParen, "(");
    std::vector<Type> operand_types;
    if (!at(lex::Tok::RParen)) {
      do {
        operand_types.push_back(parse_type());
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    if (operand_types.size() != operand_toks.size())
      fail("operand type list arity mismatch");
    for (size_t i = 0; i < operand_types.size(); ++i) {
      const Value& v = values_[operand_toks[i].text];
      if (!(v.type == operand_types[i]))
        throw CompileError("type mismatch for operand %" + operand_toks[i].text,
                           operand_toks[i].line, operand_toks[i].col);
    }
    expect(lex::Tok::Arrow, "->");
    expect(lex::Tok::LParen, "(");
    std::vector<Type> result_types;
    if (!at(lex::Tok::RParen)) {
      do {
        result_types.push_back(parse_type());
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RParen, ")");
    if (result_types.size() != result_names.size())
      fail("result type list arity mismatch");
    for (size_t i = 0; i < result_types.size(); ++i)
      op.results.push_back(define_value(result_names[i].first, result_types[i],
                                        result_names[i].second.line,
                                        result_names[i].second.col));
    return op;
  }

  void parse_attrs(Operation& op) {
    expect(lex::Tok::LBrace, "{");
    if (!at(lex::Tok::RBrace)) {
      do {
        std::string key = expect(lex::Tok::Ident, "attribute name").text;
        expect(lex::Tok::Equal, "=");
        op.attrs[key] = parse_attr_value();
      } while (accept(lex::Tok::Comma));
    }
    expect(lex::Tok::RBrace, "}");
  }

  Attr parse_attr_value() {
    if (at(lex::Tok::Int)) return next().ival;
    if (at(lex::Tok::Real)) return next().rval;
    if (at(lex::Tok::String)) return next().text;
    if (accept(lex::Tok::LBracket)) {
      std::vector<int64_t> xs;
      if (!at(lex::Tok::RBracket)) {
        do {
          xs.push_back(expect(lex::Tok::Int, "integer").ival);
        } while (accept(lex::Tok::Comma));
      }
      expect(lex::Tok::RBracket, "]");
      return xs;
    }
    fail("expected attribute value");
  }

  void parse_region(Operation& op) {
    expect(lex::Tok::LParen, "(");
    expect(lex::Tok::LBrace, "{");
    Region region;
    if (accept(lex::Tok::Caret)) {
      expect(lex::Tok::LParen, "(");
      if (!at(lex::Tok::RParen)) {
        do {
          const lex::Token& name = expect(lex::Tok::ValueName, "%arg");
          expect(lex::Tok::Colon, ":");
          Type t = parse_type();
          region.args.push_back(define_value(name.text, t, name.line, name.col));
        } while (accept(lex::Tok::Comma));
      }
      expect(lex::Tok::RParen, ")");
      expect(lex::Tok::Colon, ":");
    }
    while (!at(lex::Tok::RBrace)) region.ops.push_back(parse_op());
    expect(lex::Tok::RBrace, "}");
    expect(lex::Tok::RParen, ")");
    op.regions.push_back(std::move(region));
  }
};

inline ProgramModule parse_module(const std::string& text) {
  Parser p(text);
  return p.parse();
}

}  // namespace camforge
