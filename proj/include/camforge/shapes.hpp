#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "camforge/ir.hpp"

// Shape/type inference rules for the tensor dialect. Shared by the kernel
// frontend (to annotate ops as it builds them) and the verifier (to check
// that annotations are a fixpoint of re-inference).

namespace camforge {

enum class TensorOpKind { Transpose, Matmul, Sub, Div, Norm, Topk };

inline const char* tensor_op_name(TensorOpKind k) {
  switch (k) {
    case TensorOpKind::Transpose: return "transpose";
    case TensorOpKind::Matmul: return "matmul";
    case TensorOpKind::Sub: return "sub";
    case TensorOpKind::Div: return "div";
    case TensorOpKind::Norm: return "norm";
    case TensorOpKind::Topk: return "topk";
  }
  return "?";
}

inline std::optional<TensorOpKind> tensor_op_from_name(const std::string& s) {
  if (s == "transpose") return TensorOpKind::Transpose;
  if (s == "matmul") return TensorOpKind::Matmul;
  if (s == "sub") return TensorOpKind::Sub;
  if (s == "div") return TensorOpKind::Div;
  if (s == "norm") return TensorOpKind::Norm;
  if (s == "topk") return TensorOpKind::Topk;
  return std::nullopt;
}

// Integer arithmetic widens to i32; anything touching floats becomes f32.
inline ElemType arith_elem(const std::vector<TensorType>& operands) {
  for (const auto& t : operands)
    if (t.elem.kind == ElemKind::Float) return elem_f32();
  return elem_i32();
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Elementwise shapes: equal, or a 1xD row broadcast against NxD (either
// operand side). The only broadcast form the similarity kernels need.
inline std::vector<int64_t> broadcast_shape(const TensorType& a, const TensorType& b) {
  if (a.shape == b.shape) return a.shape;
  auto is_row = [](const TensorType& t) { return t.rank() == 2 && t.shape[0] == 1; };
  if (a.rank() == 2 && b.rank() == 2 && a.shape[1] == b.shape[1]) {
    if (is_row(a)) return b.shape;
    if (is_row(b)) return a.shape;
  }
  throw CompileError("shape mismatch: " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape) + " (only 1xD row broadcast supported)");
}

// infer_shapes: result types for one tensor op given operand types and
// attributes. Throws CompileError on rank/extent violations.
inline std::vector<TensorType> infer_shapes(TensorOpKind kind,
                                            const std::vector<TensorType>& operands,
                                            const AttrMap& attrs = {}) {
  auto get_int = [&](const std::string& k, int64_t dflt) {
    auto it = attrs.find(k);
    if (it == attrs.end()) return dflt;
    return std::get<int64_t>(it->second);
  };
  auto need = [&](size_t n) {
    if (operands.size() != n)
      throw CompileError(std::string(tensor_op_name(kind)) + " expects " +
                         std::to_string(n) + " operands");
  };

  switch (kind) {
    case TensorOpKind::Transpose: {
      need(1);
      const auto& t = operands[0];
      if (t.rank() != 2) throw CompileError("transpose expects a rank-2 operand");
      return {TensorType{{t.shape[1], t.shape[0]}, t.elem}};
    }
    case TensorOpKind::Matmul: {
      need(2);
      const auto& a = operands[0];
      const auto& b = operands[1];
      if (a.rank() != 2 || b.rank() != 2)
        throw CompileError("matmul expects rank-2 operands");
      if (a.shape[1] != b.shape[0])
        throw CompileError("matmul inner dims differ: " + shape_str(a.shape) +
                           " vs " + shape_str(b.shape));
      return {TensorType{{a.shape[0], b.shape[1]}, arith_elem(operands)}};
    }
    case TensorOpKind::Sub: {
      need(2);
      return {TensorType{broadcast_shape(operands[0], operands[1]),
                         arith_elem(operands)}};
    }
    case TensorOpKind::Div: {
      // div(a, b): elementwise a/b with row broadcast, or the ternary cosine
      // form div(x, n1, n2) = x / (n1*n2) with x: 1xN and norms [N], [1].
      if (operands.size() == 2)
        return {TensorType{broadcast_shape(operands[0], operands[1]), elem_f32()}};
      if (operands.size() == 3) {
        const auto& x = operands[0];
        if (x.rank() != 2 || x.shape[0] != 1)
          throw CompileError("ternary div expects a 1xN first operand");
        int64_t n = x.shape[1];
        auto ok = [&](const TensorType& t) {
          return t.rank() == 1 && (t.shape[0] == n || t.shape[0] == 1);
        };
        if (!ok(operands[1]) || !ok(operands[2]))
          throw CompileError("ternary div expects norm vectors of extent " +
                             std::to_string(n) + " or 1");
        return {TensorType{x.shape, elem_f32()}};
      }
      throw CompileError("div expects 2 or 3 operands");
    }
    case TensorOpKind::Norm: {
      need(1);
      const auto& t = operands[0];
      int64_t p = get_int("p", 2);
      int64_t dim = get_int("dim", t.rank() - 1);
      if (p != 1 && p != 2) throw CompileError("norm: p must be 1 or 2");
      if (dim < 0 || dim >= t.rank())
        throw CompileError("norm: dim " + std::to_string(dim) + " out of range");
      std::vector<int64_t> shape = t.shape;
      shape.erase(shape.begin() + dim);
      return {TensorType{shape, elem_f32()}};
    }
    case TensorOpKind::Topk: {
      need(1);
      const auto& t = operands[0];
      if (t.rank() < 1) throw CompileError("topk expects rank >= 1");
      int64_t dim = get_int("dim", t.rank() - 1);
      int64_t k = get_int("k", 1);
      if (dim < 0 || dim >= t.rank())
        throw CompileError("topk: dim " + std::to_string(dim) + " out of range");
      if (k < 1 || k > t.shape[dim])
        throw CompileError("topk: k=" + std::to_string(k) + " out of range for extent " +
                           std::to_string(t.shape[dim]));
      std::vector<int64_t> shape = t.shape;
      shape[dim] = k;
      return {TensorType{shape, t.elem}, TensorType{shape, elem_i32()}};
    }
  }
  throw CompileError("unknown tensor op");
}

}  // namespace camforge
