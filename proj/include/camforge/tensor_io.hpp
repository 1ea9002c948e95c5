#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "camforge/sim.hpp"

// Tensor data files. Binary layout: a 16-byte fixed header
//   u32 magic "CAMT" (0x544d4143 little-endian)
//   u32 dtype (integer bit width 1..32, or 100 for f32)
//   u32 rank
//   u32 reserved (0)
// followed by u64 extents[rank], then the payload row-major: int32 per
// element for integer types, float for f32. A text loader reads
//   <elem> <dims>          e.g.  i1 10x8192
//   v v v ...
// for small hand-written inputs.

namespace camforge {

constexpr uint32_t kTensorMagic = 0x544d4143u;  // "CAMT"

inline void save_tensor_binary(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SimError("cannot open for write: " + path);
  uint32_t header[4] = {kTensorMagic,
                        t.is_float() ? 100u : uint32_t(t.type.elem.bits),
                        uint32_t(t.type.rank()), 0u};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (int64_t e : t.type.shape) {
    uint64_t v = uint64_t(e);
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  if (t.is_float()) {
    os.write(reinterpret_cast<const char*>(t.fv.data()),
             std::streamsize(t.fv.size() * sizeof(float)));
  } else {
    for (int64_t v : t.iv) {
      int32_t x = int32_t(v);
      os.write(reinterpret_cast<const char*>(&x), sizeof(x));
    }
  }
  if (!os) throw SimError("write failed: " + path);
}

inline void save_tensor_text(const std::string& path, const Tensor& t) {
  std::ofstream os(path);
  if (!os) throw SimError("cannot open for write: " + path);
  os << t.type.elem.str() << " ";
  for (size_t i = 0; i < t.type.shape.size(); ++i) {
    if (i) os << "x";
    os << t.type.shape[i];
  }
  os << "\n";
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (i) os << (i % 16 == 0 ? "\n" : " ");
    if (t.is_float())
      os << detail::real_str(t.fv[size_t(i)]);
    else
      os << t.iv[size_t(i)];
  }
  os << "\n";
}

inline Tensor parse_tensor_text(const std::string& text) {
  std::istringstream is(text);
  std::string elem, dims;
  if (!(is >> elem >> dims)) throw SimError("tensor text: bad header line");
  ElemType et;
  if (elem == "f32") {
    et = elem_f32();
  } else if (elem.size() > 1 && elem[0] == 'i') {
    et = elem_i(std::stoi(elem.substr(1)));
  } else {
    throw SimError("tensor text: bad element type '" + elem + "'");
  }
  std::vector<int64_t> shape;
  size_t pos = 0;
  while (pos < dims.size()) {
    size_t x = dims.find('x', pos);
    std::string part = dims.substr(pos, x == std::string::npos ? x : x - pos);
    if (!part.empty()) shape.push_back(std::stoll(part));
    if (x == std::string::npos) break;
    pos = x + 1;
  }
  TensorType ty{shape, et};
  if (et.kind == ElemKind::Float) {
    std::vector<float> data;
    double v;
    while (is >> v) data.push_back(float(v));
    if (int64_t(data.size()) != ty.numel())
      throw SimError("tensor text: expected " + std::to_string(ty.numel()) +
                     " values, got " + std::to_string(data.size()));
    return Tensor::floats(shape, std::move(data));
  }
  std::vector<int64_t> data;
  int64_t v;
  while (is >> v) data.push_back(v);
  if (int64_t(data.size()) != ty.numel())
    throw SimError("tensor text: expected " + std::to_string(ty.numel()) +
                   " values, got " + std::to_string(data.size()));
  return Tensor::ints(shape, et, std::move(data));
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SimError("file not found: " + path);
  uint32_t magic = 0;
  is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  if (!is || magic != kTensorMagic) {
    // text fallback
    std::ifstream ts(path);
    std::ostringstream os;
    os << ts.rdbuf();
    return parse_tensor_text(os.str());
  }
  uint32_t dtype = 0, rank = 0, reserved = 0;
  is.read(reinterpret_cast<char*>(&dtype), sizeof(dtype));
  is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  is.read(reinterpret_cast<char*>(&reserved), sizeof(reserved));
  if (!is || rank > 8) throw SimError("tensor file: bad header in " + path);
  std::vector<int64_t> shape;
  for (uint32_t i = 0; i < rank; ++i) {
    uint64_t e = 0;
    is.read(reinterpret_cast<char*>(&e), sizeof(e));
    shape.push_back(int64_t(e));
  }
  TensorType ty{shape, dtype == 100 ? elem_f32() : elem_i(int(dtype))};
  if (dtype == 100) {
    std::vector<float> data(static_cast<size_t>(ty.numel()), 0.0f);
    is.read(reinterpret_cast<char*>(data.data()),
            std::streamsize(data.size() * sizeof(float)));
    if (!is) throw SimError("tensor file: truncated payload in " + path);
    return Tensor::floats(shape, std::move(data));
  }
  if (dtype < 1 || dtype > 32) throw SimError("tensor file: bad dtype in " + path);
  std::vector<int64_t> data(static_cast<size_t>(ty.numel()), 0);
  for (auto& v : data) {
    int32_t x = 0;
    is.read(reinterpret_cast<char*>(&x), sizeof(x));
    v = x;
  }
  if (!is) throw SimError("tensor file: truncated payload in " + path);
  return Tensor::ints(shape, ty.elem, std::move(data));
}

}  // namespace camforge
