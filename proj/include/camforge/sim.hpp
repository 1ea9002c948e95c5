#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "camforge/arch.hpp"
#include "camforge/ir.hpp"
#include "camforge/printer.hpp"

// Functional interpreter for modules at any pipeline stage (tensor, cim,
// cam, cam-mapped) with latency/energy/power accounting over the scheduled
// cam ops, plus the dense reference oracle used for validation.
//
// Arithmetic conventions: i1 tensors are bipolar-valued in arithmetic
// (bit 0 -> -1, bit 1 -> +1), which is what makes dot-similarity ranking
// identical to Hamming best-match on CAM. Multi-bit integers are plain
// unsigned values, norms and divisions are f32.

namespace camforge {

class SimError : public std::runtime_error {
public:
  explicit SimError(const std::string& m) : std::runtime_error(m) {}
};

// ---------------------------------------------------------------------------
// Runtime tensor

struct Tensor {
  TensorType type;
  std::vector<int64_t> iv;
  std::vector<float> fv;

  bool is_float() const { return type.elem.kind == ElemKind::Float; }
  int64_t numel() const { return type.numel(); }

  static Tensor ints(std::vector<int64_t> shape, ElemType elem,
                     std::vector<int64_t> data) {
    Tensor t;
    t.type = TensorType{std::move(shape), elem};
    t.iv = std::move(data);
    if (static_cast<int64_t>(t.iv.size()) != t.numel())
      throw SimError("tensor data size does not match shape");
    return t;
  }
  static Tensor floats(std::vector<int64_t> shape, std::vector<float> data) {
    Tensor t;
    t.type = TensorType{std::move(shape), elem_f32()};
    t.fv = std::move(data);
    if (static_cast<int64_t>(t.fv.size()) != t.numel())
      throw SimError("tensor data size does not match shape");
    return t;
  }
  static Tensor zeros(const TensorType& ty) {
    Tensor t;
    t.type = ty;
    if (ty.elem.kind == ElemKind::Float)
      t.fv.assign(size_t(ty.numel()), 0.0f);
    else
      t.iv.assign(size_t(ty.numel()), 0);
    return t;
  }

  // Arithmetic value at flat index: bipolar for i1, plain otherwise.
  int64_t arith(int64_t i) const {
    int64_t v = iv[size_t(i)];
    return type.elem.is_i1() ? 2 * v - 1 : v;
  }
  double fval(int64_t i) const {
    return is_float() ? double(fv[size_t(i)]) : double(arith(i));
  }
  // Stored representation without the bipolar mapping.
  double fval_raw(int64_t i) const {
    return is_float() ? double(fv[size_t(i)]) : double(iv[size_t(i)]);
  }

  bool operator==(const Tensor& o) const {
    return type == o.type && iv == o.iv && fv == o.fv;
  }
};

// ---------------------------------------------------------------------------
// CAM cell state

struct CamCell {
  bool written = false;
  bool dont_care = false;  // TCAM X
  int64_t lo = 0;          // MCAM value (lo == hi) or ACAM range
  int64_t hi = 0;
};

struct SubarrayState {
  int64_t rows = 0;
  int64_t cols = 0;
  std::string device = "tcam";
  std::string name;  // b0.m0.a0.s0 for traces
  bool multibit = false;
  std::vector<CamCell> cells;

  CamCell& at(int64_t r, int64_t c) { return cells[size_t(r * cols + c)]; }
  const CamCell& at(int64_t r, int64_t c) const { return cells[size_t(r * cols + c)]; }
};

struct MatchRow {
  int64_t rel = 0;       // row index relative to the active range
  int64_t distance = 0;
  bool flag = false;     // per the search's match type
};

struct MatchResultRt {
  std::vector<MatchRow> rows;
  int64_t query_width = 0;
};

// Distance of one active row against the query per device semantics. Only
// written cells participate; unwritten cells are don't-care.
inline int64_t row_distance(const SubarrayState& s, int64_t row,
                            const std::vector<int64_t>& query,
                            const std::string& metric) {
  int64_t d = 0;
  bool any_written = false;
  for (int64_t c = 0; c < s.cols && c < static_cast<int64_t>(query.size()); ++c) {
    const CamCell& cell = s.at(row, c);
    if (!cell.written || cell.dont_care) {
      any_written = any_written || cell.written;
      continue;
    }
    any_written = true;
    int64_t q = query[size_t(c)];
    if (s.device == "acam") {
      if (q < cell.lo || q > cell.hi) ++d;
    } else if (s.device == "mcam") {
      int64_t diff = cell.lo - q;
      d += metric == "euclidean" ? diff * diff : (diff < 0 ? -diff : diff);
    } else {  // tcam: hamming over non-X cells
      if (cell.lo != q) ++d;
    }
  }
  if (!any_written) throw SimError("search on unwritten subarray row");
  return d;
}

inline MatchResultRt search_subarray(const SubarrayState& s,
                                     const std::vector<int64_t>& query,
                                     const std::string& match,
                                     const std::string& metric,
                                     int64_t threshold, int64_t row_offset,
                                     int64_t rows_active) {
  if (static_cast<int64_t>(query.size()) != s.cols)
    throw SimError("query width mismatch: " + std::to_string(query.size()) +
                   " vs subarray cols " + std::to_string(s.cols));
  if (row_offset < 0 || row_offset + rows_active > s.rows)
    throw SimError("active row range exceeds subarray rows");
  MatchResultRt out;
  out.query_width = s.cols;
  int64_t best = 0;
  std::vector<int64_t> dist(static_cast<size_t>(rows_active), 0);
  for (int64_t r = 0; r < rows_active; ++r) {
    dist[size_t(r)] = row_distance(s, row_offset + r, query, metric);
    if (r == 0 || dist[size_t(r)] < best) best = dist[size_t(r)];
  }
  for (int64_t r = 0; r < rows_active; ++r) {
    MatchRow mr;
    mr.rel = r;
    mr.distance = dist[size_t(r)];
    if (match == "exact")
      mr.flag = mr.distance == 0;
    else if (match == "threshold")
      mr.flag = mr.distance <= threshold;
    else  // best: minimal distance, ties flagged (read breaks ties by index)
      mr.flag = mr.distance == best;
    out.rows.push_back(mr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics and trace

struct TraceEvent {
  int64_t step = 0;
  std::string level;   // subarray | host
  std::string handle;  // b0.m1.a2.s3
  std::string op;      // write | search | merge
  int64_t rows_active = 0;
  double latency_ns = 0.0;
  double energy_pj = 0.0;
  int64_t wave = 0;
  int64_t slot = 0;
};

struct Metrics {
  double total_latency_ns = 0.0;
  double total_energy_pj = 0.0;
  double avg_power_w = 0.0;
  double peak_power_w = 0.0;
  int64_t subarrays_used = 0;
  int64_t banks_used = 0;
  int64_t search_steps = 0;
  int64_t write_steps = 0;
  int64_t host_merges = 0;
  std::vector<TraceEvent> trace;
};

inline std::string trace_lines(const Metrics& m) {
  std::ostringstream os;
  os << "step,level,handle,op,rows_active,latency_ns,energy_pj\n";
  for (const TraceEvent& e : m.trace)
    os << e.step << "," << e.level << "," << e.handle << "," << e.op << ","
       << e.rows_active << "," << detail::real_str(e.latency_ns) << ","
       << detail::real_str(e.energy_pj) << "\n";
  return os.str();
}

inline std::string metrics_csv_header(bool edp = false) {
  std::string s = "config,latency_ns,energy_pj,avg_power_w,peak_power_w,subarrays,banks";
  if (edp) s += ",edp";
  return s;
}

inline std::string metrics_csv_row(const Metrics& m, const std::string& config,
                                   bool edp = false) {
  std::string s = config + "," + detail::real_str(m.total_latency_ns) + "," +
                  detail::real_str(m.total_energy_pj) + "," +
                  detail::real_str(m.avg_power_w) + "," +
                  detail::real_str(m.peak_power_w) + "," +
                  std::to_string(m.subarrays_used) + "," +
                  std::to_string(m.banks_used);
  if (edp) s += "," + detail::real_str(m.total_energy_pj * m.total_latency_ns);
  return s;
}

// One report row. CSV column set is a stable contract; EDP (energy_pj times
// latency_ns) is appended only when requested.
inline std::string metrics_report(const Metrics& m, const std::string& format,
                                  const std::string& config = "default",
                                  bool edp = false) {
  std::ostringstream os;
  if (format == "csv") {
    os << metrics_csv_header(edp) << "\n" << metrics_csv_row(m, config, edp) << "\n";
    return os.str();
  }
  os << "config:        " << config << "\n";
  os << "latency_ns:    " << detail::real_str(m.total_latency_ns) << "\n";
  os << "energy_pj:     " << detail::real_str(m.total_energy_pj) << "\n";
  os << "avg_power_w:   " << detail::real_str(m.avg_power_w) << "\n";
  os << "peak_power_w:  " << detail::real_str(m.peak_power_w) << "\n";
  os << "subarrays:     " << m.subarrays_used << "\n";
  os << "banks:         " << m.banks_used << "\n";
  os << "search_steps:  " << m.search_steps << "\n";
  os << "write_steps:   " << m.write_steps << "\n";
  if (edp)
    os << "edp:           " << detail::real_str(m.total_energy_pj * m.total_latency_ns)
       << "\n";
  if (m.host_merges > 0)
    os << "note:          " << m.host_merges
       << " unmodeled host merges (zero cost)\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Dense ops shared by the interpreter and the oracle-free paths

namespace dense {

inline std::vector<int64_t> shape2(const Tensor& t) {
  if (t.type.rank() != 2) throw SimError("expected a rank-2 tensor");
  return t.type.shape;
}

inline Tensor transpose(const Tensor& a) {
  auto s = shape2(a);
  Tensor out = Tensor::zeros(TensorType{{s[1], s[0]}, a.type.elem});
  for (int64_t i = 0; i < s[0]; ++i)
    for (int64_t j = 0; j < s[1]; ++j) {
      if (a.is_float())
        out.fv[size_t(j * s[0] + i)] = a.fv[size_t(i * s[1] + j)];
      else
        out.iv[size_t(j * s[0] + i)] = a.iv[size_t(i * s[1] + j)];
    }
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b, const TensorType& out_ty) {
  auto sa = shape2(a);
  auto sb = shape2(b);
  if (sa[1] != sb[0]) throw SimError("matmul inner dims differ");
  Tensor out = Tensor::zeros(out_ty);
  bool fl = out_ty.elem.kind == ElemKind::Float;
  for (int64_t i = 0; i < sa[0]; ++i)
    for (int64_t j = 0; j < sb[1]; ++j) {
      if (fl) {
        double acc = 0;
        for (int64_t k = 0; k < sa[1]; ++k)
          acc += a.fval(i * sa[1] + k) * b.fval(k * sb[1] + j);
        out.fv[size_t(i * sb[1] + j)] = float(acc);
      } else {
        int64_t acc = 0;
        for (int64_t k = 0; k < sa[1]; ++k)
          acc += a.arith(i * sa[1] + k) * b.arith(k * sb[1] + j);
        out.iv[size_t(i * sb[1] + j)] = acc;
      }
    }
  return out;
}

// Elementwise with optional 1xD row broadcast on either side.
template <typename FInt, typename FFloat>
inline Tensor elementwise(const Tensor& a, const Tensor& b, const TensorType& out_ty,
                          FInt fi, FFloat ff) {
  Tensor out = Tensor::zeros(out_ty);
  int64_t n = out_ty.numel();
  bool fl = out_ty.elem.kind == ElemKind::Float;
  int64_t cols = out_ty.rank() == 2 ? out_ty.shape[1] : n;
  auto index = [&](const Tensor& t, int64_t flat) {
    if (t.numel() == n) return flat;
    return flat % cols;  // 1xD row broadcast against NxD
  };
  for (int64_t i = 0; i < n; ++i) {
    if (fl)
      out.fv[size_t(i)] = float(ff(a.fval(index(a, i)), b.fval(index(b, i))));
    else
      out.iv[size_t(i)] = fi(a.arith(index(a, i)), b.arith(index(b, i)));
  }
  return out;
}

inline Tensor norm(const Tensor& a, int64_t p, int64_t dim, const TensorType& out_ty) {
  const auto& shape = a.type.shape;
  int64_t rank = a.type.rank();
  if (dim < 0 || dim >= rank) throw SimError("norm dim out of range");
  int64_t extent = shape[size_t(dim)];
  int64_t inner = 1;
  for (int64_t i = dim + 1; i < rank; ++i) inner *= shape[size_t(i)];
  int64_t outer = a.numel() / (extent * inner);
  Tensor out = Tensor::zeros(out_ty);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      double facc = 0;
      int64_t iacc = 0;
      bool fl = a.is_float();
      for (int64_t e = 0; e < extent; ++e) {
        int64_t idx = (o * extent + e) * inner + in;
        if (fl) {
          double v = a.fval(idx);
          facc += p == 2 ? v * v : std::abs(v);
        } else {
          int64_t v = a.arith(idx);
          iacc += p == 2 ? v * v : (v < 0 ? -v : v);
        }
      }
      double total = fl ? facc : double(iacc);
      out.fv[size_t(o * inner + in)] = p == 2 ? float(std::sqrt(total)) : float(total);
    }
  return out;
}

// Selection indices ordered by (value per direction, then lowest index).
inline std::vector<int64_t> order_indices(const std::vector<double>& vals,
                                          bool largest) {
  std::vector<int64_t> idx(vals.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    double va = vals[size_t(a)];
    double vb = vals[size_t(b)];
    if (va != vb) return largest ? va > vb : va < vb;
    return a < b;
  });
  return idx;
}

inline std::pair<Tensor, Tensor> topk(const Tensor& a, int64_t k, int64_t dim,
                                      bool largest, const TensorType& val_ty,
                                      const TensorType& idx_ty) {
  const auto& shape = a.type.shape;
  int64_t rank = a.type.rank();
  int64_t extent = shape[size_t(dim)];
  int64_t inner = 1;
  for (int64_t i = dim + 1; i < rank; ++i) inner *= shape[size_t(i)];
  int64_t outer = a.numel() / (extent * inner);
  Tensor values = Tensor::zeros(val_ty);
  Tensor indices = Tensor::zeros(idx_ty);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      std::vector<double> vals(static_cast<size_t>(extent), 0.0);
      for (int64_t e = 0; e < extent; ++e)
        vals[size_t(e)] = a.is_float() ? a.fv[size_t((o * extent + e) * inner + in)]
                                       : double(a.iv[size_t((o * extent + e) * inner + in)]);
      auto order = order_indices(vals, largest);
      for (int64_t j = 0; j < k; ++j) {
        int64_t src = order[size_t(j)];
        int64_t dst = (o * k + j) * inner + in;
        if (values.is_float())
          values.fv[size_t(dst)] = a.fv[size_t((o * extent + src) * inner + in)];
        else
          values.iv[size_t(dst)] = a.iv[size_t((o * extent + src) * inner + in)];
        indices.iv[size_t(dst)] = src;
      }
    }
  return {values, indices};
}

}  // namespace dense

// ---------------------------------------------------------------------------
// Merge execution (also used standalone in tests)

struct ScoredList {
  // Parallel (value, index) candidate lists; sentinel index -1 marks padding.
  std::vector<double> values;
  std::vector<int64_t> indices;
};

// Selects k entries from candidates: ranked by value (ascending for
// topk-min, descending for topk-max), ties to the lowest index; optional
// exact/threshold filtering happens on the raw values; sentinel-padded to k
// when fewer candidates qualify.
inline ScoredList select_topk(const ScoredList& cand, int64_t k, bool min_kind,
                              const std::string& match, int64_t threshold) {
  std::vector<size_t> live;
  for (size_t i = 0; i < cand.values.size(); ++i) {
    if (cand.indices[i] < 0) continue;  // sentinel
    if (match == "exact" && cand.values[i] != 0) continue;
    if (match == "threshold" && cand.values[i] > double(threshold)) continue;
    live.push_back(i);
  }
  std::sort(live.begin(), live.end(), [&](size_t a, size_t b) {
    if (cand.values[a] != cand.values[b])
      return min_kind ? cand.values[a] < cand.values[b]
                      : cand.values[a] > cand.values[b];
    return cand.indices[a] < cand.indices[b];
  });
  ScoredList out;
  for (int64_t j = 0; j < k; ++j) {
    if (j < static_cast<int64_t>(live.size())) {
      out.values.push_back(cand.values[live[size_t(j)]]);
      out.indices.push_back(cand.indices[live[size_t(j)]]);
    } else {
      out.values.push_back(0.0);
      out.indices.push_back(-1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense reference oracle

struct OracleResult {
  Tensor values;
  Tensor indices;  // empty tensor when k == 0 (scores mode)
};

// Independent dense computation of the pipeline contract: per-row metric,
// selection (or scores), match filtering, sentinel padding, value domains as
// documented (bipolar dot, sqrt euclidean for best match, raw distances for
// exact/threshold).
inline OracleResult dense_oracle(const Tensor& stored, const Tensor& query,
                                 const std::string& metric, int64_t k,
                                 bool largest = true,
                                 const std::string& match = "best",
                                 int64_t threshold = 0) {
  auto ss = stored.type.shape;
  auto qs = query.type.shape;
  if (stored.type.rank() != 2 || query.type.rank() != 2 || qs[0] != 1 ||
      qs[1] != ss[1])
    throw SimError("oracle: stored must be NxD and query 1xD");
  int64_t n = ss[0];
  int64_t d = ss[1];

  std::vector<double> score(size_t(n), 0.0);
  std::vector<int64_t> rawdist(size_t(n), 0);
  for (int64_t i = 0; i < n; ++i) {
    if (metric == "dot" || metric == "cosine") {
      int64_t acc = 0;
      for (int64_t j = 0; j < d; ++j)
        acc += stored.arith(i * d + j) * query.arith(j);
      score[size_t(i)] = double(acc);
      rawdist[size_t(i)] = -acc;  // ranking only
      if (metric == "cosine") {
        int64_t s2 = 0, q2 = 0;
        for (int64_t j = 0; j < d; ++j) {
          s2 += stored.arith(i * d + j) * stored.arith(i * d + j);
          q2 += query.arith(j) * query.arith(j);
        }
        float ns = float(std::sqrt(double(s2)));
        float nq = float(std::sqrt(double(q2)));
        score[size_t(i)] = double(float(acc) / (ns * nq));
      }
    } else if (metric == "euclidean") {
      // Best match compares in the bipolar arithmetic domain; exact and
      // threshold matches bound the raw device distance (stored cell values).
      int64_t acc = 0;
      int64_t raw = 0;
      for (int64_t j = 0; j < d; ++j) {
        int64_t diff = stored.arith(i * d + j) - query.arith(j);
        acc += diff * diff;
        int64_t rdiff = stored.iv[size_t(i * d + j)] - query.iv[size_t(j)];
        raw += rdiff * rdiff;
      }
      score[size_t(i)] = double(acc);
      rawdist[size_t(i)] = match == "best" ? acc : raw;
    } else if (metric == "hamming") {
      int64_t acc = 0;
      for (int64_t j = 0; j < d; ++j)
        if (stored.iv[size_t(i * d + j)] != query.iv[size_t(j)]) ++acc;
      score[size_t(i)] = double(acc);
      rawdist[size_t(i)] = acc;
    } else {
      throw SimError("oracle: unknown metric " + metric);
    }
  }

  OracleResult out;
  if (k == 0) {
    if (metric == "cosine") {
      std::vector<float> f(static_cast<size_t>(n), 0.0f);
      for (int64_t i = 0; i < n; ++i) f[size_t(i)] = float(score[size_t(i)]);
      out.values = Tensor::floats({1, n}, std::move(f));
    } else {
      std::vector<int64_t> v(static_cast<size_t>(n), 0);
      for (int64_t i = 0; i < n; ++i) v[size_t(i)] = int64_t(score[size_t(i)]);
      out.values = Tensor::ints({1, n}, elem_i32(), std::move(v));
    }
    return out;
  }

  ScoredList cand;
  for (int64_t i = 0; i < n; ++i) {
    double v;
    if (match != "best") {
      v = double(rawdist[size_t(i)]);  // raw distance domain
    } else if (metric == "euclidean") {
      v = double(rawdist[size_t(i)]);  // compare squared, sqrt at the end
    } else {
      v = score[size_t(i)];
    }
    cand.values.push_back(v);
    cand.indices.push_back(i);
  }
  bool min_kind = match != "best" || metric == "euclidean" || metric == "hamming";
  if (metric == "dot" && !largest && match == "best") min_kind = true;
  if ((metric == "euclidean" || metric == "hamming") && largest && match == "best")
    min_kind = false;
  ScoredList sel = select_topk(cand, k, min_kind, match == "best" ? "best" : match,
                               threshold);

  bool float_vals = match == "best" && metric == "euclidean";
  if (float_vals) {
    std::vector<float> v(static_cast<size_t>(k), 0.0f);
    for (int64_t j = 0; j < k; ++j)
      v[size_t(j)] = sel.indices[size_t(j)] < 0
                         ? 0.0f
                         : float(std::sqrt(sel.values[size_t(j)]));
    out.values = Tensor::floats({1, k}, std::move(v));
  } else {
    std::vector<int64_t> v(static_cast<size_t>(k), 0);
    for (int64_t j = 0; j < k; ++j) v[size_t(j)] = int64_t(sel.values[size_t(j)]);
    out.values = Tensor::ints({1, k}, elem_i32(), std::move(v));
  }
  out.indices = Tensor::ints({1, k}, elem_i32(),
                             std::vector<int64_t>(sel.indices.begin(), sel.indices.end()));
  return out;
}

}  // namespace camforge
