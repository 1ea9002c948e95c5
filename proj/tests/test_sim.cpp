#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "camforge/camforge.hpp"
#include "support/oracles.hpp"

using namespace camforge;

namespace {

SubarrayState make_subarray(const std::string& device, int64_t rows, int64_t cols) {
  SubarrayState s;
  s.device = device;
  s.rows = rows;
  s.cols = cols;
  s.name = "b0.m0.a0.s0";
  s.cells.assign(size_t(rows * cols), CamCell{});
  return s;
}

void write_row(SubarrayState& s, int64_t row, const std::vector<int64_t>& vals) {
  for (size_t c = 0; c < vals.size(); ++c) {
    CamCell& cell = s.at(row, int64_t(c));
    cell.written = true;
    cell.lo = cell.hi = vals[c];
  }
}

ProgramModule pipeline_for(const std::string& kernel, const ArchSpec& arch,
                           const CompileFlags& flags, const std::string& stage) {
  PassRegistry reg = build_pass_registry(&arch);
  return run_pipeline(parse_kernel(kernel), stage_pipeline(stage, arch, flags), reg);
}

}  // namespace

TEST_CASE("tcam best match: hand-counted hamming distances") {
  SubarrayState s = make_subarray("tcam", 4, 4);
  write_row(s, 0, {0, 0, 0, 0});
  write_row(s, 1, {0, 1, 1, 1});
  MatchResultRt r = search_subarray(s, {0, 0, 1, 1}, "best", "hamming", 0, 0, 2);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].distance == 2);
  CHECK(r.rows[1].distance == 1);
  CHECK_FALSE(r.rows[0].flag);
  CHECK(r.rows[1].flag);  // best row
}

TEST_CASE("tcam don't-care cells match both query bits") {
  SubarrayState s = make_subarray("tcam", 1, 4);
  write_row(s, 0, {0, 0, 1, 0});
  s.at(0, 1).dont_care = true;  // 0X10 pattern
  s.at(0, 3).dont_care = true;  // -> 0X1X
  MatchResultRt r = search_subarray(s, {0, 1, 1, 0}, "exact", "hamming", 0, 0, 1);
  CHECK(r.rows[0].distance == 0);
  CHECK(r.rows[0].flag);
}

TEST_CASE("mcam best match by L1 distance agrees with brute force") {
  SubarrayState s = make_subarray("mcam", 2, 2);
  write_row(s, 0, {1, 2});
  write_row(s, 1, {3, 0});
  MatchResultRt r = search_subarray(s, {2, 2}, "best", "hamming", 0, 0, 2);
  CHECK(r.rows[0].distance == testsupport::brute_l1({1, 2}, {2, 2}));
  CHECK(r.rows[1].distance == testsupport::brute_l1({3, 0}, {2, 2}));
  CHECK(r.rows[0].distance == 1);
  CHECK(r.rows[1].distance == 3);
  CHECK(r.rows[0].flag);

  MatchResultRt e = search_subarray(s, {2, 2}, "best", "euclidean", 0, 0, 2);
  CHECK(e.rows[0].distance == testsupport::brute_l2sq({1, 2}, {2, 2}));
  CHECK(e.rows[1].distance == testsupport::brute_l2sq({3, 0}, {2, 2}));
}

TEST_CASE("threshold flags respect the distance bound") {
  SubarrayState s = make_subarray("tcam", 2, 4);
  write_row(s, 0, {0, 0, 0, 0});
  write_row(s, 1, {0, 1, 1, 1});
  MatchResultRt r = search_subarray(s, {0, 0, 1, 1}, "threshold", "hamming", 1, 0, 2);
  CHECK_FALSE(r.rows[0].flag);  // distance 2 > 1
  CHECK(r.rows[1].flag);        // distance 1 <= 1
}

TEST_CASE("acam cells match ranges; distance counts misses") {
  SubarrayState s = make_subarray("acam", 2, 3);
  for (int64_t c = 0; c < 3; ++c) {
    s.at(0, c).written = true;
    s.at(1, c).written = true;
  }
  s.at(0, 0).lo = 0; s.at(0, 0).hi = 4;
  s.at(0, 1).lo = 2; s.at(0, 1).hi = 2;
  s.at(0, 2).lo = 5; s.at(0, 2).hi = 9;
  s.at(1, 0).lo = 3; s.at(1, 0).hi = 3;
  s.at(1, 1).lo = 0; s.at(1, 1).hi = 9;
  s.at(1, 2).lo = 0; s.at(1, 2).hi = 1;
  MatchResultRt r = search_subarray(s, {2, 2, 7}, "threshold", "hamming", 1, 0, 2);
  CHECK(r.rows[0].distance == 0);  // all inside
  CHECK(r.rows[1].distance == 2);  // 2 not in [3,3], 7 not in [0,1]
  CHECK(r.rows[0].flag);
  CHECK_FALSE(r.rows[1].flag);
}

TEST_CASE("searching rows that were never written is an error") {
  SubarrayState s = make_subarray("tcam", 4, 4);
  write_row(s, 0, {0, 1, 0, 1});
  CHECK_THROWS_AS(search_subarray(s, {0, 0, 0, 0}, "best", "hamming", 0, 0, 2),
                  SimError);
}

TEST_CASE("active-row masks exclude inactive rows entirely") {
  SubarrayState s = make_subarray("tcam", 4, 2);
  write_row(s, 0, {0, 0});   // distance 2 from query
  write_row(s, 1, {1, 1});   // distance 0
  write_row(s, 2, {1, 1});
  MatchResultRt r = search_subarray(s, {1, 1}, "best", "hamming", 0, 0, 1);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].distance == 2);
  CHECK(r.rows[0].flag);  // best within the active range only
}

TEST_CASE("merge execution: sums, top-k selection and ties") {
  // sum-cols([2,5],[1,1]) -> [3,6]
  TechParams tech;
  ProgramModule m = parse_module(
      "func @f(%arg0: i32[1x2], %arg1: i32[1x2]) -> (i32[1x2]) {\n"
      "  %0 = cim.merge_partial(%arg0, %arg1) {kind = \"sum-cols\"} : "
      "(i32[1x2], i32[1x2]) -> (i32[1x2])\n"
      "  plumb.return(%0) : (i32[1x2]) -> ()\n}\n");
  ExecResult r = execute(m, nullptr, tech,
                         {{"arg0", Tensor::ints({1, 2}, elem_i32(), {2, 5})},
                          {"arg1", Tensor::ints({1, 2}, elem_i32(), {1, 1})}});
  CHECK(r.outputs[0].iv == std::vector<int64_t>{3, 6});

  // topk-min merge over {(3, idx 0), (1, idx 7)} keeps (1, 7)
  ProgramModule m2 = parse_module(
      "func @g(%arg0: i32[1x1], %arg1: i32[1x1], %arg2: i32[1x1], %arg3: i32[1x1])"
      " -> (i32[1x1], i32[1x1]) {\n"
      "  %0, %1 = cim.merge_partial(%arg0, %arg1, %arg2, %arg3) "
      "{k = 1, kind = \"topk-min\"} : (i32[1x1], i32[1x1], i32[1x1], i32[1x1]) -> "
      "(i32[1x1], i32[1x1])\n"
      "  plumb.return(%0, %1) : (i32[1x1], i32[1x1]) -> ()\n}\n");
  ExecResult r2 = execute(m2, nullptr, tech,
                          {{"arg0", Tensor::ints({1, 1}, elem_i32(), {3})},
                           {"arg1", Tensor::ints({1, 1}, elem_i32(), {0})},
                           {"arg2", Tensor::ints({1, 1}, elem_i32(), {1})},
                           {"arg3", Tensor::ints({1, 1}, elem_i32(), {7})}});
  CHECK(r2.outputs[0].iv == std::vector<int64_t>{1});
  CHECK(r2.outputs[1].iv == std::vector<int64_t>{7});

  // equal values: the lower index wins
  ExecResult r3 = execute(m2, nullptr, tech,
                          {{"arg0", Tensor::ints({1, 1}, elem_i32(), {2})},
                           {"arg1", Tensor::ints({1, 1}, elem_i32(), {4})},
                           {"arg2", Tensor::ints({1, 1}, elem_i32(), {2})},
                           {"arg3", Tensor::ints({1, 1}, elem_i32(), {1})}});
  CHECK(r3.outputs[0].iv == std::vector<int64_t>{2});
  CHECK(r3.outputs[1].iv == std::vector<int64_t>{1});
}

TEST_CASE("dense oracle: identity stored matrix finds the matching row") {
  Tensor stored = Tensor::ints({3, 3}, elem_i1(), {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor query = Tensor::ints({1, 3}, elem_i1(), {0, 1, 0});
  OracleResult r = dense_oracle(stored, query, "dot", 1, true);
  CHECK(r.indices.iv[0] == 1);
}

TEST_CASE("dense oracle matches independent brute force on random data") {
  std::mt19937_64 rng(606);
  for (int iter = 0; iter < 60; ++iter) {
    int64_t n = 1 + int64_t(rng() % 20);
    int64_t d = 1 + int64_t(rng() % 64);
    int64_t k = 1 + int64_t(rng() % std::min<int64_t>(n, 5));
    bool i1 = rng() % 2 == 0;
    Tensor stored = i1 ? testsupport::random_bits(n, d, rng)
                       : testsupport::random_ints(n, d, 4, rng);
    Tensor query = i1 ? testsupport::random_bits(1, d, rng)
                      : testsupport::random_ints(1, d, 4, rng);
    for (const char* metric : {"hamming", "euclidean", "dot"}) {
      if (std::string(metric) == "dot" && !i1) continue;
      bool largest = std::string(metric) == "dot";
      OracleResult lib = dense_oracle(stored, query, metric, k, largest);
      auto brute =
          testsupport::brute_pipeline(stored, query, metric, k, largest);
      for (int64_t j = 0; j < k; ++j) {
        CHECK(lib.indices.iv[size_t(j)] == brute.indices[size_t(j)]);
        CHECK(lib.values.fval_raw(j) == brute.values[size_t(j)]);
      }
    }
  }
}

TEST_CASE("a single mapped search costs one search plus one write step") {
  ArchSpec arch;
  arch.rows = arch.cols = 16;
  arch.selective_search = true;
  validate_arch(arch);
  CompileFlags flags;
  ProgramModule mapped = pipeline_for(
      "kernel one(a: i1[4x16], b: i1[1x16]) -> (i32[1x1], i32[1x1]) {\n"
      "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=1);\n"
      "  return v, i;\n}\n",
      arch, flags, "cam-mapped");
  TechParams tech;
  std::mt19937_64 rng(1);
  std::map<std::string, Tensor> in{{"a", testsupport::random_bits(4, 16, rng)},
                                   {"b", testsupport::random_bits(1, 16, rng)}};
  ExecResult r = execute(mapped, &arch, tech, in);
  CHECK(r.metrics.total_latency_ns ==
        Catch::Approx(0.86 + tech.write_latency_ns).epsilon(1e-12));
  CHECK(r.metrics.search_steps == 1);
  CHECK(r.metrics.write_steps == 1);
  CHECK(r.metrics.subarrays_used == 1);
  CHECK(r.metrics.banks_used == 1);
  CHECK(r.metrics.avg_power_w <= r.metrics.peak_power_w);
}

TEST_CASE("energy accounting conserves over the trace") {
  ArchSpec arch;
  arch.rows = arch.cols = 32;
  arch.selective_search = true;
  validate_arch(arch);
  CompileFlags flags;
  ProgramModule mapped = pipeline_for(
      "kernel c(a: i1[10x512], b: i1[1x512]) -> (i32[1x1], i32[1x1]) {\n"
      "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=1);\n"
      "  return v, i;\n}\n",
      arch, flags, "cam-mapped");
  TechParams tech;
  std::mt19937_64 rng(2);
  std::map<std::string, Tensor> in{{"a", testsupport::random_bits(10, 512, rng)},
                                   {"b", testsupport::random_bits(1, 512, rng)}};
  ExecResult r = execute(mapped, &arch, tech, in);
  double replay = 0;
  int64_t host_events = 0;
  for (const TraceEvent& e : r.metrics.trace) {
    replay += e.energy_pj;
    if (e.level == "host") ++host_events;
  }
  CHECK(replay == Catch::Approx(r.metrics.total_energy_pj).epsilon(1e-9));
  CHECK(host_events == r.metrics.host_merges);
  CHECK(host_events > 0);

  std::string lines = trace_lines(r.metrics);
  CHECK(lines.rfind("step,level,handle,op,rows_active,latency_ns,energy_pj\n", 0) == 0);
}

TEST_CASE("metrics reports are deterministic and carry the EDP when asked") {
  Metrics m;
  m.total_latency_ns = 4.0;
  m.total_energy_pj = 10.0;
  m.avg_power_w = 10.0 / 4.0 * 1e-3;
  m.peak_power_w = 2 * m.avg_power_w;
  m.subarrays_used = 3;
  m.banks_used = 1;
  std::string csv = metrics_report(m, "csv", "cfg", true);
  CHECK(csv.find("config,latency_ns,energy_pj,avg_power_w,peak_power_w,subarrays,banks,edp")
        == 0);
  // EDP column equals energy * latency, recomputed here
  std::string row = csv.substr(csv.find('\n') + 1);
  CHECK(row.find(detail::real_str(10.0 * 4.0)) != std::string::npos);

  Metrics zero;
  std::string zrow = metrics_report(zero, "csv", "z");
  CHECK(zrow.find("z,0.0,0.0,0.0,0.0,0,0") != std::string::npos);

  std::string text = metrics_report(m, "text", "cfg");
  CHECK(text.find("latency_ns") != std::string::npos);
}

TEST_CASE("a partially scheduled program is an execution error") {
  ArchSpec arch;
  arch.rows = arch.cols = 32;
  arch.selective_search = true;
  validate_arch(arch);
  CompileFlags flags;
  ProgramModule mapped = pipeline_for(
      "kernel c(a: i1[10x128], b: i1[1x128]) -> (i32[1x1], i32[1x1]) {\n"
      "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=1);\n"
      "  return v, i;\n}\n",
      arch, flags, "cam-mapped");
  // strip the step attribute from one search
  for (Operation& op : mapped.functions[0].body.ops)
    if (op.full_name() == "cam.search") {
      op.attrs.erase("step");
      break;
    }
  TechParams tech;
  std::mt19937_64 rng(8);
  std::map<std::string, Tensor> in{{"a", testsupport::random_bits(10, 128, rng)},
                                   {"b", testsupport::random_bits(1, 128, rng)}};
  CHECK_THROWS_WITH(execute(mapped, &arch, tech, in),
                    Catch::Matchers::ContainsSubstring("schedule attribute missing"));
}

TEST_CASE("optimization modes change the schedule, never the results") {
  TechParams tech;
  ArchSpec arch;
  arch.rows = arch.cols = 32;
  arch.selective_search = true;
  validate_arch(arch);
  std::mt19937_64 rng(97);
  std::map<std::string, Tensor> in{{"a", testsupport::random_bits(10, 1024, rng)},
                                   {"b", testsupport::random_bits(1, 1024, rng)}};
  const std::string kernel =
      "kernel m(a: i1[10x1024], b: i1[1x1024]) -> (i32[1x1], i32[1x1]) {\n"
      "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=1);\n"
      "  return v, i;\n}\n";
  std::vector<Metrics> metrics;
  std::vector<std::vector<Tensor>> outs;
  for (const char* mode : {"base", "power", "density", "power_density"}) {
    CompileFlags flags;
    flags.mode = mode;
    ProgramModule mapped = pipeline_for(kernel, arch, flags, "cam-mapped");
    ExecResult r = execute(mapped, &arch, tech, in);
    metrics.push_back(r.metrics);
    outs.push_back(r.outputs);
  }
  for (size_t i = 1; i < outs.size(); ++i) {
    CHECK(outs[i][0].iv == outs[0][0].iv);
    CHECK(outs[i][1].iv == outs[0][1].iv);
  }
  // power: same energy bit-exactly, more latency, less power, no higher peak
  CHECK(metrics[1].total_energy_pj == metrics[0].total_energy_pj);
  CHECK(metrics[1].total_latency_ns > metrics[0].total_latency_ns);
  CHECK(metrics[1].avg_power_w < metrics[0].avg_power_w);
  CHECK(metrics[1].peak_power_w <= metrics[0].peak_power_w);
  // density never uses more subarrays
  CHECK(metrics[2].subarrays_used <= metrics[0].subarrays_used);
}

TEST_CASE("multi-bit searches draw the higher match-line voltage") {
  TechParams tech;
  ArchSpec arch;
  arch.rows = arch.cols = 16;
  validate_arch(arch);
  auto run = [&](const std::string& kernel, const char* device, const char* metric,
                 std::map<std::string, Tensor> in) {
    CompileFlags flags;
    flags.device = device;
    flags.metric = metric;
    ProgramModule mapped = pipeline_for(kernel, arch, flags, "cam-mapped");
    return execute(mapped, &arch, tech, in).metrics;
  };
  std::mt19937_64 rng(5);
  Metrics binary = run(
      "kernel b(a: i1[4x16], q: i1[1x16]) -> (f32[4], i32[4]) {\n"
      "  d = sub(q, a);\n  n = norm(d, p=2, dim=1);\n"
      "  v, i = topk(n, k=4, largest=false);\n  return v, i;\n}\n",
      "tcam", "hamming",
      {{"a", testsupport::random_bits(4, 16, rng)},
       {"q", testsupport::random_bits(1, 16, rng)}});
  Metrics multibit = run(
      "kernel m(a: i4[4x16], q: i4[1x16]) -> (f32[4], i32[4]) {\n"
      "  d = sub(q, a);\n  n = norm(d, p=2, dim=1);\n"
      "  v, i = topk(n, k=4, largest=false);\n  return v, i;\n}\n",
      "mcam", "euclidean",
      {{"a", testsupport::random_ints(4, 16, 4, rng)},
       {"q", testsupport::random_ints(1, 16, 4, rng)}});
  CHECK(multibit.total_energy_pj > binary.total_energy_pj);
}

TEST_CASE("pipeline outputs equal the oracle across devices and modes (smoke)") {
  TechParams tech;
  std::mt19937_64 rng(1234);
  for (int iter = 0; iter < 12; ++iter) {
    int64_t n = 2 + int64_t(rng() % 30);
    int64_t d = 8 + int64_t(rng() % 120);
    int64_t k = 1 + int64_t(rng() % std::min<int64_t>(n, 4));
    ArchSpec arch;
    arch.rows = arch.cols = 32;
    arch.selective_search = true;
    validate_arch(arch);
    bool euclid = iter % 2 == 1;
    std::ostringstream os;
    if (euclid)
      os << "kernel f(a: i4[" << n << "x" << d << "], b: i4[1x" << d
         << "]) -> (f32[" << k << "], i32[" << k << "]) {\n"
         << "  d0 = sub(b, a);\n  n0 = norm(d0, p=2, dim=1);\n"
         << "  v, i = topk(n0, k=" << k << ", largest=false);\n  return v, i;\n}\n";
    else
      os << "kernel f(a: i1[" << n << "x" << d << "], b: i1[1x" << d
         << "]) -> (i32[1x" << k << "], i32[1x" << k << "]) {\n"
         << "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=" << k
         << ");\n  return v, i;\n}\n";
    CompileFlags flags;
    flags.device = euclid ? "mcam" : "tcam";
    flags.metric = euclid ? "euclidean" : "hamming";
    flags.mode = iter % 4 == 0 ? "density" : "base";
    ProgramModule mapped = pipeline_for(os.str(), arch, flags, "cam-mapped");
    Tensor stored = euclid ? testsupport::random_ints(n, d, 4, rng)
                           : testsupport::random_bits(n, d, rng);
    Tensor query = euclid ? testsupport::random_ints(1, d, 4, rng)
                          : testsupport::random_bits(1, d, rng);
    ExecResult r = execute(mapped, &arch, tech, {{"a", stored}, {"b", query}});
    OracleResult o =
        dense_oracle(stored, query, euclid ? "euclidean" : "dot", k, !euclid);
    for (int64_t j = 0; j < k; ++j) {
      CHECK(r.outputs[0].fval_raw(j) == o.values.fval_raw(j));
      CHECK(r.outputs[1].iv[size_t(j)] == o.indices.iv[size_t(j)]);
    }
  }
}
