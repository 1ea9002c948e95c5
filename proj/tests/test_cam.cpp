#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "camforge/camforge.hpp"
#include "support/oracles.hpp"

using namespace camforge;

namespace {

ArchSpec square_arch(int64_t size, bool auto_banks = true, int64_t banks = 1) {
  ArchSpec a;
  a.rows = a.cols = size;
  a.auto_banks = auto_banks;
  a.banks = banks;
  a.selective_search = true;
  validate_arch(a);
  return a;
}

ProgramModule hdc_cam_module(int64_t n, int64_t d, int64_t pe,
                             const SearchSpec& spec = {}) {
  std::ostringstream os;
  os << "kernel h(a: i1[" << n << "x" << d << "], b: i1[1x" << d
     << "]) -> (i32[1x1], i32[1x1]) {\n"
     << "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=1);\n"
     << "  return v, i;\n}\n";
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(os.str())));
  ProgramModule part = partition(fused, pe, pe);
  return lower_cim_to_cam(part, CamDevice::TCAM, spec);
}

std::map<std::string, Tensor> random_inputs(const ProgramModule& m,
                                            std::mt19937_64& rng) {
  std::map<std::string, Tensor> inputs;
  const FunctionDef& fn = m.functions.front();
  for (size_t i = 0; i < fn.args.size(); ++i) {
    const TensorType& ty = fn.args[i].type.tensor;
    inputs[fn.arg_name(i)] = random_int_tensor(ty.shape, ty.elem, rng);
  }
  return inputs;
}

}  // namespace

TEST_CASE("lowering a fused dot kernel emits the alloc/write/search/read chain") {
  ProgramModule cam = hdc_cam_module(8, 16, 32);
  CHECK(count_ops(cam, "cam.alloc_bank") == 1);
  CHECK(count_ops(cam, "cam.alloc_mat") == 1);
  CHECK(count_ops(cam, "cam.alloc_array") == 1);
  CHECK(count_ops(cam, "cam.alloc_subarray") == 1);
  CHECK(count_ops(cam, "cam.write_value") == 1);
  CHECK(count_ops(cam, "cam.search") == 1);
  CHECK(count_ops(cam, "cam.read_value") == 1);
  CHECK(count_ops(cam, "cim.execute") == 0);
  CHECK(verify(cam).empty());
}

TEST_CASE("modules without similarity blocks pass through unchanged") {
  ProgramModule m = fuse_ops(lower_tensor_to_cim(parse_kernel(
      "kernel mm(a: i1[4x8], b: i1[8x4]) -> (i32[4x4]) {\n"
      "  c = matmul(a, b);\n  return c;\n}\n")));
  ProgramModule cam = lower_cim_to_cam(m, CamDevice::TCAM, {});
  CHECK(structurally_equal(m, cam));
}

TEST_CASE("euclidean search on a TCAM is rejected") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(
      "kernel e(a: i4[8x16], b: i4[1x16]) -> (f32[1], i32[1]) {\n"
      "  d = sub(b, a);\n  n = norm(d, p=2, dim=1);\n"
      "  v, i = topk(n, k=1, largest=false);\n  return v, i;\n}\n")));
  SearchSpec spec;
  spec.metric = CamMetric::Euclidean;
  CHECK_THROWS_WITH(lower_cim_to_cam(fused, CamDevice::TCAM, spec),
                    Catch::Matchers::ContainsSubstring("unsupported by device"));
}

TEST_CASE("threshold match requires a threshold value") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(
      "kernel e(a: i4[8x16], b: i4[1x16]) -> (f32[1], i32[1]) {\n"
      "  d = sub(b, a);\n  n = norm(d, p=2, dim=1);\n"
      "  v, i = topk(n, k=1, largest=false);\n  return v, i;\n}\n")));
  SearchSpec spec;
  spec.match = MatchType::Threshold;
  spec.metric = CamMetric::Euclidean;
  CHECK_THROWS_WITH(lower_cim_to_cam(fused, CamDevice::MCAM, spec),
                    Catch::Matchers::ContainsSubstring("requires a threshold"));
}

TEST_CASE("placement reproduces the published subarray counts") {
  // D=8192, n=10, four mats, four arrays, eight subarrays.
  struct Row {
    int64_t size, base, density;
  };
  const Row rows[] = {{16, 512, 512}, {32, 256, 86}, {64, 128, 22},
                      {128, 64, 6},   {256, 32, 2}};
  for (const Row& r : rows) {
    ArchSpec a = square_arch(r.size);
    PlacementPlan base = placement_plan(8192, 10, a, {OptModeKind::Base, 1});
    PlacementPlan dens = placement_plan(8192, 10, a, {OptModeKind::Density, 1});
    CHECK(base.subarrays_used == r.base);
    CHECK(dens.subarrays_used == r.density);
  }
}

TEST_CASE("placement packing degenerates at 16x16 (p = floor(16/10) = 1)") {
  ArchSpec a = square_arch(16);
  PlacementPlan p = placement_plan(8192, 10, a, {OptModeKind::Density, 1});
  CHECK(p.packing == 1);
  CHECK(p.subarrays_used == 512);
}

TEST_CASE("placement examples: 64x64 base, 256x256 and 128x128 density") {
  CHECK(placement_plan(8192, 10, square_arch(64), {OptModeKind::Base, 1})
            .subarrays_used == 128);
  PlacementPlan big = placement_plan(8192, 10, square_arch(256),
                                     {OptModeKind::Density, 1});
  CHECK(big.subarrays_used == 2);
  CHECK(big.packing == 25);
  PlacementPlan mid = placement_plan(8192, 10, square_arch(128),
                                     {OptModeKind::Density, 1});
  CHECK(mid.subarrays_used == 6);
  CHECK(mid.packing == 12);
}

TEST_CASE("banks scale with the subarray demand") {
  ArchSpec a = square_arch(16);
  PlacementPlan p = placement_plan(8192, 10, a, {OptModeKind::Base, 1});
  CHECK(p.banks_used == (512 + 127) / 128);
  // n > R falls back to the base layout under density
  ArchSpec b = square_arch(32);
  PlacementPlan q = placement_plan(64, 100, b, {OptModeKind::Density, 1});
  CHECK(q.packing == 1);
}

TEST_CASE("cam-map on a single-tile kernel degenerates to one search") {
  ProgramModule cam = hdc_cam_module(8, 16, 32);
  ProgramModule mapped = cam_map(cam, square_arch(32), {OptModeKind::Base, 1});
  CHECK(count_ops(mapped, "cam.search") == 1);
  CHECK(count_ops(mapped, "cam.write_value") == 1);
  CHECK(verify(mapped).empty());
}

TEST_CASE("cam-map density requires selective search") {
  ProgramModule cam = hdc_cam_module(8, 16, 32);
  ArchSpec a = square_arch(32);
  a.selective_search = false;
  CHECK_THROWS_WITH(cam_map(cam, a, {OptModeKind::Density, 1}),
                    Catch::Matchers::ContainsSubstring("selective_search"));
}

TEST_CASE("cam-map rejects tiles larger than the subarray") {
  ProgramModule cam = hdc_cam_module(40, 64, 64);  // tiles 40x64
  CHECK_THROWS_WITH(cam_map(cam, square_arch(32), {OptModeKind::Base, 1}),
                    Catch::Matchers::ContainsSubstring("exceeds subarray"));
}

TEST_CASE("power schedule never activates more than max_active per array") {
  ProgramModule cam = hdc_cam_module(10, 2048, 32);  // 64 tiles over 2 arrays
  for (int64_t max_active : {1, 2, 3}) {
    ProgramModule mapped =
        cam_map(cam, square_arch(32), {OptModeKind::Power, max_active});
    REQUIRE(verify(mapped).empty());
    // (wave, step, bank, mat, array) -> active subarray count
    std::map<std::tuple<int64_t, int64_t, std::string>, int64_t> active;
    std::map<ValueId, std::string> array_of;
    std::map<ValueId, std::string> names;
    walk_ops(mapped, [&](const Operation& op) {
      if (op.full_name() == "cam.alloc_bank")
        names[op.results[0].id] = "b" + std::to_string(op.int_attr("bank"));
      else if (op.full_name() == "cam.alloc_mat")
        names[op.results[0].id] =
            names[op.operands[0]] + ".m" + std::to_string(op.int_attr("mat"));
      else if (op.full_name() == "cam.alloc_array")
        names[op.results[0].id] =
            names[op.operands[0]] + ".a" + std::to_string(op.int_attr("array"));
      else if (op.full_name() == "cam.alloc_subarray")
        array_of[op.results[0].id] = names[op.operands[0]];
      else if (op.full_name() == "cam.search")
        active[{op.int_attr("wave"), op.int_attr("step"),
                array_of[op.operands[0]]}]++;
    });
    for (const auto& [key, count] : active) CHECK(count <= max_active);
  }
}

TEST_CASE("density schedule activates exactly the packed row ranges") {
  // n=10, D=2048, 32x32: 64 tiles packed 3 per subarray.
  ProgramModule cam = hdc_cam_module(10, 2048, 32);
  ProgramModule mapped = cam_map(cam, square_arch(32), {OptModeKind::Density, 1});
  REQUIRE(verify(mapped).empty());
  std::map<ValueId, std::vector<std::pair<int64_t, int64_t>>> ranges;
  walk_ops(mapped, [&](const Operation& op) {
    if (op.full_name() != "cam.search") return;
    CHECK(op.int_attr("rows_active") == 10);
    ranges[op.operands[0]].emplace_back(op.int_attr("row_offset"),
                                        op.int_attr("rows_active"));
  });
  for (auto& [sub, rs] : ranges) {
    std::sort(rs.begin(), rs.end());
    for (size_t i = 0; i + 1 < rs.size(); ++i)
      CHECK(rs[i].first + rs[i].second <= rs[i + 1].first);  // disjoint
  }
}

TEST_CASE("mapped handle trees mirror the hierarchy counts") {
  ProgramModule cam = hdc_cam_module(10, 8192, 32);
  ArchSpec arch = square_arch(32);
  ProgramModule mapped = cam_map(cam, arch, {OptModeKind::Base, 1});
  std::map<ValueId, int64_t> children;  // parent handle -> child count
  std::map<std::string, int64_t> level_count;
  walk_ops(mapped, [&](const Operation& op) {
    if (op.opname == "alloc_mat" || op.opname == "alloc_array" ||
        op.opname == "alloc_subarray")
      children[op.operands[0]]++;
    if (op.dialect == "cam" && op.opname.rfind("alloc_", 0) == 0)
      level_count[op.opname]++;
  });
  CHECK(level_count["alloc_bank"] == 2);       // 256 subarrays over 128/bank
  CHECK(level_count["alloc_mat"] == 8);
  CHECK(level_count["alloc_array"] == 32);
  CHECK(level_count["alloc_subarray"] == 256);
  for (const auto& [parent, n] : children) {
    (void)parent;
    CHECK(n <= arch.subarrays_per_array);  // at most S subarrays per array etc.
  }
}

TEST_CASE("mapping preserves semantics for every optimization mode") {
  TechParams tech;
  std::mt19937_64 rng(808);
  ProgramModule cam = hdc_cam_module(10, 512, 32);
  auto inputs = random_inputs(cam, rng);
  ExecResult ref = execute(cam, nullptr, tech, inputs);
  for (OptModeKind kind : {OptModeKind::Base, OptModeKind::Power,
                           OptModeKind::Density, OptModeKind::PowerDensity}) {
    ProgramModule mapped = cam_map(cam, square_arch(32), {kind, 1});
    REQUIRE(verify(mapped).empty());
    ExecResult got = execute(mapped, nullptr, tech, inputs);
    REQUIRE(got.outputs.size() == ref.outputs.size());
    for (size_t i = 0; i < ref.outputs.size(); ++i) {
      CHECK(got.outputs[i].iv == ref.outputs[i].iv);
      CHECK(got.outputs[i].fv == ref.outputs[i].fv);
    }
  }
}

TEST_CASE("fixed bank budgets trigger capacity waves with re-writes") {
  TechParams tech;
  std::mt19937_64 rng(31);
  ProgramModule cam = hdc_cam_module(10, 8192, 32);  // needs 256 subarrays
  ArchSpec one_bank = square_arch(32, false, 1);     // 128 physical subarrays
  ProgramModule mapped = cam_map(cam, one_bank, {OptModeKind::Base, 1});
  REQUIRE(verify(mapped).empty());
  auto inputs = random_inputs(cam, rng);
  ExecResult got = execute(mapped, nullptr, tech, inputs);
  ExecResult ref = execute(cam, nullptr, tech, inputs);
  CHECK(got.outputs[1].iv == ref.outputs[1].iv);
  CHECK(got.metrics.subarrays_used == 128);
  CHECK(got.metrics.write_steps == 2);  // one write wave per pass over the banks
  CHECK(got.metrics.search_steps == 2);
  // every physical subarray written twice
  CHECK(count_ops(mapped, "cam.write_value") == 256);
}

TEST_CASE("sequential access modes serialize their level") {
  TechParams tech;
  std::mt19937_64 rng(12);
  ProgramModule cam = hdc_cam_module(10, 2048, 32);  // 64 tiles, 2 arrays worth
  auto inputs = random_inputs(cam, rng);

  ArchSpec par = square_arch(32);
  ArchSpec seq = square_arch(32);
  seq.array_mode = AccessMode::Sequential;
  ExecResult a = execute(cam_map(cam, par, {OptModeKind::Base, 1}), &par, tech, inputs);
  ExecResult b = execute(cam_map(cam, seq, {OptModeKind::Base, 1}), &seq, tech, inputs);
  CHECK(b.metrics.search_steps > a.metrics.search_steps);
  CHECK(b.metrics.total_latency_ns > a.metrics.total_latency_ns);
  CHECK(b.metrics.total_energy_pj == a.metrics.total_energy_pj);
  CHECK(b.outputs[1].iv == a.outputs[1].iv);
}

TEST_CASE("acam lowering accepts threshold pipelines with range semantics") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(
      "kernel e(a: i4[8x16], b: i4[1x16]) -> (f32[2], i32[2]) {\n"
      "  d = sub(b, a);\n  n = norm(d, p=2, dim=1);\n"
      "  v, i = topk(n, k=2, largest=false);\n  return v, i;\n}\n")));
  SearchSpec spec;
  spec.match = MatchType::Threshold;
  spec.metric = CamMetric::Euclidean;
  spec.threshold = 3;
  ProgramModule cam = lower_cim_to_cam(fused, CamDevice::ACAM, spec);
  CHECK(count_ops(cam, "cam.search") == 1);
  CHECK(verify(cam).empty());
}
