#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "camforge/camforge.hpp"
#include "support/oracles.hpp"

using namespace camforge;
using testsupport::MiniOp;

namespace {

const char* kDotKernel =
    "kernel dotk(hvs: i1[10x8192], query: i1[1x8192]) -> (i32[1x1], i32[1x1]) {\n"
    "  t = transpose(hvs);\n  s = matmul(query, t);\n  v, i = topk(s, k=1);\n"
    "  return v, i;\n}\n";

const char* kEuclKernel =
    "kernel eucl(hvs: i4[10x64], query: i4[1x64]) -> (f32[1], i32[1]) {\n"
    "  d = sub(query, hvs);\n  n = norm(d, p=2, dim=1);\n"
    "  v, i = topk(n, k=1, largest=false);\n  return v, i;\n}\n";

const char* kCosKernel =
    "kernel cosk(hvs: i1[8x96], query: i1[1x96]) -> (f32[1x8]) {\n"
    "  nq = norm(query, p=2, dim=1);\n  ns = norm(hvs, p=2, dim=1);\n"
    "  t = transpose(hvs);\n  s = matmul(query, t);\n  c = div(s, ns, nq);\n"
    "  return c;\n}\n";

std::vector<MiniOp> dot_template() {
  return {{"transpose", {-1}}, {"matmul", {-1, 0}}, {"topk", {1}}};
}
std::vector<MiniOp> eucl_template() {
  return {{"sub", {-1, -1}}, {"norm", {0}}, {"topk", {1}}};
}
std::vector<MiniOp> cos_template() {
  return {{"norm", {-1}}, {"norm", {-1}}, {"transpose", {-1}},
          {"matmul", {-1, 2}}, {"div", {3, 1, 0}}};
}

std::optional<SimilarityPattern> match_minis(const std::vector<MiniOp>& minis) {
  FunctionDef fn;
  Region r = testsupport::mini_region(fn, minis);
  return similarity_matching(r);
}

std::optional<SimilarityPattern> brute_match(const std::vector<MiniOp>& minis) {
  if (minis.size() == 3) {
    if (testsupport::brute_isomorphic(minis, dot_template()))
      return SimilarityPattern::DotProd;
    if (testsupport::brute_isomorphic(minis, eucl_template()))
      return SimilarityPattern::EuclNorm;
    return std::nullopt;
  }
  if (minis.size() == 5) {
    if (testsupport::brute_isomorphic(minis, cos_template()))
      return SimilarityPattern::CosSim;
    return std::nullopt;
  }
  return std::nullopt;
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

bool outputs_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].numel() != b[i].numel()) return false;
    for (int64_t j = 0; j < a[i].numel(); ++j)
      if (a[i].fval_raw(j) != b[i].fval_raw(j)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lower-tensor-to-cim wraps each supported op in its own triple") {
  ProgramModule m = lower_tensor_to_cim(parse_kernel(kDotKernel));
  CHECK(count_ops(m, "cim.acquire") == 3);
  CHECK(count_ops(m, "cim.execute") == 3);
  CHECK(count_ops(m, "cim.release") == 3);
  CHECK(verify(m).empty());
}

TEST_CASE("lower-tensor-to-cim leaves modules without tensor ops unchanged") {
  ProgramModule m = parse_module("func @empty() {\n  plumb.return() : () -> ()\n}\n");
  ProgramModule out = lower_tensor_to_cim(m);
  CHECK(structurally_equal(m, out));
}

TEST_CASE("unsupported ops stay on the host path") {
  // plumb.slice is not a CIM-supported primitive and must stay untouched.
  ProgramModule m = parse_module(
      "func @f(%arg0: i1[4x8]) -> (i1[8x4]) {\n"
      "  %0 = plumb.slice(%arg0) {offsets = [0, 0], sizes = [4, 8]} : (i1[4x8]) -> (i1[4x8])\n"
      "  %1 = tensor.transpose(%0) : (i1[4x8]) -> (i1[8x4])\n"
      "  plumb.return(%1) : (i1[8x4]) -> ()\n"
      "}\n");
  ProgramModule out = lower_tensor_to_cim(m);
  CHECK(count_ops(out, "plumb.slice") == 1);
  CHECK(count_ops(out, "cim.execute") == 1);
  CHECK(verify(out).empty());
}

TEST_CASE("similarity matching recognizes the three templates") {
  CHECK(match_minis(dot_template()) == SimilarityPattern::DotProd);
  CHECK(match_minis(eucl_template()) == SimilarityPattern::EuclNorm);
  CHECK(match_minis(cos_template()) == SimilarityPattern::CosSim);
}

TEST_CASE("reversed dataflow does not match") {
  // {matmul -> transpose -> topk}: edges flow the wrong way
  std::vector<MiniOp> wrong = {{"matmul", {-1, -1}}, {"transpose", {0}}, {"topk", {1}}};
  CHECK_FALSE(match_minis(wrong).has_value());
}

TEST_CASE("op counts other than 4 and 6 fail fast") {
  std::vector<MiniOp> two = {{"transpose", {-1}}, {"matmul", {-1, 0}}};
  CHECK_FALSE(match_minis(two).has_value());
  std::vector<MiniOp> four = {{"transpose", {-1}}, {"matmul", {-1, 0}},
                              {"topk", {1}}, {"topk", {1}}};
  CHECK_FALSE(match_minis(four).has_value());
}

TEST_CASE("matching agrees with the brute-force isomorphism oracle") {
  std::mt19937_64 rng(4242);
  const char* kinds[] = {"transpose", "matmul", "topk", "sub", "norm", "div"};
  std::vector<std::vector<MiniOp>> bases = {dot_template(), eucl_template(),
                                            cos_template()};
  int checked = 0;
  for (int iter = 0; iter < 400; ++iter) {
    std::vector<MiniOp> minis = bases[size_t(iter) % bases.size()];
    // one random edit: kind change or input rewire
    std::uniform_int_distribution<size_t> pick_op(0, minis.size() - 1);
    if (iter % 3 != 0) {
      size_t at = pick_op(rng);
      if (rng() % 2 == 0) {
        minis[at].kind = kinds[rng() % 6];
      } else if (!minis[at].inputs.empty()) {
        size_t slot = rng() % minis[at].inputs.size();
        minis[at].inputs[slot] =
            int(rng() % (minis.size() + 1)) - 1;  // -1..n-1
        if (minis[at].inputs[slot] >= int(at)) minis[at].inputs[slot] = -1;
      }
    }
    // random permutation of the list with input indices remapped
    std::vector<int> perm(minis.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = int(i);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<MiniOp> shuffled(minis.size());
    for (size_t i = 0; i < minis.size(); ++i) {
      MiniOp mo = minis[i];
      for (int& in : mo.inputs)
        if (in >= 0) in = perm[size_t(in)];
      shuffled[size_t(perm[i])] = mo;
    }
    auto impl = match_minis(shuffled);
    auto brute = brute_match(shuffled);
    CHECK(impl == brute);
    ++checked;
  }
  CHECK(checked == 400);
}

TEST_CASE("fusion merges chained blocks then rewrites to cim.similarity") {
  ProgramModule cim = lower_tensor_to_cim(parse_kernel(kDotKernel));
  ProgramModule merged = fuse_ops(cim, "off");
  CHECK(count_ops(merged, "cim.execute") == 1);
  CHECK(count_ops(merged, "tensor.transpose") == 1);  // ops kept inside the block
  CHECK(count_ops(merged, "cim.similarity") == 0);
  CHECK(verify(merged).empty());

  ProgramModule rewritten = fuse_ops(cim, "similarity");
  CHECK(count_ops(rewritten, "cim.execute") == 1);
  CHECK(count_ops(rewritten, "cim.similarity") == 1);
  CHECK(count_ops(rewritten, "tensor.transpose") == 0);
  CHECK(verify(rewritten).empty());
}

TEST_CASE("cosine chain fuses into a 6-op block and rewrites") {
  ProgramModule cim = lower_tensor_to_cim(parse_kernel(kCosKernel));
  ProgramModule merged = fuse_ops(cim, "off");
  CHECK(count_ops(merged, "cim.execute") == 1);
  ProgramModule rewritten = fuse_ops(cim, "similarity");
  CHECK(count_ops(rewritten, "cim.similarity") == 1);
  bool saw_cosine = false;
  walk_ops(rewritten, [&](const Operation& op) {
    if (op.full_name() == "cim.similarity")
      saw_cosine = op.str_attr("metric") == "cosine";
  });
  CHECK(saw_cosine);
}

TEST_CASE("single-op blocks fuse to themselves without a similarity rewrite") {
  ProgramModule m = parse_kernel(
      "kernel mm(a: i1[4x8], b: i1[8x4]) -> (i32[4x4]) {\n"
      "  c = matmul(a, b);\n  return c;\n}\n");
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(m));
  CHECK(count_ops(fused, "cim.execute") == 1);
  CHECK(count_ops(fused, "cim.similarity") == 0);
  CHECK(count_ops(fused, "tensor.matmul") == 1);
}

TEST_CASE("independent blocks are not merged") {
  ProgramModule m = parse_kernel(
      "kernel ind(a: i1[4x8], b: i1[4x8]) -> (i1[8x4], i1[8x4]) {\n"
      "  x = transpose(a);\n  y = transpose(b);\n  return x, y;\n}\n");
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(m));
  CHECK(count_ops(fused, "cim.execute") == 2);
}

TEST_CASE("fusion soundness: outputs identical before and after") {
  TechParams tech;
  std::mt19937_64 rng(555);
  for (const char* kernel : {kDotKernel, kEuclKernel, kCosKernel}) {
    ProgramModule m = parse_kernel(kernel);
    ProgramModule cim = lower_tensor_to_cim(m);
    ProgramModule fused = fuse_ops(cim);
    auto inputs = random_inputs(m, rng);
    ExecResult a = execute(cim, nullptr, tech, inputs);
    ExecResult b = execute(fused, nullptr, tech, inputs);
    ExecResult c = execute(m, nullptr, tech, inputs);
    CHECK(outputs_equal(a.outputs, b.outputs));
    CHECK(outputs_equal(a.outputs, c.outputs));
  }
}

TEST_CASE("partitioning the HDC kernel yields 256 tiles, 255 sums, 1 topk merge") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(kDotKernel)));
  ProgramModule part = partition(fused, 32, 32);
  CHECK(count_ops(part, "cim.execute") == 256);
  int64_t sums = 0, topks = 0;
  walk_ops(part, [&](const Operation& op) {
    if (op.full_name() != "cim.merge_partial") return;
    std::string kind = op.str_attr("kind");
    if (kind == "sum-cols") ++sums;
    if (kind == "topk-max" || kind == "topk-min") ++topks;
  });
  CHECK(sums == 255);
  CHECK(topks == 1);
  CHECK(verify(part).empty());
}

TEST_CASE("single-tile similarity is left unchanged") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(
      "kernel s(a: i1[8x16], b: i1[1x16]) -> (i32[1x1], i32[1x1]) {\n"
      "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=1);\n"
      "  return v, i;\n}\n")));
  ProgramModule part = partition(fused, 32, 32);
  CHECK(structurally_equal(fused, part));
}

TEST_CASE("64x64 stored on a 32x32 PE makes 2x2 tiles") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(
      "kernel s(a: i1[64x64], b: i1[1x64]) -> (i32[1x2], i32[1x2]) {\n"
      "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=2);\n"
      "  return v, i;\n}\n")));
  ProgramModule part = partition(fused, 32, 32);
  CHECK(count_ops(part, "cim.execute") == 4);
  CHECK(verify(part).empty());
}

TEST_CASE("partition rejects non-positive PE sizes") {
  ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(kDotKernel)));
  CHECK_THROWS(partition(fused, 0, 32));
  CHECK_THROWS(partition(fused, 32, -1));
}

TEST_CASE("partition-merge equivalence on random shapes and PE sizes") {
  TechParams tech;
  std::mt19937_64 rng(2024);
  for (int iter = 0; iter < 40; ++iter) {
    int64_t n = 1 + int64_t(rng() % 64);
    int64_t d = 1 + int64_t(rng() % 256);
    int64_t k = 1 + int64_t(rng() % std::min<int64_t>(n, 5));
    bool binary = rng() % 2 == 0;
    bool euclid = rng() % 2 == 0;
    int64_t pr = 1 + int64_t(rng() % (n + 4));
    int64_t pc = 1 + int64_t(rng() % (d + 4));

    std::ostringstream k1;
    if (euclid) {
      k1 << "kernel f(a: " << (binary ? "i1" : "i4") << "[" << n << "x" << d
         << "], b: " << (binary ? "i1" : "i4") << "[1x" << d << "]) -> (f32["
         << k << "], i32[" << k << "]) {\n"
         << "  d0 = sub(b, a);\n  n0 = norm(d0, p=2, dim=1);\n"
         << "  v, i = topk(n0, k=" << k << ", largest=false);\n  return v, i;\n}\n";
    } else {
      k1 << "kernel f(a: " << (binary ? "i1" : "i4") << "[" << n << "x" << d
         << "], b: " << (binary ? "i1" : "i4") << "[1x" << d << "]) -> (i32[1x"
         << k << "], i32[1x" << k << "]) {\n"
         << "  t = transpose(a);\n  s = matmul(b, t);\n  v, i = topk(s, k=" << k
         << ");\n  return v, i;\n}\n";
    }
    ProgramModule fused = fuse_ops(lower_tensor_to_cim(parse_kernel(k1.str())));
    ProgramModule part = partition(fused, pr, pc);
    REQUIRE(verify(part).empty());
    auto inputs = random_inputs(fused, rng);
    ExecResult a = execute(fused, nullptr, tech, inputs);
    ExecResult b = execute(part, nullptr, tech, inputs);
    CHECK(outputs_equal(a.outputs, b.outputs));
  }
}

TEST_CASE("scores-mode similarity partitions with the declared result shape") {
  // API-built: k=0 euclidean similarity with a rank-1 result vector.
  ProgramModule m;
  FunctionDef fn;
  fn.name = "scores";
  Value stored = fn.new_value(tensor_type({6, 80}, elem_i(4)));
  Value query = fn.new_value(tensor_type({1, 80}, elem_i(4)));
  fn.args = {stored, query};
  fn.result_types = {tensor_type({6}, elem_i32())};
  OpBuilder b(fn, fn.body);
  ValueId h = b.create("cim", "acquire", {}, {handle_type(HandleKind::Device)})[0].id;
  Operation exec;
  exec.dialect = "cim";
  exec.opname = "execute";
  exec.operands = {h, stored.id, query.id};
  Region r;
  Value sa = fn.new_value(tensor_type({6, 80}, elem_i(4)));
  Value qa = fn.new_value(tensor_type({1, 80}, elem_i(4)));
  r.args = {sa, qa};
  Operation sim;
  sim.dialect = "cim";
  sim.opname = "similarity";
  sim.operands = {sa.id, qa.id};
  sim.attrs = {{"metric", std::string("euclidean")}, {"k", int64_t{0}},
               {"row_base", int64_t{0}}};
  Value sv = fn.new_value(tensor_type({6}, elem_i32()));
  sim.results = {sv};
  Operation yield;
  yield.dialect = "cim";
  yield.opname = "yield";
  yield.operands = {sv.id};
  r.ops.push_back(std::move(sim));
  r.ops.push_back(std::move(yield));
  exec.regions.push_back(std::move(r));
  Value ev = fn.new_value(tensor_type({6}, elem_i32()));
  exec.results = {ev};
  fn.body.ops.push_back(std::move(exec));
  b.create("cim", "release", {h}, {});
  Operation ret;
  ret.dialect = "plumb";
  ret.opname = "return";
  ret.operands = {ev.id};
  fn.body.ops.push_back(std::move(ret));
  m.functions.push_back(std::move(fn));
  REQUIRE(verify(m).empty());

  ProgramModule part = partition(m, 32, 32);  // 1 row tile x 3 col tiles
  REQUIRE(verify(part).empty());
  TechParams tech;
  std::mt19937_64 rng(100);
  std::map<std::string, Tensor> in{
      {"arg0", testsupport::random_ints(6, 80, 4, rng)},
      {"arg1", testsupport::random_ints(1, 80, 4, rng)}};
  ExecResult a = execute(m, nullptr, tech, in);
  ExecResult b2 = execute(part, nullptr, tech, in);
  CHECK(a.outputs[0].iv == b2.outputs[0].iv);
}

TEST_CASE("handle discipline is verified after every cim pass") {
  ProgramModule cim = lower_tensor_to_cim(parse_kernel(kDotKernel));
  CHECK(verify(cim).empty());
  ProgramModule fused = fuse_ops(cim);
  CHECK(verify(fused).empty());
  ProgramModule part = partition(fused, 32, 32);
  CHECK(verify(part).empty());

  // Breaking the pairing is caught: drop the release.
  ProgramModule broken = fused;
  auto& ops = broken.functions[0].body.ops;
  for (size_t i = 0; i < ops.size(); ++i)
    if (ops[i].full_name() == "cim.release") {
      ops.erase(ops.begin() + int(i));
      break;
    }
  auto diags = verify(broken);
  bool found = false;
  for (const auto& d : diags)
    found = found || d.message.find("released exactly once") != std::string::npos;
  CHECK(found);
}
