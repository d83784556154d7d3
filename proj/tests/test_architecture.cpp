#include <doctest.h>

#include <set>

#include "manas/architecture.hpp"
#include "manas/error.hpp"

using namespace manas;

namespace {

LogicArchitecture arch_n4_example() {
  // {AND,0,1; OR,2,4; AND,3,5}
  LogicArchitecture a;
  a.n = 4;
  a.steps = {{LogicOp::kAnd, 0, 1, false, false},
             {LogicOp::kOr, 2, 4, false, false},
             {LogicOp::kAnd, 3, 5, false, false}};
  return a;
}

LogicSpace tiny_space(std::uint64_t seed = 5) {
  Rng rng(seed);
  return make_logic_space(8, 6, 6, rng);
}

std::vector<double> randvec(Rng& rng, int d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rand_normal(rng, 0, 1);
  return v;
}

// Independent tree-walking evaluator over an expression description:
// node = variable index, or (op, left, right, negl, negr) over child nodes.
struct ExprNode {
  bool leaf = false;
  int var = -1;
  LogicOp op = LogicOp::kAnd;
  int left = -1, right = -1;  // indices into the node pool
  bool neg_left = false, neg_right = false;
};

Tensor eval_tree(const LogicSpace& s, const std::vector<ExprNode>& pool,
                 int node, const std::vector<std::span<const double>>& inputs) {
  const ExprNode& nd = pool[node];
  if (nd.leaf) {
    Tensor t = Tensor::vector(inputs[nd.var].size());
    std::copy(inputs[nd.var].begin(), inputs[nd.var].end(), t.data.begin());
    return t;
  }
  Tensor l = eval_tree(s, pool, nd.left, inputs);
  Tensor r = eval_tree(s, pool, nd.right, inputs);
  if (nd.neg_left) l = apply_not(s, l.span());
  if (nd.neg_right) r = apply_not(s, r.span());
  return nd.op == LogicOp::kAnd ? apply_and(s, l.span(), r.span())
                                : apply_or(s, l.span(), r.span());
}

}  // namespace

TEST_CASE("validate accepts the position-index example") {
  CHECK(is_valid(arch_n4_example()));
}

TEST_CASE("validate rejects operand reuse and double consumption") {
  LogicArchitecture self;
  self.n = 2;
  self.steps = {{LogicOp::kAnd, 0, 0, false, false}};
  auto v = validate(self);
  REQUIRE_FALSE(v.empty());
  bool found = false;
  for (const auto& violation : v)
    if (violation.rule.find("reuse") != std::string::npos) found = true;
  CHECK(found);

  LogicArchitecture twice;
  twice.n = 3;
  twice.steps = {{LogicOp::kAnd, 0, 1, false, false},
                 {LogicOp::kOr, 2, 2, false, false}};
  v = validate(twice);
  REQUIRE_FALSE(v.empty());
}

TEST_CASE("validate rejects out-of-range and wrong step counts") {
  LogicArchitecture missing;
  missing.n = 3;
  missing.steps = {{LogicOp::kAnd, 0, 1, false, false}};
  CHECK_FALSE(is_valid(missing));

  LogicArchitecture future;
  future.n = 3;
  future.steps = {{LogicOp::kAnd, 0, 4, false, false},
                  {LogicOp::kOr, 1, 2, false, false}};
  CHECK_FALSE(is_valid(future));
}

TEST_CASE("count matches the closed form") {
  CHECK(count_architectures(1).str() == "1");
  CHECK(count_architectures(2).str() == "8");
  CHECK(count_architectures(3).str() == "192");
  CHECK(count_architectures(4).str() == "9216");
  CHECK(count_architectures(5).str() == "737280");
  CHECK(count_architectures(6).str() == "88473600");
  CHECK_THROWS_AS(count_architectures(0), Error);
}

TEST_CASE("enumeration count equals the formula and is duplicate-free") {
  for (int n = 1; n <= 4; ++n) {
    const auto archs = enumerate_architectures(n);
    CHECK(archs.size() == count_architectures(n).to_u64());
    std::set<std::string> keys;
    for (const auto& a : archs) {
      CHECK(is_valid(a));
      CHECK(canonicalize(a) == a);
      keys.insert(arch_key(a));
    }
    CHECK(keys.size() == archs.size());
  }
}

TEST_CASE("enumeration refuses beyond the guard with the count") {
  try {
    enumerate_architectures(6);
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("88473600") != std::string::npos);
  }
}

TEST_CASE("validate rejects single-field mutations of enumerated archs") {
  // Mutating any operand slot of a valid architecture into a reuse or a
  // not-yet-produced slot must be caught.
  const auto archs = enumerate_architectures(3);
  int rejected = 0, total = 0;
  for (const auto& a : archs) {
    for (std::size_t s = 0; s < a.steps.size(); ++s) {
      LogicArchitecture m = a;
      m.steps[s].left = m.steps[s].right;  // operand reuse
      ++total;
      if (!is_valid(m)) ++rejected;

      LogicArchitecture m2 = a;
      m2.steps[s].right = 2 * m2.n;  // out of range
      ++total;
      if (!is_valid(m2)) ++rejected;
    }
  }
  CHECK(rejected == total);
}

TEST_CASE("canonicalize swaps descending operands and is idempotent") {
  LogicArchitecture a;
  a.n = 2;
  a.steps = {{LogicOp::kAnd, 1, 0, true, false}};
  LogicArchitecture c = canonicalize(a);
  CHECK(c.steps[0].left == 0);
  CHECK(c.steps[0].right == 1);
  CHECK(c.steps[0].neg_left == false);
  CHECK(c.steps[0].neg_right == true);
  CHECK(canonicalize(c) == c);
}

TEST_CASE("arch key round trip") {
  const auto a = arch_n4_example();
  CHECK(arch_key(a) == "AND,0,1,0,0;OR,2,4,0,0;AND,3,5,0,0");
  CHECK(parse_arch_key(arch_key(a)) == a);
  LogicArchitecture trivial{1, {}};
  CHECK(arch_key(trivial) == "id");
  CHECK(parse_arch_key("id") == trivial);
}

TEST_CASE("assemble_premise on n=1 returns the input") {
  LogicSpace s = tiny_space();
  Rng rng(2);
  auto x = randvec(rng, s.dim);
  LogicArchitecture trivial{1, {}};
  Tensor out = assemble_premise(s, trivial, {{x.data(), x.size()}});
  for (int i = 0; i < s.dim; ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("assemble_premise matches manual module composition") {
  // (not e1 and e3) or e2; canonical steps {AND,0,2,1,0; OR,1,3,0,0}.
  LogicSpace s = tiny_space();
  Rng rng(4);
  auto e1 = randvec(rng, s.dim);
  auto e2 = randvec(rng, s.dim);
  auto e3 = randvec(rng, s.dim);
  LogicArchitecture a;
  a.n = 3;
  a.steps = {{LogicOp::kAnd, 0, 2, true, false},
             {LogicOp::kOr, 1, 3, false, false}};
  REQUIRE(is_valid(a));
  Tensor got = assemble_premise(
      s, a, {{e1.data(), e1.size()}, {e2.data(), e2.size()}, {e3.data(), e3.size()}});
  Tensor ne1 = apply_not(s, e1);
  Tensor inner = apply_and(s, ne1.span(), e3);
  // Canonical operand order for the OR step: slot 1 (e2) before slot 3.
  Tensor want = apply_or(s, e2, inner.span());
  for (int i = 0; i < s.dim; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("assemble_premise equals an independent tree evaluator") {
  LogicSpace s = tiny_space(91);
  Rng rng(6);
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> inputs;
  for (int i = 0; i < 4; ++i) storage.push_back(randvec(rng, s.dim));
  for (const auto& v : storage) inputs.emplace_back(v.data(), v.size());

  const auto a = arch_n4_example();  // ((e1 and e2) or e3) and e4
  std::vector<ExprNode> pool;
  for (int i = 0; i < 4; ++i) pool.push_back({true, i, LogicOp::kAnd, -1, -1, false, false});
  pool.push_back({false, -1, LogicOp::kAnd, 0, 1, false, false});  // 4
  pool.push_back({false, -1, LogicOp::kOr, 2, 4, false, false});   // 5 (canonical order: e3 first)
  pool.push_back({false, -1, LogicOp::kAnd, 3, 5, false, false});  // 6
  Tensor want = eval_tree(s, pool, 6, inputs);
  Tensor got = assemble_premise(s, a, inputs);
  for (int i = 0; i < s.dim; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("tape assembly equals fast assembly and inputs all matter") {
  LogicSpace s = tiny_space(17);
  Rng rng(8);
  const auto archs = enumerate_architectures(3);
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> inputs;
  for (int i = 0; i < 3; ++i) storage.push_back(randvec(rng, s.dim));
  for (const auto& v : storage) inputs.emplace_back(v.data(), v.size());

  for (std::size_t k = 0; k < archs.size(); k += 17) {
    const auto& a = archs[k];
    Tensor fast = assemble_premise(s, a, inputs);
    Tape tape;
    std::vector<int> nodes;
    for (const auto& v : storage) nodes.push_back(tape.input({v.data(), v.size()}));
    int out = assemble_premise(tape, s, a, nodes);
    auto tv = tape.value(out);
    for (int i = 0; i < s.dim; ++i)
      CHECK(fast[i] == doctest::Approx(tv[i]).epsilon(1e-12));
  }

  // Sensitivity: perturbing any input changes the root for a generic arch.
  const auto& a = archs[3];
  Tensor base = assemble_premise(s, a, inputs);
  for (int j = 0; j < 3; ++j) {
    auto perturbed = storage;
    perturbed[j][0] += 0.37;
    perturbed[j][2] -= 0.21;
    std::vector<std::span<const double>> pin;
    for (const auto& v : perturbed) pin.emplace_back(v.data(), v.size());
    Tensor out = assemble_premise(s, a, pin);
    CHECK(max_abs_diff(out.span(), base.span()) > 1e-9);
  }
}

TEST_CASE("horn score composes NOT premise OR target against the anchor") {
  LogicSpace s = tiny_space(33);
  Rng rng(10);
  auto premise = randvec(rng, s.dim);
  const int target = 3;
  Tensor neg = apply_not(s, premise);
  Tensor out = apply_or(s, neg.span(), s.embedding(target));
  const double want = truth_score(s, out.span());
  CHECK(horn_score(s, premise, target) == doctest::Approx(want).epsilon(1e-12));
  CHECK(horn_score(s, premise, target) >= -1.0);
  CHECK(horn_score(s, premise, target) <= 1.0);
  CHECK_THROWS_AS(horn_score(s, premise, 99), Error);
}

TEST_CASE("expression strings render the worked mapping") {
  const auto a = arch_n4_example();
  const auto names = default_variable_names(4);
  // Canonical operand order puts the raw slot before the step output.
  CHECK(to_expression_string(a, names) == "e4 ∧ (e3 ∨ (e1 ∧ e2))");
  // The same tree parsed from the worked example string canonicalizes to
  // the same position-index encoding.
  CHECK(parse_expression("((e1 ∧ e2) ∨ e3) ∧ e4", names) == canonicalize(a));
  CHECK(to_expression_string({1, {}}, {"e1"}) == "e1");
}

TEST_CASE("expression print/parse round trip is stable") {
  const auto names3 = default_variable_names(3);
  for (const auto& a : enumerate_architectures(3)) {
    const std::string printed = to_expression_string(a, names3);
    const LogicArchitecture reparsed = parse_expression(printed, names3);
    CHECK(to_expression_string(reparsed, names3) == printed);
  }
}

TEST_CASE("boolean evaluation follows the flags") {
  LogicArchitecture a;
  a.n = 3;
  a.steps = {{LogicOp::kAnd, 0, 2, true, false},
             {LogicOp::kOr, 1, 3, false, false}};
  // (not e1 and e3) or e2
  CHECK(evaluate_boolean(a, {0, 0, 1}) == true);   // not 0 and 1 = 1
  CHECK(evaluate_boolean(a, {1, 0, 1}) == false);  // not 1 and 1 = 0
  CHECK(evaluate_boolean(a, {1, 1, 0}) == true);   // e2 saves it
}

TEST_CASE("fixed conjunction chains every input with AND") {
  for (int n = 1; n <= 5; ++n) {
    const LogicArchitecture a = fixed_conjunction(n);
    CHECK(is_valid(a));
    for (const auto& s : a.steps) {
      CHECK(s.op == LogicOp::kAnd);
      CHECK_FALSE(s.neg_left);
      CHECK_FALSE(s.neg_right);
    }
    std::vector<char> all_true(n, 1);
    CHECK(evaluate_boolean(a, all_true) == true);
    if (n >= 2) {
      std::vector<char> one_false(n, 1);
      one_false[n - 1] = 0;
      CHECK(evaluate_boolean(a, one_false) == false);
    }
  }
  CHECK(to_expression_string(fixed_conjunction(4), default_variable_names(4)) ==
        "e4 ∧ (e3 ∧ (e1 ∧ e2))");
}

TEST_CASE("dot export mentions every block") {
  const auto dot = to_dot(arch_n4_example(), default_variable_names(4));
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("AND") != std::string::npos);
  CHECK(dot.find("OR") != std::string::npos);
  CHECK(dot.find("e4") != std::string::npos);
}
